//! Bidirectional LSTM over instruction positions with an in-domain head and
//! a position-policy head. Parameters live in one flat vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ir::encode::TOKENS_PER_INSTR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { vocab: 256, embed: 8, hidden: 64 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    emb: usize,
    wx: [usize; 2],
    wh: [usize; 2],
    b: [usize; 2],
    w_in: usize,
    b_in: usize,
    w_pi: usize,
    b_pi: usize,
    len: usize,
}

impl NetConfig {
    fn input(&self) -> usize {
        self.embed * TOKENS_PER_INSTR
    }

    fn layout(&self) -> Layout {
        let (d, h) = (self.input(), self.hidden);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let emb = take(self.vocab * self.embed);
        let wx0 = take(4 * h * d);
        let wh0 = take(4 * h * h);
        let b0 = take(4 * h);
        let wx1 = take(4 * h * d);
        let wh1 = take(4 * h * h);
        let b1 = take(4 * h);
        let w_in = take(2 * h);
        let b_in = take(1);
        let w_pi = take(2 * h);
        let b_pi = take(1);
        Layout { emb, wx: [wx0, wx1], wh: [wh0, wh1], b: [b0, b1], w_in, b_in, w_pi, b_pi, len: off }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub cfg: NetConfig,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    pub indom: f64,
    pub pi: Vec<f64>,
}

/// One training example; `root` is `None` for negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<'a> {
    pub tokens: &'a [u32],
    pub root: Option<usize>,
    pub indom: bool,
    pub weight: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sample objective: `ε·L_InDom + (1−ε)·L_Π` for positives, `ε·L_InDom` for negatives.
pub fn combined_loss(eps: f64, l_indom: f64, l_pi: Option<f64>) -> f64 {
    match l_pi {
        Some(l) => eps * l_indom + (1.0 - eps) * l,
        None => eps * l_indom,
    }
}

struct DirCache {
    /// Positions in processing order.
    order: Vec<usize>,
    x: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tc: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

struct Cache {
    dirs: [DirCache; 2],
    y: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    out: NetOutput,
}

impl Net {
    pub fn xavier(cfg: NetConfig, rng: &mut impl Rng) -> Net {
        let l = cfg.layout();
        let (d, h) = (cfg.input(), cfg.hidden);
        let mut theta = vec![0.0; l.len];
        let mut fill = |theta: &mut [f64], off: usize, n: usize, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut theta[off..off + n] {
                *v = rng.gen_range(-a..a);
            }
        };
        fill(&mut theta, l.emb, cfg.vocab * cfg.embed, cfg.vocab, cfg.embed);
        for k in 0..2 {
            fill(&mut theta, l.wx[k], 4 * h * d, d, 4 * h);
            fill(&mut theta, l.wh[k], 4 * h * h, h, 4 * h);
            for j in h..2 * h {
                theta[l.b[k] + j] = 1.0;
            }
        }
        fill(&mut theta, l.w_in, 2 * h, 2 * h, 1);
        fill(&mut theta, l.w_pi, 2 * h, 2 * h, 1);
        Net { cfg, theta }
    }

    pub fn positions(&self, tokens: &[u32]) -> usize {
        tokens.len() / TOKENS_PER_INSTR
    }

    fn embed(&self, tokens: &[u32], t: usize) -> Vec<f64> {
        let l = self.cfg.layout();
        let e = self.cfg.embed;
        let mut x = Vec::with_capacity(self.cfg.input());
        for k in 0..TOKENS_PER_INSTR {
            let tok = (tokens[t * TOKENS_PER_INSTR + k] as usize).min(self.cfg.vocab - 1);
            x.extend_from_slice(&self.theta[l.emb + tok * e..l.emb + (tok + 1) * e]);
        }
        x
    }

    fn run_dir(&self, tokens: &[u32], k: usize, n: usize) -> DirCache {
        let l = self.cfg.layout();
        let (d, h) = (self.cfg.input(), self.cfg.hidden);
        let order: Vec<usize> = if k == 0 { (0..n).collect() } else { (0..n).rev().collect() };
        let (wx, wh, b) = (&self.theta[l.wx[k]..], &self.theta[l.wh[k]..], &self.theta[l.b[k]..]);
        let mut cache = DirCache { order: order.clone(), x: vec![], gates: vec![], c: vec![], tc: vec![], h: vec![] };
        let mut hp = vec![0.0; h];
        let mut cp = vec![0.0; h];
        for &t in &order {
            let x = self.embed(tokens, t);
            let mut a = vec![0.0; 4 * h];
            for r in 0..4 * h {
                let mut s = b[r];
                let row = &wx[r * d..(r + 1) * d];
                for j in 0..d {
                    s += row[j] * x[j];
                }
                let row = &wh[r * h..(r + 1) * h];
                for j in 0..h {
                    s += row[j] * hp[j];
                }
                a[r] = s;
            }
            for j in 0..h {
                a[j] = sigmoid(a[j]);
                a[h + j] = sigmoid(a[h + j]);
                a[2 * h + j] = a[2 * h + j].tanh();
                a[3 * h + j] = sigmoid(a[3 * h + j]);
            }
            let mut c = vec![0.0; h];
            let mut tc = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                c[j] = a[h + j] * cp[j] + a[j] * a[2 * h + j];
                tc[j] = c[j].tanh();
                hn[j] = a[3 * h + j] * tc[j];
            }
            cache.x.push(x);
            cache.gates.push(a);
            cache.c.push(c.clone());
            cache.tc.push(tc);
            cache.h.push(hn.clone());
            hp = hn;
            cp = c;
        }
        cache
    }

    fn forward_cached(&self, tokens: &[u32]) -> Cache {
        let l = self.cfg.layout();
        let h = self.cfg.hidden;
        let n = self.positions(tokens);
        let dirs = [self.run_dir(tokens, 0, n), self.run_dir(tokens, 1, n)];
        let mut y = vec![vec![0.0; 2 * h]; n];
        for (k, dc) in dirs.iter().enumerate() {
            for (step, &t) in dc.order.iter().enumerate() {
                y[t][k * h..(k + 1) * h].copy_from_slice(&dc.h[step]);
            }
        }
        let mut pooled = vec![0.0; 2 * h];
        for yt in &y {
            for j in 0..2 * h {
                pooled[j] += yt[j] / n as f64;
            }
        }
        let w_in = &self.theta[l.w_in..l.w_in + 2 * h];
        let z_in: f64 = self.theta[l.b_in] + w_in.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        let w_pi = &self.theta[l.w_pi..l.w_pi + 2 * h];
        let logits: Vec<f64> =
            y.iter().map(|yt| self.theta[l.b_pi] + w_pi.iter().zip(yt).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = ex.iter().sum();
        let pi = ex.iter().map(|v| v / s).collect();
        Cache { dirs, y, pooled, out: NetOutput { indom: sigmoid(z_in), pi } }
    }

    pub fn forward(&self, tokens: &[u32]) -> NetOutput {
        self.forward_cached(tokens).out
    }

    /// Weighted loss of one example; gradients are accumulated into `grad`.
    pub fn loss_and_grad(&self, ex: &Example, eps: f64, grad: &mut [f64]) -> f64 {
        let l = self.cfg.layout();
        let (d, h, e) = (self.cfg.input(), self.cfg.hidden, self.cfg.embed);
        let c = self.forward_cached(ex.tokens);
        let n = c.y.len();
        let w = ex.weight;
        let p = c.out.indom.clamp(1e-12, 1.0 - 1e-12);
        let label = if ex.indom { 1.0 } else { 0.0 };
        let l_in = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
        let root = ex.root.filter(|r| *r < n);
        let l_pi = root.map(|r| -c.out.pi[r].max(1e-300).ln());
        let loss = combined_loss(eps, l_in, l_pi) * w;

        let dz_in = w * eps * (c.out.indom - label);
        grad[l.b_in] += dz_in;
        for j in 0..2 * h {
            grad[l.w_in + j] += dz_in * c.pooled[j];
        }
        let mut dy = vec![vec![0.0; 2 * h]; n];
        for t in 0..n {
            for j in 0..2 * h {
                dy[t][j] += dz_in * self.theta[l.w_in + j] / n as f64;
            }
        }
        if let Some(r) = root {
            for t in 0..n {
                let dz = w * (1.0 - eps) * (c.out.pi[t] - if t == r { 1.0 } else { 0.0 });
                grad[l.b_pi] += dz;
                for j in 0..2 * h {
                    grad[l.w_pi + j] += dz * c.y[t][j];
                    dy[t][j] += dz * self.theta[l.w_pi + j];
                }
            }
        }

        for (k, dc) in c.dirs.iter().enumerate() {
            let (wx, wh) = (l.wx[k], l.wh[k]);
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for step in (0..n).rev() {
                let t = dc.order[step];
                let a = &dc.gates[step];
                let zeros = vec![0.0; h];
                let cp = if step > 0 { &dc.c[step - 1] } else { &zeros };
                let hp = if step > 0 { &dc.h[step - 1] } else { &zeros };
                let mut da = vec![0.0; 4 * h];
                for j in 0..h {
                    let dh = dy[t][k * h + j] + dh_next[j];
                    let (i, f, g, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                    let tc = dc.tc[step][j];
                    let dcell = dh * o * (1.0 - tc * tc) + dc_next[j];
                    da[j] = dcell * g * i * (1.0 - i);
                    da[h + j] = dcell * cp[j] * f * (1.0 - f);
                    da[2 * h + j] = dcell * i * (1.0 - g * g);
                    da[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dcell * f;
                }
                let x = &dc.x[step];
                let mut dx = vec![0.0; d];
                let mut dhp = vec![0.0; h];
                for r in 0..4 * h {
                    let g = da[r];
                    if g == 0.0 {
                        continue;
                    }
                    grad[l.b[k] + r] += g;
                    let rx = wx + r * d;
                    for j in 0..d {
                        grad[rx + j] += g * x[j];
                        dx[j] += g * self.theta[rx + j];
                    }
                    let rh = wh + r * h;
                    for j in 0..h {
                        grad[rh + j] += g * hp[j];
                        dhp[j] += g * self.theta[rh + j];
                    }
                }
                dh_next = dhp;
                for kk in 0..TOKENS_PER_INSTR {
                    let tok = (ex.tokens[t * TOKENS_PER_INSTR + kk] as usize).min(self.cfg.vocab - 1);
                    for j in 0..e {
                        grad[l.emb + tok * e + j] += dx[kk * e + j];
                    }
                }
            }
        }
        loss
    }

    /// Weighted mean loss and gradient over a batch.
    pub fn batch_grad(&self, batch: &[Example], eps: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.theta.len()];
        let total: f64 = batch.iter().map(|e| e.weight).sum();
        if total <= 0.0 {
            return (0.0, grad);
        }
        let mut loss = 0.0;
        for ex in batch {
            loss += self.loss_and_grad(ex, eps, &mut grad);
        }
        for g in &mut grad {
            *g /= total;
        }
        (loss / total, grad)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
        for i in 0..theta.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Full-batch Adam; returns the mean loss measured before each update.
pub fn fit(net: &mut Net, batch: &[Example], eps: f64, epochs: usize, lr: f64) -> Vec<f64> {
    let mut opt = Adam::new(net.theta.len(), lr);
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grad) = net.batch_grad(batch, eps);
        history.push(loss);
        opt.step(&mut net.theta, &grad);
    }
    history
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Net {
        let cfg = NetConfig { vocab: 80, embed: 3, hidden: 4 };
        Net::xavier(cfg, &mut ChaCha8Rng::seed_from_u64(7))
    }

    #[test]
    fn loss_branches() {
        assert!((combined_loss(0.3, 1.0, None) - 0.3).abs() < 1e-12);
        assert!((combined_loss(0.3, 1.0, Some(2.0)) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn policy_is_a_distribution() {
        let net = small();
        let toks: Vec<u32> = (0..15).map(|i| (i * 7 % 80) as u32).collect();
        let out = net.forward(&toks);
        assert_eq!(out.pi.len(), 3);
        assert!((out.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.pi.iter().all(|p| *p >= 0.0));
        assert!(out.indom > 0.0 && out.indom < 1.0);
        assert!(net.forward(&[]).pi.is_empty());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = small();
        let toks: Vec<u32> = vec![3, 17, 20, 40, 70, 2, 16, 27, 33, 75, 9, 18, 25, 44, 66];
        for (root, indom) in [(Some(1), true), (None, false)] {
            let ex = Example { tokens: &toks, root, indom, weight: 1.0 };
            let mut grad = vec![0.0; net.theta.len()];
            net.loss_and_grad(&ex, 0.3, &mut grad);
            let mut worst: f64 = 0.0;
            for i in (0..net.theta.len()).step_by(7) {
                let mut a = net.clone();
                a.theta[i] += 1e-6;
                let mut b = net.clone();
                b.theta[i] -= 1e-6;
                let mut scratch = vec![0.0; net.theta.len()];
                let fd = (a.loss_and_grad(&ex, 0.3, &mut scratch) - b.loss_and_grad(&ex, 0.3, &mut scratch)) / 2e-6;
                worst = worst.max((fd - grad[i]).abs() / (1e-6 + fd.abs() + grad[i].abs()));
            }
            assert!(worst < 1e-4, "relative gradient error {worst}");
        }
    }

    #[test]
    fn training_reduces_loss_over_five_epoch_windows() {
        let mut net = small();
        let toks: Vec<Vec<u32>> = (0..20).map(|i| vec![2 + (i % 3) as u32, 16, 27, 40, 70, 6, 18, 27, 33, 75]).collect();
        let batch: Vec<Example> =
            toks.iter().map(|t| Example { tokens: t, root: Some(1), indom: true, weight: 1.0 }).collect();
        let hist = fit(&mut net, &batch, 0.3, 60, 0.01);
        for w in hist.windows(6) {
            assert!(w[5] <= w[0], "{hist:?}");
        }
        assert!(hist.last().unwrap() < &(hist[0] * 0.5));
    }
}
