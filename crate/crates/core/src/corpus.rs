//! Generated drill problems for experiments: linear, log-laws, quadratic and
//! projectile families. Each problem carries its expected answer.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Linear,
    LogLaws,
    Quadratic,
    Projectile,
}

pub const FAMILIES: [Family; 4] = [Family::Linear, Family::LogLaws, Family::Quadratic, Family::Projectile];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::LogLaws => "log-laws",
            Family::Quadratic => "quadratic",
            Family::Projectile => "projectile",
        }
    }

    /// Knowledge domain (class name) the family's problems live in.
    pub fn domain(self) -> &'static str {
        match self {
            Family::Linear => "Linear Equations",
            Family::LogLaws => "Logarithm Laws",
            Family::Quadratic => "Quadratic Equation Solver",
            Family::Projectile => "Projectile Motion",
        }
    }

    fn library(self) -> &'static str {
        match self {
            Family::Linear => LINEAR,
            Family::LogLaws => LOG_LAWS,
            Family::Quadratic => QUADRATIC,
            Family::Projectile => PROJECTILE,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FAMILIES.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown problem family `{s}`"))
    }
}

const LINEAR: &str = "class: Linear Equations{
    @{a+$x}{ x=ans-a; }
    @{$x+a}{ x=ans-a; }
    @{$x-a}{ x=ans+a; }
    @{a-$x}{ x=a-ans; }
    @{a*$x}{ x=ans/a; }
    @{$x/a}{ x=ans*a; }
}
";

const LOG_LAWS: &str = "class: Logarithm Laws{
    exp:@{ln(a*$b)}{ return:ln(a)+ln(b); }
    exp:@{ln($b/a)}{ return:ln(b)-ln(a); }
    exp:@{ln($b^a)}{ return:a*ln(b); }
    @{ln($x)}{ x=exp(ans); }
    @{a+$x}{ x=ans-a; }
    @{$x+a}{ x=ans-a; }
    @{$x-a}{ x=ans+a; }
    @{a*$x}{ x=ans/a; }
}
";

const QUADRATIC: &str = "class: Quadratic Equation Solver{
    exp:@(-2,0,0){$a==b}{
        return:a-b==0;
    }
    exp:@(0,1,0){#a-b}{
        return:a+(-b);
    }
    @(0,0,2){ a*$x^2+b*x+c==0 }{
        x=(-b+(b^2-4*a*c)^0.5)/(2*a);
    }
}
";

const PROJECTILE: &str = "new:g=9.8;
class: Projectile Motion{
    @projectile distance with speed (v0) and angle (θ){
        v0y=v0*sin(θ);
        t=2*v0y/g;
        return:v0y*t;
    }=>@speed ($v0) at angle (θ) given distance;
}
";

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub family: Family,
    pub name: String,
    pub query: String,
    pub source: String,
    pub expected: f64,
}

fn wrap(family: Family, query: &str, init: f64) -> String {
    format!(
        "{}class: Main << {}{{\n    new:x={init};\n    {query};\n}};\nMain:m;\nm.x-->screen;\n",
        family.library(),
        family.domain()
    )
}

fn linear(rng: &mut impl Rng) -> (String, f64) {
    let a = rng.gen_range(2..=9) as f64;
    let b = rng.gen_range(1..=20) as f64;
    let c = rng.gen_range(1..=50) as f64;
    match rng.gen_range(0..5) {
        0 => (format!("{a}*$x+{b}=={c}"), (c - b) / a),
        1 => (format!("{b}+{a}*$x=={c}"), (c - b) / a),
        2 => (format!("$x/{a}-{b}=={c}"), (c + b) * a),
        3 => (format!("{a}*($x-{b})=={c}"), c / a + b),
        _ => (format!("{b}-$x=={c}"), b - c),
    }
}

fn log_laws(rng: &mut impl Rng) -> (String, f64) {
    let a = rng.gen_range(2..=9) as f64;
    let b = rng.gen_range(1..=5) as f64;
    let c = rng.gen_range(1..=6) as f64;
    let k = rng.gen_range(2..=4) as f64;
    match rng.gen_range(0..5) {
        0 => (format!("ln({a}*$x)=={c}"), c.exp() / a),
        1 => (format!("{b}+ln({a}*$x)=={c}"), (c - b).exp() / a),
        2 => (format!("ln($x/{a})+{b}=={c}"), a * (c - b).exp()),
        3 => (format!("{a}*ln($x^{k})=={c}"), (c / (a * k)).exp()),
        _ => (format!("ln({a})+ln($x^{k})=={c}"), ((c - a.ln()) / k).exp()),
    }
}

fn quadratic(rng: &mut impl Rng) -> (String, f64) {
    let a = rng.gen_range(1..=5) as f64;
    let b = rng.gen_range(1..=9) as f64;
    let k = rng.gen_range(10..=200) as f64;
    (format!("{a}*$x^2+{b}*x=={k}"), (-b + (b * b + 4.0 * a * k).sqrt()) / (2.0 * a))
}

fn projectile(rng: &mut impl Rng) -> (String, f64) {
    let (text, theta) = *[("π/6", PI / 6.0), ("π/4", PI / 4.0), ("π/3", PI / 3.0), ("π/5", PI / 5.0)]
        .choose(rng)
        .expect("non-empty");
    let d = rng.gen_range(100..=2000) as f64;
    (format!("speed ($x) at angle ({text}) given distance == {d}"), (d * 9.8 / (2.0 * theta.sin().powi(2))).sqrt())
}

/// `n` problems of one family, reproducible from `seed`.
pub fn generate(family: Family, n: usize, seed: u64) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (query, expected) = match family {
                Family::Linear => linear(&mut rng),
                Family::LogLaws => log_laws(&mut rng),
                Family::Quadratic => quadratic(&mut rng),
                Family::Projectile => projectile(&mut rng),
            };
            let init = if family == Family::Projectile { 0.0 } else { 1.0 };
            Problem {
                family,
                name: format!("{}-{i:03}", family.name()),
                source: wrap(family, &query, init),
                query,
                expected,
            }
        })
        .collect()
}

/// Write problems as `<dir>/<name>.cool` plus an `answers.csv`.
pub fn write_suite(dir: &Path, problems: &[Problem]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut answers = String::from("file,query,expected\n");
    let mut paths = Vec::new();
    for p in problems {
        let path = dir.join(format!("{}.cool", p.name));
        std::fs::write(&path, &p.source)?;
        answers.push_str(&format!("{}.cool,\"{}\",{:.12}\n", p.name, p.query, p.expected));
        paths.push(path);
    }
    std::fs::write(dir.join("answers.csv"), answers)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        assert_eq!(generate(Family::LogLaws, 5, 3), generate(Family::LogLaws, 5, 3));
        assert_ne!(generate(Family::LogLaws, 5, 3), generate(Family::LogLaws, 5, 4));
        assert_eq!("log-laws".parse::<Family>().unwrap(), Family::LogLaws);
    }

    #[test]
    fn every_problem_parses() {
        for f in FAMILIES {
            for p in generate(f, 10, 1) {
                crate::frontend::parse_program(&p.source).unwrap_or_else(|e| panic!("{}: {e}", p.source));
                assert!(p.expected.is_finite());
            }
        }
    }
}
