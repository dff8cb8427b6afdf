//! Hierarchical instruction addresses.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nonempty sequence of positive integers, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierAddr(pub Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("address {0} is not below {1}")]
    NotOrdered(HierAddr, HierAddr),
    #[error("no address exists between {0} and {1}")]
    Adjacent(HierAddr, HierAddr),
}

impl HierAddr {
    pub fn new(components: Vec<u32>) -> Self {
        assert!(!components.is_empty() && components.iter().all(|&c| c > 0), "invalid address {components:?}");
        HierAddr(components)
    }

    pub fn top(c: u32) -> Self {
        HierAddr::new(vec![c])
    }

    pub fn child(&self, c: u32) -> Self {
        let mut v = self.0.clone();
        v.push(c);
        HierAddr(v)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for HierAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// An address strictly between `a` and `b`. The result is never a prefix of
/// `b`, so any extension of it also stays below `b`.
pub fn address_between(a: &HierAddr, b: &HierAddr) -> Result<HierAddr, AddrError> {
    if a >= b {
        return Err(AddrError::NotOrdered(a.clone(), b.clone()));
    }
    let (x, y) = (&a.0, &b.0);
    let k = x.iter().zip(y.iter()).take_while(|(p, q)| p == q).count();
    if k < x.len() {
        // diverge at k with x[k] < y[k]
        if y[k] - x[k] > 1 {
            let mut c = x[..k].to_vec();
            c.push(x[k] + (y[k] - x[k]) / 2);
            return Ok(HierAddr(c));
        }
        return Ok(a.child(1));
    }
    // a is a proper prefix of b
    if y[k] >= 2 {
        return Ok(a.child(y[k] / 2));
    }
    let next = a.child(1);
    if next == *b {
        return Err(AddrError::Adjacent(a.clone(), b.clone()));
    }
    address_between(&next, b)
}

/// `n` increasing addresses strictly between `a` and `b`.
pub fn range_between(a: &HierAddr, b: &HierAddr, n: usize) -> Result<Vec<HierAddr>, AddrError> {
    let base = address_between(a, b)?;
    Ok((1..=n as u32).map(|i| base.child(i)).collect())
}
