//! Knowledge-domain resolution from `#load` and `<<` inheritance.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::ast::{DomainSet, Program};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("class `{class}` inherits unknown name `{parent}`")]
    Unresolved { class: String, parent: String },
    #[error("inheritance cycle through class `{0}`")]
    Cycle(String),
    #[error("class `{0}` declared more than once")]
    Duplicate(String),
}

/// Invokable domains for the top level and for every class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DomainMap {
    pub top: DomainSet,
    pub classes: BTreeMap<String, DomainSet>,
}

impl DomainMap {
    /// Domains for a context: a class name, or `None` for the top level.
    pub fn context(&self, class: Option<&str>) -> &DomainSet {
        class.and_then(|c| self.classes.get(c)).unwrap_or(&self.top)
    }
}

pub fn resolve_domains(p: &Program) -> Result<DomainMap, DomainError> {
    resolve_domains_with(p, &[])
}

/// Like [`resolve_domains`], with additional loaded domain names (for example
/// the transitive loads of loaded files).
pub fn resolve_domains_with(p: &Program, extra_loads: &[String]) -> Result<DomainMap, DomainError> {
    let loads: BTreeSet<String> = p
        .loads()
        .map(str::to_string)
        .chain(extra_loads.iter().cloned())
        .collect();
    let mut parents: BTreeMap<&str, &[String]> = BTreeMap::new();
    for c in p.classes() {
        if parents.insert(c.name.as_str(), c.parents.as_slice()).is_some() {
            return Err(DomainError::Duplicate(c.name.clone()));
        }
    }
    for c in p.classes() {
        for parent in &c.parents {
            if !parents.contains_key(parent.as_str()) && !loads.contains(parent) {
                return Err(DomainError::Unresolved { class: c.name.clone(), parent: parent.clone() });
            }
        }
    }

    let mut done: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for name in parents.keys() {
        let mut stack = Vec::new();
        closure(name, &parents, &mut done, &mut stack)?;
    }

    let mut top = DomainSet::from_names(loads.iter().cloned());
    top.insert(p.source_name.clone());
    let classes = done
        .into_iter()
        .map(|(k, mut v)| {
            v.extend(loads.iter().cloned());
            (k, DomainSet(v))
        })
        .collect();
    Ok(DomainMap { top, classes })
}

fn closure(
    name: &str,
    parents: &BTreeMap<&str, &[String]>,
    done: &mut BTreeMap<String, BTreeSet<String>>,
    stack: &mut Vec<String>,
) -> Result<BTreeSet<String>, DomainError> {
    if let Some(s) = done.get(name) {
        return Ok(s.clone());
    }
    if stack.iter().any(|s| s == name) {
        return Err(DomainError::Cycle(name.to_string()));
    }
    let mut out = BTreeSet::from([name.to_string()]);
    if let Some(ps) = parents.get(name) {
        stack.push(name.to_string());
        for p in ps.iter() {
            out.extend(closure(p, parents, done, stack)?);
        }
        stack.pop();
        done.insert(name.to_string(), out.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_named;

    #[test]
    fn base_case_and_transitivity() {
        let p = parse_named("#load(io); class: A << B {} class: B << C {} class: C {} class: D {}", "f").unwrap();
        let m = resolve_domains(&p).unwrap();
        assert_eq!(m.classes["D"], DomainSet::from_names(["D", "io"]));
        assert!(DomainSet::from_names(["A", "B", "C"]).is_subset(&m.classes["A"]));
        assert_eq!(m.top, DomainSet::from_names(["f", "io"]));
    }

    #[test]
    fn errors() {
        let p = parse_named("class: A << Z {}", "f").unwrap();
        assert!(matches!(resolve_domains(&p), Err(DomainError::Unresolved { .. })));
        let p = parse_named("class: A << B {} class: B << A {}", "f").unwrap();
        assert!(matches!(resolve_domains(&p), Err(DomainError::Cycle(_))));
    }
}
