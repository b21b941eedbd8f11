//! Exact masses of the labeled Galton-Watson laws and the exhaustive
//! enumeration oracle.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::chains::{w, Q};
use crate::tree::{LabeledTree, TreeBuilder};

/// Largest edge count the enumeration accepts.
pub const MAX_ENUM_EDGES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Law {
    Rho(i64),
    RhoPlus(i64),
    RhoMinus(i64),
}

impl Law {
    pub fn root_label(&self) -> i64 {
        match *self {
            Law::Rho(x) | Law::RhoPlus(x) | Law::RhoMinus(x) => x,
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Rho(x) => write!(f, "rho({x})"),
            Law::RhoPlus(x) => write!(f, "rho_plus({x})"),
            Law::RhoMinus(x) => write!(f, "rho_minus({x})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LawError {
    #[error("tree root label {tree} does not match law root label {law}")]
    RootMismatch { tree: i64, law: i64 },
    #[error("{0} is not a probability law")]
    InvalidLaw(Law),
    #[error("enumeration up to {edges} edges would produce {count} trees (limit is {MAX_ENUM_EDGES} edges)")]
    TooLarge { edges: usize, count: BigInt },
}

/// Mass of a single tree under ρ(x): 1 / (2 * 12^edges).
pub fn rho_mass(edges: usize) -> Q {
    Q::new(BigInt::one(), BigInt::from(2) * BigInt::from(12).pow(edges as u32))
}

pub fn law_mass(tree: &LabeledTree, law: Law) -> Result<Q, LawError> {
    let x = law.root_label();
    if tree.root_label() != x {
        return Err(LawError::RootMismatch { tree: tree.root_label(), law: x });
    }
    let base = rho_mass(tree.edges());
    match law {
        Law::Rho(_) => Ok(base),
        Law::RhoPlus(x) => {
            if x <= 0 {
                return Err(LawError::InvalidLaw(law));
            }
            if tree.min_label() < 1 {
                return Ok(Q::zero());
            }
            Ok(base / w(x))
        }
        Law::RhoMinus(x) => {
            if tree.min_label() > 0 {
                return Ok(Q::zero());
            }
            Ok(base / (Q::one() - w(x)))
        }
    }
}

pub fn catalan(n: usize) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..n {
        c = c * (2 * (2 * i + 1)) / (i + 2);
    }
    c
}

/// Number of labeled trees with at most `max_edges` edges.
pub fn labeled_count(max_edges: usize) -> BigInt {
    (0..=max_edges).map(|e| catalan(e) * BigInt::from(3).pow(e as u32)).sum()
}

/// All Dyck words of semi-length `n` (true = step down into a new child).
fn dyck_words(n: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(2 * n);
    fn rec(n: usize, open: usize, close: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if open == n && close == n {
            out.push(cur.clone());
            return;
        }
        if open < n {
            cur.push(true);
            rec(n, open + 1, close, cur, out);
            cur.pop();
        }
        if close < open {
            cur.push(false);
            rec(n, open, close + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, 0, 0, &mut cur, &mut out);
    out
}

/// Every labeled tree with exactly `edges` edges and the given root label.
pub fn enumerate_exact(edges: usize, root_label: i64) -> Result<Vec<LabeledTree>, LawError> {
    if edges > MAX_ENUM_EDGES {
        return Err(LawError::TooLarge { edges, count: catalan(edges) * BigInt::from(3).pow(edges as u32) });
    }
    let mut out = Vec::new();
    let labelings = 3usize.pow(edges as u32);
    for word in dyck_words(edges) {
        for mut code in 0..labelings {
            let mut b = TreeBuilder::new(root_label);
            let mut stack = vec![0u32];
            for &down in &word {
                if down {
                    let p = *stack.last().unwrap();
                    let d = (code % 3) as i64 - 1;
                    code /= 3;
                    let id = b.add_child(p, b.label(p) + d);
                    stack.push(id);
                } else {
                    stack.pop();
                }
            }
            out.push(b.build().0);
        }
    }
    Ok(out)
}

/// Every labeled tree with at most `max_edges` edges, by increasing size.
pub fn enumerate_labeled_trees(max_edges: usize, root_label: i64) -> Result<Vec<LabeledTree>, LawError> {
    if max_edges > MAX_ENUM_EDGES {
        return Err(LawError::TooLarge { edges: max_edges, count: labeled_count(max_edges) });
    }
    let mut out = Vec::new();
    for e in 0..=max_edges {
        out.extend(enumerate_exact(e, root_label)?);
    }
    Ok(out)
}

/// Text code to exact mass, for every tree of at most `max_edges` edges
/// with positive mass.
pub fn law_table(law: Law, max_edges: usize) -> Result<BTreeMap<String, Q>, LawError> {
    if let Law::RhoPlus(x) = law {
        if x <= 0 {
            return Err(LawError::InvalidLaw(law));
        }
    }
    let mut table = BTreeMap::new();
    for t in enumerate_labeled_trees(max_edges, law.root_label())? {
        let m = law_mass(&t, law)?;
        if !m.is_zero() {
            table.insert(t.to_text(), m);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(enumerate_labeled_trees(0, 0).unwrap().len(), 1);
        assert_eq!(enumerate_exact(3, 0).unwrap().len(), 135);
        assert!(matches!(enumerate_labeled_trees(7, 0), Err(LawError::TooLarge { .. })));
    }

    #[test]
    fn pinned_masses() {
        let t = LabeledTree::single(1);
        assert_eq!(law_mass(&t, Law::Rho(1)).unwrap(), Q::new(1.into(), 2.into()));
        assert_eq!(law_mass(&t, Law::RhoPlus(1)).unwrap(), Q::new(3.into(), 4.into()));
        assert_eq!(law_mass(&LabeledTree::single(0), Law::RhoPlus(0)), Err(LawError::InvalidLaw(Law::RhoPlus(0))));
    }
}
