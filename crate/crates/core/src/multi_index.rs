//! Per-component shift orders of a flat output.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

/// A tuple of non-negative shift orders, one per flat-output component.
///
/// `A <= B` is the componentwise order; it is only a partial order, so the
/// type deliberately does not implement `PartialOrd`. Use [`MultiIndex::le`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(m: usize) -> Self {
        MultiIndex(vec![0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// `#A`, the sum over all components.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn min(&self) -> usize {
        self.0.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Componentwise `self <= other`. Indices of different length are incomparable.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Componentwise difference `self - other`, `None` if any component would be negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if self.len() != other.len() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// All multi-indices `0 <= A <= self`, in lexicographic order.
    pub fn below(&self) -> Vec<MultiIndex> {
        let mut out = vec![Vec::with_capacity(self.len())];
        for &bound in &self.0 {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..=bound).map(move |a| {
                        let mut next = prefix.clone();
                        next.push(a);
                        next
                    })
                })
                .collect();
        }
        out.into_iter().map(MultiIndex).collect()
    }
}

impl Index<usize> for MultiIndex {
    type Output = usize;

    fn index(&self, j: usize) -> &usize {
        &self.0[j]
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl std::str::FromStr for MultiIndex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        trimmed
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad multi-index entry `{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(MultiIndex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_and_order() {
        let a = MultiIndex::new(vec![0, 2]);
        let b = MultiIndex::new(vec![1, 2]);
        assert_eq!(a.total(), 2);
        assert_eq!(b.total(), 3);
        assert!(a.le(&b));
        assert!(!b.le(&a));
        assert!(!MultiIndex::new(vec![1, 0]).le(&MultiIndex::new(vec![0, 1])));
    }

    #[test]
    fn enumerate_below() {
        let all = MultiIndex::new(vec![2, 2]).below();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], MultiIndex::new(vec![0, 0]));
        assert_eq!(all[8], MultiIndex::new(vec![2, 2]));
        assert_eq!(MultiIndex::new(vec![3, 2]).below().len(), 12);
    }

    #[test]
    fn parse_and_display() {
        let a: MultiIndex = "(2,4)".parse().unwrap();
        assert_eq!(a, MultiIndex::new(vec![2, 4]));
        assert_eq!(a.to_string(), "(2,4)");
        assert_eq!("1, 3".parse::<MultiIndex>().unwrap(), MultiIndex::new(vec![1, 3]));
        assert!("1,-1".parse::<MultiIndex>().is_err());
    }

    #[test]
    fn subtraction() {
        let r = MultiIndex::new(vec![3, 2]);
        let k = MultiIndex::new(vec![2, 2]);
        assert_eq!(r.checked_sub(&k), Some(MultiIndex::new(vec![1, 0])));
        assert_eq!(k.checked_sub(&r), None);
    }
}
