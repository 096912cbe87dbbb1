//! Ranked mass configurations: points of the simplex of non-increasing
//! positive masses with unit sum.

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a configuration.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Drift beyond which merged states are renormalized to unit mass.
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedMassVector {
    masses: Vec<f64>,
}

/// Sort masses into non-increasing order after validating them.
pub fn rank(masses: &[f64]) -> Result<RankedMassVector> {
    RankedMassVector::rank(masses)
}

fn descending(a: &f64, b: &f64) -> std::cmp::Ordering {
    b.total_cmp(a)
}

impl RankedMassVector {
    pub fn rank(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidConfiguration("no masses".into()));
        }
        if let Some(bad) = masses.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidConfiguration(format!(
                "mass {bad} is not strictly positive"
            )));
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidConfiguration(format!(
                "masses sum to {sum}, expected 1"
            )));
        }
        let mut masses = masses.to_vec();
        // stable: ties keep their input order
        masses.sort_by(descending);
        Ok(Self { masses })
    }

    /// Rank positive weights after scaling them to unit total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidConfiguration(format!(
                "weights sum to {total}"
            )));
        }
        let scaled: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Self::rank(&scaled)
    }

    /// `n` clusters of mass `1/n`.
    pub fn monodisperse(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfiguration("n must be at least 1".into()));
        }
        Ok(Self {
            masses: vec![1.0 / n as f64; n],
        })
    }

    /// The single-cluster state `(1)`.
    pub fn unit() -> Self {
        Self { masses: vec![1.0] }
    }

    pub(crate) fn from_sorted_unchecked(masses: Vec<f64>) -> Self {
        debug_assert!(masses.windows(2).all(|w| w[0] >= w[1]));
        debug_assert!((masses.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Self { masses }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.masses[0]
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Replace entries `i` and `j` (ranked indices, any order) by their sum.
    /// The merged mass is re-inserted by binary search.
    pub fn merge(&self, i: usize, j: usize) -> Result<Self> {
        let n = self.masses.len();
        if i == j || i >= n || j >= n {
            return Err(Error::invalid_arg(format!(
                "cannot merge indices ({i}, {j}) in a state of {n} clusters"
            )));
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let merged = self.masses[lo] + self.masses[hi];
        let mut masses = Vec::with_capacity(n - 1);
        masses.extend_from_slice(&self.masses[..lo]);
        masses.extend_from_slice(&self.masses[lo + 1..hi]);
        masses.extend_from_slice(&self.masses[hi + 1..]);
        let at = masses.partition_point(|&x| x >= merged);
        masses.insert(at, merged);
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
            masses.iter_mut().for_each(|x| *x /= sum);
        }
        Ok(Self { masses })
    }

    /// Integer key identifying the configuration up to `1/scale`.
    ///
    /// For a configuration whose masses are multiples of `1/scale` (e.g.
    /// `scale = n` for monodisperse starts) this is the integer partition of
    /// the state, suitable as a category label in frequency tests.
    pub fn partition_key(&self, scale: f64) -> Vec<u64> {
        self.masses
            .iter()
            .map(|&x| (x * scale).round() as u64)
            .collect()
    }
}

impl AsRef<[f64]> for RankedMassVector {
    fn as_ref(&self) -> &[f64] {
        &self.masses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sorts_descending() {
        let v = rank(&[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(v.masses(), &[0.5, 0.3, 0.2]);
    }

    #[test]
    fn singleton() {
        assert_eq!(rank(&[1.0]).unwrap().masses(), &[1.0]);
    }

    #[test]
    fn ties_preserved() {
        let v = rank(&[0.25; 4]).unwrap();
        assert_eq!(v.masses(), &[0.25; 4]);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(
            rank(&[0.0, 1.0]),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(matches!(
            rank(&[-0.5, 1.5]),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn rejects_bad_sum() {
        assert!(rank(&[0.5, 0.4]).is_err());
        assert!(rank(&[0.5, 0.5 + 2e-9]).is_err());
        assert!(rank(&[0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn merge_reinserts_in_order() {
        let v = rank(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        let m = v.merge(2, 3).unwrap();
        assert_eq!(m.len(), 3);
        assert!((m.masses()[0] - 0.4).abs() < 1e-15);
        assert!((m.masses()[1] - 0.3).abs() < 1e-15);
        assert!(m.masses()[1] >= m.masses()[2]);
        let m = v.merge(0, 3).unwrap();
        assert_eq!(m.len(), 3);
        assert!((m.largest() - 0.5).abs() < 1e-15);
        assert!(v.merge(1, 1).is_err());
        assert!(v.merge(0, 4).is_err());
    }

    #[test]
    fn partition_key_of_monodisperse_merge() {
        let v = RankedMassVector::monodisperse(6).unwrap();
        let m = v.merge(0, 5).unwrap().merge(0, 1).unwrap();
        assert_eq!(m.partition_key(6.0), vec![3, 1, 1, 1]);
    }

    proptest! {
        #[test]
        fn rank_is_idempotent(ws in proptest::collection::vec(0.01f64..10.0, 1..40)) {
            let v = RankedMassVector::from_weights(&ws).unwrap();
            let again = rank(v.masses()).unwrap();
            prop_assert_eq!(&again, &v);
            prop_assert!(v.masses().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn rank_preserves_multiset(ws in proptest::collection::vec(0.01f64..10.0, 1..40)) {
            let total: f64 = ws.iter().sum();
            let scaled: Vec<f64> = ws.iter().map(|w| w / total).collect();
            let v = rank(&scaled).unwrap();
            let mut sorted = scaled.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assert_eq!(v.masses(), &sorted[..]);
        }

        #[test]
        fn merges_conserve_mass(ws in proptest::collection::vec(0.01f64..10.0, 2..60), picks in proptest::collection::vec(any::<u32>(), 60)) {
            let mut v = RankedMassVector::from_weights(&ws).unwrap();
            let mut k = 0;
            while v.len() > 1 {
                let n = v.len() as u32;
                let i = (picks[k % picks.len()] % n) as usize;
                let j = ((i as u32 + 1 + picks[(k + 1) % picks.len()] % (n - 1)) % n) as usize;
                v = v.merge(i, j).unwrap();
                k += 1;
                prop_assert!((v.total() - 1.0).abs() <= SUM_TOLERANCE);
                prop_assert!(v.masses().windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
