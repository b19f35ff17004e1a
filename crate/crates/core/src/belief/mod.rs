//! The belief simplex: beliefs, lattice grids with piecewise-linear
//! interpolation, Bayes-plausible splits and signal kernels.

mod grid;
mod split;

pub use grid::{BeliefGrid, GridFn, Stencil, DEFAULT_POINT_CAP};
pub use split::{kernel_from_split, split_from_kernel, validate_split, SignalKernel, Split, SPLIT_TOL};

use std::sync::Arc;

use crate::chain::Chain;
use crate::error::{Error, Result};

/// Tolerance on the total mass of a belief.
pub const BELIEF_SUM_TOL: f64 = 1e-12;

/// A probability vector over the states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Checks nonnegativity and unit mass, then renormalises away rounding.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBelief("empty belief".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidBelief(format!("entry {bad} is not a probability")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > BELIEF_SUM_TOL {
            return Err(Error::InvalidBelief(format!("weights sum to {sum}")));
        }
        Ok(Belief::normalized(weights))
    }

    /// Builds a belief from nonnegative weights of arbitrary positive mass.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-14 {
            weights.iter_mut().for_each(|w| *w /= sum);
        }
        Belief(weights)
    }

    /// The point mass `delta_state`.
    pub fn vertex(k: usize, state: usize) -> Self {
        let mut w = vec![0.0; k];
        w[state] = 1.0;
        Belief(w)
    }

    pub fn uniform(k: usize) -> Self {
        Belief(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Scalar product with a vector indexed by state.
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Sup-norm distance to another belief.
    pub fn distance(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The one-step Bayes shift `q -> q M`.
pub fn bayes_shift(q: &Belief, chain: &Chain) -> Belief {
    Belief::normalized(chain.shift(q.as_slice()))
}

/// Shared lattice grid of `Delta(K)` at spacing `1/resolution`.
pub fn make_grid(k: usize, resolution: usize) -> Result<Arc<BeliefGrid>> {
    BeliefGrid::new(k, resolution).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_beliefs() {
        assert!(Belief::new(vec![0.5, 0.4]).is_err());
        assert!(Belief::new(vec![1.5, -0.5]).is_err());
        assert!(Belief::new(vec![]).is_err());
        assert!(Belief::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn shift_examples() {
        let m = Chain::new(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let q = bayes_shift(&Belief::vertex(2, 0), &m);
        assert_eq!(q.as_slice(), &[0.7, 0.3]);

        let pi = Belief::new(m.stationary().to_vec()).unwrap();
        assert!(bayes_shift(&pi, &m).distance(&pi) < 1e-12);

        let ds = Chain::new(&[vec![0.2, 0.8], vec![0.8, 0.2]]).unwrap();
        let half = Belief::uniform(2);
        assert!(bayes_shift(&half, &ds).distance(&half) < 1e-15);
    }

    #[test]
    fn row_matches_shift_of_vertex() {
        let m = Chain::new(&[
            vec![0.1, 0.6, 0.3],
            vec![0.5, 0.0, 0.5],
            vec![0.3, 0.3, 0.4],
        ])
        .unwrap();
        for l in 0..3 {
            let shifted = bayes_shift(&Belief::vertex(3, l), &m);
            assert_eq!(shifted.as_slice(), m.row(l).unwrap());
        }
    }
}
