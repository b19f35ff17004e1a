//! Irreducible finite Markov chains: validation, stationary distribution and rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row sums may deviate from one by at most this much on input.
const STOCHASTIC_TOL: f64 = 1e-9;
/// Entries at or below this are treated as structural zeros for connectivity.
const POSITIVITY_FLOOR: f64 = 1e-15;
/// Accepted residual of `pi M = pi` after the linear solve.
const STATIONARY_RESIDUAL: f64 = 1e-10;

/// An irreducible row-stochastic matrix together with its stationary distribution.
///
/// Immutable after construction. Rows are renormalised on input so that each
/// sums to one to machine precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    k: usize,
    rows: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

impl Chain {
    /// Validates `raw` and computes its stationary distribution.
    pub fn new(raw: &[Vec<f64>]) -> Result<Self> {
        let k = raw.len();
        if k == 0 {
            return Err(Error::NotStochastic("empty matrix".into()));
        }
        let mut rows = Vec::with_capacity(k);
        for (i, row) in raw.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotStochastic(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
                return Err(Error::NotStochastic(format!("row {i} has entry {bad} outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
            rows.push(row.iter().map(|v| v / sum).collect::<Vec<_>>());
        }
        if !strongly_connected(&rows) {
            return Err(Error::NotIrreducible);
        }
        let pi = stationary_of(&rows)?;
        Ok(Chain { k, rows, pi })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Transition probability from `from` to `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    /// The stationary distribution `pi` with `pi M = pi`.
    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    /// Row `m_l = delta_l M` (0-based state index).
    pub fn row(&self, state: usize) -> Result<&[f64]> {
        self.rows
            .get(state)
            .map(|r| r.as_slice())
            .ok_or(Error::IndexOutOfRange { index: state, len: self.k })
    }

    /// Computes `q M` for a probability vector `q`.
    pub fn shift(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (qi, row) in q.iter().zip(&self.rows) {
            if *qi == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(row) {
                *o += qi * m;
            }
        }
        out
    }
}

/// Forward and backward reachability from state 0 over the positive entries.
fn strongly_connected(rows: &[Vec<f64>]) -> bool {
    let k = rows.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let w = if forward { rows[i][j] } else { rows[j][i] };
                if w > POSITIVITY_FLOOR && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Solves `(M^T - I) pi = 0` with the last equation replaced by `sum(pi) = 1`.
fn stationary_of(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = rows.len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = rows[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut b = DVector::<f64>::zeros(k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    b[k - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("stationary distribution system".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem("stationary solution has no mass".into()));
    }
    pi.iter_mut().for_each(|v| *v /= total);

    let residual = (0..k)
        .map(|j| ((0..k).map(|i| pi[i] * rows[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::SingularSystem(format!("stationary residual {residual:e}")));
    }
    Ok(pi)
}
