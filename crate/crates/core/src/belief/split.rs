use super::Belief;
use crate::error::{Error, Result};

/// Barycenter tolerance accepted by [`validate_split`].
pub const SPLIT_TOL: f64 = 1e-9;
/// Tolerance on weight and kernel-row mass.
const MASS_TOL: f64 = 1e-12;

/// A finite lottery over posteriors: atom `i` is posterior `q_i` with weight `alpha_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub posteriors: Vec<Belief>,
    pub weights: Vec<f64>,
}

impl Split {
    /// The single-atom split `{(p, 1)}`.
    pub fn uninformative(p: &Belief) -> Self {
        Split { posteriors: vec![p.clone()], weights: vec![1.0] }
    }

    /// One atom per state in the support of `p`, at the vertex.
    pub fn full_revelation(p: &Belief) -> Self {
        let k = p.k();
        let mut posteriors = Vec::new();
        let mut weights = Vec::new();
        for l in 0..k {
            if p[l] > 0.0 {
                posteriors.push(Belief::vertex(k, l));
                weights.push(p[l]);
            }
        }
        Split { posteriors, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let k = self.posteriors.first().map_or(0, Belief::k);
        let mut out = vec![0.0; k];
        for (q, a) in self.posteriors.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(q.as_slice()) {
                *o += a * v;
            }
        }
        out
    }

    /// Expected value of `f` under the split.
    pub fn expect(&self, mut f: impl FnMut(&Belief) -> f64) -> f64 {
        self.posteriors.iter().zip(&self.weights).map(|(q, a)| a * f(q)).sum()
    }

    /// Merges atoms whose posteriors agree within `tol` (sup norm), keeping
    /// first-appearance order.
    pub fn merged(&self, tol: f64) -> Split {
        let mut posteriors: Vec<Belief> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (q, a) in self.posteriors.iter().zip(&self.weights) {
            match posteriors.iter().position(|r| r.distance(q) <= tol) {
                Some(j) => weights[j] += a,
                None => {
                    posteriors.push(q.clone());
                    weights.push(*a);
                }
            }
        }
        Split { posteriors, weights }
    }
}

/// Stage signalling strategy: `rows[l][s]` is the probability of signal `s` in state `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalKernel {
    rows: Vec<Vec<f64>>,
}

impl SignalKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidKernel("no rows".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidKernel("empty signal alphabet".into()));
        }
        for (l, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidKernel(format!("row {l} has {} signals, expected {n}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidKernel(format!("row {l} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidKernel(format!("row {l} sums to {sum}")));
            }
        }
        Ok(SignalKernel { rows })
    }

    /// A single signal sent in every state.
    pub fn uninformative(k: usize) -> Self {
        SignalKernel { rows: vec![vec![1.0]; k] }
    }

    /// Signal `l` sent in state `l`.
    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|l| (0..k).map(|s| if s == l { 1.0 } else { 0.0 }).collect())
            .collect();
        SignalKernel { rows }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn signal_count(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Posterior after observing signal `s` from prior `p`, or `None` if `s`
    /// has probability zero.
    pub fn posterior(&self, p: &Belief, s: usize) -> Option<Belief> {
        let joint: Vec<f64> = (0..self.k()).map(|l| p[l] * self.rows[l][s]).collect();
        let mass: f64 = joint.iter().sum();
        (mass > 0.0).then(|| Belief::normalized(joint))
    }
}

/// Checks that `s` is a lottery over beliefs with barycenter `p`.
pub fn validate_split(p: &Belief, s: &Split) -> Result<()> {
    if s.is_empty() {
        return Err(Error::BadWeights("split has no atoms".into()));
    }
    if s.posteriors.len() != s.weights.len() {
        return Err(Error::BadWeights(format!(
            "{} posteriors but {} weights",
            s.posteriors.len(),
            s.weights.len()
        )));
    }
    if s.weights.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::BadWeights("negative or non-finite weight".into()));
    }
    let total: f64 = s.weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::BadWeights(format!("weights sum to {total}")));
    }
    if let Some(q) = s.posteriors.iter().find(|q| q.k() != p.k()) {
        return Err(Error::DimensionMismatch { expected: p.k(), got: q.k() });
    }
    let deviation = s
        .barycenter()
        .iter()
        .zip(p.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if deviation > SPLIT_TOL {
        return Err(Error::NotBayesPlausible { deviation });
    }
    Ok(())
}

/// The distribution of posteriors induced by `kernel` at prior `p`.
/// Zero-probability signals are dropped.
pub fn split_from_kernel(p: &Belief, kernel: &SignalKernel) -> Split {
    let mut posteriors = Vec::new();
    let mut weights = Vec::new();
    for s in 0..kernel.signal_count() {
        let alpha: f64 = (0..p.k()).map(|l| p[l] * kernel.row(l)[s]).sum();
        if alpha > 0.0 {
            if let Some(q) = kernel.posterior(p, s) {
                posteriors.push(q);
                weights.push(alpha);
            }
        }
    }
    Split { posteriors, weights }
}

/// A kernel realising `s` at prior `p`: signal `i` announces posterior `q_i`.
/// States outside the support of `p` get the uniform lottery.
pub fn kernel_from_split(p: &Belief, s: &Split) -> Result<SignalKernel> {
    validate_split(p, s).map_err(|e| Error::InvalidSplit(Box::new(e)))?;
    let n = s.len();
    let rows = (0..p.k())
        .map(|l| {
            if p[l] > 0.0 {
                let mut row: Vec<f64> = s
                    .posteriors
                    .iter()
                    .zip(&s.weights)
                    .map(|(q, a)| a * q[l] / p[l])
                    .collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                row
            } else {
                vec![1.0 / n as f64; n]
            }
        })
        .collect();
    Ok(SignalKernel { rows })
}
