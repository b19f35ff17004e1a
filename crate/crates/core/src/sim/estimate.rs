use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::facts::renewal_stats;
use super::{play, replication_rng, Strategy};
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::solver::Scenario;

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Bound on the bias from truncating an infinite sum, 0 if none.
    pub truncation: f64,
}

/// A conditional estimate obtained by rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnEstimate {
    pub estimate: Estimate,
    pub accepted: usize,
    pub rejected: usize,
}

/// Summation over a fixed binary tree, independent of thread count.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

impl Estimate {
    /// Sample mean and standard error of `v`, which must be non-empty.
    pub fn from_samples(v: &[f64], truncation: f64) -> Estimate {
        let n = v.len();
        let mean = pairwise_sum(v) / n as f64;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Estimate { mean, std_error: (var / n as f64).sqrt(), samples: n, truncation }
    }
}

/// One replication of a discounted run.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// Normalised discounted payoff over the horizon.
    pub payoff: f64,
    /// Revelation bits, one per stage.
    pub reveals: Vec<bool>,
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let b = batches.max(2);
    let len = series.len() / b;
    if len == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|i| pairwise_sum(&series[i * len..(i + 1) * len]) / len as f64).collect();
    Estimate::from_samples(&means, 0.0).std_error
}

/// Runs `samples` independent replications in parallel, results in
/// replication order.
pub fn replicate<T, F>(samples: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..samples)
        .into_par_iter()
        .map(|i| f(&mut replication_rng(seed, i as u64)))
        .collect()
}

/// Stages needed so the discounted tail is at most `1e-6 (1 - lambda)`.
pub fn discount_horizon(lambda: f64, u_sup: f64) -> usize {
    if lambda <= 0.0 || u_sup <= 0.0 {
        return 1;
    }
    let target = 1e-6 * (1.0 - lambda) / u_sup;
    if target >= 1.0 {
        return 1;
    }
    (target.ln() / lambda.ln()).ceil().max(1.0) as usize
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::InvalidParameter("at least two replications are needed".into()));
    }
    Ok(())
}

/// Normalised discounted payoff `(1 - l) sum_n l^(n-1) u(p_n)`, truncated.
pub fn estimate_discounted<S: Strategy + ?Sized>(
    sc: &Scenario,
    strat: &S,
    p0: &Belief,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_samples(samples)?;
    let horizon = discount_horizon(sc.lambda, sc.u.sup_norm());
    let reps = discounted_replications(sc, strat, p0, horizon, samples, seed)?;
    let values: Vec<f64> = reps.iter().map(|r| r.payoff).collect();
    Ok(Estimate::from_samples(&values, truncation_bound(sc, horizon)))
}

/// Bias bound `l^horizon ||u||` from stopping a discounted sum after `horizon` stages.
pub fn truncation_bound(sc: &Scenario, horizon: usize) -> f64 {
    sc.lambda.powi(horizon.min(i32::MAX as usize) as i32) * sc.u.sup_norm()
}

/// Per-replication discounted payoffs and revelation bits, in replication order.
pub fn discounted_replications<S: Strategy + ?Sized>(
    sc: &Scenario,
    strat: &S,
    p0: &Belief,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<Replication>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let lambda = sc.lambda;
    replicate(samples, seed, |rng| {
        let mut total = 0.0;
        let mut weight = 1.0 - lambda;
        let mut reveals = Vec::with_capacity(horizon);
        play(sc, strat, p0, horizon, rng, |r| {
            total += weight * r.payoff;
            weight *= lambda;
            reveals.push(r.revealed);
            true
        })?;
        Ok(Replication { payoff: total, reveals })
    })
}

/// Total undiscounted payoff of the no-revelation game stopped after a
/// geometric(`x`) number of stages.
pub fn random_duration_value_mc<S: Strategy + ?Sized>(
    sc: &Scenario,
    p0: &Belief,
    x: f64,
    strat: &S,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_samples(samples)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidParameter(format!("stopping rate {x} outside (0, 1]")));
    }
    let silent = sc.with_x(0.0)?;
    let values = replicate(samples, seed, |rng| {
        let w = if x == 1.0 {
            1
        } else {
            // Inverse transform on {1, 2, ...}; 1 - U lies in (0, 1].
            let v: f64 = 1.0 - rng.random::<f64>();
            1 + (v.ln() / (1.0 - x).ln()).floor() as usize
        };
        let mut total = 0.0;
        play(&silent, strat, p0, w, rng, |r| {
            total += r.payoff;
            true
        })?;
        Ok(total)
    })?;
    Ok(Estimate::from_samples(&values, 0.0))
}

/// `(1/N) sum_{n = kappa_1 + 1}^{ell_N} u(p_n)` over replications with at
/// least two revelations by stage `N`; the others are rejected.
pub fn estimate_bn<S: Strategy + ?Sized>(
    sc: &Scenario,
    strat: &S,
    p0: &Belief,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<BnEstimate> {
    if n < 2 {
        return Err(Error::InvalidParameter("B_N needs N >= 2".into()));
    }
    check_samples(samples)?;
    let per = replicate(samples, seed, |rng| {
        let mut payoffs = Vec::with_capacity(n);
        let mut reveals = Vec::with_capacity(n);
        play(sc, strat, p0, n, rng, |r| {
            payoffs.push(r.payoff);
            reveals.push(r.revealed);
            true
        })?;
        let stats = renewal_stats(&reveals);
        if stats.t_n < 2 {
            return Ok(None);
        }
        let first = stats.kappas[0];
        Ok(Some(pairwise_sum(&payoffs[first..stats.ell_n]) / n as f64))
    })?;
    let accepted: Vec<f64> = per.iter().flatten().copied().collect();
    let rejected = samples - accepted.len();
    if accepted.is_empty() {
        return Err(Error::AllRejected { samples });
    }
    Ok(BnEstimate { estimate: Estimate::from_samples(&accepted, 0.0), accepted: accepted.len(), rejected })
}
