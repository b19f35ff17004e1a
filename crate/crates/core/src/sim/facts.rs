use statrs::distribution::{Discrete, NegativeBinomial};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Inter-revelation gaps and counts of a revelation bit sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenewalStats {
    /// `kappas[j]` is the number of stages from revelation `j` (or the start)
    /// to revelation `j + 1`.
    pub kappas: Vec<usize>,
    /// Number of revelations among the bits.
    pub t_n: usize,
    /// Stage of the last revelation, 0 if none.
    pub ell_n: usize,
}

impl RenewalStats {
    /// Largest `m` with `kappa_1 + ... + kappa_m <= n`.
    pub fn count_by_partial_sums(&self, n: usize) -> usize {
        let mut total = 0;
        let mut m = 0;
        for k in &self.kappas {
            total += k;
            if total > n {
                break;
            }
            m += 1;
        }
        m
    }
}

pub fn renewal_stats(reveals: &[bool]) -> RenewalStats {
    let mut kappas = Vec::new();
    let mut last = 0;
    for (i, z) in reveals.iter().enumerate() {
        if *z {
            let stage = i + 1;
            kappas.push(stage - last);
            last = stage;
        }
    }
    RenewalStats { t_n: kappas.len(), kappas, ell_n: last }
}

fn check_rate(x: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidParameter(format!("success probability {x} outside (0, 1]")));
    }
    Ok(())
}

/// `P(Y = y)` for `Y` the number of failures before the `r`-th success in
/// Bernoulli(`x`) trials.
pub fn nb_pmf(r: u64, x: f64, y: u64) -> Result<f64> {
    check_rate(x)?;
    if r == 0 {
        return Err(Error::InvalidParameter("negative binomial needs r >= 1".into()));
    }
    let d = NegativeBinomial::new(r as f64, x).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.pmf(y))
}

/// `E(Y | Y > n)` for the negative binomial above, as the unconditional mean
/// plus `(n + 1) / (x (1 + beta))` with `beta = P(Y > n + 1) / P(Y = n + 1)`.
pub fn nb_truncated_mean(r: u64, x: f64, n: u64) -> Result<f64> {
    check_rate(x)?;
    if r == 0 {
        return Err(Error::InvalidParameter("negative binomial needs r >= 1".into()));
    }
    let q = 1.0 - x;
    let d = NegativeBinomial::new(r as f64, x).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let ln_head = d.ln_pmf(n + 1);

    // beta as a sum of pmf ratios relative to y = n + 1, so nothing underflows.
    let rf = r as f64;
    let mut beta = 0.0;
    let mut term = 1.0;
    let mut y = (n + 1) as f64;
    loop {
        term *= (y + rf) / (y + 1.0) * q;
        if term == 0.0 {
            break;
        }
        beta += term;
        y += 1.0;
        if term < 1e-18 * beta {
            break;
        }
    }
    let ln_tail = ln_head + beta.ln_1p();
    if ln_tail.is_nan() || ln_tail < 1e-300f64.ln() {
        return Err(Error::DegenerateTail { n });
    }
    Ok(rf * q / x + (n + 1) as f64 / (x * (1.0 + beta)))
}

/// `z = sqrt(x (1 - x))` times the `(1 - eps/2)` standard normal quantile,
/// and whether `z eps <= sqrt(2 / (x (1 - x))) sqrt(eps)`.
///
/// At `x = 1` the scale vanishes and `(0, true)` is returned.
pub fn clt_quantile_bound(eps: f64, x: f64) -> Result<(f64, bool)> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1/2)")));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::RateBoundary(x));
    }
    if x == 1.0 {
        return Ok((0.0, true));
    }
    let s = x * (1.0 - x);
    let quantile = std::f64::consts::SQRT_2 * erfc_inv(eps);
    let z = s.sqrt() * quantile;
    let holds = z * eps <= (2.0 / s).sqrt() * eps.sqrt();
    Ok((z, holds))
}
