//! Monte-Carlo play of the persuasion game.
//!
//! Replication `i` of a run seeded with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`. Within a stage the
//! draws are consumed in a fixed order: the state, one uniform for an optional
//! disclosure of the previous state, the signal, then the revelation bit.

mod estimate;
mod facts;
mod strategy;

pub use estimate::{
    batch_means_se, discount_horizon, discounted_replications, estimate_bn, estimate_discounted, pairwise_sum,
    random_duration_value_mc, replicate, truncation_bound, BnEstimate, Estimate, Replication,
};
pub use facts::{clt_quantile_bound, nb_pmf, nb_truncated_mean, renewal_stats, RenewalStats};
pub use strategy::{
    strategy_couple_down, strategy_sigma_star, CoupleDown, FullRevelation, PolicyStrategy, SigmaStar, StageContext,
    Strategy, Uninformative,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{bayes_shift, Belief};
use crate::error::{Error, Result};
use crate::solver::Scenario;

/// The generator for replication `replication` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// One realised stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub state: usize,
    /// Belief before the signal, after any disclosure.
    pub prior: Belief,
    pub disclosed: bool,
    pub signal: usize,
    pub posterior: Belief,
    pub payoff: f64,
    pub revealed: bool,
}

/// A full realised path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub states: Vec<usize>,
    pub signals: Vec<usize>,
    pub reveals: Vec<bool>,
    pub disclosures: Vec<bool>,
    pub priors: Vec<Belief>,
    pub posteriors: Vec<Belief>,
    pub stage_payoffs: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn push(&mut self, r: StageRecord) {
        self.states.push(r.state);
        self.signals.push(r.signal);
        self.reveals.push(r.revealed);
        self.disclosures.push(r.disclosed);
        self.priors.push(r.prior);
        self.posteriors.push(r.posterior);
        self.stage_payoffs.push(r.payoff);
    }
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if draw < acc {
            return i;
        }
    }
    last
}

/// Plays `horizon` stages from initial belief `p0`, handing each stage to
/// `visit`; stops early if `visit` returns `false`.
pub fn play<S: Strategy + ?Sized>(
    sc: &Scenario,
    strat: &S,
    p0: &Belief,
    horizon: usize,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(&StageRecord) -> bool,
) -> Result<()> {
    let k = sc.k();
    if p0.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: p0.k() });
    }
    let chain = &sc.chain;
    let mut belief = p0.clone();
    let mut previous: Option<usize> = None;
    let mut revealed_last = false;
    let mut revelations = 0;
    for stage in 1..=horizon {
        let state = match previous {
            None => sample_index(rng, belief.as_slice()),
            Some(s) => sample_index(rng, chain.row(s)?),
        };
        let aux: f64 = rng.random();
        let mut disclosed = false;
        if let Some(prev) = previous {
            let ctx = StageContext { stage, belief: &belief, state, previous_state: previous, revealed_last, revelations };
            if !revealed_last && aux < strat.disclosure_probability(&ctx) {
                belief = Belief::normalized(chain.row(prev)?.to_vec());
                disclosed = true;
            }
        }
        let ctx = StageContext { stage, belief: &belief, state, previous_state: previous, revealed_last, revelations };
        let kernel = strat.kernel(&ctx);
        if kernel.k() != k {
            return Err(Error::InvalidKernel(format!("kernel has {} rows for {k} states", kernel.k())));
        }
        let signal = sample_index(rng, kernel.row(state));
        let posterior = kernel
            .posterior(&belief, signal)
            .ok_or_else(|| Error::InvalidKernel("sampled a signal of zero probability".into()))?;
        let payoff = sc.u.interpolate(&posterior)?;
        let revealed = rng.random::<f64>() < sc.x;
        let record = StageRecord { stage, state, prior: belief, disclosed, signal, posterior, payoff, revealed };
        if !visit(&record) {
            break;
        }
        belief = if revealed {
            Belief::normalized(chain.row(state)?.to_vec())
        } else {
            bayes_shift(&record.posterior, chain)
        };
        previous = Some(state);
        revealed_last = revealed;
        revelations += revealed as usize;
    }
    Ok(())
}

/// Records a full trace of `horizon` stages for replication `replication`.
pub fn run_policy<S: Strategy + ?Sized>(
    sc: &Scenario,
    strat: &S,
    p0: &Belief,
    horizon: usize,
    seed: u64,
    replication: u64,
) -> Result<SimTrace> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let mut rng = replication_rng(seed, replication);
    let mut trace = SimTrace::default();
    play(sc, strat, p0, horizon, &mut rng, |r| {
        trace.push(r.clone());
        true
    })?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid, GridFn};
    use crate::chain::Chain;
    use crate::solver::{solve, Mode};

    fn scenario(x: f64) -> Scenario {
        let m = Chain::new(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let g = make_grid(2, 100).unwrap();
        let u = GridFn::from_fn(g, |q| (2.0 * q[1] - 1.0).powi(2));
        Scenario::new(m, u, 0.9, x).unwrap()
    }

    #[test]
    fn full_revelation_posteriors_are_vertices() {
        let sc = scenario(0.3);
        let t = run_policy(&sc, &FullRevelation::new(2), &Belief::uniform(2), 200, 7, 0).unwrap();
        for (p, s) in t.posteriors.iter().zip(&t.states) {
            assert_eq!(p, &Belief::vertex(2, *s));
            assert_eq!(p.as_slice().iter().filter(|v| **v == 1.0).count(), 1);
        }
    }

    #[test]
    fn null_strategy_without_revelations_follows_the_chain() {
        let sc = scenario(0.0);
        let p0 = Belief::new(vec![0.2, 0.8]).unwrap();
        let t = run_policy(&sc, &Uninformative::new(2), &p0, 30, 1, 3).unwrap();
        let mut expect = p0.clone();
        for p in &t.posteriors {
            assert!(p.distance(&expect) < 1e-14);
            expect = bayes_shift(&expect, &sc.chain);
        }
        assert!(t.reveals.iter().all(|z| !z));
    }

    #[test]
    fn same_seed_same_trace() {
        let sc = scenario(0.4);
        let r = solve(&sc, Mode::Reveal).unwrap();
        let s = PolicyStrategy::new(&r.policy);
        let a = run_policy(&sc, &s, &Belief::uniform(2), 500, 42, 9).unwrap();
        let b = run_policy(&sc, &s, &Belief::uniform(2), 500, 42, 9).unwrap();
        assert_eq!(a, b);
        let c = run_policy(&sc, &s, &Belief::uniform(2), 500, 42, 10).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn revelations_reboot_the_belief() {
        let sc = scenario(0.5);
        let r = solve(&sc, Mode::Reveal).unwrap();
        let t = run_policy(&sc, &PolicyStrategy::new(&r.policy), &Belief::uniform(2), 2000, 5, 0).unwrap();
        let mut seen = 0;
        for n in 1..t.len() {
            if t.reveals[n - 1] {
                assert_eq!(t.priors[n].as_slice(), sc.chain.row(t.states[n - 1]).unwrap());
                seen += 1;
            }
        }
        assert!(seen > 500);
    }

    #[test]
    fn payoffs_are_interpolated_u() {
        let sc = scenario(0.2);
        let t = run_policy(&sc, &Uninformative::new(2), &Belief::uniform(2), 50, 3, 0).unwrap();
        for (p, v) in t.posteriors.iter().zip(&t.stage_payoffs) {
            assert_eq!(*v, sc.u.interpolate(p).unwrap());
        }
    }

    #[test]
    fn sigma_star_is_silent_until_first_revelation() {
        let sc = scenario(0.3);
        let s = strategy_sigma_star(&sc).unwrap();
        let t = run_policy(&sc, &s, &Belief::uniform(2), 300, 11, 0).unwrap();
        let first = t.reveals.iter().position(|z| *z).unwrap();
        for n in 0..=first {
            assert_eq!(t.posteriors[n], t.priors[n]);
        }
        assert_eq!(t.priors[first + 1].as_slice(), sc.chain.row(t.states[first]).unwrap());
    }

    #[test]
    fn couple_down_rates() {
        let sc = scenario(0.3);
        let r = solve(&sc, Mode::Reveal).unwrap();
        assert_eq!(strategy_couple_down(&r.policy, 0.3, 0.3).unwrap().probability(), 0.0);
        assert_eq!(strategy_couple_down(&r.policy, 0.3, 1.0).unwrap().probability(), 1.0);
        assert!(matches!(strategy_couple_down(&r.policy, 0.5, 0.3), Err(Error::BadRates { .. })));

        // With y = 1 every stage after the first starts from the previous row.
        let s = strategy_couple_down(&r.policy, 0.3, 1.0).unwrap();
        let t = run_policy(&sc, &s, &Belief::uniform(2), 400, 2, 0).unwrap();
        for n in 1..t.len() {
            assert_eq!(t.priors[n].as_slice(), sc.chain.row(t.states[n - 1]).unwrap());
            assert_eq!(t.disclosures[n], !t.reveals[n - 1]);
        }
    }
}
