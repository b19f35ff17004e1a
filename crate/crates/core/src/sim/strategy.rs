use std::borrow::Cow;
use std::sync::Arc;

use crate::belief::{kernel_from_split, Belief, BeliefGrid, SignalKernel, Split};
use crate::envelope::GridSplit;
use crate::error::{Error, Result};
use crate::solver::{solve, Mode, Policy, Scenario};

/// What a strategy sees when choosing the stage kernel.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    /// 1-based stage number.
    pub stage: usize,
    /// The receiver's belief about the current state before this stage's signal.
    pub belief: &'a Belief,
    pub state: usize,
    pub previous_state: Option<usize>,
    /// Whether the previous stage ended with a public revelation.
    pub revealed_last: bool,
    /// Public revelations so far.
    pub revelations: usize,
}

/// A sender strategy: a signal kernel per stage, plus an optional public
/// disclosure of the previous state made before the kernel is chosen.
pub trait Strategy: Sync {
    /// Probability of disclosing the previous state at the start of the stage.
    fn disclosure_probability(&self, _ctx: &StageContext) -> f64 {
        0.0
    }

    fn kernel(&self, ctx: &StageContext) -> Cow<'_, SignalKernel>;
}

/// A single signal whatever the state.
#[derive(Debug, Clone)]
pub struct Uninformative {
    kernel: SignalKernel,
}

impl Uninformative {
    pub fn new(k: usize) -> Self {
        Uninformative { kernel: SignalKernel::uninformative(k) }
    }
}

impl Strategy for Uninformative {
    fn kernel(&self, _ctx: &StageContext) -> Cow<'_, SignalKernel> {
        Cow::Borrowed(&self.kernel)
    }
}

/// The state itself is the signal.
#[derive(Debug, Clone)]
pub struct FullRevelation {
    kernel: SignalKernel,
}

impl FullRevelation {
    pub fn new(k: usize) -> Self {
        FullRevelation { kernel: SignalKernel::identity(k) }
    }
}

impl Strategy for FullRevelation {
    fn kernel(&self, _ctx: &StageContext) -> Cow<'_, SignalKernel> {
        Cow::Borrowed(&self.kernel)
    }
}

/// Plays a grid policy off the grid: the splits at the vertices of the cell
/// containing the belief are mixed with the belief's barycentric weights.
/// Every posterior is then a grid point, and the split is worth the
/// interpolated value of the policy at the belief.
#[derive(Debug, Clone)]
pub struct PolicyStrategy {
    grid: Arc<BeliefGrid>,
    splits: Vec<GridSplit>,
}

impl PolicyStrategy {
    pub fn new(policy: &Policy) -> Self {
        let splits = (0..policy.len()).map(|i| policy.grid_split(i).clone()).collect();
        PolicyStrategy { grid: policy.grid().clone(), splits }
    }

    pub fn split_at(&self, belief: &Belief) -> Result<Split> {
        let cell = self.grid.locate(belief.as_slice())?;
        let mut atoms: Vec<(usize, f64)> = Vec::new();
        for (v, w) in cell.indices.iter().zip(&cell.weights) {
            if *w <= 0.0 {
                continue;
            }
            let s = &self.splits[*v];
            atoms.extend(s.indices.iter().zip(&s.weights).map(|(i, a)| (*i, w * a)));
        }
        atoms.sort_by_key(|a| a.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(atoms.len());
        for (i, a) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => merged.push((i, a)),
            }
        }
        Ok(Split {
            posteriors: merged.iter().map(|(i, _)| self.grid.point(*i)).collect(),
            weights: merged.iter().map(|(_, a)| *a).collect(),
        })
    }

    pub fn kernel_at(&self, belief: &Belief) -> Result<SignalKernel> {
        kernel_from_split(belief, &self.split_at(belief)?)
    }
}

impl Strategy for PolicyStrategy {
    fn kernel(&self, ctx: &StageContext) -> Cow<'_, SignalKernel> {
        Cow::Owned(self.kernel_at(ctx.belief).expect("a mixture of grid splits is Bayes-plausible at the belief"))
    }
}

/// Uninformative until the first revelation, then the optimal stationary
/// policy of the no-revelation game at discount `1 - x`.
#[derive(Debug, Clone)]
pub struct SigmaStar {
    before: SignalKernel,
    after: PolicyStrategy,
}

impl Strategy for SigmaStar {
    fn kernel(&self, ctx: &StageContext) -> Cow<'_, SignalKernel> {
        if ctx.revelations == 0 {
            Cow::Borrowed(&self.before)
        } else {
            self.after.kernel(ctx)
        }
    }
}

/// Builds the renewal strategy for `sc.x` by solving the no-revelation game at
/// discount `1 - x`.
pub fn strategy_sigma_star(sc: &Scenario) -> Result<SigmaStar> {
    if !(sc.x > 0.0 && sc.x <= 1.0) {
        return Err(Error::InvalidParameter(format!("revelation rate {} outside (0, 1]", sc.x)));
    }
    let inner = sc.with_lambda(1.0 - sc.x)?;
    let r = solve(&inner, Mode::NoReveal)?;
    Ok(SigmaStar {
        before: SignalKernel::uninformative(sc.k()),
        after: PolicyStrategy::new(&r.policy),
    })
}

/// In the rate-`x` game, discloses the previous state with probability
/// `(y - x)/(1 - x)` whenever the exogenous revelation did not, then plays a
/// policy that is optimal at rate `y`.
#[derive(Debug, Clone)]
pub struct CoupleDown {
    inner: PolicyStrategy,
    probability: f64,
}

impl CoupleDown {
    pub fn probability(&self) -> f64 {
        self.probability
    }
}

impl Strategy for CoupleDown {
    fn disclosure_probability(&self, ctx: &StageContext) -> f64 {
        if ctx.stage >= 2 && !ctx.revealed_last {
            self.probability
        } else {
            0.0
        }
    }

    fn kernel(&self, ctx: &StageContext) -> Cow<'_, SignalKernel> {
        self.inner.kernel(ctx)
    }
}

/// Requires `0 < x <= y <= 1`; `x = y` gives a disclosure probability of zero.
pub fn strategy_couple_down(policy_y: &Policy, x: f64, y: f64) -> Result<CoupleDown> {
    if !(x > 0.0 && x <= y && y <= 1.0) || x == 1.0 {
        return Err(Error::BadRates { x, y });
    }
    Ok(CoupleDown { inner: PolicyStrategy::new(policy_y), probability: (y - x) / (1.0 - x) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid, GridFn};
    use crate::chain::Chain;

    #[test]
    fn mixed_split_is_plausible_and_worth_the_interpolated_value() {
        let m = Chain::new(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let g = make_grid(2, 40).unwrap();
        // A step payoff, the hard case for playback.
        let u = GridFn::from_fn(g, |q| if q[1] >= 0.6 { 1.0 } else { 0.0 });
        let sc = Scenario::new(m, u, 0.7, 0.0).unwrap();
        let r = solve(&sc, Mode::NoReveal).unwrap();
        let s = PolicyStrategy::new(&r.policy);
        for t in [0.0, 0.013, 0.31, 0.5987, 0.6, 0.777, 1.0] {
            let p = Belief::new(vec![1.0 - t, t]).unwrap();
            let split = s.split_at(&p).unwrap();
            let b = split.barycenter();
            assert!(b.iter().zip(p.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12));
            for q in &split.posteriors {
                assert!(q.distance(&sc.grid().point(sc.grid().nearest(q.as_slice()).unwrap())) < 1e-15);
            }
            // Playing the vertex splits at their weights is worth the interpolated u-part.
            let mixed = split.expect(|q| sc.u.interpolate(q).unwrap());
            let cell = sc.grid().locate(p.as_slice()).unwrap();
            let by_vertex: f64 = cell
                .indices
                .iter()
                .zip(&cell.weights)
                .map(|(v, w)| w * r.policy.split(*v).expect(|q| sc.u.interpolate(q).unwrap()))
                .sum();
            assert!((mixed - by_vertex).abs() < 1e-12);
        }
    }
}
