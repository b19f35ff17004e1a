//! Bellman operators, discounted fixed points, Cesaro values and the
//! stationary-weighted asymptotic value.
//!
//! With revelation rate `x` the operator is
//!
//! ```text
//! T_x f(p) = Cav[(1 - l) u + l (1 - x) f(. M)](p) + l x sum_s p^s f(m_s)
//! ```
//!
//! and the no-revelation operator drops the last term and the `(1 - x)`
//! factor. Off-grid arguments are interpolated.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::belief::{kernel_from_split, Belief, BeliefGrid, GridFn, SignalKernel, Split, Stencil};
use crate::chain::Chain;
use crate::envelope::{cav_grid, cav_split_at, cav_values, GridSplit};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;
/// Grids at least this large build the continuation term in parallel.
const PAR_MIN_POINTS: usize = 4096;

/// Which game is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// States are disclosed publicly with probability `x` after each stage.
    Reveal,
    /// No exogenous disclosure.
    NoReveal,
}

/// A fully specified game on a belief grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub chain: Chain,
    pub u: GridFn,
    pub lambda: f64,
    pub x: f64,
    pub signal_count: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Scenario {
    /// A scenario with `|S| = k` and default tolerance and iteration cap.
    pub fn new(chain: Chain, u: GridFn, lambda: f64, x: f64) -> Result<Self> {
        let sc = Scenario {
            signal_count: chain.k(),
            chain,
            u,
            lambda,
            x,
            tol: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.chain.k();
        if self.u.grid().k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.u.grid().k() });
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("discount {} outside [0, 1)", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::InvalidParameter(format!("revelation rate {} outside [0, 1]", self.x)));
        }
        if self.signal_count < k {
            return Err(Error::InvalidParameter(format!(
                "signal count {} is smaller than the number of states {k}",
                self.signal_count
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration cap must be positive".into()));
        }
        if let Some((index, value)) = self.u.values().iter().copied().enumerate().find(|(_, v)| *v < 0.0) {
            return Err(Error::NegativePayoff { index, value });
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<BeliefGrid> {
        self.u.grid()
    }

    pub fn k(&self) -> usize {
        self.chain.k()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let sc = Scenario { lambda, ..self.clone() };
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_x(&self, x: f64) -> Result<Self> {
        let sc = Scenario { x, ..self.clone() };
        sc.validate()?;
        Ok(sc)
    }
}

/// One optimal split per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    grid: Arc<BeliefGrid>,
    splits: Vec<GridSplit>,
}

impl Policy {
    pub fn grid(&self) -> &Arc<BeliefGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn grid_split(&self, index: usize) -> &GridSplit {
        &self.splits[index]
    }

    pub fn split(&self, index: usize) -> Split {
        self.splits[index].to_split(&self.grid)
    }

    /// A kernel realising the split at grid point `index`.
    pub fn kernel(&self, index: usize) -> SignalKernel {
        kernel_from_split(&self.grid.point(index), &self.split(index))
            .expect("generator splits are Bayes-plausible at their grid point")
    }

    /// Kernels for every grid point.
    pub fn kernels(&self) -> Vec<SignalKernel> {
        (0..self.len()).into_par_iter().map(|i| self.kernel(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub value: GridFn,
    pub policy: Policy,
    pub iterations: usize,
    pub residual: f64,
    /// The value at the rows `m_1, ..., m_k`.
    pub xi: Vec<f64>,
}

/// Interpolation stencils for `q M` at every grid point and for each row of `M`.
struct Operator<'a> {
    sc: &'a Scenario,
    shift: Vec<Stencil>,
    rows: Vec<Stencil>,
    /// Coordinates of every grid point, flattened.
    coords: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        sc.validate()?;
        let grid = sc.grid();
        let k = grid.k();
        let mut coords = Vec::with_capacity(grid.len() * k);
        for i in 0..grid.len() {
            coords.extend(grid.coords(i));
        }
        let shift = (0..grid.len())
            .into_par_iter()
            .map(|i| grid.locate(&sc.chain.shift(&coords[i * k..(i + 1) * k])))
            .collect::<Result<Vec<_>>>()?;
        let rows = (0..k)
            .map(|l| grid.locate(sc.chain.row(l)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Operator { sc, shift, rows, coords })
    }

    fn k(&self) -> usize {
        self.sc.k()
    }

    /// `stage * u_i + weight * f(q_i M)` at every grid point.
    fn inner(&self, f: &[f64], stage: f64, weight: f64) -> GridFn {
        let u = self.sc.u.values();
        let term = |i: usize| stage * u[i] + weight * self.shift[i].apply(f);
        let values: Vec<f64> = if u.len() >= PAR_MIN_POINTS {
            (0..u.len()).into_par_iter().map(term).collect()
        } else {
            (0..u.len()).map(term).collect()
        };
        GridFn::from_parts(self.sc.grid().clone(), values)
    }

    fn xi(&self, f: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|s| s.apply(f)).collect()
    }

    /// Adds `weight * <p, xi>` at every grid point.
    fn add_revelation(&self, mut base: Vec<f64>, xi: &[f64], weight: f64) -> Vec<f64> {
        let k = self.k();
        for (i, v) in base.iter_mut().enumerate() {
            let p = &self.coords[i * k..(i + 1) * k];
            *v += weight * p.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        }
        base
    }

    /// The grid function inside the envelope and the additive revelation term.
    fn parts(&self, f: &[f64], mode: Mode) -> (GridFn, Option<Vec<f64>>) {
        let lambda = self.sc.lambda;
        match mode {
            Mode::NoReveal => (self.inner(f, 1.0 - lambda, lambda), None),
            Mode::Reveal => {
                let x = self.sc.x;
                (self.inner(f, 1.0 - lambda, lambda * (1.0 - x)), Some(self.xi(f)))
            }
        }
    }

    fn apply(&self, f: &[f64], mode: Mode) -> Vec<f64> {
        let (g, xi) = self.parts(f, mode);
        let cav = cav_values(&g).values().to_vec();
        match xi {
            None => cav,
            Some(xi) => {
                let w = self.sc.lambda * self.sc.x;
                if w == 0.0 {
                    cav
                } else {
                    self.add_revelation(cav, &xi, w)
                }
            }
        }
    }

    fn policy(&self, f: &[f64], mode: Mode) -> Policy {
        let (g, _) = self.parts(f, mode);
        let r = cav_grid(&g);
        Policy { grid: self.sc.grid().clone(), splits: r.generator }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_mode(sc: &Scenario, mode: Mode) -> Result<()> {
    if mode == Mode::Reveal && sc.x <= 0.0 {
        return Err(Error::InvalidParameter("the revelation game needs x in (0, 1]".into()));
    }
    Ok(())
}

/// One application of the no-revelation operator.
pub fn bellman_no_reveal(f: &GridFn, sc: &Scenario) -> Result<GridFn> {
    bellman(f, sc, Mode::NoReveal)
}

/// One application of the revelation operator at rate `sc.x`.
pub fn bellman_reveal(f: &GridFn, sc: &Scenario) -> Result<GridFn> {
    bellman(f, sc, Mode::Reveal)
}

pub fn bellman(f: &GridFn, sc: &Scenario, mode: Mode) -> Result<GridFn> {
    check_mode(sc, mode)?;
    if f.grid() != sc.grid() {
        return Err(Error::DimensionMismatch { expected: sc.grid().len(), got: f.grid().len() });
    }
    let op = Operator::new(sc)?;
    Ok(GridFn::from_parts(sc.grid().clone(), op.apply(f.values(), mode)))
}

/// Value iteration from zero until the successive difference certifies a
/// sup-norm error of at most `sc.tol`.
pub fn solve(sc: &Scenario, mode: Mode) -> Result<SolverResult> {
    check_mode(sc, mode)?;
    let op = Operator::new(sc)?;
    let lambda = sc.lambda;
    let threshold = if lambda > 0.0 { sc.tol * (1.0 - lambda) / lambda } else { f64::INFINITY };
    let mut f = vec![0.0; sc.grid().len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < sc.max_iterations {
        let next = op.apply(&f, mode);
        residual = sup_diff(&next, &f);
        f = next;
        iterations += 1;
        if residual <= threshold {
            break;
        }
    }
    if residual > threshold {
        return Err(Error::NoConvergence { iterations, residual, threshold });
    }
    log::debug!("solved {mode:?} at lambda={lambda} in {iterations} sweeps, residual {residual:e}");
    let policy = op.policy(&f, mode);
    let xi = op.xi(&f);
    let value = GridFn::from_parts(sc.grid().clone(), f);
    Ok(SolverResult { value, policy, iterations, residual, xi })
}

/// The revelation game at `x = 1` through the `k x k` system
/// `(I - l M) xi = (1 - l) c`, with `c_s` the envelope of `u` at `m_s`.
pub fn closed_form_x1(sc: &Scenario) -> Result<GridFn> {
    sc.validate()?;
    let k = sc.k();
    let lambda = sc.lambda;
    let cav = cav_values(&sc.u);
    let c = (0..k)
        .map(|l| cav.interpolate_slice(sc.chain.row(l)?))
        .collect::<Result<Vec<_>>>()?;
    let a = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 } - lambda * sc.chain.prob(i, j));
    let b = DVector::from_iterator(k, c.iter().map(|v| (1.0 - lambda) * v));
    let xi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("(I - lambda M) xi = (1 - lambda) c".into()))?;
    let grid = sc.grid();
    let values = (0..grid.len())
        .map(|i| {
            let p = grid.coords(i);
            (1.0 - lambda) * cav.value(i) + lambda * p.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok(GridFn::from_parts(grid.clone(), values))
}

/// Backward induction for the `n`-stage game with stage weight `1/n`.
pub fn solve_cesaro(sc: &Scenario, n: usize) -> Result<GridFn> {
    if n == 0 {
        return Err(Error::InvalidParameter("Cesaro horizon must be at least 1".into()));
    }
    let op = Operator::new(sc)?;
    let x = sc.x;
    let stage = 1.0 / n as f64;
    let mut w = vec![0.0; sc.grid().len()];
    for _ in 0..n {
        let g = op.inner(&w, stage, 1.0 - x);
        let cav = cav_values(&g).values().to_vec();
        w = if x > 0.0 { op.add_revelation(cav, &op.xi(&w), x) } else { cav };
    }
    Ok(GridFn::from_parts(sc.grid().clone(), w))
}

/// `sum_s pi^s v_l(m_s)` for the no-revelation value at discount `l`.
pub fn stationary_average(lambda: f64, base: &Scenario) -> Result<f64> {
    let sc = base.with_lambda(lambda)?;
    let r = solve(&sc, Mode::NoReveal)?;
    Ok(base.chain.stationary().iter().zip(&r.xi).map(|(p, v)| p * v).sum())
}

/// The asymptotic value at revelation rate `x`, from the no-revelation game
/// at discount `1 - x`.
pub fn value_v(x: f64, base: &Scenario) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidParameter(format!("revelation rate {x} outside (0, 1]")));
    }
    stationary_average(1.0 - x, base)
}

/// The stationary-weighted no-revelation value at discount `lambda`.
pub fn psi(lambda: f64, base: &Scenario) -> Result<f64> {
    stationary_average(lambda, base)
}

/// Where `u` touches its envelope, checks that revealing nothing attains the
/// Bellman maximum within `2 tol`.
pub fn check_no_info_at_concave_point(sc: &Scenario, p: &Belief) -> Result<bool> {
    Ok(no_info_gap(sc, p)? <= 2.0 * sc.tol)
}

/// How much the best split at `p` beats revealing nothing in the Bellman
/// maximum at the fixed point. Requires `u(p) = Cav u(p)` within `1e-9`.
pub fn no_info_gap(sc: &Scenario, p: &Belief) -> Result<f64> {
    let cav_u = cav_values(&sc.u);
    let up = sc.u.interpolate(p)?;
    let cp = cav_split_at(&cav_u, p)?.0;
    if up < cp - 1e-9 {
        return Err(Error::PreconditionFailed(format!(
            "u({:?}) = {up} is below its envelope {cp}",
            p.as_slice()
        )));
    }
    let mode = if sc.x > 0.0 { Mode::Reveal } else { Mode::NoReveal };
    let r = solve(sc, mode)?;
    let op = Operator::new(sc)?;
    let (g, _) = op.parts(r.value.values(), mode);
    let best = cav_split_at(&g, p)?.0;
    let stay = g.interpolate(p)?;
    Ok((best - stay).max(0.0))
}
