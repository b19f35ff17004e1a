//! The sender's indirect utility `u` on the belief grid.

use std::sync::Arc;

use crate::belief::{Belief, BeliefGrid, GridFn};
use crate::error::{Error, Result};

/// Receiver payoff differences below this are ties.
const TIE_TOL: f64 = 1e-12;
/// Default size of a `u` jump between neighbouring grid points that is reported.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.05;

/// How `u` is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffModel {
    /// `u` tabulated on some grid; resampled by interpolation if the working
    /// grid differs.
    Table(GridFn),
    /// A myopic receiver best-replying to the posterior among `actions`.
    /// `sender[l][b]` and `receiver[l][b]` are stage payoffs in state `l`
    /// under action `b`.
    Receiver {
        actions: Vec<String>,
        sender: Vec<Vec<f64>>,
        receiver: Vec<Vec<f64>>,
    },
}

/// A place where the receiver's choice changes between neighbouring grid
/// points and `u` jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub from: usize,
    pub to: usize,
    pub size: f64,
}

impl PayoffModel {
    pub fn k(&self) -> usize {
        match self {
            PayoffModel::Table(f) => f.grid().k(),
            PayoffModel::Receiver { sender, .. } => sender.len(),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        match self {
            PayoffModel::Table(f) => {
                if f.grid().k() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: f.grid().k() });
                }
            }
            PayoffModel::Receiver { actions, sender, receiver } => {
                if actions.is_empty() {
                    return Err(Error::InvalidParameter("receiver has no actions".into()));
                }
                for m in [sender, receiver] {
                    if m.len() != k {
                        return Err(Error::DimensionMismatch { expected: k, got: m.len() });
                    }
                    if let Some(row) = m.iter().find(|r| r.len() != actions.len()) {
                        return Err(Error::DimensionMismatch { expected: actions.len(), got: row.len() });
                    }
                    if m.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidParameter("non-finite payoff entry".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// The receiver's action at belief `q`: best reply, ties to the
    /// sender-preferred action, then the lowest index. `None` in table mode.
    pub fn action(&self, q: &[f64]) -> Option<usize> {
        let PayoffModel::Receiver { sender, receiver, actions } = self else {
            return None;
        };
        let expect = |m: &Vec<Vec<f64>>, b: usize| -> f64 { q.iter().zip(m).map(|(p, row)| p * row[b]).sum() };
        let scores: Vec<f64> = (0..actions.len()).map(|b| expect(receiver, b)).collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = scores.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut best: Option<(usize, f64)> = None;
        for (b, s) in scores.iter().enumerate() {
            if *s < top - TIE_TOL * scale {
                continue;
            }
            let v = expect(sender, b);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((b, v));
            }
        }
        best.map(|(b, _)| b)
    }
}

/// Samples `u` on `grid`, warning about large jumps of receiver-mode payoffs.
pub fn build_u(model: &PayoffModel, grid: &Arc<BeliefGrid>) -> Result<GridFn> {
    let u = build_u_quiet(model, grid)?;
    let jumps = jumps(model, &u, DEFAULT_JUMP_THRESHOLD);
    if !jumps.is_empty() {
        let listed: Vec<String> = jumps
            .iter()
            .take(10)
            .map(|j| format!("{:?}->{:?} ({:.3})", grid.coords(j.from), grid.coords(j.to), j.size))
            .collect();
        log::warn!(
            "u jumps at {} neighbouring grid pairs where the receiver switches action: {}",
            jumps.len(),
            listed.join(", ")
        );
    }
    Ok(u)
}

/// [`build_u`] without the jump report.
pub fn build_u_quiet(model: &PayoffModel, grid: &Arc<BeliefGrid>) -> Result<GridFn> {
    model.check(grid.k())?;
    let values: Vec<f64> = match model {
        PayoffModel::Table(f) if f.grid().as_ref() == grid.as_ref() => f.values().to_vec(),
        PayoffModel::Table(f) => (0..grid.len())
            .map(|i| f.interpolate_slice(&grid.coords(i)))
            .collect::<Result<_>>()?,
        PayoffModel::Receiver { sender, .. } => (0..grid.len())
            .map(|i| {
                let q = grid.coords(i);
                let b = model.action(&q).expect("receiver mode has an action");
                q.iter().zip(sender).map(|(p, row)| p * row[b]).sum()
            })
            .collect(),
    };
    if let Some((index, value)) = values.iter().copied().enumerate().find(|(_, v)| *v < 0.0) {
        return Err(Error::NegativePayoff { index, value });
    }
    GridFn::new(grid.clone(), values)
}

/// Neighbouring grid pairs where the receiver's action changes and `u`
/// differs by more than `threshold`. Empty in table mode.
pub fn jumps(model: &PayoffModel, u: &GridFn, threshold: f64) -> Vec<Jump> {
    if matches!(model, PayoffModel::Table(_)) {
        return Vec::new();
    }
    let grid = u.grid();
    let k = grid.k();
    let actions: Vec<Option<usize>> = (0..grid.len()).map(|i| model.action(&grid.coords(i))).collect();
    let mut out = Vec::new();
    for i in 0..grid.len() {
        for to in 0..k {
            for from in 0..k {
                // Each unordered pair once: only moves towards a later index.
                let Some(j) = grid.step(i, to, from) else { continue };
                if j <= i || actions[i] == actions[j] {
                    continue;
                }
                let size = (u.value(i) - u.value(j)).abs();
                if size > threshold {
                    out.push(Jump { from: i, to: j, size });
                }
            }
        }
    }
    out
}

/// `u` at an arbitrary belief for receiver models, exact rather than interpolated.
pub fn exact_u(model: &PayoffModel, q: &Belief) -> Option<f64> {
    let PayoffModel::Receiver { sender, .. } = model else {
        return None;
    };
    let b = model.action(q.as_slice())?;
    Some(q.as_slice().iter().zip(sender).map(|(p, row)| p * row[b]).sum())
}
