use std::sync::Arc;

use super::Belief;
use crate::error::{Error, Result};

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 2_000_000;

/// Lattice coordinates within this distance of an integer are snapped to it,
/// which makes interpolation at grid points return stored values exactly.
const SNAP: f64 = 1e-10;

/// All beliefs whose coordinates are multiples of `1/resolution`.
///
/// Points are stored as integer counts `c` with `sum(c) = resolution`, in
/// descending lexicographic order of the counts, so for `k = 2` point `i` is
/// `((R - i)/R, i/R)`.
///
/// Off-grid beliefs are located with the Freudenthal (Kuhn) triangulation in
/// cumulative coordinates `z_j = R * (q_1 + ... + q_{j+1})`. The simplices
/// never cross the walls `z_j = z_{j+1}`, so every cell lies in the simplex.
#[derive(Debug, PartialEq, Eq)]
pub struct BeliefGrid {
    k: usize,
    resolution: usize,
    counts: Vec<u32>,
}

/// Interpolation cell: `k` grid indices with barycentric weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.weights)
            .map(|(i, w)| w * values[*i])
            .sum()
    }
}

fn binomial(n: u64, m: u64) -> u128 {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

impl BeliefGrid {
    pub fn new(k: usize, resolution: usize) -> Result<Self> {
        Self::with_cap(k, resolution, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(k: usize, resolution: usize, cap: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("grid dimension must be at least 1".into()));
        }
        if resolution == 0 {
            return Err(Error::InvalidParameter("grid resolution must be at least 1".into()));
        }
        let points = Self::point_count(k, resolution);
        if points > cap as u128 {
            return Err(Error::SizeOverflow { points, cap });
        }
        let n = points as usize;
        let mut counts = Vec::with_capacity(n * k);
        let mut c = vec![0u32; k];
        c[0] = resolution as u32;
        loop {
            counts.extend_from_slice(&c);
            // Next composition in descending lexicographic order.
            let Some(j) = (0..k.saturating_sub(1)).rev().find(|&j| c[j] > 0) else {
                break;
            };
            let tail: u32 = c[j + 1..].iter().sum();
            c[j] -= 1;
            c[j + 1..].iter_mut().for_each(|v| *v = 0);
            c[j + 1] = tail + 1;
        }
        debug_assert_eq!(counts.len(), n * k);
        Ok(BeliefGrid { k, resolution, counts })
    }

    /// `C(R + k - 1, k - 1)`.
    pub fn point_count(k: usize, resolution: usize) -> u128 {
        binomial((resolution + k - 1) as u64, (k - 1) as u64)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self, index: usize) -> &[u32] {
        &self.counts[index * self.k..(index + 1) * self.k]
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        let r = self.resolution as f64;
        self.counts(index).iter().map(|c| *c as f64 / r).collect()
    }

    pub fn point(&self, index: usize) -> Belief {
        Belief(self.coords(index))
    }

    pub fn points(&self) -> impl Iterator<Item = Belief> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Position of a count vector in the grid ordering.
    pub fn index_of(&self, counts: &[u32]) -> usize {
        let mut rank: u128 = 0;
        let mut rem = self.resolution as u64;
        for (j, &c) in counts.iter().enumerate().take(self.k - 1) {
            let c = c as u64;
            let m = (self.k - j - 1) as u64;
            if c < rem {
                rank += binomial(rem - c - 1 + m, m);
            }
            rem -= c;
        }
        rank as usize
    }

    /// Index of the grid point obtained by moving one lattice unit from
    /// coordinate `from` to coordinate `to`, if it exists.
    pub fn step(&self, index: usize, to: usize, from: usize) -> Option<usize> {
        let c = self.counts(index);
        if to == from || c[from] == 0 {
            return None;
        }
        let mut next = c.to_vec();
        next[from] -= 1;
        next[to] += 1;
        Some(self.index_of(&next))
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: q.len() });
        }
        Ok(())
    }

    /// Index of a lattice point closest to `q` (largest-remainder rounding).
    pub fn nearest(&self, q: &[f64]) -> Result<usize> {
        self.check_dim(q)?;
        let r = self.resolution as f64;
        let scaled: Vec<f64> = q.iter().map(|v| v.max(0.0) * r).collect();
        let mut c: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let assigned: u32 = c.iter().sum();
        let mut missing = (self.resolution as u32).saturating_sub(assigned);
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            c[i] += 1;
            missing -= 1;
        }
        // Overshoot can only come from rounding noise in an already-full vector.
        let mut excess = c.iter().sum::<u32>().saturating_sub(self.resolution as u32);
        for v in c.iter_mut().rev() {
            let take = excess.min(*v);
            *v -= take;
            excess -= take;
        }
        Ok(self.index_of(&c))
    }

    /// Kuhn-triangulation cell containing `q` with its barycentric weights.
    ///
    /// Exact at grid points and reproduces affine functions.
    pub fn locate(&self, q: &[f64]) -> Result<Stencil> {
        self.check_dim(q)?;
        let k = self.k;
        if k == 1 {
            return Ok(Stencil { indices: vec![0], weights: vec![1.0] });
        }
        let r = self.resolution as f64;
        let top = self.resolution as i64;
        let d = k - 1;

        let mut z = Vec::with_capacity(d);
        let mut acc = 0.0;
        for v in &q[..d] {
            acc += v.max(0.0);
            let mut zj = (acc * r).clamp(0.0, r);
            let nearest = zj.round();
            if (zj - nearest).abs() < SNAP {
                zj = nearest;
            }
            z.push(zj);
        }
        let base: Vec<i64> = z.iter().map(|v| (v.floor() as i64).min(top - 1)).collect();
        let frac: Vec<f64> = z.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();

        // Descending fractional part; ties put the higher axis first so that
        // intermediate vertices keep z non-decreasing.
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(b.cmp(&a)));

        let mut indices = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        let mut vertex = base.clone();
        indices.push(self.index_of_cumulative(&vertex));
        weights.push(1.0 - frac[order[0]]);
        for m in 0..d {
            vertex[order[m]] += 1;
            indices.push(self.index_of_cumulative(&vertex));
            let next = if m + 1 < d { frac[order[m + 1]] } else { 0.0 };
            weights.push(frac[order[m]] - next);
        }
        Ok(Stencil { indices, weights })
    }

    fn index_of_cumulative(&self, z: &[i64]) -> usize {
        let mut counts = Vec::with_capacity(self.k);
        let mut prev = 0i64;
        for &zj in z {
            counts.push((zj - prev) as u32);
            prev = zj;
        }
        counts.push((self.resolution as i64 - prev) as u32);
        self.index_of(&counts)
    }
}

/// A real function sampled on every point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    grid: Arc<BeliefGrid>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Arc<BeliefGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid function has non-finite values".into()));
        }
        Ok(GridFn { grid, values })
    }

    pub fn from_fn(grid: Arc<BeliefGrid>, f: impl Fn(&Belief) -> f64) -> Self {
        let values = grid.points().map(|q| f(&q)).collect();
        GridFn { grid, values }
    }

    pub fn constant(grid: Arc<BeliefGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        GridFn { grid, values }
    }

    pub(crate) fn from_parts(grid: Arc<BeliefGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        GridFn { grid, values }
    }

    pub fn grid(&self) -> &Arc<BeliefGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Piecewise-linear interpolation over the Kuhn triangulation.
    pub fn interpolate(&self, q: &Belief) -> Result<f64> {
        self.interpolate_slice(q.as_slice())
    }

    pub fn interpolate_slice(&self, q: &[f64]) -> Result<f64> {
        Ok(self.grid.locate(q)?.apply(&self.values))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridFn) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest violation of midpoint concavity over all unit grid segments,
    /// `max(0, (f(a) + f(b))/2 - f(mid))`.
    pub fn concavity_defect(&self) -> f64 {
        let g = &self.grid;
        let k = g.k();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            for to in 0..k {
                for from in 0..k {
                    if to == from {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (g.step(i, to, from), g.step(i, from, to)) {
                        let mid = 0.5 * (self.values[a] + self.values[b]);
                        worst = worst.max(mid - self.values[i]);
                    }
                }
            }
        }
        worst
    }
}
