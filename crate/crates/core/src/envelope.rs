//! Concavification of grid functions over splits supported on grid points.
//!
//! For two states the envelope is the upper hull of the sampled graph. For
//! more states each point solves a small linear program
//! `max sum_j a_j f(g_j)` subject to `sum_j a_j g_j = p`, `a >= 0`, by a
//! revised simplex method whose basis has `k` columns.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::belief::{Belief, BeliefGrid, GridFn, Split};

/// Relative slack under which a point counts as lying on the envelope.
const TIGHT_REL: f64 = 1e-12;
/// Pivots without objective progress before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 32;
const MAX_PIVOTS: usize = 20_000;

/// A split whose atoms are grid points, referenced by index.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSplit {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GridSplit {
    fn single(i: usize) -> Self {
        GridSplit { indices: vec![i], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.indices.len() == 1
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        self.indices.iter().zip(&self.weights).map(|(i, w)| w * f[*i]).sum()
    }

    pub fn to_split(&self, grid: &BeliefGrid) -> Split {
        Split {
            posteriors: self.indices.iter().map(|i| grid.point(*i)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// The envelope on the grid and one optimal split per grid point.
#[derive(Debug, Clone)]
pub struct CavResult {
    pub cav: GridFn,
    pub generator: Vec<GridSplit>,
}

impl CavResult {
    pub fn split(&self, index: usize) -> Split {
        self.generator[index].to_split(self.cav.grid())
    }
}

fn tight_eps(f: &[f64]) -> f64 {
    TIGHT_REL * f.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Envelope values only.
pub fn cav_values(f: &GridFn) -> GridFn {
    let grid = f.grid().clone();
    let values = match grid.k() {
        1 => f.values().to_vec(),
        2 => hull_values(f.values()),
        _ => {
            let lp = LpData::new(&grid, f.values());
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let q = grid.coords(i);
                    lp.solve_at(&q, &cell_of(&grid, &q)).value.max(f.value(i))
                })
                .collect()
        }
    };
    GridFn::from_parts(grid, values)
}

/// Envelope values together with an optimal split of at most `k` atoms at
/// every grid point.
pub fn cav_grid(f: &GridFn) -> CavResult {
    let grid = f.grid().clone();
    let n = grid.len();
    let fv = f.values();
    match grid.k() {
        1 => CavResult { cav: f.clone(), generator: vec![GridSplit::single(0)] },
        2 => {
            let cav = hull_values(fv);
            let tight = TightIndex::new(fv, &cav);
            let generator = (0..n).map(|i| tight.split_at(i as f64)).collect();
            CavResult { cav: GridFn::from_parts(grid, cav), generator }
        }
        _ => {
            let lp = LpData::new(&grid, fv);
            let eps = tight_eps(fv);
            let (values, generator): (Vec<f64>, Vec<GridSplit>) = (0..n)
                .into_par_iter()
                .map(|i| {
                    let q = grid.coords(i);
                    let sol = lp.solve_at(&q, &cell_of(&grid, &q));
                    if fv[i] >= sol.value - eps {
                        (sol.value.max(fv[i]), GridSplit::single(i))
                    } else {
                        (sol.value, sol.split())
                    }
                })
                .unzip();
            CavResult { cav: GridFn::from_parts(grid, values), generator }
        }
    }
}

/// Envelope value and optimal grid-supported split at an arbitrary belief.
///
/// When the enclosing interpolation cell already attains the optimum its
/// vertices are used as the split.
pub fn cav_split_at(f: &GridFn, p: &Belief) -> crate::Result<(f64, Split)> {
    let grid = f.grid();
    let stencil = grid.locate(p.as_slice())?;
    let fv = f.values();
    let eps = tight_eps(fv);
    let cell = GridSplit {
        indices: stencil.indices.iter().zip(&stencil.weights).filter(|(_, w)| **w > 0.0).map(|(i, _)| *i).collect(),
        weights: stencil.weights.iter().copied().filter(|w| *w > 0.0).collect(),
    };
    let gs = match grid.k() {
        1 => GridSplit::single(0),
        2 => {
            let cav = hull_values(fv);
            let r = grid.resolution() as f64;
            TightIndex::new(fv, &cav).split_at((p[1] * r).clamp(0.0, r))
        }
        _ => {
            let lp = LpData::new(grid, fv);
            let sol = lp.solve_at(p.as_slice(), &stencil.indices);
            if cell.value(fv) >= sol.value - eps {
                cell
            } else {
                sol.split()
            }
        }
    };
    let value = gs.value(fv);
    let split = merge_same_atoms(gs).to_split(grid);
    Ok((value, split))
}

fn cell_of(grid: &BeliefGrid, q: &[f64]) -> Vec<usize> {
    grid.locate(q).expect("grid point has grid dimension").indices
}

fn merge_same_atoms(gs: GridSplit) -> GridSplit {
    let mut out = GridSplit { indices: Vec::new(), weights: Vec::new() };
    for (i, w) in gs.indices.into_iter().zip(gs.weights) {
        match out.indices.iter().position(|j| *j == i) {
            Some(at) => out.weights[at] += w,
            None => {
                out.indices.push(i);
                out.weights.push(w);
            }
        }
    }
    out
}

/// Upper concave envelope of `(i, f_i)` for `i = 0..n`, sampled at the integers.
fn hull_values(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    if n <= 2 {
        return f.to_vec();
    }
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Pop b unless it lies strictly above the chord from a to i.
            let cross = (b - a) as f64 * (f[i] - f[a]) - (i - a) as f64 * (f[b] - f[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    // Points within rounding of the chord keep their own value, so concave
    // input is returned unchanged.
    let eps = tight_eps(f);
    let mut out = vec![0.0; n];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b - a) as f64;
        for (i, o) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = (i - a) as f64 / span;
            let chord = (1.0 - t) * f[a] + t * f[b];
            *o = if f[i] >= chord - eps { f[i] } else { chord };
        }
    }
    out
}

/// For two states: nearest envelope-tight grid points on either side.
struct TightIndex<'a> {
    f: &'a [f64],
    prev: Vec<usize>,
    next: Vec<usize>,
}

impl<'a> TightIndex<'a> {
    fn new(f: &'a [f64], cav: &[f64]) -> Self {
        let n = f.len();
        let eps = tight_eps(f);
        let tight: Vec<bool> = f.iter().zip(cav).map(|(a, c)| *a >= c - eps).collect();
        let mut prev = vec![0; n];
        let mut last = 0;
        for i in 0..n {
            if tight[i] {
                last = i;
            }
            prev[i] = last;
        }
        let mut next = vec![n - 1; n];
        let mut last = n - 1;
        for i in (0..n).rev() {
            if tight[i] {
                last = i;
            }
            next[i] = last;
        }
        TightIndex { f, prev, next }
    }

    /// Split at lattice coordinate `z` (the second belief coordinate times R).
    fn split_at(&self, z: f64) -> GridSplit {
        let n = self.f.len();
        let lo = (z.floor() as usize).min(n - 1);
        let hi = (z.ceil() as usize).min(n - 1);
        let a = self.prev[lo];
        let b = self.next[hi];
        if a == b {
            return GridSplit::single(a);
        }
        let t = ((z - a as f64) / (b - a) as f64).clamp(0.0, 1.0);
        match (t == 0.0, t == 1.0) {
            (true, _) => GridSplit::single(a),
            (_, true) => GridSplit::single(b),
            _ => GridSplit { indices: vec![a, b], weights: vec![1.0 - t, t] },
        }
    }
}

struct LpData {
    k: usize,
    n: usize,
    coords: Vec<f64>,
    f: Vec<f64>,
    eps: f64,
}

struct LpSolution {
    basis: Vec<usize>,
    levels: Vec<f64>,
    value: f64,
}

impl LpSolution {
    fn split(&self) -> GridSplit {
        let mut pairs: Vec<(usize, f64)> = self
            .basis
            .iter()
            .zip(&self.levels)
            .filter(|(_, a)| **a > 1e-14)
            .map(|(i, a)| (*i, *a))
            .collect();
        pairs.sort_by_key(|(i, _)| *i);
        let total: f64 = pairs.iter().map(|(_, a)| a).sum();
        GridSplit {
            indices: pairs.iter().map(|(i, _)| *i).collect(),
            weights: pairs.iter().map(|(_, a)| a / total).collect(),
        }
    }
}

impl LpData {
    fn new(grid: &BeliefGrid, f: &[f64]) -> Self {
        let k = grid.k();
        let n = grid.len();
        let mut coords = Vec::with_capacity(n * k);
        for i in 0..n {
            coords.extend(grid.coords(i));
        }
        LpData { k, n, coords, f: f.to_vec(), eps: tight_eps(f) }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.coords[j * self.k..(j + 1) * self.k]
    }

    fn basis_inverse(&self, basis: &[usize]) -> Option<DMatrix<f64>> {
        let k = self.k;
        let b = DMatrix::from_fn(k, k, |r, c| self.column(basis[c])[r]);
        b.try_inverse()
    }

    /// Revised simplex started from the interpolation cell of `p`, which is
    /// a feasible basis.
    fn solve_at(&self, p: &[f64], cell: &[usize]) -> LpSolution {
        let k = self.k;
        let mut basis = cell.to_vec();
        let mut binv = self.basis_inverse(&basis).expect("cell vertices are affinely independent");
        let mut levels = mul(&binv, p);
        let mut stalled = 0usize;
        let mut last_value = f64::NEG_INFINITY;
        for _ in 0..MAX_PIVOTS {
            let fb: Vec<f64> = basis.iter().map(|j| self.f[*j]).collect();
            let y: Vec<f64> = (0..k).map(|c| (0..k).map(|r| fb[r] * binv[(r, c)]).sum()).collect();
            let bland = stalled >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = self.eps;
            for j in 0..self.n {
                let col = self.column(j);
                let d = self.f[j] - col.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
                if d > best {
                    if basis.contains(&j) {
                        continue;
                    }
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = enter else {
                break;
            };
            let w = mul(&binv, self.column(j));
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..k {
                if w[r] > 1e-12 {
                    let ratio = levels[r].max(0.0) / w[r];
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-15 || (ratio <= lratio + 1e-15 && basis[r] < basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            // Unbounded is impossible: the feasible set lies in the simplex.
            let Some((r, _)) = leave else {
                break;
            };
            basis[r] = j;
            match self.basis_inverse(&basis) {
                Some(inv) => binv = inv,
                None => break,
            }
            levels = mul(&binv, p);
            let value: f64 = basis.iter().zip(&levels).map(|(j, a)| self.f[*j] * a).sum();
            if value > last_value + self.eps {
                stalled = 0;
                last_value = value;
            } else {
                stalled += 1;
            }
        }
        levels.iter_mut().for_each(|a| *a = a.max(0.0));
        let value = basis.iter().zip(&levels).map(|(j, a)| self.f[*j] * a).sum();
        LpSolution { basis, levels, value }
    }
}

fn mul(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid, validate_split};
    use proptest::prelude::*;
    use std::sync::Arc;

    /// Best f-average over all nonsingular k-subsets of grid points with
    /// barycenter p.
    fn brute_force(f: &GridFn, p: &[f64]) -> f64 {
        let g = f.grid();
        let k = g.k();
        let n = g.len();
        let mut best = f64::NEG_INFINITY;
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let m = DMatrix::from_fn(k, k, |r, c| g.coords(idx[c])[r]);
            // Grid determinants are multiples of R^-k, so this only skips
            // genuinely singular subsets.
            if m.determinant().abs() > 1e-9 {
                let a = mul(&m.try_inverse().unwrap(), p);
                if a.iter().all(|v| *v >= -1e-12) {
                    let v: f64 = idx.iter().zip(&a).map(|(i, w)| w * f.value(*i)).sum();
                    best = best.max(v);
                }
            }
            // Next k-combination of 0..n.
            let mut j = k;
            while j > 0 && idx[j - 1] == n - k + j - 1 {
                j -= 1;
            }
            if j == 0 {
                break;
            }
            idx[j - 1] += 1;
            for t in j..k {
                idx[t] = idx[t - 1] + 1;
            }
        }
        best
    }

    fn tent(g: &Arc<BeliefGrid>) -> GridFn {
        GridFn::from_fn(g.clone(), |q| 1.0 - (2.0 * q[1] - 1.0).abs())
    }

    fn parabola(g: &Arc<BeliefGrid>) -> GridFn {
        GridFn::from_fn(g.clone(), |q| (2.0 * q[1] - 1.0).powi(2))
    }

    fn check_generators(r: &CavResult) {
        let g = r.cav.grid();
        for i in 0..g.len() {
            let s = r.split(i);
            assert!(s.len() <= g.k());
            validate_split(&g.point(i), &s).unwrap();
        }
    }

    #[test]
    fn concave_function_is_its_own_envelope() {
        let g = make_grid(2, 20).unwrap();
        let f = tent(&g);
        let r = cav_grid(&f);
        assert_eq!(r.cav.values(), f.values());
        assert!(r.generator.iter().all(GridSplit::is_degenerate));
        check_generators(&r);
    }

    #[test]
    fn parabola_envelope_is_one() {
        let g = make_grid(2, 20).unwrap();
        let f = parabola(&g);
        let r = cav_grid(&f);
        for v in r.cav.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let mid = r.split(10);
        assert_eq!(mid.weights, vec![0.5, 0.5]);
        assert_eq!(mid.posteriors[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(mid.posteriors[1].as_slice(), &[0.0, 1.0]);
        check_generators(&r);
        for i in 0..g.len() {
            assert!((r.generator[i].value(f.values()) - r.cav.value(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn parabola_split_off_center() {
        let g = make_grid(2, 20).unwrap();
        let f = parabola(&g);
        let p = Belief::new(vec![0.25, 0.75]).unwrap();
        let (v, s) = cav_split_at(&f, &p).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(s.posteriors[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(s.posteriors[1].as_slice(), &[0.0, 1.0]);
        assert!((s.weights[0] - 0.25).abs() < 1e-15);
        assert!((s.weights[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn concave_split_uses_enclosing_cell() {
        for k in [2, 3] {
            let g = make_grid(k, 10).unwrap();
            let f = GridFn::from_fn(g.clone(), |q| 1.0 - q.as_slice().iter().map(|v| v * v).sum::<f64>());
            let p = Belief::new(if k == 2 { vec![0.33, 0.67] } else { vec![0.33, 0.21, 0.46] }).unwrap();
            let (v, s) = cav_split_at(&f, &p).unwrap();
            assert!((v - f.interpolate(&p).unwrap()).abs() < 1e-12);
            validate_split(&p, &s).unwrap();
            let stencil = g.locate(p.as_slice()).unwrap();
            for q in &s.posteriors {
                assert!(stencil.indices.iter().any(|i| g.point(*i) == *q));
            }
        }
    }

    #[test]
    fn three_state_worked_example() {
        let g = make_grid(3, 2).unwrap();
        let target = g.index_of(&[1, 1, 0]);
        let f = GridFn::from_fn(g.clone(), |q| if q.as_slice() == [0.5, 0.5, 0.0] { 1.0 } else { 0.0 });
        assert_eq!(f.value(target), 1.0);
        let p = Belief::new(vec![0.25, 0.25, 0.5]).unwrap();
        let (v, s) = cav_split_at(&f, &p).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        validate_split(&p, &s).unwrap();
        assert!(s.len() <= 3);

        let g4 = make_grid(3, 4).unwrap();
        let f4 = GridFn::from_fn(g4.clone(), |q| if q.as_slice() == [0.5, 0.5, 0.0] { 1.0 } else { 0.0 });
        let r = cav_grid(&f4);
        let at = g4.index_of(&[1, 1, 2]);
        assert!((r.cav.value(at) - 0.5).abs() < 1e-12);
        check_generators(&r);
    }

    #[test]
    fn random_pairs_match_enumeration() {
        let g = make_grid(2, 4).unwrap();
        let f = GridFn::new(g.clone(), vec![0.3, 0.9, 0.1, 0.7, 0.2]).unwrap();
        let p = Belief::uniform(2);
        let (v, _) = cav_split_at(&f, &p).unwrap();
        let mut best: f64 = 0.0;
        for a in 0..=2 {
            for b in 2..=4 {
                let t = if a == b { 0.0 } else { (2 - a) as f64 / (b - a) as f64 };
                best = best.max((1.0 - t) * f.value(a) + t * f.value(b));
            }
        }
        assert!((v - best).abs() < 1e-12);
    }

    #[test]
    fn lp_path_matches_hull_on_two_states() {
        let g = make_grid(2, 30).unwrap();
        let f = GridFn::from_fn(g.clone(), |q| (7.0 * q[0]).sin().abs() + q[1] * q[1]);
        let hull = cav_values(&f);
        let lp = LpData::new(&g, f.values());
        for i in 0..g.len() {
            let q = g.coords(i);
            let v = lp.solve_at(&q, &cell_of(&g, &q)).value;
            assert!((v.max(f.value(i)) - hull.value(i)).abs() < 1e-9);
        }
    }

    fn grid_fn(k: usize, r: usize) -> impl Strategy<Value = GridFn> {
        let g = make_grid(k, r).unwrap();
        prop::collection::vec(-2.0f64..2.0, g.len()).prop_map(move |v| GridFn::new(g.clone(), v).unwrap())
    }

    fn kr() -> impl Strategy<Value = (usize, usize)> {
        prop_oneof![(Just(2usize), 1usize..=6), (Just(3usize), 1usize..=6)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_enumeration(f in kr().prop_flat_map(|(k, r)| grid_fn(k, r))) {
            let r = cav_grid(&f);
            let g = f.grid();
            for i in 0..g.len() {
                let oracle = brute_force(&f, &g.coords(i));
                prop_assert!((r.cav.value(i) - oracle).abs() < 1e-9, "i={} cav={} oracle={}", i, r.cav.value(i), oracle);
                prop_assert!((r.generator[i].value(f.values()) - r.cav.value(i)).abs() < 1e-9);
                prop_assert!(r.generator[i].len() <= g.k());
                validate_split(&g.point(i), &r.split(i)).unwrap();
            }
        }

        #[test]
        fn dominance_and_idempotence(f in kr().prop_flat_map(|(k, r)| grid_fn(k, r))) {
            let c = cav_values(&f);
            let cc = cav_values(&c);
            for i in 0..f.grid().len() {
                prop_assert!(c.value(i) >= f.value(i));
                prop_assert!((cc.value(i) - c.value(i)).abs() < 1e-9);
            }
            prop_assert!(c.concavity_defect() < 1e-9);
        }

        #[test]
        fn monotone(
            f in kr().prop_flat_map(|(k, r)| grid_fn(k, r)),
            bump in prop::collection::vec(0.0f64..1.0, 28),
        ) {
            let g = f.grid().clone();
            let h = GridFn::new(g.clone(), f.values().iter().zip(bump.iter().cycle()).map(|(a, b)| a + b).collect()).unwrap();
            let (cf, ch) = (cav_values(&f), cav_values(&h));
            for i in 0..g.len() {
                prop_assert!(cf.value(i) <= ch.value(i) + 1e-12);
            }
        }

        #[test]
        fn affine_shift(
            f in kr().prop_flat_map(|(k, r)| grid_fn(k, r)),
            c in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let g = f.grid().clone();
            let a = GridFn::from_fn(g.clone(), |q| q.dot(&c));
            let shifted = GridFn::new(g.clone(), f.values().iter().zip(a.values()).map(|(x, y)| x + y).collect()).unwrap();
            let (cf, cs) = (cav_values(&f), cav_values(&shifted));
            for i in 0..g.len() {
                prop_assert!((cs.value(i) - cf.value(i) - a.value(i)).abs() < 1e-9);
            }
        }

        #[test]
        fn off_grid_split_is_optimal(
            f in grid_fn(3, 4),
            w in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let s: f64 = w.iter().sum();
            let p = Belief::new(w.iter().map(|v| v / s).collect()).unwrap();
            let (v, split) = cav_split_at(&f, &p).unwrap();
            prop_assert!(split.len() <= 3);
            validate_split(&p, &split).unwrap();
            prop_assert!((v - brute_force(&f, p.as_slice())).abs() < 1e-9);
        }
    }
}
