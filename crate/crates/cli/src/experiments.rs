//! Checks run by `persuasion verify`. Each produces a comparison table and a
//! verdict against a fixed tolerance.

use clap::ValueEnum;
use persuasion_core::envelope::cav_values;
use persuasion_core::sim::{clt_quantile_bound, nb_pmf, nb_truncated_mean, random_duration_value_mc, PolicyStrategy};
use persuasion_core::solver::{no_info_gap, psi, solve, value_v, Mode, Scenario};
use persuasion_core::Belief;

use crate::scenario::Loaded;
use crate::table::ResultTable;
use crate::{core_err, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Which {
    /// Discounted values approach the asymptotic value as the discount grows.
    Thm1,
    /// The stationary-weighted no-revelation value is non-decreasing in the discount.
    Thm2,
    /// Values are non-increasing in the revelation rate.
    MonotoneX,
    /// A geometric stopping time reproduces the discounted value.
    Disint,
    /// Revealing nothing is optimal where `u` touches its envelope.
    Lemma1,
    /// Extra signals do not change the value.
    Obs1,
    /// Negative binomial tail means and the normal quantile bound.
    Facts,
}

pub struct Verdict {
    pub table: ResultTable,
    pub pass: bool,
    pub tolerance: f64,
    pub summary: String,
}

pub fn run(which: Which, l: &Loaded) -> Result<Verdict, CliError> {
    match which {
        Which::Thm1 => thm1(l),
        Which::Thm2 => thm2(l),
        Which::MonotoneX => monotone_x(l),
        Which::Disint => disint(l),
        Which::Lemma1 => lemma1(l),
        Which::Obs1 => obs1(l),
        Which::Facts => facts(),
    }
}

/// Slack allowed for grid effects in monotonicity checks.
const GRID_SLACK: f64 = 1e-3;

fn reveal_mode(sc: &Scenario) -> Mode {
    if sc.x > 0.0 {
        Mode::Reveal
    } else {
        Mode::NoReveal
    }
}

fn tenths(from: usize, to: usize) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / 10.0).collect()
}

fn thm1(l: &Loaded) -> Result<Verdict, CliError> {
    const BOUND: f64 = 0.05;
    let base = &l.scenario;
    let lambdas = [0.9, 0.99, 0.995];
    let mut table = ResultTable::new(["x", "lambda", "asymptotic_value", "sup_gap"]);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for x in [0.3, 0.5, 1.0] {
        let v = value_v(x, base).map_err(core_err)?;
        let mut prev = f64::INFINITY;
        for lambda in lambdas {
            let sc = base.with_x(x).and_then(|s| s.with_lambda(lambda)).map_err(core_err)?;
            let r = solve(&sc, Mode::Reveal).map_err(core_err)?;
            let gap = r.value.values().iter().map(|w| (w - v).abs()).fold(0.0, f64::max);
            pass &= gap <= prev + GRID_SLACK;
            prev = gap;
            table.push(vec![x, lambda, v, gap])?;
        }
        pass &= prev <= BOUND;
        worst = worst.max(prev);
    }
    Ok(Verdict { table, pass, tolerance: BOUND, summary: format!("largest gap at lambda=0.995 is {worst:.3e}") })
}

fn thm2(l: &Loaded) -> Result<Verdict, CliError> {
    let mut lambdas = tenths(0, 9);
    lambdas.push(0.95);
    let mut table = ResultTable::new(["lambda", "psi"]);
    let mut pass = true;
    let mut prev = f64::NEG_INFINITY;
    let mut worst_drop: f64 = 0.0;
    for lambda in lambdas {
        let v = psi(lambda, &l.scenario).map_err(core_err)?;
        worst_drop = worst_drop.max(prev - v);
        pass &= v >= prev - GRID_SLACK;
        prev = v;
        table.push(vec![lambda, v])?;
    }
    Ok(Verdict { table, pass, tolerance: GRID_SLACK, summary: format!("largest decrease {worst_drop:.3e}") })
}

fn monotone_x(l: &Loaded) -> Result<Verdict, CliError> {
    let base = &l.scenario;
    let k = base.k();
    // Point 0 is the uniform belief, point s is row s of the chain.
    let mut points = vec![Belief::uniform(k)];
    for s in 0..k {
        points.push(Belief::new(base.chain.row(s).map_err(core_err)?.to_vec()).map_err(core_err)?);
    }
    let mut table = ResultTable::new(["lambda", "x", "point", "value"]);
    let mut pass = true;
    let mut worst_rise: f64 = 0.0;
    for lambda in [0.5, 0.9] {
        let mut prev = vec![f64::INFINITY; points.len()];
        for x in tenths(1, 10) {
            let sc = base.with_x(x).and_then(|s| s.with_lambda(lambda)).map_err(core_err)?;
            let r = solve(&sc, Mode::Reveal).map_err(core_err)?;
            for (j, p) in points.iter().enumerate() {
                let v = r.value.interpolate(p).map_err(core_err)?;
                if prev[j].is_finite() {
                    worst_rise = worst_rise.max(v - prev[j]);
                }
                pass &= v <= prev[j] + GRID_SLACK;
                prev[j] = v;
                table.push(vec![lambda, x, j as f64, v])?;
            }
        }
    }
    Ok(Verdict { table, pass, tolerance: GRID_SLACK, summary: format!("largest increase {worst_rise:.3e}") })
}

fn disint(l: &Loaded) -> Result<Verdict, CliError> {
    const SLACK: f64 = 1e-2;
    let base = &l.scenario;
    let mut table = ResultTable::new(["x", "mc_mean", "std_error", "exact", "abs_diff", "bound"]);
    let mut pass = true;
    for x in [0.3, 0.5] {
        let sc = base.with_x(0.0).and_then(|s| s.with_lambda(1.0 - x)).map_err(core_err)?;
        let r = solve(&sc, Mode::NoReveal).map_err(core_err)?;
        let exact = r.value.interpolate(&l.prior).map_err(core_err)? / x;
        let strat = PolicyStrategy::new(&r.policy);
        let e = random_duration_value_mc(&sc, &l.prior, x, &strat, l.samples, l.seed).map_err(core_err)?;
        let diff = (e.mean - exact).abs();
        let bound = 3.0 * e.std_error + SLACK;
        pass &= diff <= bound;
        table.push(vec![x, e.mean, e.std_error, exact, diff, bound])?;
    }
    Ok(Verdict { table, pass, tolerance: SLACK, summary: "bound is 3 standard errors plus the tolerance".into() })
}

fn lemma1(l: &Loaded) -> Result<Verdict, CliError> {
    const MAX_POINTS: usize = 9;
    let sc = &l.scenario;
    let cav = cav_values(&sc.u);
    let touching: Vec<usize> = (0..sc.u.values().len()).filter(|i| sc.u.value(*i) >= cav.value(*i) - 1e-9).collect();
    let step = touching.len().div_ceil(MAX_POINTS).max(1);
    let mut picked: Vec<usize> = touching.iter().copied().step_by(step).collect();
    if let Some(last) = touching.last() {
        if picked.last() != Some(last) {
            picked.push(*last);
        }
    }
    let tol = 2.0 * sc.tol;
    let mut table = ResultTable::new(["index", "u", "cav_u", "split_gain"]);
    let mut worst: f64 = 0.0;
    for i in picked {
        let gain = no_info_gap(sc, &sc.grid().point(i)).map_err(core_err)?;
        worst = worst.max(gain);
        table.push(vec![i as f64, sc.u.value(i), cav.value(i), gain])?;
    }
    let summary = format!("{} grid points touch the envelope, largest split gain {worst:.3e}", touching.len());
    Ok(Verdict { table, pass: worst <= tol, tolerance: tol, summary })
}

fn obs1(l: &Loaded) -> Result<Verdict, CliError> {
    const TOL: f64 = 1e-9;
    let sc = &l.scenario;
    let k = sc.k();
    let mode = reveal_mode(sc);
    let a = solve(&Scenario { signal_count: k, ..sc.clone() }, mode).map_err(core_err)?;
    let b = solve(&Scenario { signal_count: k + 3, ..sc.clone() }, mode).map_err(core_err)?;
    let mut table = ResultTable::new(["index", "value_k_signals", "value_k_plus_3_signals", "abs_diff"]);
    let mut worst: f64 = 0.0;
    for (i, (x, y)) in a.value.values().iter().zip(b.value.values()).enumerate() {
        worst = worst.max((x - y).abs());
        table.push(vec![i as f64, *x, *y, (x - y).abs()])?;
    }
    Ok(Verdict { table, pass: worst <= TOL, tolerance: TOL, summary: format!("largest difference {worst:.3e}") })
}

/// `E(Y | Y > n)` by summing the pmf directly.
fn direct_truncated_mean(r: u64, x: f64, n: u64) -> Result<f64, CliError> {
    let (mut num, mut den) = (0.0, 0.0);
    let mut y = n + 1;
    loop {
        let p = nb_pmf(r, x, y).map_err(core_err)?;
        num += y as f64 * p;
        den += p;
        if y > n + 50 && p < 1e-18 * den {
            break;
        }
        y += 1;
    }
    Ok(num / den)
}

fn facts() -> Result<Verdict, CliError> {
    const TOL: f64 = 1e-9;
    // check 1: worst |closed form - direct sum| over n <= 50 for (r, x);
    // check 2: normal quantile z and whether the bound holds at (eps, x).
    let mut table = ResultTable::new(["check", "r_or_eps", "x", "value", "holds"]);
    table.meta("check_1", "negative binomial tail mean, value = max error over n in 0..=50");
    table.meta("check_2", "normal quantile bound, value = z");
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for r in 1..=10u64 {
        for x in tenths(1, 9) {
            let mut err: f64 = 0.0;
            for n in 0..=50u64 {
                let closed = nb_truncated_mean(r, x, n).map_err(core_err)?;
                err = err.max((closed - direct_truncated_mean(r, x, n)?).abs());
            }
            worst = worst.max(err);
            pass &= err <= TOL;
            table.push(vec![1.0, r as f64, x, err, (err <= TOL) as u8 as f64])?;
        }
    }
    let mut failures = 0;
    for e in 1..=49 {
        for j in 1..=19 {
            let (eps, x) = (e as f64 / 100.0, j as f64 / 20.0);
            let (z, holds) = clt_quantile_bound(eps, x).map_err(core_err)?;
            pass &= holds;
            failures += !holds as usize;
            table.push(vec![2.0, eps, x, z, holds as u8 as f64])?;
        }
    }
    let summary = format!("tail mean error {worst:.3e}, {failures} quantile bound failures");
    Ok(Verdict { table, pass, tolerance: TOL, summary })
}
