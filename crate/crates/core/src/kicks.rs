//! Repeated state kicks, press-forcing resistance and 1-D landscape
//! geometry.

use crate::basin::{self, SeparatrixEstimate};
use crate::equilibria;
use crate::error::{Error, Result};
use crate::integrate::{self, IntegratorConfig, Verdict};
use crate::model::System;
use crate::parallel;
use crate::table::{Cell, Table};

pub const MAX_DOUBLINGS: usize = 60;
pub const KICK_REL_TOL: f64 = 1e-3;
const FIRST_PROBE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct KickSchedule {
    pub direction: Vec<f64>,
    pub magnitude: f64,
    /// Time between kicks.
    pub period: f64,
    pub count: usize,
}

impl KickSchedule {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.direction.len() != dim {
            return Err(Error::InvalidArgument(
                "kick direction must match the model dimension".into(),
            ));
        }
        basin::check_unit(&self.direction)?;
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::InvalidArgument(
                "kick magnitude must be non-negative".into(),
            ));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidArgument(
                "kick period must be positive".into(),
            ));
        }
        if self.count == 0 {
            return Err(Error::InvalidArgument("need at least one kick".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KickOutcome {
    /// `None` when the final settle was undecided.
    pub escaped: Option<bool>,
    pub kicks_applied: usize,
    pub final_state: Vec<f64>,
    /// Smallest distance to the separatrix seen right after a kick or a
    /// recovery interval; present only if a separatrix was supplied.
    pub min_threshold_distance: Option<f64>,
}

/// Applies `count` instantaneous kicks `x += magnitude * direction`, with a
/// free flow of length `period` after every kick but the last, then settles.
/// Escape means ending anywhere but at `attractors[home]`.
pub fn simulate_kicks(
    sys: &System,
    x0: &[f64],
    schedule: &KickSchedule,
    cfg: &IntegratorConfig,
    attractors: &[Vec<f64>],
    home: usize,
    sep: Option<&SeparatrixEstimate>,
) -> Result<KickOutcome> {
    schedule.validate(sys.dim())?;
    if home >= attractors.len() {
        return Err(Error::InvalidArgument(format!(
            "no attractor with index {home}"
        )));
    }
    let mut min_d: Option<f64> = None;
    let mut observe = |x: &[f64]| -> Result<()> {
        if let Some(s) = sep {
            let d = basin::distance_to_threshold(x, s)?.distance;
            min_d = Some(min_d.map_or(d, |m| m.min(d)));
        }
        Ok(())
    };
    let mut x = x0.to_vec();
    for k in 0..schedule.count {
        for (xi, d) in x.iter_mut().zip(&schedule.direction) {
            *xi += schedule.magnitude * d;
        }
        observe(&x)?;
        if k + 1 < schedule.count {
            match integrate::flow(sys, &x, cfg, schedule.period) {
                Ok(next) if next.iter().all(|v| v.abs() <= integrate::DIVERGENCE_NORM) => x = next,
                Ok(next) => {
                    return Ok(diverged(next, k + 1, min_d));
                }
                Err(Error::Blowup { partial, .. }) => {
                    let last = partial.final_state().map(<[f64]>::to_vec).unwrap_or(x);
                    return Ok(diverged(last, k + 1, min_d));
                }
                Err(e) => return Err(e),
            }
            observe(&x)?;
        }
    }
    let r = integrate::settle(sys, &x, cfg, attractors)?;
    let escaped = match r.verdict {
        Verdict::Settled(i) => Some(i != home),
        Verdict::Diverged => Some(true),
        Verdict::Undecided => None,
    };
    Ok(KickOutcome {
        escaped,
        kicks_applied: schedule.count,
        final_state: r.final_state,
        min_threshold_distance: min_d,
    })
}

fn diverged(final_state: Vec<f64>, kicks_applied: usize, min_d: Option<f64>) -> KickOutcome {
    KickOutcome {
        escaped: Some(true),
        kicks_applied,
        final_state,
        min_threshold_distance: min_d,
    }
}

fn home_of(
    sys: &System,
    x0: &[f64],
    cfg: &IntegratorConfig,
    attractors: &[Vec<f64>],
) -> Result<usize> {
    match integrate::settle(sys, x0, cfg, attractors)?.verdict {
        Verdict::Settled(i) => Ok(i),
        Verdict::Undecided => Err(Error::Undecided("starting point does not settle".into())),
        Verdict::Diverged => Err(Error::InvalidArgument("starting point diverges".into())),
    }
}

/// Largest kick magnitude that `count` kicks every `period` can apply along
/// `direction` without the state escaping its basin.
///
/// The upper bracket is found by doubling from 1e-3, then bisected to a
/// relative width of 1e-3; the lower (sustained) end is returned. An
/// undecided outcome counts as an escape.
pub fn max_sustainable_kick(
    sys: &System,
    x0: &[f64],
    direction: &[f64],
    period: f64,
    count: usize,
    cfg: &IntegratorConfig,
    attractors: &[Vec<f64>],
) -> Result<f64> {
    let home = home_of(sys, x0, cfg, attractors)?;
    let escapes = |magnitude: f64| -> Result<bool> {
        let schedule = KickSchedule {
            direction: direction.to_vec(),
            magnitude,
            period,
            count,
        };
        Ok(
            simulate_kicks(sys, x0, &schedule, cfg, attractors, home, None)?
                .escaped
                .unwrap_or(true),
        )
    };
    let mut lo = 0.0;
    let mut hi = FIRST_PROBE;
    let mut doublings = 0;
    while !escapes(hi)? {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoEscapeFound(MAX_DOUBLINGS));
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    while hi - lo > KICK_REL_TOL * hi && hi > f64::MIN_POSITIVE * 1e3 {
        let mid = 0.5 * (lo + hi);
        if escapes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Number of kicks used for a sweep entry: enough to cover `horizon`, and
/// never fewer than 10.
pub fn sweep_count(period: f64, horizon: f64) -> usize {
    ((horizon / period).ceil() as usize).max(10)
}

/// `(period, delta_star)` for each period, computed independently.
pub fn kick_sweep(
    sys: &System,
    x0: &[f64],
    direction: &[f64],
    periods: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
    attractors: &[Vec<f64>],
) -> Result<Vec<(f64, f64)>> {
    parallel::map_slice(periods, |&tau| {
        let d = max_sustainable_kick(
            sys,
            x0,
            direction,
            tau,
            sweep_count(tau, horizon),
            cfg,
            attractors,
        )?;
        Ok((tau, d))
    })
    .into_iter()
    .collect()
}

/// Columns `tau,delta_star`.
pub fn sweep_table(rows: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["tau", "delta_star"]);
    for (tau, d) in rows {
        t.push(vec![Cell::Num(*tau), Cell::Num(*d)]);
    }
    t
}

fn require_1d(sys: &System) -> Result<()> {
    if sys.dim() != 1 {
        return Err(Error::DimensionTooLarge {
            dim: sys.dim(),
            max: 1,
        });
    }
    Ok(())
}

/// Potential `U` with `f = -dU/dx`, by cumulative trapezoid on a uniform
/// grid, shifted so that `min U = 0`.
pub fn potential_1d(sys: &System, lo: f64, hi: f64, samples: usize) -> Result<Vec<(f64, f64)>> {
    require_1d(sys)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument("range must satisfy lo < hi".into()));
    }
    let h = (hi - lo) / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|i| lo + i as f64 * h).collect();
    let fs = xs
        .iter()
        .map(|&x| Ok(sys.rhs_vec(&[x])?[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mut u = vec![0.0; samples];
    for i in 1..samples {
        u[i] = u[i - 1] - 0.5 * h * (fs[i - 1] + fs[i]);
    }
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(xs.into_iter().zip(u.into_iter().map(|v| v - min)).collect())
}

/// Columns `x,U`.
pub fn landscape_table(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["x", "U"]);
    for (x, u) in points {
        t.push(vec![Cell::Num(*x), Cell::Num(*u)]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteepestPoint {
    pub x_at_max: f64,
    pub max_speed: f64,
}

pub const STEEPEST_GRID: usize = 10_000;

/// Location and value of the largest `|f|` on the open interval between two
/// 1-D equilibria: grid search, then golden-section refinement to 1e-8.
pub fn steepest_recovery_point(sys: &System, a: f64, b: f64) -> Result<SteepestPoint> {
    require_1d(sys)?;
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidArgument(
            "interval must have positive length".into(),
        ));
    }
    let speed = |x: f64| -> Result<f64> { Ok(sys.rhs_vec(&[x])?[0].abs()) };
    let h = (b - a) / (STEEPEST_GRID + 1) as f64;
    let mut best = (a + h, speed(a + h)?);
    for i in 2..=STEEPEST_GRID {
        let x = a + i as f64 * h;
        let s = speed(x)?;
        if s > best.1 {
            best = (x, s);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(a), (best.0 + h).min(b));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut sc, mut sd) = (speed(c)?, speed(d)?);
    while hi - lo > 1e-8 {
        if sc > sd {
            hi = d;
            d = c;
            sd = sc;
            c = hi - inv_phi * (hi - lo);
            sc = speed(c)?;
        } else {
            lo = c;
            c = d;
            sc = sd;
            d = lo + inv_phi * (hi - lo);
            sd = speed(d)?;
        }
    }
    let x = 0.5 * (lo + hi);
    let s = speed(x)?;
    Ok(if s >= best.1 {
        SteepestPoint {
            x_at_max: x,
            max_speed: s,
        }
    } else {
        SteepestPoint {
            x_at_max: best.0,
            max_speed: best.1,
        }
    })
}

const FORCED_RESIDUAL: f64 = 1e-9;

/// Press-forcing resistance: with constant forcing `magnitude * direction`
/// added to the right-hand side, the forced system relaxes from `x0` to a
/// new equilibrium `x_F`; returns `magnitude / |x_F - x0|`.
///
/// Fails with [`Error::BasinExit`] if `x_F`, released from the forcing, does
/// not return to `x0`.
pub fn resistance_ratio(
    sys: &System,
    x0: &[f64],
    direction: &[f64],
    magnitude: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    basin::check_unit(direction)?;
    if direction.len() != sys.dim() || x0.len() != sys.dim() {
        return Err(Error::InvalidArgument(
            "x0 and direction must match the model dimension".into(),
        ));
    }
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::InvalidArgument(
            "forcing magnitude must be positive".into(),
        ));
    }
    let forced = sys.with_forcing(direction.iter().map(|d| magnitude * d).collect());
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let chunk = 1.0;
    loop {
        let f = forced.rhs_vec(&x)?;
        if f.iter().all(|v| v.abs() < FORCED_RESIDUAL) {
            break;
        }
        if t >= cfg.t_max {
            return Err(Error::NoConvergence(format!(
                "forced system still moving at t = {}",
                cfg.t_max
            )));
        }
        x = match integrate::flow(&forced, &x, cfg, chunk) {
            Ok(next) if next.iter().all(|v| v.abs() <= integrate::DIVERGENCE_NORM) => next,
            Ok(_) | Err(Error::Blowup { .. }) => return Err(Error::BasinExit),
            Err(e) => return Err(e),
        };
        t += chunk;
    }
    let x_f = equilibria::newton(&forced, &x, FORCED_RESIDUAL).unwrap_or(x);
    let back = integrate::settle(&sys.without_forcing(), &x_f, cfg, &[x0.to_vec()])?;
    if back.verdict != Verdict::Settled(0) {
        return Err(Error::BasinExit);
    }
    let disp = x_f
        .iter()
        .zip(x0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(magnitude / disp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basin::{directional_distance, DirectionalDistance};
    use crate::model::{Overrides, SystemModel};
    use proptest::prelude::*;

    fn cubic() -> SystemModel {
        SystemModel::builtin("saddle_node_cubic").unwrap()
    }

    fn mu(v: f64) -> Overrides {
        Overrides::from([("mu".to_string(), v)])
    }

    fn schedule(magnitude: f64, period: f64, count: usize) -> KickSchedule {
        KickSchedule {
            direction: vec![1.0],
            magnitude,
            period,
            count,
        }
    }

    const ATT: fn() -> Vec<Vec<f64>> = || vec![vec![-1.0], vec![1.0]];

    #[test]
    fn single_large_kick_escapes() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let out = simulate_kicks(
            &sys,
            &[-1.0],
            &schedule(1.5, 1.0, 1),
            &IntegratorConfig::default(),
            &ATT(),
            0,
            None,
        )
        .unwrap();
        assert_eq!(out.escaped, Some(true));
        assert!((out.final_state[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn spaced_small_kicks_do_not_escape() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let out = simulate_kicks(
            &sys,
            &[-1.0],
            &schedule(0.5, 10.0, 10),
            &IntegratorConfig::default(),
            &ATT(),
            0,
            None,
        )
        .unwrap();
        assert_eq!(out.escaped, Some(false));
        assert_eq!(out.kicks_applied, 10);
    }

    #[test]
    fn zero_kick_stays_home() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let sep = SeparatrixEstimate {
            points: vec![vec![0.0]],
            cell_diameter: 0.01,
        };
        let out = simulate_kicks(
            &sys,
            &[-1.0],
            &schedule(0.0, 1.0, 3),
            &IntegratorConfig::default(),
            &ATT(),
            0,
            Some(&sep),
        )
        .unwrap();
        assert_eq!(out.escaped, Some(false));
        assert!((out.final_state[0] + 1.0).abs() < 1e-4);
        assert_eq!(out.min_threshold_distance, Some(1.0));
    }

    #[test]
    fn long_period_threshold_is_single_kick_distance() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let cfg = IntegratorConfig::default();
        let d = max_sustainable_kick(&sys, &[-1.0], &[1.0], 50.0, 10, &cfg, &ATT()).unwrap();
        assert!((d - 1.0).abs() < 0.02, "{d}");
        let DirectionalDistance::Escape(single) =
            directional_distance(&sys, &[-1.0], &[1.0], &cfg, 4.0, &ATT()).unwrap()
        else {
            panic!()
        };
        assert!(d <= single * (1.0 + KICK_REL_TOL));
    }

    #[test]
    fn continuum_limit_matches_bottleneck_speed() {
        let bottleneck = 2.0 / (3.0 * 3f64.sqrt());
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let d = max_sustainable_kick(
            &sys,
            &[-1.0],
            &[1.0],
            0.01,
            10_000,
            &IntegratorConfig::default(),
            &ATT(),
        )
        .unwrap();
        assert!(
            (d / 0.01 - bottleneck).abs() < 0.05 * bottleneck,
            "{}",
            d / 0.01
        );
    }

    #[test]
    fn shallow_basin_continuum_limit() {
        let want = 2.0 / (3.0 * 3f64.sqrt()) - 0.3;
        let m = cubic();
        let sys = m.bind(&mu(0.3)).unwrap();
        let cfg = IntegratorConfig::default();
        let bx = crate::grid::StateBox::cube(1, -2.0, 2.0).unwrap();
        let att = equilibria::attractors(&sys, &bx, &Default::default()).unwrap();
        let d = max_sustainable_kick(&sys, &att[0], &[1.0], 0.01, 10_000, &cfg, &att).unwrap();
        assert!((d / 0.01 - want).abs() < 0.1 * want, "{}", d / 0.01);
    }

    #[test]
    fn sweep_is_monotone_in_period() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let rows = kick_sweep(
            &sys,
            &[-1.0],
            &[1.0],
            &[0.01, 0.1, 1.0, 10.0],
            100.0,
            &IntegratorConfig::default(),
            &ATT(),
        )
        .unwrap();
        assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1), "{rows:?}");
        assert_eq!(sweep_table(&rows).header, ["tau", "delta_star"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn escape_is_monotone_in_magnitude(
            d1 in 0.0f64..1.5,
            extra in 0.0f64..1.0,
            period in 0.05f64..5.0,
            count in 1usize..20,
            mu_v in -0.3f64..0.3,
        ) {
            let m = cubic();
            let sys = m.bind(&mu(mu_v)).unwrap();
            let bx = crate::grid::StateBox::cube(1, -2.0, 2.0).unwrap();
            let att = equilibria::attractors(&sys, &bx, &Default::default()).unwrap();
            let cfg = IntegratorConfig::default();
            let run = |d: f64| simulate_kicks(&sys, &att[0], &schedule(d, period, count), &cfg, &att, 0, None)
                .unwrap().escaped.unwrap_or(true);
            if run(d1) {
                prop_assert!(run(d1 + extra));
            }
        }
    }

    #[test]
    fn potential_matches_closed_form() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let u = potential_1d(&sys, -2.0, 2.0, 4001).unwrap();
        let at = |x: f64| u.iter().find(|p| (p.0 - x).abs() < 1e-9).unwrap().1;
        assert!((at(-1.0) - at(0.0) + 0.25).abs() < 1e-4);
        assert!(u.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) == 0.0);
    }

    #[test]
    fn linear_potential_is_symmetric_parabola() {
        let m = SystemModel::builtin("linear_1d").unwrap();
        let sys = m.bind(&Overrides::from([("mu".to_string(), 0.5)])).unwrap();
        let u = potential_1d(&sys, -1.5, 2.5, 401).unwrap();
        let n = u.len();
        for i in 0..n / 2 {
            assert!((u[i].1 - u[n - 1 - i].1).abs() < 1e-10);
        }
        let imin = (0..n).min_by(|&a, &b| u[a].1.total_cmp(&u[b].1)).unwrap();
        assert!((u[imin].0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn potential_stationary_points_match_equilibria() {
        let m = cubic();
        let sys = m.bind(&mu(0.2)).unwrap();
        let u = potential_1d(&sys, -2.0, 2.0, 2001).unwrap();
        let h = 4.0 / 2000.0;
        let mut stationary = Vec::new();
        for i in 1..u.len() - 1 {
            let left = u[i].1 - u[i - 1].1;
            let right = u[i + 1].1 - u[i].1;
            if left * right <= 0.0 {
                stationary.push(u[i].0);
            }
        }
        let bx = crate::grid::StateBox::cube(1, -2.0, 2.0).unwrap();
        let eqs = equilibria::find_equilibria(&sys, &bx, &Default::default()).unwrap();
        assert_eq!(stationary.len(), eqs.len());
        for (s, e) in stationary.iter().zip(&eqs) {
            assert!((s - e.state[0]).abs() <= h);
        }
    }

    #[test]
    fn steepest_point_examples() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let p = steepest_recovery_point(&sys, -1.0, 0.0).unwrap();
        assert!((p.x_at_max + 1.0 / 3f64.sqrt()).abs() < 1e-6);
        assert!((p.max_speed - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);

        let sys3 = m.bind(&mu(0.3)).unwrap();
        let p = steepest_recovery_point(&sys3, -0.786, -0.340).unwrap();
        assert!((p.x_at_max + 1.0 / 3f64.sqrt()).abs() < 1e-6);
        assert!((p.max_speed - (2.0 / (3.0 * 3f64.sqrt()) - 0.3)).abs() < 1e-6);

        let lin = SystemModel::builtin("linear_1d").unwrap();
        let ls = lin.bind(&Overrides::new()).unwrap();
        let p = steepest_recovery_point(&ls, -0.7, 0.0).unwrap();
        assert!((p.x_at_max + 0.7).abs() < 1e-6);
        let p = steepest_recovery_point(&ls, 0.0, 0.4).unwrap();
        assert!((p.x_at_max - 0.4).abs() < 1e-6);
    }

    #[test]
    fn steepest_speed_matches_landscape_slope() {
        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        let p = steepest_recovery_point(&sys, -1.0, 0.0).unwrap();
        let u = potential_1d(&sys, -1.0, 0.0, 10_001).unwrap();
        let slope = u
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        assert!((slope - p.max_speed).abs() < 1e-3);
    }

    #[test]
    fn resistance_examples() {
        let cfg = IntegratorConfig::default();
        let lin = SystemModel::builtin("linear_1d").unwrap();
        let ls = lin
            .bind(&Overrides::from([("k".to_string(), 2.0)]))
            .unwrap();
        let r = resistance_ratio(&ls, &[0.0], &[1.0], 0.1, &cfg).unwrap();
        assert!((r - 2.0).abs() < 1e-6, "{r}");

        let m = cubic();
        let sys = m.bind(&mu(0.0)).unwrap();
        // forced equilibrium is the lower root of x^3 - x - 0.1
        let g = |x: f64| x * x * x - x - 0.1;
        let (mut a, mut b) = (-1.0, -0.8);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(a) * g(m) <= 0.0 {
                b = m
            } else {
                a = m
            }
        }
        let oracle = 0.1 / (a + 1.0);
        let r = resistance_ratio(&sys, &[-1.0], &[1.0], 0.1, &cfg).unwrap();
        assert!((r - oracle).abs() < 1e-6, "{r} vs {oracle}");
        let r = resistance_ratio(&sys, &[-1.0], &[1.0], 1e-3, &cfg).unwrap();
        assert!((r - 2.0).abs() < 0.01 * 2.0, "{r}");
        assert!(matches!(
            resistance_ratio(&sys, &[-1.0], &[1.0], 0.5, &cfg),
            Err(Error::BasinExit)
        ));
    }
}
