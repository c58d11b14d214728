//! Equilibria: Newton search, Jacobian spectra, stability classes and
//! return times.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::StateBox;
use crate::integrate::{self, IntegratorConfig, Method};
use crate::linalg::{self, Matrix};
use crate::model::System;
use crate::parallel;
use crate::table::{Cell, Table};

/// Real parts within this band of zero make an equilibrium marginal.
pub const TOL_MARGINAL: f64 = 1e-6;
/// Roots closer than this are the same equilibrium.
pub const DEDUP_DISTANCE: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    Marginal,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "Stable",
            Stability::Unstable => "Unstable",
            Stability::Saddle => "Saddle",
            Stability::Marginal => "Marginal",
        }
    }

    pub fn from_eigenvalues(eigs: &[Complex64]) -> Stability {
        if eigs.iter().any(|l| l.re.abs() <= TOL_MARGINAL) {
            Stability::Marginal
        } else if eigs.iter().all(|l| l.re < 0.0) {
            Stability::Stable
        } else if eigs.iter().any(|l| l.re < 0.0) {
            Stability::Saddle
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: Vec<f64>,
    pub jacobian: Matrix,
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub stability: Stability,
    /// Largest real part among the eigenvalues.
    pub weakest_real: f64,
}

impl Equilibrium {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSearch {
    pub seeds_per_axis: usize,
    pub newton_tol: f64,
}

impl Default for EquilibriumSearch {
    fn default() -> Self {
        EquilibriumSearch {
            seeds_per_axis: 21,
            newton_tol: 1e-10,
        }
    }
}

impl EquilibriumSearch {
    /// Seed counts that keep the total seed grid modest in higher dimension.
    pub fn for_dim(dim: usize) -> Self {
        let seeds_per_axis = match dim {
            1 => 41,
            2 => 21,
            3 => 11,
            _ => 5,
        };
        EquilibriumSearch {
            seeds_per_axis,
            ..Default::default()
        }
    }
}

pub fn jacobian(sys: &System, x: &[f64]) -> Result<Matrix> {
    Ok(sys.jacobian(x)?)
}

pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    linalg::eigenvalues(a)
}

/// Spectrum and stability class at `x` (not checked to be an equilibrium).
pub fn classify(sys: &System, x: &[f64]) -> Result<Equilibrium> {
    let jac = sys.jacobian(x)?;
    let eigenvalues = linalg::eigenvalues(&jac)?;
    let weakest_real = eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Equilibrium {
        state: x.to_vec(),
        stability: Stability::from_eigenvalues(&eigenvalues),
        jacobian: jac,
        eigenvalues,
        weakest_real,
    })
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton's method on `f(x) = 0` with the symbolic Jacobian.
///
/// Iterates until the update stalls at round-off level, then accepts the
/// point if its residual is below `tol`.
pub fn newton(sys: &System, x0: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut f = sys.rhs_vec(&x)?;
    for _ in 0..NEWTON_MAX_ITER {
        if max_norm(&f) == 0.0 {
            return Ok(x);
        }
        let jac = sys.jacobian(&x)?;
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = jac
            .solve(&neg_f)
            .ok_or_else(|| Error::NoConvergence("singular Jacobian".into()))?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        f = sys.rhs_vec(&x)?;
        let small_step = max_norm(&dx) <= 4.0 * f64::EPSILON * max_norm(&x).max(1.0);
        if small_step && max_norm(&f) < tol {
            return Ok(x);
        }
    }
    if max_norm(&f) < tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence(format!(
            "Newton residual {:e} after {NEWTON_MAX_ITER} iterations",
            max_norm(&f)
        )))
    }
}

fn seed_grid(bx: &StateBox, per_axis: usize) -> Vec<Vec<f64>> {
    let n = bx.dim();
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut flat| {
            (0..n)
                .map(|k| {
                    let i = flat % per_axis;
                    flat /= per_axis;
                    let t = i as f64 / (per_axis - 1) as f64;
                    bx.lo()[k] + t * (bx.hi()[k] - bx.lo()[k])
                })
                .collect()
        })
        .collect()
}

/// Sort lexicographically, then keep the first of every cluster of roots
/// within [`DEDUP_DISTANCE`].
pub(crate) fn dedupe(mut roots: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for r in roots {
        let dup = kept.iter().any(|k| {
            k.iter()
                .zip(&r)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < DEDUP_DISTANCE
        });
        if !dup {
            kept.push(r);
        }
    }
    kept
}

/// Newton from every point of a uniform seed grid over `bx`; converged roots
/// inside the box are deduplicated and classified. Seeds that fail are
/// skipped. The search is not guaranteed to be complete.
pub fn find_equilibria(
    sys: &System,
    bx: &StateBox,
    search: &EquilibriumSearch,
) -> Result<Vec<Equilibrium>> {
    if bx.dim() != sys.dim() {
        return Err(Error::InvalidArgument(
            "box dimension differs from model".into(),
        ));
    }
    if search.seeds_per_axis < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 seeds per axis".into(),
        ));
    }
    let seeds = seed_grid(bx, search.seeds_per_axis);
    let roots: Vec<Vec<f64>> =
        parallel::map_slice(&seeds, |s| newton(sys, s, search.newton_tol).ok())
            .into_iter()
            .flatten()
            .filter(|r| bx.contains(r, 1e-9))
            .collect();
    dedupe(roots).iter().map(|r| classify(sys, r)).collect()
}

/// Stable equilibria in `bx`, positions only.
pub fn attractors(
    sys: &System,
    bx: &StateBox,
    search: &EquilibriumSearch,
) -> Result<Vec<Vec<f64>>> {
    Ok(find_equilibria(sys, bx, search)?
        .into_iter()
        .filter(Equilibrium::is_stable)
        .map(|e| e.state)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnTime {
    pub time: f64,
    pub pimm_resilience: f64,
}

/// Characteristic 1/e return time `-1 / Re(lambda_weakest)` and its
/// reciprocal.
pub fn return_time(eq: &Equilibrium) -> Result<ReturnTime> {
    if !eq.is_stable() {
        return Err(Error::NotStable);
    }
    Ok(ReturnTime {
        time: -1.0 / eq.weakest_real,
        pimm_resilience: -eq.weakest_real,
    })
}

/// Time for a perturbation `eq.state + offset` to decay to 1/e of its
/// initial Euclidean size, measured on a fine RK4 trajectory with linear
/// interpolation of the crossing.
pub fn empirical_recovery_time(
    sys: &System,
    eq: &Equilibrium,
    offset: &[f64],
    t_horizon: f64,
) -> Result<f64> {
    let x0: Vec<f64> = eq.state.iter().zip(offset).map(|(a, b)| a + b).collect();
    let dist = |x: &[f64]| -> f64 {
        x.iter()
            .zip(&eq.state)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let target = dist(&x0) / std::f64::consts::E;
    let cfg = IntegratorConfig {
        method: Method::Rk4Fixed,
        dt: 1e-3,
        t_max: t_horizon,
        ..Default::default()
    };
    let traj = integrate::integrate(sys, &x0, &cfg, t_horizon)?;
    let d: Vec<f64> = traj.states.iter().map(|x| dist(x)).collect();
    for i in 1..d.len() {
        if d[i] <= target {
            let (t0, t1) = (traj.times[i - 1], traj.times[i]);
            let frac = (d[i - 1] - target) / (d[i - 1] - d[i]);
            return Ok(t0 + frac * (t1 - t0));
        }
    }
    Err(Error::NoConvergence(format!(
        "perturbation did not decay to 1/e within t = {t_horizon}"
    )))
}

/// Columns `<state...>,stability,weakest_real,return_time`; return time is
/// empty for non-stable rows.
pub fn equilibria_table(eqs: &[Equilibrium], state_names: &[String]) -> Table {
    let header = state_names
        .iter()
        .cloned()
        .chain(["stability", "weakest_real", "return_time"].map(String::from));
    let mut t = Table::new(header);
    for e in eqs {
        let mut row: Vec<Cell> = e.state.iter().map(|v| Cell::Num(*v)).collect();
        row.push(e.stability.as_str().into());
        row.push(Cell::Num(e.weakest_real));
        row.push(return_time(e).ok().map(|r| r.time).into());
        t.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Overrides, SystemModel};

    fn cubic_at(mu: f64) -> (SystemModel, Overrides) {
        (
            SystemModel::builtin("saddle_node_cubic").unwrap(),
            Overrides::from([("mu".to_string(), mu)]),
        )
    }

    /// Real roots of x^3 - x - mu = 0 by bisection on sign-change brackets.
    fn cubic_roots(mu: f64) -> Vec<f64> {
        let g = |x: f64| x * x * x - x - mu;
        let mut out = Vec::new();
        let n = 4000;
        for i in 0..n {
            let (mut a, mut b) = (
                -3.0 + 6.0 * i as f64 / n as f64,
                -3.0 + 6.0 * (i + 1) as f64 / n as f64,
            );
            if g(a) == 0.0 {
                out.push(a);
                continue;
            }
            if g(a) * g(b) < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if g(a) * g(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
        }
        out
    }

    #[test]
    fn cubic_equilibria_at_zero() {
        let (m, ov) = cubic_at(0.0);
        let sys = m.bind(&ov).unwrap();
        let bx = StateBox::cube(1, -2.0, 2.0).unwrap();
        let search = EquilibriumSearch {
            seeds_per_axis: 21,
            newton_tol: 1e-10,
        };
        let eqs = find_equilibria(&sys, &bx, &search).unwrap();
        let got: Vec<(f64, Stability)> = eqs.iter().map(|e| (e.state[0], e.stability)).collect();
        assert_eq!(got.len(), 3);
        for ((x, s), (wx, ws)) in got.iter().zip([
            (-1.0, Stability::Stable),
            (0.0, Stability::Unstable),
            (1.0, Stability::Stable),
        ]) {
            assert!((x - wx).abs() < 1e-12);
            assert_eq!(*s, ws);
        }
    }

    #[test]
    fn cubic_equilibria_at_point_three_match_root_oracle() {
        let roots = cubic_roots(0.3);
        assert_eq!(roots.len(), 3);
        let (m, ov) = cubic_at(0.3);
        let sys = m.bind(&ov).unwrap();
        let eqs = find_equilibria(
            &sys,
            &StateBox::cube(1, -2.0, 2.0).unwrap(),
            &EquilibriumSearch::default(),
        )
        .unwrap();
        assert_eq!(eqs.len(), 3);
        for (e, r) in eqs.iter().zip(&roots) {
            assert!((e.state[0] - r).abs() < 1e-9);
        }
        assert!((eqs[0].state[0] + 0.786).abs() < 1e-3);
        assert!((eqs[2].state[0] - 1.125).abs() < 1e-3);
        let kinds: Vec<Stability> = eqs.iter().map(|e| e.stability).collect();
        assert_eq!(
            kinds,
            [Stability::Stable, Stability::Unstable, Stability::Stable]
        );
    }

    #[test]
    fn single_equilibrium_past_fold() {
        // discriminant of x^3 - x - mu is 4 - 27 mu^2 = -23 at mu = 1
        let (m, ov) = cubic_at(1.0);
        let sys = m.bind(&ov).unwrap();
        let eqs = find_equilibria(
            &sys,
            &StateBox::cube(1, -2.0, 2.0).unwrap(),
            &EquilibriumSearch::default(),
        )
        .unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].stability, Stability::Stable);
    }

    #[test]
    fn residuals_below_tolerance() {
        let m = SystemModel::builtin("double_well_2d").unwrap();
        let sys = m.bind(&Overrides::new()).unwrap();
        let search = EquilibriumSearch {
            seeds_per_axis: 9,
            newton_tol: 1e-10,
        };
        let eqs = find_equilibria(&sys, &StateBox::cube(2, -2.0, 2.0).unwrap(), &search).unwrap();
        assert_eq!(eqs.len(), 3);
        assert_eq!(eqs[1].stability, Stability::Saddle);
        for e in &eqs {
            assert!(max_norm(&sys.rhs_vec(&e.state).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn jacobian_examples() {
        let (m, ov) = cubic_at(0.0);
        let sys = m.bind(&ov).unwrap();
        assert_eq!(jacobian(&sys, &[-1.0]).unwrap().rows(), vec![vec![-2.0]]);
        assert_eq!(jacobian(&sys, &[0.0]).unwrap().rows(), vec![vec![1.0]]);
    }

    #[test]
    fn return_time_examples() {
        let (m, ov) = cubic_at(0.0);
        let sys = m.bind(&ov).unwrap();
        let rt = return_time(&classify(&sys, &[-1.0]).unwrap()).unwrap();
        assert_eq!(rt.time, 0.5);
        assert_eq!(rt.pimm_resilience, 2.0);
        assert!(matches!(
            return_time(&classify(&sys, &[0.0]).unwrap()),
            Err(Error::NotStable)
        ));
        let dw = SystemModel::builtin("double_well_2d").unwrap();
        let sys = dw.bind(&Overrides::new()).unwrap();
        assert_eq!(
            return_time(&classify(&sys, &[1.0, 0.0]).unwrap())
                .unwrap()
                .time,
            0.5
        );
    }

    #[test]
    fn marginal_classification() {
        let m = SystemModel::new("m", vec!["x".into()], vec![], &["-x^3"]).unwrap();
        let sys = m.bind(&Overrides::new()).unwrap();
        assert_eq!(
            classify(&sys, &[0.0]).unwrap().stability,
            Stability::Marginal
        );
    }

    #[test]
    fn empirical_recovery_matches_eigenvalue() {
        let (m, ov) = cubic_at(0.0);
        let sys = m.bind(&ov).unwrap();
        let eq = classify(&sys, &[-1.0]).unwrap();
        let t = empirical_recovery_time(&sys, &eq, &[1e-3], 5.0).unwrap();
        assert!((t - 0.5).abs() < 0.05 * 0.5, "{t}");
    }

    #[test]
    fn perturbed_stable_point_returns() {
        let m = SystemModel::builtin("double_well_2d").unwrap();
        let sys = m.bind(&Overrides::new()).unwrap();
        let eq = classify(&sys, &[1.0, 0.0]).unwrap();
        let x0 = [1.0 + 0.6e-6, -0.8e-6];
        let cfg = IntegratorConfig::default();
        let r = integrate::settle(&sys, &x0, &cfg, std::slice::from_ref(&eq.state)).unwrap();
        assert_eq!(r.verdict, integrate::Verdict::Settled(0));
    }

    #[test]
    fn table_layout() {
        let (m, ov) = cubic_at(0.0);
        let sys = m.bind(&ov).unwrap();
        let eqs = find_equilibria(
            &sys,
            &StateBox::cube(1, -2.0, 2.0).unwrap(),
            &EquilibriumSearch::default(),
        )
        .unwrap();
        let csv = equilibria_table(&eqs, m.state_names()).to_csv();
        assert_eq!(
            csv,
            "x,stability,weakest_real,return_time\n-1,Stable,-2,0.5\n0,Unstable,1,\n1,Stable,-2,0.5\n"
        );
    }
}
