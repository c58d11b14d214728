//! Parameter continuation, fold points, expanded (state x parameter) basins,
//! critical slowing down and reversibility of parameter excursions.

use crate::basin::{self, BasinMap, CellLabel};
use crate::equilibria::{self, EquilibriumSearch, Stability};
use crate::error::{Error, Result};
use crate::expr::{fold, Expr, Var};
use crate::grid::{CellGrid, StateBox};
use crate::integrate::{self, IntegratorConfig, Verdict};
use crate::linalg::Matrix;
use crate::model::System;
use crate::parallel;
use crate::table::{format_sig9, Cell, Table};

/// Continuation stops once the step has been halved below this.
pub const MIN_STEP: f64 = 1e-10;
/// Residual bound for fold points.
pub const FOLD_TOL: f64 = 1e-8;
pub const REVERSIBILITY_SAMPLES: usize = 200;
pub const RESTORING_TOL: f64 = 1e-4;

fn param_index(sys: &System, name: &str) -> Result<usize> {
    sys.model()
        .param_index(name)
        .ok_or_else(|| Error::UnknownParameter(name.to_string()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub mu: f64,
    pub state: Vec<f64>,
    pub stability: Stability,
    pub weakest_real: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchEnd {
    Reached,
    /// Step halving collapsed; `last_failed_mu` brackets the fold together
    /// with the last point.
    StepCollapse {
        last_failed_mu: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub param_name: String,
    pub points: Vec<BranchPoint>,
    /// +1 for increasing parameter, -1 for decreasing.
    pub direction: f64,
    pub end: BranchEnd,
}

impl Branch {
    pub fn last(&self) -> &BranchPoint {
        self.points.last().expect("branch has a start point")
    }

    /// Columns `mu,<state...>,stability,weakest_real`.
    pub fn to_table(&self, state_names: &[String]) -> Table {
        let header = std::iter::once("mu".to_string())
            .chain(state_names.iter().cloned())
            .chain(["stability", "weakest_real"].map(String::from));
        let mut t = Table::new(header);
        for p in &self.points {
            let mut row = vec![Cell::Num(p.mu)];
            row.extend(p.state.iter().map(|v| Cell::Num(*v)));
            row.push(p.stability.as_str().into());
            row.push(Cell::Num(p.weakest_real));
            t.push(row);
        }
        t
    }
}

/// One corrector step of natural-parameter continuation: Newton at the new
/// parameter from the previous state, rejected if the determinant of the
/// Jacobian changes sign or the state jumps by more than a tenth of its
/// scale.
fn corrector(sys_at: &System, prev: &[f64], prev_det_sign: f64, tol: f64) -> Option<Vec<f64>> {
    let x = equilibria::newton(sys_at, prev, tol).ok()?;
    if dist(&x, prev) > 0.1 * (1.0 + norm(prev)) {
        return None;
    }
    let det = sys_at.jacobian(&x).ok()?.determinant();
    if det == 0.0 || det.signum() != prev_det_sign {
        return None;
    }
    Some(x)
}

fn branch_point(sys_at: &System, mu: f64, x: Vec<f64>) -> Result<BranchPoint> {
    let e = equilibria::classify(sys_at, &x)?;
    Ok(BranchPoint {
        mu,
        state: x,
        stability: e.stability,
        weakest_real: e.weakest_real,
    })
}

/// Follows the equilibrium through `start` from `mu_start` toward `mu_end`.
/// Failed steps are halved; the branch ends at `mu_end` or when the step
/// falls below [`MIN_STEP`], which is how folds show up.
pub fn continue_branch(
    sys: &System,
    param: &str,
    mu_start: f64,
    mu_end: f64,
    step: f64,
    start: &[f64],
    newton_tol: f64,
) -> Result<Branch> {
    let idx = param_index(sys, param)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(
            "continuation step must be positive".into(),
        ));
    }
    if mu_start == mu_end {
        return Err(Error::InvalidArgument("sweep range is empty".into()));
    }
    let direction = (mu_end - mu_start).signum();
    let sys0 = sys.with_param(idx, mu_start);
    let x0 = equilibria::newton(&sys0, start, newton_tol)
        .map_err(|_| Error::ImmediateFailure(mu_start))?;
    let mut det_sign = sys0.jacobian(&x0)?.determinant().signum();
    if det_sign == 0.0 {
        return Err(Error::ImmediateFailure(mu_start));
    }
    let mut points = vec![branch_point(&sys0, mu_start, x0)?];
    let mut h = step;
    let mut last_failed = None;
    loop {
        let cur = points.last().expect("nonempty");
        if cur.mu == mu_end {
            break;
        }
        let mu = if direction > 0.0 {
            (cur.mu + h).min(mu_end)
        } else {
            (cur.mu - h).max(mu_end)
        };
        let sys_at = sys.with_param(idx, mu);
        match corrector(&sys_at, &cur.state, det_sign, newton_tol) {
            Some(x) => {
                det_sign = sys_at.jacobian(&x)?.determinant().signum();
                points.push(branch_point(&sys_at, mu, x)?);
                h = (2.0 * h).min(step);
            }
            None => {
                last_failed = Some(mu);
                h *= 0.5;
                if h < MIN_STEP {
                    break;
                }
            }
        }
    }
    if points.len() == 1 && last_failed.is_some() {
        return Err(Error::ImmediateFailure(mu_start));
    }
    let end = match (points.last().expect("nonempty").mu == mu_end, last_failed) {
        (true, _) | (false, None) => BranchEnd::Reached,
        (false, Some(m)) => BranchEnd::StepCollapse { last_failed_mu: m },
    };
    Ok(Branch {
        param_name: param.to_string(),
        points,
        direction,
        end,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPoint {
    pub mu: f64,
    pub state: Vec<f64>,
}

/// Determinant of a matrix of expressions by cofactor expansion along the
/// first row.
fn symbolic_det(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Expr::Const(0.0);
    for j in 0..n {
        let minor: Vec<Vec<Expr>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let term = fold::mul(m[0][j].clone(), symbolic_det(&minor));
        acc = if j % 2 == 0 {
            fold::add(acc, term)
        } else {
            fold::sub(acc, term)
        };
    }
    acc
}

const FOLD_MAX_ITER: usize = 50;

/// Newton on the augmented system `f(x, mu) = 0`, `det J(x, mu) = 0` in the
/// unknowns `(x, mu)`, started from `(seed_state, seed_mu)`.
pub fn locate_fold(
    sys: &System,
    param: &str,
    seed_mu: f64,
    seed_state: &[f64],
) -> Result<FoldPoint> {
    let idx = param_index(sys, param)?;
    let model = sys.model();
    let n = sys.dim();
    let det = symbolic_det(model.jacobian_exprs());
    let det_dx: Vec<Expr> = (0..n).map(|k| det.derivative(Var::State(k))).collect();
    let det_dmu = det.derivative(Var::Param(idx));
    let f_dmu: Vec<Expr> = model
        .rhs()
        .iter()
        .map(|f| f.derivative(Var::Param(idx)))
        .collect();

    let residual = |x: &[f64], params: &[f64]| -> Result<Vec<f64>> {
        let mut r = model
            .rhs()
            .iter()
            .map(|f| f.eval(x, params))
            .collect::<Result<Vec<f64>, _>>()?;
        r.push(det.eval(x, params)?);
        Ok(r)
    };
    let mut x = seed_state.to_vec();
    let mut params = sys.params().to_vec();
    params[idx] = seed_mu;
    let mut r = residual(&x, &params)?;
    for _ in 0..FOLD_MAX_ITER {
        let sys_at = sys.with_param(idx, params[idx]);
        let jac = sys_at.jacobian(&x)?;
        let mut aug = Matrix::zeros(n + 1);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, jac.get(i, j));
            }
            aug.set(i, n, f_dmu[i].eval(&x, &params)?);
        }
        for (j, e) in det_dx.iter().enumerate() {
            aug.set(n, j, e.eval(&x, &params)?);
        }
        aug.set(n, n, det_dmu.eval(&x, &params)?);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dz = aug
            .solve(&neg)
            .ok_or_else(|| Error::NoConvergence("augmented fold system is singular".into()))?;
        for (xi, d) in x.iter_mut().zip(&dz) {
            *xi += d;
        }
        params[idx] += dz[n];
        r = residual(&x, &params)?;
        let scale = norm(&x).max(params[idx].abs()).max(1.0);
        let small = dz.iter().all(|d| d.abs() <= 4.0 * f64::EPSILON * scale);
        if small && r.iter().all(|v| v.abs() < FOLD_TOL) {
            break;
        }
    }
    if r.iter().all(|v| v.abs() < FOLD_TOL) {
        Ok(FoldPoint {
            mu: params[idx],
            state: x,
        })
    } else {
        Err(Error::NoConvergence(format!(
            "fold residual {:e}",
            r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        )))
    }
}

/// Fold terminating `branch`, if it ended by step collapse.
pub fn fold_of_branch(sys: &System, branch: &Branch) -> Result<Option<FoldPoint>> {
    match branch.end {
        BranchEnd::Reached => Ok(None),
        BranchEnd::StepCollapse { .. } => {
            let p = branch.last();
            locate_fold(sys, &branch.param_name, p.mu, &p.state).map(Some)
        }
    }
}

pub fn distance_to_bifurcation(mu: f64, folds: &[FoldPoint]) -> Result<f64> {
    folds
        .iter()
        .map(|f| (mu - f.mu).abs())
        .reduce(f64::min)
        .ok_or(Error::NoFolds)
}

/// Attractors in one frozen-parameter column linked to the global tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// `(mu, state)` for every column where the attractor was present.
    pub points: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedBasin {
    /// Grid over `(state, mu)`; axis 0 is the state, axis 1 the parameter.
    /// Attractor labels are track indices; `attractors[i]` is the first
    /// `(state, mu)` point of track `i`.
    pub map: BasinMap,
    pub tracks: Vec<Track>,
    /// Map from each column's local attractor index to its track.
    pub column_tracks: Vec<Vec<usize>>,
}

impl ExpandedBasin {
    pub fn column_mu(&self, j: usize) -> f64 {
        self.map.grid.center(self.map.grid.ravel(&[0, j]))[1]
    }
}

/// Basin map over the expanded space of a 1-D model's state and one
/// parameter. Each parameter column is classified at frozen parameter value;
/// attractors are linked across neighbouring columns by one continuation
/// step, so an attractor keeps its label up to the fold where it vanishes.
/// Columns without attractors stay unresolved.
pub fn expanded_basin(
    sys: &System,
    param: &str,
    x_range: (f64, f64),
    mu_range: (f64, f64),
    resolution: usize,
    cfg: &IntegratorConfig,
) -> Result<ExpandedBasin> {
    let idx = param_index(sys, param)?;
    if sys.dim() != 1 {
        return Err(Error::DimensionTooLarge {
            dim: sys.dim(),
            max: 1,
        });
    }
    if resolution < basin::MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least {}",
            basin::MIN_RESOLUTION
        )));
    }
    let x_box = StateBox::new(vec![x_range.0], vec![x_range.1])?;
    let full = StateBox::new(vec![x_range.0, mu_range.0], vec![x_range.1, mu_range.1])?;
    let grid = CellGrid::new(full, resolution);
    let search = EquilibriumSearch::for_dim(1);
    let columns: Vec<Result<Option<BasinMap>>> = parallel::map_indexed(resolution, |j| {
        let mu = grid.center(grid.ravel(&[0, j]))[1];
        let sys_at = sys.with_param(idx, mu);
        let att = equilibria::attractors(&sys_at, &x_box, &search)?;
        if att.is_empty() {
            return Ok(None);
        }
        basin::classify_grid_with(&sys_at, &x_box, resolution, cfg, att).map(Some)
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;

    let mut tracks: Vec<Track> = Vec::new();
    // track index -> state in the previous column, if present there
    let mut live: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut column_tracks = Vec::with_capacity(resolution);
    for (j, col) in columns.iter().enumerate() {
        let mu = grid.center(grid.ravel(&[0, j]))[1];
        let Some(col) = col else {
            live.clear();
            column_tracks.push(Vec::new());
            continue;
        };
        let sys_at = sys.with_param(idx, mu);
        let mut assigned: Vec<Option<usize>> = vec![None; col.attractors.len()];
        for (t, prev) in &live {
            let Ok(prev_det) = sys
                .with_param(idx, tracks[*t].points.last().expect("live").0)
                .jacobian(prev)
            else {
                continue;
            };
            let Some(x) = corrector(&sys_at, prev, prev_det.determinant().signum(), 1e-10) else {
                continue;
            };
            let nearest = col
                .attractors
                .iter()
                .enumerate()
                .map(|(k, a)| (k, dist(a, &x)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((k, d)) = nearest {
                if d < equilibria::DEDUP_DISTANCE.max(1e-6 * (1.0 + norm(&x)))
                    && assigned[k].is_none()
                {
                    assigned[k] = Some(*t);
                }
            }
        }
        let mut next_live = Vec::new();
        let mut local = Vec::with_capacity(col.attractors.len());
        for (k, a) in col.attractors.iter().enumerate() {
            let t = assigned[k].unwrap_or_else(|| {
                tracks.push(Track { points: Vec::new() });
                tracks.len() - 1
            });
            tracks[t].points.push((mu, a.clone()));
            next_live.push((t, a.clone()));
            local.push(t);
        }
        live = next_live;
        column_tracks.push(local);
    }

    let mut labels = vec![CellLabel::Unresolved; grid.len()];
    for (j, col) in columns.iter().enumerate() {
        let Some(col) = col else { continue };
        for (i, l) in col.labels.iter().enumerate() {
            labels[grid.ravel(&[i, j])] = match l {
                CellLabel::Attractor(k) => CellLabel::Attractor(column_tracks[j][*k]),
                other => *other,
            };
        }
    }
    let attractors = tracks
        .iter()
        .map(|t| {
            let (mu, x) = &t.points[0];
            vec![x[0], *mu]
        })
        .collect();
    Ok(ExpandedBasin {
        map: BasinMap {
            grid,
            labels,
            attractors,
        },
        tracks,
        column_tracks,
    })
}

/// Weighted distance from `(x, mu)` to the nearest face between its own
/// basin and another, `sqrt((w_x dx)^2 + (w_mu dmu)^2)`.
///
/// A zero weight pins that coordinate: `w_mu = 0` searches only the point's
/// own parameter column (in-slice precariousness), `w_x = 0` only its own
/// state row.
pub fn expanded_precariousness(
    point: (f64, f64),
    map: &BasinMap,
    weights: (f64, f64),
) -> Result<f64> {
    let (wx, wm) = weights;
    if !(wx >= 0.0 && wm >= 0.0 && (wx > 0.0 || wm > 0.0) && wx.is_finite() && wm.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be non-negative and not both zero".into(),
        ));
    }
    if map.grid.bounds.dim() != 2 {
        return Err(Error::InvalidArgument(
            "expanded map must be two-dimensional".into(),
        ));
    }
    let p = [point.0, point.1];
    if !map.grid.bounds.contains(&p, 0.0) {
        return Err(Error::InvalidArgument("point lies outside the map".into()));
    }
    let here = map.grid.unravel(map.grid.locate(&p));
    let CellLabel::Attractor(home) = map.labels[map.grid.ravel(&here)] else {
        return Err(Error::InvalidArgument(
            "point lies in an unresolved cell".into(),
        ));
    };
    let g = &map.grid;
    let w = g.widths();
    let mut best: Option<f64> = None;
    for (flat, label) in map.labels.iter().enumerate() {
        let CellLabel::Attractor(a) = *label else {
            continue;
        };
        let idx = g.unravel(flat);
        for k in 0..2 {
            if idx[k] + 1 >= g.resolution {
                continue;
            }
            let mut nb = idx.clone();
            nb[k] += 1;
            let CellLabel::Attractor(b) = map.labels[g.ravel(&nb)] else {
                continue;
            };
            if a == b || (a != home && b != home) {
                continue;
            }
            if (wm == 0.0 && (k != 0 || idx[1] != here[1]))
                || (wx == 0.0 && (k != 1 || idx[0] != here[0]))
            {
                continue;
            }
            let mut m = g.center(flat);
            m[k] += 0.5 * w[k];
            let d = ((wx * (m[0] - p[0])).powi(2) + (wm * (m[1] - p[1])).powi(2)).sqrt();
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best.ok_or(Error::SingleBasin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdCurve {
    /// `(mu, recovery_rate)` sorted by `mu`.
    pub points: Vec<(f64, f64)>,
    /// Samples at or beyond the fold, or where the branch could not be
    /// followed.
    pub skipped: Vec<f64>,
}

impl CsdCurve {
    /// Columns `mu,recovery_rate`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["mu", "recovery_rate"]);
        for (mu, r) in &self.points {
            t.push(vec![Cell::Num(*mu), Cell::Num(*r)]);
        }
        t
    }
}

/// Recovery rate `-Re(lambda_weakest)` along a stable branch approaching
/// `fold`.
pub fn csd_curve(
    sys: &System,
    branch: &Branch,
    fold: &FoldPoint,
    samples: &[f64],
) -> Result<CsdCurve> {
    let idx = param_index(sys, &branch.param_name)?;
    let results = parallel::map_slice(samples, |&mu| -> Result<Option<(f64, f64)>> {
        if (mu - fold.mu) * branch.direction >= 0.0 {
            return Ok(None);
        }
        let seed = branch
            .points
            .iter()
            .min_by(|a, b| (a.mu - mu).abs().total_cmp(&(b.mu - mu).abs()))
            .expect("nonempty branch");
        let sys_at = sys.with_param(idx, mu);
        let Ok(x) = equilibria::newton(&sys_at, &seed.state, 1e-12) else {
            return Ok(None);
        };
        let e = equilibria::classify(&sys_at, &x)?;
        if !e.is_stable() {
            return Ok(None);
        }
        Ok(Some((mu, -e.weakest_real)))
    });
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (mu, r) in samples.iter().zip(results) {
        match r? {
            Some(p) => points.push(p),
            None => skipped.push(*mu),
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CsdCurve { points, skipped })
}

/// Least-squares slope of `ln(rate)` against `ln|mu_star - mu|`.
pub fn loglog_slope(points: &[(f64, f64)], mu_star: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(mu, r)| *r > 0.0 && *mu != mu_star)
        .map(|(mu, r)| ((mu_star - mu).abs().ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(
            "need two or more usable points for a slope".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reversibility {
    Reversible,
    Hysteretic,
    Irreversible,
}

impl Reversibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Reversibility::Reversible => "Reversible",
            Reversibility::Hysteretic => "Hysteretic",
            Reversibility::Irreversible => "Irreversible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub mu: f64,
    pub state: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversibilityVerdict {
    pub kind: Reversibility,
    pub restoring: Option<f64>,
    pub trace: Vec<TraceStep>,
}

impl ReversibilityVerdict {
    /// `verdict=<kind> restoring=<value|none>`.
    pub fn summary(&self) -> String {
        format!(
            "verdict={} restoring={}",
            self.kind.as_str(),
            self.restoring
                .map_or_else(|| "none".to_string(), format_sig9)
        )
    }

    /// Columns `step,mu,<state...>,note`.
    pub fn trace_table(&self, state_names: &[String]) -> Table {
        let header = ["step", "mu"]
            .map(String::from)
            .into_iter()
            .chain(state_names.iter().cloned())
            .chain(std::iter::once("note".to_string()));
        let mut t = Table::new(header);
        for (i, s) in self.trace.iter().enumerate() {
            let mut row = vec![Cell::from(i), Cell::Num(s.mu)];
            row.extend(s.state.iter().map(|v| Cell::Num(*v)));
            row.push(s.note.clone().into());
            t.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversibilityScenario {
    pub param: String,
    pub mu0: f64,
    pub accessible: (f64, f64),
    pub excursion: f64,
    /// Initial state; settles to the home attractor at `mu0`.
    pub start: Vec<f64>,
    /// Where attractors are searched for at each parameter value.
    pub search_box: StateBox,
}

struct Replay<'a, 'm> {
    sys: &'a System<'m>,
    idx: usize,
    cfg: &'a IntegratorConfig,
    scenario: &'a ReversibilityScenario,
    search: EquilibriumSearch,
}

enum Settle {
    At(Vec<f64>),
    Diverged,
    Undecided,
}

impl Replay<'_, '_> {
    fn settle(&self, mu: f64, x: &[f64]) -> Result<Settle> {
        let sys_at = self.sys.with_param(self.idx, mu);
        let att = equilibria::attractors(&sys_at, &self.scenario.search_box, &self.search)?;
        let r = integrate::settle(&sys_at, x, self.cfg, &att)?;
        Ok(match r.verdict {
            Verdict::Settled(i) => Settle::At(att[i].clone()),
            Verdict::Diverged => Settle::Diverged,
            Verdict::Undecided => Settle::Undecided,
        })
    }

    fn settle_strict(&self, mu: f64, x: &[f64], stage: &str) -> Result<Option<Vec<f64>>> {
        match self.settle(mu, x)? {
            Settle::At(a) => Ok(Some(a)),
            Settle::Diverged => Ok(None),
            Settle::Undecided => Err(Error::ClassificationInconclusive(format!(
                "settling undecided during {stage} at {} = {mu}",
                self.scenario.param
            ))),
        }
    }

    fn is_home(&self, a: &[f64], home: &[f64]) -> bool {
        dist(a, home) <= equilibria::DEDUP_DISTANCE.max(1e-6 * (1.0 + norm(home)))
    }

    /// State after taking the parameter to `mu` from `x`, then back to
    /// `mu0`; `Some(true)` if it is home. Undecided settles are an error
    /// when `strict`, otherwise they count as not home.
    fn restores(
        &self,
        mu: f64,
        x: &[f64],
        home: &[f64],
        strict: bool,
    ) -> Result<(Option<Vec<f64>>, bool)> {
        let at = if strict {
            self.settle_strict(mu, x, "sweep")?
        } else {
            match self.settle(mu, x)? {
                Settle::At(a) => Some(a),
                _ => None,
            }
        };
        let Some(at) = at else {
            return Ok((None, false));
        };
        let back = if strict {
            self.settle_strict(self.scenario.mu0, &at, "restore")?
        } else {
            match self.settle(self.scenario.mu0, &at)? {
                Settle::At(a) => Some(a),
                _ => None,
            }
        };
        let ok = back.is_some_and(|b| self.is_home(&b, home));
        Ok((Some(at), ok))
    }
}

/// Replays a parameter excursion and classifies whether undoing it brings
/// the system back.
///
/// 1. Settle at `mu0` to find home.
/// 2. Move to the excursion value. If home's branch continues there and the
///    state settles onto it, the change is reversible.
/// 3. Restore `mu0`; if the state settles home, reversible.
/// 4. Otherwise sweep the parameter quasi-statically from `mu0` toward each
///    end of the accessible range over a grid of 200 values, and at each
///    value test whether restoring `mu0` then returns home. The qualifying
///    value closest to `mu0` is refined by bisection to 1e-4 and reported as
///    the restoring value (hysteretic); none means irreversible.
///
/// Attractor identity across parameter values is decided by a continuation
/// step of size `width / 200` with tolerance ten times that step.
pub fn classify_reversibility(
    sys: &System,
    scenario: &ReversibilityScenario,
    cfg: &IntegratorConfig,
) -> Result<ReversibilityVerdict> {
    let idx = param_index(sys, &scenario.param)?;
    let (lo, hi) = scenario.accessible;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(
            "accessible range must satisfy lo < hi".into(),
        ));
    }
    for (name, v) in [("mu0", scenario.mu0), ("excursion", scenario.excursion)] {
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {v} lies outside the accessible range"
            )));
        }
    }
    let replay = Replay {
        sys,
        idx,
        cfg,
        scenario,
        search: EquilibriumSearch::for_dim(sys.dim()),
    };
    let mut trace = Vec::new();
    let step = (hi - lo) / REVERSIBILITY_SAMPLES as f64;

    let home = replay
        .settle_strict(scenario.mu0, &scenario.start, "initial settle")?
        .ok_or_else(|| Error::InvalidArgument("starting state diverges".into()))?;
    trace.push(TraceStep {
        mu: scenario.mu0,
        state: home.clone(),
        note: "home".into(),
    });

    let excursion_state = replay.settle_strict(scenario.excursion, &home, "excursion")?;
    let Some(excursion_state) = excursion_state else {
        return Err(Error::ClassificationInconclusive(
            "state diverges at the excursion value".into(),
        ));
    };
    trace.push(TraceStep {
        mu: scenario.excursion,
        state: excursion_state.clone(),
        note: "excursion".into(),
    });
    if scenario.excursion != scenario.mu0 {
        if let Ok(b) = continue_branch(
            sys,
            &scenario.param,
            scenario.mu0,
            scenario.excursion,
            step,
            &home,
            1e-10,
        ) {
            if b.end == BranchEnd::Reached && dist(&b.last().state, &excursion_state) <= 10.0 * step
            {
                return Ok(ReversibilityVerdict {
                    kind: Reversibility::Reversible,
                    restoring: None,
                    trace,
                });
            }
        }
    } else {
        return Ok(ReversibilityVerdict {
            kind: Reversibility::Reversible,
            restoring: None,
            trace,
        });
    }

    let restored = replay.settle_strict(scenario.mu0, &excursion_state, "restore")?;
    let Some(stuck) = restored else {
        return Err(Error::ClassificationInconclusive(
            "state diverges on restoring mu0".into(),
        ));
    };
    trace.push(TraceStep {
        mu: scenario.mu0,
        state: stuck.clone(),
        note: "restored".into(),
    });
    if replay.is_home(&stuck, &home) {
        return Ok(ReversibilityVerdict {
            kind: Reversibility::Reversible,
            restoring: None,
            trace,
        });
    }

    let grid: Vec<f64> = (0..REVERSIBILITY_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (REVERSIBILITY_SAMPLES - 1) as f64)
        .collect();
    let up: Vec<f64> = grid.iter().copied().filter(|m| *m > scenario.mu0).collect();
    let down: Vec<f64> = grid
        .iter()
        .rev()
        .copied()
        .filter(|m| *m < scenario.mu0)
        .collect();
    // (restoring sample, previous sample, state at previous sample)
    let mut candidates: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    for path in [up, down] {
        let mut x = stuck.clone();
        let mut prev_mu = scenario.mu0;
        for mu in path {
            let (at, ok) = replay.restores(mu, &x, &home, true)?;
            if ok {
                candidates.push((mu, prev_mu, x.clone()));
                break;
            }
            match at {
                Some(a) => x = a,
                None => break,
            }
            prev_mu = mu;
        }
    }
    let Some((mut good, mut bad, from)) = candidates.into_iter().min_by(|a, b| {
        (a.0 - scenario.mu0)
            .abs()
            .total_cmp(&(b.0 - scenario.mu0).abs())
    }) else {
        return Ok(ReversibilityVerdict {
            kind: Reversibility::Irreversible,
            restoring: None,
            trace,
        });
    };
    while (good - bad).abs() > RESTORING_TOL {
        let mid = 0.5 * (good + bad);
        if replay.restores(mid, &from, &home, false)?.1 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let (at, _) = replay.restores(good, &from, &home, false)?;
    if let Some(at) = at {
        trace.push(TraceStep {
            mu: good,
            state: at,
            note: "restoring sweep".into(),
        });
    }
    trace.push(TraceStep {
        mu: scenario.mu0,
        state: home,
        note: "home recovered".into(),
    });
    Ok(ReversibilityVerdict {
        kind: Reversibility::Hysteretic,
        restoring: Some(good),
        trace,
    })
}

/// Stable equilibrium with the largest first coordinate in `bx`.
pub fn highest_attractor(sys: &System, bx: &StateBox) -> Result<Vec<f64>> {
    equilibria::attractors(sys, bx, &EquilibriumSearch::for_dim(sys.dim()))?
        .into_iter()
        .max_by(|a, b| a[0].total_cmp(&b[0]))
        .ok_or(Error::NoAttractors)
}
