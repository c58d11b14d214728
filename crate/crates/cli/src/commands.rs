use std::path::PathBuf;

use basinscope::basin::{self, CellLabel, DirectionalDistance};
use basinscope::bifurcation::{self, BranchEnd, ReversibilityScenario};
use basinscope::equilibria::{self, EquilibriumSearch};
use basinscope::integrate::{self, IntegratorConfig, Verdict};
use basinscope::kicks::{self, KickSchedule};
use basinscope::table::{format_sig9, Cell};
use basinscope::{Error, StateBox, System, SystemModel, Table};
use clap::{Args, Subcommand, ValueEnum};

use crate::args::{self, Common, Integration};
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate and classify equilibria inside a box.
    Equilibria(EquilibriaArgs),
    /// Label a grid of initial conditions by the attractor they settle to.
    Basin(BasinArgs),
    /// Distance from a point to the basin threshold.
    Distance(DistanceArgs),
    /// Repeated kicks: one simulation or a sweep of sustainable magnitudes.
    Kick(KickArgs),
    /// Potential of a 1-D model over a range.
    Landscape(LandscapeArgs),
    /// Ratio of constant forcing to the displacement it causes.
    Resistance(ResistanceArgs),
    /// Follow an equilibrium branch in a parameter and locate its fold.
    Continue(ContinueArgs),
    /// Recovery rate along a branch approaching its fold.
    Csd(CsdArgs),
    /// Basin map over a 1-D state and one parameter.
    Expanded(ExpandedArgs),
    /// Reversibility of a parameter excursion.
    Classify(ClassifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibria(_) => "equilibria",
            Command::Basin(_) => "basin",
            Command::Distance(_) => "distance",
            Command::Kick(_) => "kick",
            Command::Landscape(_) => "landscape",
            Command::Resistance(_) => "resistance",
            Command::Continue(_) => "continue",
            Command::Csd(_) => "csd",
            Command::Expanded(_) => "expanded",
            Command::Classify(_) => "classify",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Equilibria(a) => &a.common,
            Command::Basin(a) => &a.common,
            Command::Distance(a) => &a.common,
            Command::Kick(a) => &a.common,
            Command::Landscape(a) => &a.common,
            Command::Resistance(a) => &a.common,
            Command::Continue(a) => &a.common,
            Command::Csd(a) => &a.common,
            Command::Expanded(a) => &a.common,
            Command::Classify(a) => &a.common,
        }
    }

    pub(crate) fn run(&self, model: &SystemModel) -> Result<Report, Error> {
        let sys = model.bind(&args::overrides(&self.common().params)?)?;
        match self {
            Command::Equilibria(a) => a.run(&sys),
            Command::Basin(a) => a.run(&sys),
            Command::Distance(a) => a.run(&sys),
            Command::Kick(a) => a.run(&sys),
            Command::Landscape(a) => a.run(&sys),
            Command::Resistance(a) => a.run(&sys),
            Command::Continue(a) => a.run(&sys),
            Command::Csd(a) => a.run(&sys),
            Command::Expanded(a) => a.run(&sys),
            Command::Classify(a) => a.run(&sys),
        }
    }
}

fn names<'m>(sys: &System<'m>) -> &'m [String] {
    sys.model().state_names()
}

fn attractors_in(sys: &System, bx: &StateBox) -> Result<Vec<Vec<f64>>, Error> {
    let att = equilibria::attractors(sys, bx, &EquilibriumSearch::for_dim(sys.dim()))?;
    if att.is_empty() {
        return Err(Error::NoAttractors);
    }
    Ok(att)
}

fn fmt_state(x: &[f64]) -> String {
    x.iter()
        .map(|v| format_sig9(*v))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Args)]
pub struct EquilibriaArgs {
    #[command(flatten)]
    common: Common,
    /// Search box, LO:HI per axis.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: String,
    /// Seeds per axis for the Newton search.
    #[arg(long)]
    seeds: Option<usize>,
}

impl EquilibriaArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let bx = args::state_box(&self.bounds, sys.dim())?;
        let mut search = EquilibriumSearch::for_dim(sys.dim());
        if let Some(s) = self.seeds {
            search.seeds_per_axis = s;
        }
        let eqs = equilibria::find_equilibria(sys, &bx, &search)?;
        let stable = eqs.iter().filter(|e| e.is_stable()).count();
        Ok(Report::new(equilibria::equilibria_table(&eqs, names(sys)))
            .line(format!("{} equilibria, {stable} stable", eqs.len())))
    }
}

#[derive(Debug, Args)]
pub struct BasinArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: String,
    /// Cells per axis.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Also write separatrix points to this file.
    #[arg(long)]
    separatrix_out: Option<PathBuf>,
}

impl BasinArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let bx = args::state_box(&self.bounds, sys.dim())?;
        let map = basin::classify_grid(sys, &bx, self.resolution, &cfg)?;
        let mut report = Report::new(map.to_table(names(sys)));
        for i in map.present_attractors() {
            let m = basin::basin_measure(&map, i)?;
            report = report.line(format!(
                "attractor {i} at ({}): volume={} touches_boundary={}",
                fmt_state(&map.attractors[i]),
                format_sig9(m.volume),
                m.touches_boundary
            ));
        }
        let unresolved = map
            .labels
            .iter()
            .filter(|l| **l == CellLabel::Unresolved)
            .count();
        let diverged = map
            .labels
            .iter()
            .filter(|l| **l == CellLabel::Diverged)
            .count();
        report = report.line(format!(
            "unresolved cells={unresolved} diverged cells={diverged}"
        ));
        if let Some(path) = &self.separatrix_out {
            let sep = basin::separatrix_points(&map)?;
            report = report.line(format!("separatrix points={}", sep.points.len()));
            report.extra = Some((path.clone(), sep.to_table(names(sys))));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceKind {
    /// From a stable equilibrium to the nearest separatrix point.
    Threshold,
    /// From an arbitrary state to the nearest separatrix point.
    Precariousness,
    /// Smallest displacement along given directions that changes the outcome.
    Directional,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(value_enum)]
    kind: DistanceKind,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Point to measure from, as values or NAME=VALUE pairs.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    /// Displacement direction (directional only); repeatable, the minimum is
    /// reported.
    #[arg(long = "direction", allow_hyphen_values = true)]
    directions: Vec<String>,
    /// Largest displacement tried (directional only).
    #[arg(long, default_value_t = 10.0)]
    max_range: f64,
}

impl DistanceArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let bx = args::state_box(&self.bounds, sys.dim())?;
        let point = args::state(&self.point, sys.model())?;
        match self.kind {
            DistanceKind::Threshold | DistanceKind::Precariousness => {
                if self.kind == DistanceKind::Threshold
                    && !equilibria::classify(sys, &point)?.is_stable()
                {
                    return Err(Error::NotStable);
                }
                let map = basin::classify_grid(sys, &bx, self.resolution, &cfg)?;
                let sep = basin::separatrix_points(&map)?;
                let d = basin::distance_to_threshold(&point, &sep)?;
                let mut t = Table::new(["distance", "uncertainty"]);
                t.push(vec![Cell::Num(d.distance), Cell::Num(d.uncertainty)]);
                Ok(Report::new(t).line(format!(
                    "distance={} uncertainty={}",
                    format_sig9(d.distance),
                    format_sig9(d.uncertainty)
                )))
            }
            DistanceKind::Directional => self.directional(sys, &cfg, &bx, &point),
        }
    }

    fn directional(
        &self,
        sys: &System,
        cfg: &IntegratorConfig,
        bx: &StateBox,
        point: &[f64],
    ) -> Result<Report, Error> {
        if self.directions.is_empty() {
            return Err(Error::InvalidArgument(
                "directional distance needs at least one --direction".into(),
            ));
        }
        let att = attractors_in(sys, bx)?;
        let header = (0..sys.dim())
            .map(|i| format!("d_{}", names(sys)[i]))
            .chain(std::iter::once("distance".to_string()));
        let mut t = Table::new(header);
        let mut best: Option<f64> = None;
        for s in &self.directions {
            let dir = args::direction(s, sys.dim())?;
            let d = basin::directional_distance(sys, point, &dir, cfg, self.max_range, &att)?;
            let mut row: Vec<Cell> = dir.iter().map(|v| Cell::Num(*v)).collect();
            match d {
                DirectionalDistance::Escape(v) => {
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                    row.push(Cell::Num(v));
                }
                DirectionalDistance::NoEscape => row.push("none".into()),
            }
            t.push(row);
        }
        let min = best.map_or_else(|| "none".to_string(), format_sig9);
        Ok(Report::new(t).line(format!("min distance={min}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KickMode {
    /// Apply one schedule of kicks and report the outcome.
    Simulate,
    /// Largest sustainable kick for each recovery period.
    Sweep,
}

#[derive(Debug, Args)]
pub struct KickArgs {
    #[arg(value_enum)]
    mode: KickMode,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    /// Box searched for attractors.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: String,
    /// Starting state; settles to the home attractor.
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    #[arg(long, allow_hyphen_values = true)]
    direction: String,
    /// Kick size (simulate).
    #[arg(long)]
    magnitude: Option<f64>,
    /// Time between kicks (simulate).
    #[arg(long)]
    period: Option<f64>,
    /// Number of kicks (simulate).
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Recovery periods, comma-separated (sweep).
    #[arg(long)]
    periods: Option<String>,
    /// Total time each sweep schedule must cover (sweep).
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    /// Grid resolution for the separatrix used to report the closest
    /// approach (simulate); omitted means no separatrix.
    #[arg(long)]
    resolution: Option<usize>,
}

fn required<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Error> {
    v.ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
}

impl KickArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let bx = args::state_box(&self.bounds, sys.dim())?;
        let att = attractors_in(sys, &bx)?;
        let from = args::state(&self.from, sys.model())?;
        let dir = args::direction(&self.direction, sys.dim())?;
        let home = match integrate::settle(sys, &from, &cfg, &att)?.verdict {
            Verdict::Settled(i) => i,
            Verdict::Diverged => {
                return Err(Error::InvalidArgument(
                    "starting state does not settle to an attractor".into(),
                ))
            }
            Verdict::Undecided => {
                return Err(Error::Undecided("starting state did not settle".into()))
            }
        };
        let x0 = att[home].clone();
        match self.mode {
            KickMode::Simulate => {
                let schedule = KickSchedule {
                    direction: dir,
                    magnitude: required(self.magnitude, "magnitude")?,
                    period: required(self.period, "period")?,
                    count: self.count,
                };
                let sep = match self.resolution {
                    Some(res) => Some(basin::separatrix_points(&basin::classify_grid_with(
                        sys,
                        &bx,
                        res,
                        &cfg,
                        att.clone(),
                    )?)?),
                    None => None,
                };
                let out =
                    kicks::simulate_kicks(sys, &x0, &schedule, &cfg, &att, home, sep.as_ref())?;
                let mut header = vec!["escaped".to_string(), "kicks_applied".to_string()];
                header.extend(names(sys).iter().map(|n| format!("final_{n}")));
                header.push("min_threshold_distance".into());
                let mut t = Table::new(header);
                let escaped = match out.escaped {
                    Some(true) => "true",
                    Some(false) => "false",
                    None => "undecided",
                };
                let mut row = vec![Cell::from(escaped), Cell::from(out.kicks_applied)];
                row.extend(out.final_state.iter().map(|v| Cell::Num(*v)));
                row.push(out.min_threshold_distance.map_or(Cell::Empty, Cell::Num));
                t.push(row);
                let mut report = Report::new(t).line(format!(
                    "escaped={escaped} kicks_applied={}",
                    out.kicks_applied
                ));
                if out.escaped.is_none() {
                    report.exit = 3;
                }
                Ok(report)
            }
            KickMode::Sweep => {
                let periods = args::vector(
                    self.periods
                        .as_deref()
                        .ok_or_else(|| Error::InvalidArgument("--periods is required".into()))?,
                )?;
                let rows = kicks::kick_sweep(sys, &x0, &dir, &periods, self.horizon, &cfg, &att)?;
                let mut report = Report::new(kicks::sweep_table(&rows));
                for (tau, d) in &rows {
                    report = report.line(format!(
                        "tau={} delta_star={}",
                        format_sig9(*tau),
                        format_sig9(*d)
                    ));
                }
                Ok(report)
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    common: Common,
    /// State range LO:HI.
    #[arg(long, allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 401)]
    samples: usize,
}

impl LandscapeArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let (lo, hi) = args::range(&self.range)?;
        let pts = kicks::potential_1d(sys, lo, hi, self.samples)?;
        let mut report = Report::new(kicks::landscape_table(&pts));
        let bx = StateBox::new(vec![lo], vec![hi])?;
        let eqs = equilibria::find_equilibria(sys, &bx, &EquilibriumSearch::for_dim(1))?;
        for w in eqs.windows(2) {
            let (a, b) = (w[0].state[0], w[1].state[0]);
            let s = kicks::steepest_recovery_point(sys, a, b)?;
            report = report.line(format!(
                "between {} and {}: steepest x={} speed={}",
                format_sig9(a),
                format_sig9(b),
                format_sig9(s.x_at_max),
                format_sig9(s.max_speed)
            ));
        }
        Ok(report)
    }
}

#[derive(Debug, Args)]
pub struct ResistanceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    /// Stable equilibrium the forcing is applied at.
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    #[arg(long, allow_hyphen_values = true)]
    direction: String,
    /// Forcing strength.
    #[arg(long)]
    magnitude: f64,
}

impl ResistanceArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let from = args::state(&self.from, sys.model())?;
        let dir = args::direction(&self.direction, sys.dim())?;
        let r = kicks::resistance_ratio(sys, &from, &dir, self.magnitude, &cfg)?;
        let mut t = Table::new(["magnitude", "resistance"]);
        t.push(vec![Cell::Num(self.magnitude), Cell::Num(r)]);
        Ok(Report::new(t).line(format!("resistance={}", format_sig9(r))))
    }
}

#[derive(Debug, Args)]
pub struct ContinueArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter and its range, NAME=START:END.
    #[arg(long, allow_hyphen_values = true)]
    sweep: String,
    /// Equilibrium at the start of the sweep (Newton-polished first).
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
}

fn branch_from(
    sys: &System,
    sweep: &str,
    from: &str,
    step: f64,
    tol: f64,
) -> Result<(String, bifurcation::Branch), Error> {
    let (param, a, b) = args::sweep(sweep)?;
    let start = args::state(from, sys.model())?;
    let branch = bifurcation::continue_branch(sys, &param, a, b, step, &start, tol)?;
    Ok((param, branch))
}

impl ContinueArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let (_, branch) = branch_from(sys, &self.sweep, &self.from, self.step, self.newton_tol)?;
        let mut report = Report::new(branch.to_table(names(sys)));
        report = match bifurcation::fold_of_branch(sys, &branch)? {
            Some(f) => report.line(format!("fold mu={:.6}", f.mu)).line(format!(
                "fold state=({}) at {}={}",
                fmt_state(&f.state),
                branch.param_name,
                format_sig9(f.mu)
            )),
            None => {
                let end = match branch.end {
                    BranchEnd::Reached => "reached",
                    BranchEnd::StepCollapse { .. } => "step collapse",
                };
                report.line(format!(
                    "no fold; branch {end} at mu={}",
                    format_sig9(branch.last().mu)
                ))
            }
        };
        Ok(report)
    }
}

#[derive(Debug, Args)]
pub struct CsdArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    sweep: String,
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Number of parameter samples between the sweep start and the fold.
    #[arg(long, default_value_t = 50)]
    samples: usize,
}

impl CsdArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        if self.samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 samples".into()));
        }
        let (_, branch) = branch_from(sys, &self.sweep, &self.from, self.step, 1e-10)?;
        let fold = bifurcation::fold_of_branch(sys, &branch)?.ok_or(Error::NoFolds)?;
        let start = branch.points[0].mu;
        let n = self.samples;
        // Stop one sample short of the fold, where the rate vanishes.
        let samples: Vec<f64> = (0..n)
            .map(|i| start + (fold.mu - start) * i as f64 / n as f64)
            .collect();
        let curve = bifurcation::csd_curve(sys, &branch, &fold, &samples)?;
        let mut report = Report::new(curve.to_table()).line(format!("fold mu={:.6}", fold.mu));
        if !curve.skipped.is_empty() {
            report = report.line(format!("skipped samples={}", curve.skipped.len()));
        }
        if let Ok(s) = bifurcation::loglog_slope(&curve.points, fold.mu) {
            report = report.line(format!("log-log slope={}", format_sig9(s)));
        }
        Ok(report)
    }
}

#[derive(Debug, Args)]
pub struct ExpandedArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    /// Parameter axis, NAME=LO:HI.
    #[arg(long, allow_hyphen_values = true)]
    sweep: String,
    /// State axis, LO:HI.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Point (state,parameter) for the expanded precariousness.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Weights on the state and parameter distances.
    #[arg(long, default_value = "1,1")]
    weights: String,
}

impl ExpandedArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let (param, lo, hi) = args::sweep(&self.sweep)?;
        if lo >= hi {
            return Err(Error::InvalidArgument("parameter range is empty".into()));
        }
        let x_range = args::range(&self.bounds)?;
        let eb =
            bifurcation::expanded_basin(sys, &param, x_range, (lo, hi), self.resolution, &cfg)?;
        let axes = [names(sys)[0].clone(), param];
        let mut report =
            Report::new(eb.map.to_table(&axes)).line(format!("tracks={}", eb.tracks.len()));
        if let Some(p) = &self.point {
            let p = args::vector(p)?;
            let w = args::vector(&self.weights)?;
            if p.len() != 2 || w.len() != 2 {
                return Err(Error::InvalidArgument(
                    "--point and --weights take two values".into(),
                ));
            }
            let d = bifurcation::expanded_precariousness((p[0], p[1]), &eb.map, (w[0], w[1]))?;
            report = report.line(format!(
                "precariousness={} uncertainty={}",
                format_sig9(d),
                format_sig9(eb.map.grid.cell_diameter())
            ));
        }
        Ok(report)
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
    /// Parameter that is varied; defaults to the first declared one.
    #[arg(long)]
    vary: Option<String>,
    /// Parameter value before and after the excursion.
    #[arg(long, allow_hyphen_values = true)]
    mu0: f64,
    /// Parameter value the excursion reaches.
    #[arg(long, allow_hyphen_values = true)]
    excursion: f64,
    /// Range the parameter can be driven through, LO:HI.
    #[arg(long, allow_hyphen_values = true)]
    accessible: String,
    /// Starting state; defaults to the highest stable equilibrium at mu0.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// Box searched for attractors at each parameter value.
    #[arg(long = "box", allow_hyphen_values = true, default_value = "-3:3")]
    bounds: String,
}

impl ClassifyArgs {
    fn run(&self, sys: &System) -> Result<Report, Error> {
        let cfg = self.integration.config()?;
        let param = match &self.vary {
            Some(p) => p.clone(),
            None => sys
                .model()
                .params()
                .first()
                .map(|p| p.0.clone())
                .ok_or_else(|| Error::InvalidArgument("model has no parameters".into()))?,
        };
        let idx = sys
            .model()
            .param_index(&param)
            .ok_or_else(|| Error::UnknownParameter(param.clone()))?;
        let bx = args::state_box(&self.bounds, sys.dim())?;
        let at_mu0 = sys.with_param(idx, self.mu0);
        let start = match &self.from {
            Some(s) => args::state(s, sys.model())?,
            None => bifurcation::highest_attractor(&at_mu0, &bx)?,
        };
        let scenario = ReversibilityScenario {
            param,
            mu0: self.mu0,
            accessible: args::range(&self.accessible)?,
            excursion: self.excursion,
            start,
            search_box: bx,
        };
        let v = bifurcation::classify_reversibility(&at_mu0, &scenario, &cfg)?;
        Ok(Report::new(v.trace_table(names(sys))).line(v.summary()))
    }
}
