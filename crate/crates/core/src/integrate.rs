//! Trajectory integration and attractor settling.

use crate::error::{Error, Result};
use crate::model::System;
use crate::table::{Cell, Table};

/// States with a larger max-norm count as escaped to infinity.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub capture_radius: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk45Adaptive,
            dt: 0.01,
            rtol: 1e-8,
            atol: 1e-10,
            t_max: 1000.0,
            capture_radius: 1e-4,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.dt)
            && ok(self.t_max)
            && ok(self.capture_radius)
            && ok(self.rtol)
            && ok(self.atol))
        {
            return Err(Error::InvalidArgument(
                "dt, t_max, capture_radius, rtol and atol must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Header `t,<state names...>`, one row per accepted step.
    pub fn to_table(&self, state_names: &[String]) -> Table {
        let mut t = Table::new(std::iter::once("t".to_string()).chain(state_names.iter().cloned()));
        for (time, x) in self.times.iter().zip(&self.states) {
            t.push(
                std::iter::once(Cell::Num(*time))
                    .chain(x.iter().map(|v| Cell::Num(*v)))
                    .collect(),
            );
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Index into the equilibrium list passed to [`settle`].
    Settled(usize),
    Diverged,
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleResult {
    pub verdict: Verdict,
    pub final_state: Vec<f64>,
    pub elapsed: f64,
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Why a single step could not be taken.
#[derive(Debug)]
enum StepFailure {
    NonFinite,
    StepUnderflow,
}

/// Stateful stepper shared by trajectory recording, flows and settling.
struct Stepper<'a, 's> {
    sys: &'a System<'s>,
    cfg: &'a IntegratorConfig,
    t: f64,
    x: Vec<f64>,
    h: f64,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    fsal: bool,
}

impl<'a, 's> Stepper<'a, 's> {
    fn new(sys: &'a System<'s>, cfg: &'a IntegratorConfig, x0: &[f64]) -> Self {
        let n = sys.dim();
        Stepper {
            sys,
            cfg,
            t: 0.0,
            x: x0.to_vec(),
            h: cfg.dt,
            k: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
            fsal: false,
        }
    }

    fn eval(&mut self, stage: usize) -> Result<(), StepFailure> {
        let (tmp, k) = (&self.tmp, &mut self.k[stage]);
        self.sys.rhs(tmp, k).map_err(|_| StepFailure::NonFinite)
    }

    /// Advances by one accepted step, never past `t_stop`.
    fn step(&mut self, t_stop: f64) -> Result<(), StepFailure> {
        match self.cfg.method {
            Method::Rk4Fixed => self.step_rk4(t_stop),
            Method::Rk45Adaptive => self.step_rk45(t_stop),
        }
    }

    fn step_rk4(&mut self, t_stop: f64) -> Result<(), StepFailure> {
        let n = self.x.len();
        let mut h = self.cfg.dt;
        if self.t + h >= t_stop || t_stop - (self.t + h) < 1e-12 * h {
            h = t_stop - self.t;
        }
        let weights = [0.5, 0.5, 1.0];
        self.tmp.copy_from_slice(&self.x);
        self.eval(0)?;
        for s in 1..4 {
            for i in 0..n {
                self.tmp[i] = self.x[i] + weights[s - 1] * h * self.k[s - 1][i];
            }
            self.eval(s)?;
        }
        for i in 0..n {
            self.x[i] +=
                h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(StepFailure::NonFinite);
        }
        self.t = if h == t_stop - self.t {
            t_stop
        } else {
            self.t + h
        };
        Ok(())
    }

    fn step_rk45(&mut self, t_stop: f64) -> Result<(), StepFailure> {
        let n = self.x.len();
        if !self.fsal {
            self.tmp.copy_from_slice(&self.x);
            self.eval(0)?;
            self.fsal = true;
        }
        loop {
            let remaining = t_stop - self.t;
            let mut h = self.h.min(remaining);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                if last && h >= 0.0 {
                    self.t = t_stop;
                    return Ok(());
                }
                return Err(StepFailure::StepUnderflow);
            }
            let mut stages_ok = true;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.x[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        acc += h * a * self.k[j][i];
                    }
                    self.tmp[i] = acc;
                }
                if self.eval(s).is_err() || !self.k[s].iter().all(|v| v.is_finite()) {
                    stages_ok = false;
                    break;
                }
            }
            if !stages_ok {
                self.h = 0.2 * h;
                continue;
            }
            // stage 6 was evaluated at the fifth-order solution, held in tmp
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = 0.0;
                for (j, w) in E.iter().enumerate() {
                    e += w * self.k[j][i];
                }
                let scale = self.cfg.atol + self.cfg.rtol * self.x[i].abs().max(self.tmp[i].abs());
                err = err.max((h * e).abs() / scale);
            }
            if !err.is_finite() {
                self.h = 0.2 * h;
                continue;
            }
            if err <= 1.0 {
                self.x.copy_from_slice(&self.tmp);
                self.t = if last { t_stop } else { self.t + h };
                self.k.swap(0, 6);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // keep the proposal from a clipped final step
                self.h = if last {
                    self.h.max(h * factor)
                } else {
                    h * factor
                };
                return Ok(());
            }
            self.h = h * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
}

fn blowup(time: f64, partial: Trajectory) -> Error {
    Error::Blowup {
        time,
        partial: Box::new(partial),
    }
}

fn check_start(sys: &System, x0: &[f64], cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    if x0.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "start state has {} components, model has {}",
            x0.len(),
            sys.dim()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("start state must be finite".into()));
    }
    Ok(())
}

/// Integrates from `x0` at t = 0 to `t_end`, recording every accepted step.
pub fn integrate(
    sys: &System,
    x0: &[f64],
    cfg: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory> {
    check_start(sys, x0, cfg)?;
    if !(t_end > 0.0 && t_end <= cfg.t_max) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} must lie in (0, t_max = {}]",
            cfg.t_max
        )));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
    };
    let mut st = Stepper::new(sys, cfg, x0);
    while st.t < t_end {
        if st.step(t_end).is_err() {
            return Err(blowup(st.t, traj));
        }
        traj.times.push(st.t);
        traj.states.push(st.x.clone());
    }
    Ok(traj)
}

/// Final state after flowing for `duration`.
pub fn flow(sys: &System, x0: &[f64], cfg: &IntegratorConfig, duration: f64) -> Result<Vec<f64>> {
    check_start(sys, x0, cfg)?;
    if duration == 0.0 {
        return Ok(x0.to_vec());
    }
    let mut st = Stepper::new(sys, cfg, x0);
    while st.t < duration {
        if st.step(duration).is_err() {
            return Err(blowup(
                st.t,
                Trajectory {
                    times: vec![st.t],
                    states: vec![st.x.clone()],
                },
            ));
        }
    }
    Ok(st.x)
}

fn captured(x: &[f64], equilibria: &[Vec<f64>], radius: f64) -> Option<usize> {
    equilibria.iter().position(|e| {
        e.iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            <= radius
    })
}

/// Integrates until the state comes within the capture radius of one of
/// `equilibria`, diverges, or runs out of time.
///
/// Evaluation failures along the way (leaving the model's domain) count as
/// divergence.
pub fn settle(
    sys: &System,
    x0: &[f64],
    cfg: &IntegratorConfig,
    equilibria: &[Vec<f64>],
) -> Result<SettleResult> {
    check_start(sys, x0, cfg)?;
    let mut st = Stepper::new(sys, cfg, x0);
    loop {
        if let Some(i) = captured(&st.x, equilibria, cfg.capture_radius) {
            return Ok(SettleResult {
                verdict: Verdict::Settled(i),
                final_state: st.x,
                elapsed: st.t,
            });
        }
        if st.t >= cfg.t_max {
            return Ok(SettleResult {
                verdict: Verdict::Undecided,
                final_state: st.x,
                elapsed: st.t,
            });
        }
        let ok = st.step(cfg.t_max).is_ok();
        if !ok
            || st
                .x
                .iter()
                .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_NORM)
        {
            return Ok(SettleResult {
                verdict: Verdict::Diverged,
                final_state: st.x,
                elapsed: st.t,
            });
        }
    }
}
