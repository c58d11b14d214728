//! Shared flags and value parsers.

use std::path::PathBuf;

use basinscope::integrate::{IntegratorConfig, Method};
use basinscope::{Error, Overrides, StateBox, SystemModel};
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct Source {
    /// Built-in model: saddle_node_cubic, linear_1d or double_well_2d.
    #[arg(long, group = "source")]
    pub builtin: Option<String>,
    /// Model description file (JSON).
    #[arg(long, group = "source")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[command(flatten)]
    pub source: Source,
    /// Parameter override NAME=VALUE; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE", allow_hyphen_values = true)]
    pub params: Vec<String>,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Seed recorded in the output metadata. Every analysis is
    /// deterministic, so it never changes results.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, Args)]
pub struct Integration {
    #[arg(long, value_enum, default_value = "rk45")]
    pub method: MethodArg,
    /// Fixed step for rk4, initial step for rk45.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub atol: f64,
    /// Settling horizon.
    #[arg(long, default_value_t = 1000.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub capture_radius: f64,
}

impl Integration {
    pub fn config(&self) -> Result<IntegratorConfig, Error> {
        let cfg = IntegratorConfig {
            method: match self.method {
                MethodArg::Rk45 => Method::Rk45Adaptive,
                MethodArg::Rk4 => Method::Rk4Fixed,
            },
            dt: self.dt,
            rtol: self.rtol,
            atol: self.atol,
            t_max: self.t_max,
            capture_radius: self.capture_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn number(s: &str) -> Result<f64, Error> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| bad(format!("not a number: `{s}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("not a finite number: `{s}`")))
    }
}

pub fn load_model(source: &Source) -> Result<SystemModel, Error> {
    match (&source.builtin, &source.model) {
        (Some(name), None) => SystemModel::builtin(name),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
            SystemModel::from_json(&text)
        }
        _ => Err(bad("give exactly one of --builtin or --model")),
    }
}

/// `NAME=VALUE`.
pub fn assignment(s: &str) -> Result<(String, &str), Error> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| bad(format!("expected NAME=VALUE, got `{s}`")))?;
    Ok((name.trim().to_string(), value))
}

pub fn overrides(items: &[String]) -> Result<Overrides, Error> {
    let mut out = Overrides::new();
    for item in items {
        let (name, value) = assignment(item)?;
        out.insert(name, number(value)?);
    }
    Ok(out)
}

/// `LO:HI` with `LO < HI`.
pub fn range(s: &str) -> Result<(f64, f64), Error> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| bad(format!("expected LO:HI, got `{s}`")))?;
    let (lo, hi) = (number(lo)?, number(hi)?);
    if lo >= hi {
        return Err(bad(format!("range `{s}` is empty")));
    }
    Ok((lo, hi))
}

/// `A:B` in either order.
pub fn span(s: &str) -> Result<(f64, f64), Error> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| bad(format!("expected START:END, got `{s}`")))?;
    Ok((number(a)?, number(b)?))
}

/// `NAME=START:END`.
pub fn sweep(s: &str) -> Result<(String, f64, f64), Error> {
    let (name, value) = assignment(s)?;
    let (a, b) = span(value)?;
    Ok((name, a, b))
}

/// Comma-separated numbers.
pub fn vector(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',').map(number).collect()
}

/// One `LO:HI` per axis, comma-separated; a single range applies to every
/// axis.
pub fn state_box(s: &str, dim: usize) -> Result<StateBox, Error> {
    let ranges = s.split(',').map(range).collect::<Result<Vec<_>, _>>()?;
    let ranges = match ranges.len() {
        1 => vec![ranges[0]; dim],
        n if n == dim => ranges,
        n => return Err(bad(format!("box has {n} axes, model has {dim}"))),
    };
    StateBox::new(
        ranges.iter().map(|r| r.0).collect(),
        ranges.iter().map(|r| r.1).collect(),
    )
}

/// A state either as values in axis order (`-1,0`) or by name (`x=-1,y=0`).
pub fn state(s: &str, model: &SystemModel) -> Result<Vec<f64>, Error> {
    let names = model.state_names();
    if !s.contains('=') {
        let v = vector(s)?;
        if v.len() != names.len() {
            return Err(bad(format!(
                "state needs {} values, got {}",
                names.len(),
                v.len()
            )));
        }
        return Ok(v);
    }
    let mut out = vec![None; names.len()];
    for part in s.split(',') {
        let (name, value) = assignment(part)?;
        let i = model
            .state_index(&name)
            .ok_or_else(|| bad(format!("unknown state variable `{name}`")))?;
        out[i] = Some(number(value)?);
    }
    out.into_iter()
        .zip(names)
        .map(|(v, n)| v.ok_or_else(|| bad(format!("missing value for `{n}`"))))
        .collect()
}

/// Direction vector scaled to unit length.
pub fn direction(s: &str, dim: usize) -> Result<Vec<f64>, Error> {
    let v = vector(s)?;
    if v.len() != dim {
        return Err(bad(format!(
            "direction needs {dim} components, got {}",
            v.len()
        )));
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(bad("direction must be nonzero"));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}
