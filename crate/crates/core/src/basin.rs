//! Basin maps on uniform grids, separatrix estimates and threshold
//! distances.

use crate::equilibria::{self, EquilibriumSearch};
use crate::error::{Error, Result};
use crate::grid::{CellGrid, StateBox};
use crate::integrate::{self, IntegratorConfig, Verdict};
use crate::model::System;
use crate::parallel;
use crate::table::{Cell, Table};

pub const MIN_RESOLUTION: usize = 8;
/// Coarse samples along a ray before bisecting.
pub const SCAN_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Attractor(usize),
    Unresolved,
    Diverged,
}

impl From<Verdict> for CellLabel {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Settled(i) => CellLabel::Attractor(i),
            Verdict::Diverged => CellLabel::Diverged,
            Verdict::Undecided => CellLabel::Unresolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinMap {
    pub grid: CellGrid,
    /// One label per cell, flat order of [`CellGrid`].
    pub labels: Vec<CellLabel>,
    pub attractors: Vec<Vec<f64>>,
}

impl BasinMap {
    pub fn label_at(&self, x: &[f64]) -> CellLabel {
        self.labels[self.grid.locate(x)]
    }

    /// Distinct attractor labels present, ascending.
    pub fn present_attractors(&self) -> Vec<usize> {
        let mut seen = vec![false; self.attractors.len()];
        for l in &self.labels {
            if let CellLabel::Attractor(i) = l {
                seen[*i] = true;
            }
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    /// Columns `idx_<name>...,<name>...,label`, where the label is the
    /// attractor index, `unresolved` or `diverged`.
    pub fn to_table(&self, state_names: &[String]) -> Table {
        let header = state_names
            .iter()
            .map(|n| format!("idx_{n}"))
            .chain(state_names.iter().cloned())
            .chain(std::iter::once("label".to_string()));
        let mut t = Table::new(header);
        for (flat, label) in self.labels.iter().enumerate() {
            let mut row: Vec<Cell> = self
                .grid
                .unravel(flat)
                .into_iter()
                .map(Cell::from)
                .collect();
            row.extend(self.grid.center(flat).into_iter().map(Cell::Num));
            row.push(match label {
                CellLabel::Attractor(i) => Cell::from(*i),
                CellLabel::Unresolved => "unresolved".into(),
                CellLabel::Diverged => "diverged".into(),
            });
            t.push(row);
        }
        t
    }
}

fn check_grid_args(sys: &System, bx: &StateBox, resolution: usize) -> Result<()> {
    sys.model().require_grid_dim()?;
    if bx.dim() != sys.dim() {
        return Err(Error::InvalidArgument(
            "box dimension differs from model".into(),
        ));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least {MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Labels every cell centre by the stable equilibrium it settles to.
/// Attractors are the stable equilibria found in `bx`.
pub fn classify_grid(
    sys: &System,
    bx: &StateBox,
    resolution: usize,
    cfg: &IntegratorConfig,
) -> Result<BasinMap> {
    check_grid_args(sys, bx, resolution)?;
    let attractors = equilibria::attractors(sys, bx, &EquilibriumSearch::for_dim(sys.dim()))?;
    classify_grid_with(sys, bx, resolution, cfg, attractors)
}

/// As [`classify_grid`] with a given attractor list.
pub fn classify_grid_with(
    sys: &System,
    bx: &StateBox,
    resolution: usize,
    cfg: &IntegratorConfig,
    attractors: Vec<Vec<f64>>,
) -> Result<BasinMap> {
    check_grid_args(sys, bx, resolution)?;
    cfg.validate()?;
    if attractors.is_empty() {
        return Err(Error::NoAttractors);
    }
    let grid = CellGrid::new(bx.clone(), resolution);
    let labels = parallel::map_indexed(grid.len(), |flat| {
        let x0 = grid.center(flat);
        match integrate::settle(sys, &x0, cfg, &attractors) {
            Ok(r) => CellLabel::from(r.verdict),
            Err(_) => CellLabel::Diverged,
        }
    });
    Ok(BasinMap {
        grid,
        labels,
        attractors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinMeasure {
    /// Box-clipped volume (length in 1-D, area in 2-D).
    pub volume: f64,
    /// Some cell of the basin lies on the box surface, so the basin may
    /// extend beyond the box.
    pub touches_boundary: bool,
}

pub fn basin_measure(map: &BasinMap, attractor: usize) -> Result<BasinMeasure> {
    if attractor >= map.attractors.len() {
        return Err(Error::InvalidArgument(format!(
            "no attractor with index {attractor}"
        )));
    }
    let mut count = 0usize;
    let mut touches_boundary = false;
    for (flat, l) in map.labels.iter().enumerate() {
        if *l == CellLabel::Attractor(attractor) {
            count += 1;
            touches_boundary |= map.grid.on_surface(flat);
        }
    }
    Ok(BasinMeasure {
        volume: count as f64 * map.grid.cell_volume(),
        touches_boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixEstimate {
    pub points: Vec<Vec<f64>>,
    pub cell_diameter: f64,
}

impl SeparatrixEstimate {
    pub fn to_table(&self, state_names: &[String]) -> Table {
        let mut t = Table::new(state_names.iter().cloned());
        for p in &self.points {
            t.push(p.iter().map(|v| Cell::Num(*v)).collect());
        }
        t
    }
}

/// Midpoints of faces shared by cells with different attractor labels.
/// Unresolved and diverged cells produce no points.
pub fn separatrix_points(map: &BasinMap) -> Result<SeparatrixEstimate> {
    if map.present_attractors().len() < 2 {
        return Err(Error::SingleBasin);
    }
    let g = &map.grid;
    let w = g.widths();
    let mut points = Vec::new();
    for (flat, label) in map.labels.iter().enumerate() {
        let CellLabel::Attractor(a) = *label else {
            continue;
        };
        let idx = g.unravel(flat);
        for k in 0..idx.len() {
            if idx[k] + 1 >= g.resolution {
                continue;
            }
            let mut nb = idx.clone();
            nb[k] += 1;
            if let CellLabel::Attractor(b) = map.labels[g.ravel(&nb)] {
                if a != b {
                    let mut p = g.center(flat);
                    p[k] += 0.5 * w[k];
                    points.push(p);
                }
            }
        }
    }
    Ok(SeparatrixEstimate {
        points,
        cell_diameter: g.cell_diameter(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdDistance {
    pub distance: f64,
    pub uncertainty: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance from `point` to the nearest separatrix point. Applied
/// to a stable equilibrium this is the equilibrium-to-threshold distance,
/// applied to the current state it is the precariousness.
pub fn distance_to_threshold(point: &[f64], sep: &SeparatrixEstimate) -> Result<ThresholdDistance> {
    let distance = sep
        .points
        .iter()
        .map(|s| euclid(point, s))
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
        .ok_or(Error::EmptySeparatrix)?;
    Ok(ThresholdDistance {
        distance,
        uncertainty: sep.cell_diameter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionalDistance {
    Escape(f64),
    NoEscape,
}

pub(crate) fn check_unit(direction: &[f64]) -> Result<()> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "direction must have unit length, got {norm}"
        )));
    }
    Ok(())
}

/// Smallest displacement along `direction` that makes `point` settle
/// somewhere other than its own attractor (or diverge).
///
/// A displaced start whose settling is undecided is treated as lying on the
/// threshold and so counts as an escape.
pub fn directional_distance(
    sys: &System,
    point: &[f64],
    direction: &[f64],
    cfg: &IntegratorConfig,
    max_range: f64,
    attractors: &[Vec<f64>],
) -> Result<DirectionalDistance> {
    check_unit(direction)?;
    if direction.len() != sys.dim() || point.len() != sys.dim() {
        return Err(Error::InvalidArgument(
            "point and direction must match the model dimension".into(),
        ));
    }
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(Error::InvalidArgument("max_range must be positive".into()));
    }
    let home = match integrate::settle(sys, point, cfg, attractors)?.verdict {
        Verdict::Settled(i) => i,
        Verdict::Undecided => {
            return Err(Error::Undecided("starting point does not settle".into()))
        }
        Verdict::Diverged => return Err(Error::InvalidArgument("starting point diverges".into())),
    };
    let escapes = |r: f64| -> Result<bool> {
        let x: Vec<f64> = point
            .iter()
            .zip(direction)
            .map(|(p, d)| p + r * d)
            .collect();
        Ok(integrate::settle(sys, &x, cfg, attractors)?.verdict != Verdict::Settled(home))
    };
    let samples: Vec<f64> = (1..=SCAN_SAMPLES)
        .map(|k| max_range * k as f64 / SCAN_SAMPLES as f64)
        .collect();
    let scanned = parallel::map_slice(&samples, |&r| escapes(r));
    let mut lo = 0.0;
    let mut hi = None;
    for (r, e) in samples.iter().zip(scanned) {
        if e? {
            hi = Some(*r);
            break;
        }
        lo = *r;
    }
    let Some(mut hi) = hi else {
        return Ok(DirectionalDistance::NoEscape);
    };
    let tol = 1e-6 * max_range;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if escapes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DirectionalDistance::Escape(hi))
}
