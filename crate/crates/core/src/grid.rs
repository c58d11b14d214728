//! Axis-aligned boxes in state space and uniform cell grids over them.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must have equal, nonzero length".into(),
            ));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate box axis [{a}, {b}]"
                )));
            }
        }
        Ok(StateBox { lo, hi })
    }

    /// Same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        StateBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Uniform grid with `resolution` cells along every axis. Flat indices run
/// with axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub bounds: StateBox,
    pub resolution: usize,
}

impl CellGrid {
    pub fn new(bounds: StateBox, resolution: usize) -> Self {
        CellGrid { bounds, resolution }
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.bounds.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn widths(&self) -> Vec<f64> {
        let r = self.resolution as f64;
        self.bounds
            .lo
            .iter()
            .zip(&self.bounds.hi)
            .map(|(a, b)| (b - a) / r)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn cell_diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.bounds.dim());
        for _ in 0..self.bounds.dim() {
            idx.push(flat % self.resolution);
            flat /= self.resolution;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .rev()
            .fold(0, |acc, &i| acc * self.resolution + i)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let w = self.widths();
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.bounds.lo[k] + (i as f64 + 0.5) * w[k])
            .collect()
    }

    /// Flat index of the cell containing `x`, clamped to the grid.
    pub fn locate(&self, x: &[f64]) -> usize {
        let w = self.widths();
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let i = ((v - self.bounds.lo[k]) / w[k]).floor();
                i.clamp(0.0, (self.resolution - 1) as f64) as usize
            })
            .collect();
        self.ravel(&idx)
    }

    pub fn on_surface(&self, flat: usize) -> bool {
        self.unravel(flat)
            .iter()
            .any(|&i| i == 0 || i + 1 == self.resolution)
    }
}
