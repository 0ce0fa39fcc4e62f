//! Tensor grids on a chart and the discrete horizontal Laplacian as a
//! generalized pair `(A, M)`.

mod assemble;
mod fourier;
mod sparse;

use std::sync::Arc;

use serde::Serialize;

pub use assemble::{assemble_from_fields, assemble_laplacian, discretize_field, leafwise_family, mass_vector};
pub use fourier::sobolev_norm;
pub(crate) use assemble::{difference_matrix, Stencil};
pub(crate) use fourier::{fft_nd, frequency_axis, sobolev_weights};
pub use sparse::{CsrMatrix, SparseSymOp};

use crate::error::{Error, Result};
use crate::expr::rational_to_f64;
use crate::vfield::{Axis, AxisDescriptor, Chart};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    chart: Arc<Chart>,
    resolution: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridDescriptor {
    pub resolution: Vec<usize>,
    pub axes: Vec<AxisDescriptor>,
    pub spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(chart: Arc<Chart>, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != chart.dim() {
            return Err(Error::GridMismatch(format!(
                "{} resolutions for a {}-dimensional chart",
                resolution.len(),
                chart.dim()
            )));
        }
        if resolution.contains(&0) {
            return Err(Error::GridMismatch("resolutions must be positive".into()));
        }
        Ok(GridSpec { chart, resolution })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn shape(&self) -> &[usize] {
        &self.resolution
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let n = self.resolution[axis] as f64;
        match &self.chart.axes()[axis] {
            Axis::Periodic { period, .. } => period / n,
            Axis::Interval { lo, hi } => (rational_to_f64(hi) - rational_to_f64(lo)) / (n + 1.0),
        }
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.chart.dim()).map(|a| self.spacing(a)).collect()
    }

    /// Interval axes: interior nodes `lo + (i+1)h`; periodic axes: `-P/2 + i h`.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let start = match &self.chart.axes()[axis] {
            Axis::Periodic { period, .. } => -period / 2.0,
            Axis::Interval { lo, .. } => rational_to_f64(lo) + h,
        };
        (0..self.resolution[axis]).map(|i| start + i as f64 * h).collect()
    }

    /// Row-major strides, axis 0 slowest.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.resolution)
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.resolution.len()];
        for a in (0..out.len()).rev() {
            out[a] = index % self.resolution[a];
            index /= self.resolution[a];
        }
        out
    }

    /// Coordinates of every node, node-major.
    pub fn node_points(&self) -> Vec<Vec<f64>> {
        let coords: Vec<Vec<f64>> = (0..self.chart.dim()).map(|a| self.coords(a)).collect();
        (0..self.len())
            .map(|i| {
                self.multi_index(i)
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| coords[a][j])
                    .collect()
            })
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    pub fn is_all_periodic(&self) -> bool {
        self.chart.all_periodic()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            resolution: self.resolution.clone(),
            axes: self.chart.axes().iter().map(Axis::describe).collect(),
            spacing: self.spacings(),
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.node_points().iter().map(|p| f(p)).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}
