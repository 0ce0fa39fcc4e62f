use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{GridFunction, GridSpec};
use crate::error::{Error, Result};
use crate::vfield::Axis;

/// In-place unnormalized forward (or inverse) DFT along every axis of a row-major array.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let strides = super::strides(shape);
    let mut buf = vec![Complex64::default(); total];
    for (a, &n) in shape.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let s = strides[a];
        let outer = total / (n * s);
        // gather lines contiguously, transform, scatter back
        let mut line = 0;
        for o in 0..outer {
            for i in 0..s {
                let base = o * n * s + i;
                for k in 0..n {
                    buf[line * n + k] = data[base + k * s];
                }
                line += 1;
            }
        }
        fft.process(&mut buf);
        line = 0;
        for o in 0..outer {
            for i in 0..s {
                let base = o * n * s + i;
                for k in 0..n {
                    data[base + k * s] = buf[line * n + k];
                }
                line += 1;
            }
        }
    }
}

/// Angular frequencies `2πk/P` with `k` aliased into `(-N/2, N/2]`.
pub(crate) fn frequency_axis(n: usize, period: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if 2 * i <= n { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * k / period
        })
        .collect()
}

pub(crate) fn periods(g: &GridSpec) -> Result<Vec<f64>> {
    g.chart()
        .axes()
        .iter()
        .map(|a| match a {
            Axis::Periodic { period, .. } => Ok(*period),
            Axis::Interval { .. } => Err(Error::NonPeriodicChart),
        })
        .collect()
}

/// `(1 + |ξ|²)^s` for every frequency, row-major.
pub(crate) fn sobolev_weights(shape: &[usize], periods: &[f64], s: f64) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = shape.iter().zip(periods).map(|(&n, &p)| frequency_axis(n, p)).collect();
    let strides = super::strides(shape);
    let total: usize = shape.iter().product();
    (0..total)
        .map(|i| {
            let xi2: f64 = (0..shape.len())
                .map(|a| {
                    let k = (i / strides[a]) % shape[a];
                    axes[a][k] * axes[a][k]
                })
                .sum();
            (1.0 + xi2).powf(s)
        })
        .collect()
}

/// `‖u‖_s² = (Π h / N) Σ_ξ (1+|ξ|²)^s |û(ξ)|²`.
pub fn sobolev_norm(u: &GridFunction, s: f64) -> Result<f64> {
    let g = u.grid();
    let periods = periods(g)?;
    let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, g.shape(), false);
    let w = sobolev_weights(g.shape(), &periods, s);
    let sum: f64 = data.iter().zip(&w).map(|(c, w)| w * c.norm_sqr()).sum();
    Ok((g.cell_volume() / g.len() as f64 * sum).sqrt())
}
