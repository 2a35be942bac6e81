//! Uniform periodic grids and the sampled fields that live on them.

use crate::error::{Error, Result};
use crate::fft;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Uniform grid x_j = −L + j·h on [−L, L) with h = 2L/n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub num_points: usize,
    pub half_length: f64,
}

impl Grid1D {
    pub fn new(num_points: usize, half_length: f64) -> Result<Self> {
        if num_points < 8 || !num_points.is_power_of_two() {
            return Err(Error::Grid(format!(
                "num_points must be a power of two >= 8, got {num_points}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Grid(format!(
                "half_length must be positive, got {half_length}"
            )));
        }
        Ok(Self {
            num_points,
            half_length,
        })
    }

    /// Grid on [−π, π): integer frequencies.
    pub fn periodic(num_points: usize) -> Result<Self> {
        Self::new(num_points, PI)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.num_points
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.num_points as f64
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points).map(|j| self.x(j)).collect()
    }

    /// Index of the sample at x = 0.
    #[inline]
    pub fn origin(&self) -> usize {
        self.num_points / 2
    }

    /// Angular frequency ξ of FFT index m.
    #[inline]
    pub fn freq(&self, m: usize) -> f64 {
        PI * fft::mode(m, self.num_points) as f64 / self.half_length
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.num_points).map(|m| self.freq(m)).collect()
    }

    /// |ξ| of the Nyquist mode.
    #[inline]
    pub fn nyquist(&self) -> f64 {
        PI * (self.num_points / 2) as f64 / self.half_length
    }

    /// Largest dyadic N with N ≤ Nyquist/4; the range used by all norms.
    pub fn norm_cap(&self) -> u64 {
        largest_dyadic_below(self.nyquist() / 4.0)
    }

    /// Largest dyadic N with N ≤ Nyquist; blocks above this have no support on the grid.
    pub fn block_cap(&self) -> u64 {
        largest_dyadic_below(self.nyquist())
    }

    /// Dyadic scales 1, 2, 4, ..., norm_cap.
    pub fn norm_scales(&self) -> Vec<u64> {
        dyadic_range(self.norm_cap())
    }

    /// Dyadic scales 1, 2, 4, ..., block_cap.
    pub fn block_scales(&self) -> Vec<u64> {
        dyadic_range(self.block_cap())
    }

    /// Index j with x_j == x to within 1e−9·h, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let t = (x + self.half_length) / self.spacing();
        let j = t.round();
        if (t - j).abs() < 1e-9 && j >= 0.0 && (j as usize) < self.num_points {
            Some(j as usize)
        } else {
            None
        }
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.num_points == other.num_points && self.half_length == other.half_length
    }
}

fn largest_dyadic_below(x: f64) -> u64 {
    if x < 1.0 {
        return 1;
    }
    let mut n = 1u64;
    while (2 * n) as f64 <= x {
        n *= 2;
    }
    n
}

pub fn dyadic_range(cap: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = 1u64;
    while n <= cap {
        out.push(n);
        n *= 2;
    }
    out
}

/// Real samples on a `Grid1D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub grid: Grid1D,
    pub samples: Vec<f64>,
}

impl Field1D {
    pub fn new(grid: Grid1D, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.num_points {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.num_points,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sample".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.num_points],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let samples = (0..grid.num_points).map(|j| f(grid.x(j))).collect();
        Self { grid, samples }
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip(&self, other: &Field1D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field1D) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field1D) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field1D) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn at_origin(&self) -> f64 {
        self.samples[self.grid.origin()]
    }
}

pub(crate) fn check_same(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{a:?} vs {b:?}")))
    }
}

/// Real samples on a tensor grid; rows index u, columns index v.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid_u: Grid1D,
    pub grid_v: Grid1D,
    pub samples: Array2<f64>,
}

impl Field2D {
    pub fn new(grid_u: Grid1D, grid_v: Grid1D, samples: Array2<f64>) -> Result<Self> {
        if samples.dim() != (grid_u.num_points, grid_v.num_points) {
            return Err(Error::GridMismatch(format!(
                "array shape {:?} does not match grids ({}, {})",
                samples.dim(),
                grid_u.num_points,
                grid_v.num_points
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sample".into()));
        }
        Ok(Self {
            grid_u,
            grid_v,
            samples,
        })
    }

    pub fn zeros(grid_u: Grid1D, grid_v: Grid1D) -> Self {
        Self {
            grid_u,
            grid_v,
            samples: Array2::zeros((grid_u.num_points, grid_v.num_points)),
        }
    }

    pub fn square(grid: Grid1D, samples: Array2<f64>) -> Result<Self> {
        Self::new(grid, grid, samples)
    }

    pub fn from_fn(grid_u: Grid1D, grid_v: Grid1D, f: impl Fn(f64, f64) -> f64) -> Self {
        let samples = Array2::from_shape_fn((grid_u.num_points, grid_v.num_points), |(i, j)| {
            f(grid_u.x(i), grid_v.x(j))
        });
        Self {
            grid_u,
            grid_v,
            samples,
        }
    }

    pub fn is_square(&self) -> bool {
        self.grid_u.same_as(&self.grid_v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid_u: self.grid_v,
            grid_v: self.grid_u,
            samples: self.samples.t().to_owned(),
        }
    }

    pub fn zip(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same(&self.grid_u, &other.grid_u)?;
        check_same(&self.grid_v, &other.grid_v)?;
        let mut out = self.samples.clone();
        ndarray::Zip::from(&mut out)
            .and(&other.samples)
            .for_each(|a, &b| *a = f(*a, b));
        Ok(Self {
            grid_u: self.grid_u,
            grid_v: self.grid_v,
            samples: out,
        })
    }

    pub fn sub(&self, other: &Field2D) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field2D) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Field2D) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid_u: self.grid_u,
            grid_v: self.grid_v,
            samples: self.samples.mapv(|v| c * v),
        }
    }
}
