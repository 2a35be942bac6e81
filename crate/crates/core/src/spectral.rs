//! Littlewood-Paley toolbox on uniform periodic grids: projections, Hölder and
//! product norms, para-products, commutators, traces, integrals and the
//! Duhamel operator.

use crate::cutoff::{dyadic_symbol, rho, window};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{check_same, Field1D, Field2D, Grid1D};
use ndarray::{Array2, Axis as NdAxis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Direction a 1-D operation acts along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    U,
    V,
}

/// Relative coefficient threshold below which a Fourier mode counts as inactive.
pub const ACTIVE_TOL: f64 = 1e-10;

/// Largest dyadic exponent distance for "M ∼ N".
pub const SIM_GAP: u64 = 1 << 10;

/// Fields that carry a spectral structure along one or more axes.
pub trait Spectral: Sized + Clone {
    fn grid_along(&self, axis: Axis) -> Result<Grid1D>;

    /// Multiply the DFT along `axis` by `symbol(ξ)` and transform back (real part).
    fn apply_symbol(&self, axis: Axis, symbol: &dyn Fn(f64) -> Complex64) -> Result<Self>;

    /// Largest |ξ| with a mode above `ACTIVE_TOL` relative to the largest mode.
    fn active_band(&self, axis: Axis) -> Result<f64>;

    fn pointwise(&self, other: &Self, op: &dyn Fn(f64, f64) -> f64) -> Result<Self>;

    fn zeros_like(&self) -> Self;
}

fn band_of(spec: &[Complex64], grid: &Grid1D) -> (f64, f64) {
    let mut peak = 0.0f64;
    for z in spec {
        peak = peak.max(z.norm());
    }
    let mut band = 0.0f64;
    if peak > 0.0 {
        for (m, z) in spec.iter().enumerate() {
            if z.norm() > ACTIVE_TOL * peak {
                band = band.max(grid.freq(m).abs());
            }
        }
    }
    (band, peak)
}

impl Spectral for Field1D {
    fn grid_along(&self, axis: Axis) -> Result<Grid1D> {
        match axis {
            Axis::X => Ok(self.grid),
            _ => Err(Error::Invalid(format!("axis {axis:?} invalid for a 1-D field"))),
        }
    }

    fn apply_symbol(&self, axis: Axis, symbol: &dyn Fn(f64) -> Complex64) -> Result<Self> {
        let grid = self.grid_along(axis)?;
        let mut spec = fft::forward_real(&self.samples);
        for (m, z) in spec.iter_mut().enumerate() {
            *z *= symbol(grid.freq(m));
        }
        Ok(Field1D {
            grid,
            samples: fft::inverse_real(spec),
        })
    }

    fn active_band(&self, axis: Axis) -> Result<f64> {
        let grid = self.grid_along(axis)?;
        Ok(band_of(&fft::forward_real(&self.samples), &grid).0)
    }

    fn pointwise(&self, other: &Self, op: &dyn Fn(f64, f64) -> f64) -> Result<Self> {
        self.zip(other, op)
    }

    fn zeros_like(&self) -> Self {
        Field1D::zeros(self.grid)
    }
}

fn nd_axis(axis: Axis) -> Result<usize> {
    match axis {
        Axis::U => Ok(0),
        Axis::V => Ok(1),
        Axis::X => Err(Error::Invalid("axis X invalid for a 2-D field".into())),
    }
}

/// In-place DFT of every lane of `arr` along `axis`.
pub(crate) fn fft_lanes(arr: &mut Array2<Complex64>, axis: usize, inverse: bool) {
    let mut buf = Vec::new();
    for mut lane in arr.lanes_mut(NdAxis(axis)) {
        buf.clear();
        buf.extend(lane.iter().copied());
        if inverse {
            fft::inverse(&mut buf);
        } else {
            fft::forward(&mut buf);
        }
        for (dst, src) in lane.iter_mut().zip(&buf) {
            *dst = *src;
        }
    }
}

fn scale_lanes(arr: &mut Array2<Complex64>, axis: usize, factors: &[Complex64]) {
    for mut lane in arr.lanes_mut(NdAxis(axis)) {
        for (z, f) in lane.iter_mut().zip(factors) {
            *z *= *f;
        }
    }
}

impl Spectral for Field2D {
    fn grid_along(&self, axis: Axis) -> Result<Grid1D> {
        match axis {
            Axis::U => Ok(self.grid_u),
            Axis::V => Ok(self.grid_v),
            Axis::X => Err(Error::Invalid("axis X invalid for a 2-D field".into())),
        }
    }

    fn apply_symbol(&self, axis: Axis, symbol: &dyn Fn(f64) -> Complex64) -> Result<Self> {
        let ax = nd_axis(axis)?;
        let grid = self.grid_along(axis)?;
        let factors: Vec<Complex64> = (0..grid.num_points).map(|m| symbol(grid.freq(m))).collect();
        let mut arr = self.samples.mapv(|v| Complex64::new(v, 0.0));
        fft_lanes(&mut arr, ax, false);
        scale_lanes(&mut arr, ax, &factors);
        fft_lanes(&mut arr, ax, true);
        Ok(Field2D {
            grid_u: self.grid_u,
            grid_v: self.grid_v,
            samples: arr.mapv(|z| z.re),
        })
    }

    fn active_band(&self, axis: Axis) -> Result<f64> {
        let ax = nd_axis(axis)?;
        let grid = self.grid_along(axis)?;
        let mut arr = self.samples.mapv(|v| Complex64::new(v, 0.0));
        fft_lanes(&mut arr, ax, false);
        let mut peak = 0.0f64;
        for z in arr.iter() {
            peak = peak.max(z.norm());
        }
        let mut band = 0.0f64;
        if peak > 0.0 {
            for lane in arr.lanes(NdAxis(ax)) {
                for (m, z) in lane.iter().enumerate() {
                    if z.norm() > ACTIVE_TOL * peak {
                        band = band.max(grid.freq(m).abs());
                    }
                }
            }
        }
        Ok(band)
    }

    fn pointwise(&self, other: &Self, op: &dyn Fn(f64, f64) -> f64) -> Result<Self> {
        self.zip(other, op)
    }

    fn zeros_like(&self) -> Self {
        Field2D::zeros(self.grid_u, self.grid_v)
    }
}

fn real(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Complex64 {
    move |xi| Complex64::new(f(xi), 0.0)
}

/// Symbol of the fattened operator Σ_{M∼N} ρ_M, by telescoping.
pub fn fattened_symbol(xi: f64, n: u64) -> f64 {
    // dyadic M with 2^{-10} N < M < 2^{10} N
    let lo = (n / (SIM_GAP / 2)).max(1);
    let hi = n * (SIM_GAP / 2);
    if lo <= 1 {
        rho(xi / hi as f64)
    } else {
        rho(xi / hi as f64) - rho(2.0 * xi / lo as f64)
    }
}

/// P_N f along `axis`, or the fattened P̃_N when `fattened` is set.
pub fn lp_project<F: Spectral>(f: &F, axis: Axis, n: u64, fattened: bool) -> Result<F> {
    let grid = f.grid_along(axis)?;
    if !n.is_power_of_two() {
        return Err(Error::Invalid(format!("N = {n} is not dyadic")));
    }
    if n > grid.block_cap() {
        return Err(Error::Unresolved {
            n: n as f64,
            max: grid.block_cap() as f64,
        });
    }
    if fattened {
        f.apply_symbol(axis, &real(move |xi| fattened_symbol(xi, n)))
    } else {
        f.apply_symbol(axis, &real(move |xi| dyadic_symbol(xi, n)))
    }
}

/// Multiplier ρ(ξ/N): the smooth truncation P_{≤N}.
pub fn low_pass<F: Spectral>(f: &F, axis: Axis, n: f64) -> Result<F> {
    if !(n > 0.0) {
        return Err(Error::Invalid(format!("low_pass scale must be positive, got {n}")));
    }
    f.apply_symbol(axis, &real(move |xi| rho(xi / n)))
}

/// Spectral derivative along `axis`; the Nyquist mode is dropped.
pub fn derivative<F: Spectral>(f: &F, axis: Axis) -> Result<F> {
    let grid = f.grid_along(axis)?;
    let nyq = grid.nyquist();
    f.apply_symbol(axis, &move |xi: f64| {
        if (xi.abs() - nyq).abs() < 1e-9 * nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi)
        }
    })
}

/// Translate a band-limited field: returns g with g(x) = f(x − t).
pub fn shift<F: Spectral>(f: &F, axis: Axis, t: f64) -> Result<F> {
    let grid = f.grid_along(axis)?;
    let nyq = grid.nyquist();
    f.apply_symbol(axis, &move |xi: f64| {
        if (xi.abs() - nyq).abs() < 1e-9 * nyq {
            // keep the (real) Nyquist mode consistent with a real shift
            Complex64::new((xi * t).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, -xi * t)
        }
    })
}

/// Multiply by the re-windowing profile (1 on [−L/2, L/2], 0 for |x| ≥ 3L/4).
pub fn rewindow(f: &Field1D) -> Field1D {
    let l = f.grid.half_length;
    Field1D {
        grid: f.grid,
        samples: f
            .grid
            .points()
            .iter()
            .zip(&f.samples)
            .map(|(&x, &v)| window(x, l) * v)
            .collect(),
    }
}

pub fn rewindow_2d(f: &Field2D, axis: Axis) -> Result<Field2D> {
    let ax = nd_axis(axis)?;
    let grid = f.grid_along(axis)?;
    let w: Vec<f64> = grid.points().iter().map(|&x| window(x, grid.half_length)).collect();
    let mut out = f.samples.clone();
    for mut lane in out.lanes_mut(NdAxis(ax)) {
        for (z, wj) in lane.iter_mut().zip(&w) {
            *z *= wj;
        }
    }
    Ok(Field2D {
        grid_u: f.grid_u,
        grid_v: f.grid_v,
        samples: out,
    })
}

/// Per-scale table of a Hölder norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub gamma: f64,
    pub scales: Vec<u64>,
    pub block_sups: Vec<f64>,
    pub norm: f64,
    pub argmax: u64,
    pub band_cap: u64,
}

/// sup_N N^γ ‖P_N f‖_∞ over N ∈ {1, ..., Nyquist/4}, with the per-block table.
pub fn holder_report(f: &Field1D, gamma: f64) -> HolderReport {
    let grid = f.grid;
    let spec = fft::forward_real(&f.samples);
    let scales = grid.norm_scales();
    let mut block_sups = Vec::with_capacity(scales.len());
    let mut norm = 0.0f64;
    let mut argmax = 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.len()];
    for &n in &scales {
        for (m, (b, z)) in buf.iter_mut().zip(&spec).enumerate() {
            *b = *z * dyadic_symbol(grid.freq(m), n);
        }
        fft::inverse(&mut buf);
        let sup = buf.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
        block_sups.push(sup);
        let w = (n as f64).powf(gamma) * sup;
        if w > norm {
            norm = w;
            argmax = n;
        }
    }
    HolderReport {
        gamma,
        scales,
        block_sups,
        norm,
        argmax,
        band_cap: grid.norm_cap(),
    }
}

pub fn holder_norm(f: &Field1D, gamma: f64) -> f64 {
    holder_report(f, gamma).norm
}

/// sup_{N1,N2} N1^γ1 N2^γ2 ‖P^u_{N1} P^v_{N2} F‖_∞ over resolved dyadic pairs.
pub fn product_norm(f: &Field2D, gamma1: f64, gamma2: f64) -> f64 {
    let su = f.grid_u.norm_scales();
    let sv = f.grid_v.norm_scales();
    let mut spec = f.samples.mapv(|v| Complex64::new(v, 0.0));
    fft_lanes(&mut spec, 0, false);
    fft_lanes(&mut spec, 1, false);
    let fu: Vec<f64> = f.grid_u.freqs();
    let fv: Vec<f64> = f.grid_v.freqs();
    let mut best = 0.0f64;
    for &n1 in &su {
        let ru: Vec<f64> = fu.iter().map(|&x| dyadic_symbol(x, n1)).collect();
        for &n2 in &sv {
            let rv: Vec<f64> = fv.iter().map(|&x| dyadic_symbol(x, n2)).collect();
            let mut blk = spec.clone();
            for ((i, j), z) in blk.indexed_iter_mut() {
                *z *= ru[i] * rv[j];
            }
            fft_lanes(&mut blk, 0, true);
            fft_lanes(&mut blk, 1, true);
            let sup = blk.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
            best = best.max((n1 as f64).powf(gamma1) * (n2 as f64).powf(gamma2) * sup);
        }
    }
    best
}

/// Para-product families and their modified variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParaKind {
    Ll,
    Sim,
    Gg,
    Lesssim,
    Gtrsim,
    Notsim,
    LlSigma,
    GtrsimSigma,
    Down,
}

fn pair_selected(kind: ParaKind, m: u64, n: u64, sigma: f64) -> bool {
    let ll = m * SIM_GAP <= n;
    let gg = m >= n * SIM_GAP;
    let sim = !ll && !gg;
    let thresh = (n as f64).powf(1.0 - sigma);
    match kind {
        ParaKind::Ll => ll,
        ParaKind::Sim | ParaKind::Down => sim,
        ParaKind::Gg => gg,
        ParaKind::Lesssim => ll || sim,
        ParaKind::Gtrsim => sim || gg,
        ParaKind::Notsim => ll || gg,
        ParaKind::LlSigma => (m as f64) <= thresh,
        ParaKind::GtrsimSigma => (m as f64) > thresh,
    }
}

/// Refuse a pointwise product whose combined active bands exceed Nyquist/2.
pub fn alias_guard(band_f: f64, band_g: f64, grid: &Grid1D) -> Result<()> {
    let limit = grid.nyquist() / 2.0;
    if band_f + band_g > limit * (1.0 + 1e-12) {
        Err(Error::Aliasing {
            band_f,
            band_g,
            limit,
        })
    } else {
        Ok(())
    }
}

/// Double dyadic sum of P_M f · P_N g over the pairs selected by `kind`.
pub fn paraproduct<F: Spectral>(f: &F, g: &F, axis: Axis, kind: ParaKind, sigma: f64) -> Result<F> {
    let grid = f.grid_along(axis)?;
    check_same(&grid, &g.grid_along(axis)?)?;
    alias_guard(f.active_band(axis)?, g.active_band(axis)?, &grid)?;
    let scales = grid.block_scales();
    let fb: Vec<F> = scales
        .iter()
        .map(|&m| lp_project(f, axis, m, false))
        .collect::<Result<_>>()?;
    let gb: Vec<F> = scales
        .iter()
        .map(|&n| lp_project(g, axis, n, false))
        .collect::<Result<_>>()?;
    let mut acc = f.zeros_like();
    for (a, &m) in scales.iter().enumerate() {
        if kind == ParaKind::Down {
            for (b, &n) in scales.iter().enumerate() {
                if !pair_selected(kind, m, n, sigma) {
                    continue;
                }
                let prod = fb[a].pointwise(&gb[b], &|x, y| x * y)?;
                let kmax = (m.min(n) as f64).powf(sigma);
                let kcap = largest_dyadic_at_most(kmax);
                let low = prod.apply_symbol(axis, &real(move |xi| rho(xi / kcap as f64)))?;
                acc = acc.pointwise(&low, &|x, y| x + y)?;
            }
            continue;
        }
        let mut gsum: Option<F> = None;
        for (b, &n) in scales.iter().enumerate() {
            if pair_selected(kind, m, n, sigma) {
                gsum = Some(match gsum {
                    None => gb[b].clone(),
                    Some(s) => s.pointwise(&gb[b], &|x, y| x + y)?,
                });
            }
        }
        if let Some(s) = gsum {
            let prod = fb[a].pointwise(&s, &|x, y| x * y)?;
            acc = acc.pointwise(&prod, &|x, y| x + y)?;
        }
    }
    Ok(acc)
}

fn largest_dyadic_at_most(x: f64) -> u64 {
    let mut k = 1u64;
    while (2 * k) as f64 <= x {
        k *= 2;
    }
    k
}

/// [P_K, f] g = P_K(f g) − f · P_K g.
pub fn commutator_apply<F: Spectral>(f: &F, g: &F, axis: Axis, k: u64) -> Result<F> {
    let grid = f.grid_along(axis)?;
    check_same(&grid, &g.grid_along(axis)?)?;
    alias_guard(f.active_band(axis)?, g.active_band(axis)?, &grid)?;
    let fg = f.pointwise(g, &|x, y| x * y)?;
    let a = lp_project(&fg, axis, k, false)?;
    let pg = lp_project(g, axis, k, false)?;
    let b = f.pointwise(&pg, &|x, y| x * y)?;
    a.pointwise(&b, &|x, y| x - y)
}

fn require_square(f: &Field2D) -> Result<Grid1D> {
    if f.is_square() {
        Ok(f.grid_u)
    } else {
        Err(Error::GridMismatch(format!(
            "trace needs grid_u = grid_v, got {:?} vs {:?}",
            f.grid_u, f.grid_v
        )))
    }
}

/// Tr f(x) = f(x, x).
pub fn trace_diag(f: &Field2D) -> Result<Field1D> {
    let grid = require_square(f)?;
    Ok(Field1D {
        grid,
        samples: (0..grid.num_points).map(|i| f.samples[[i, i]]).collect(),
    })
}

/// Tr_u f(u, v) = f(u, u).
pub fn trace_u(f: &Field2D) -> Result<Field2D> {
    let grid = require_square(f)?;
    let n = grid.num_points;
    Ok(Field2D {
        grid_u: grid,
        grid_v: grid,
        samples: Array2::from_shape_fn((n, n), |(i, _)| f.samples[[i, i]]),
    })
}

/// Tr_v f(u, v) = f(v, v).
pub fn trace_v(f: &Field2D) -> Result<Field2D> {
    let grid = require_square(f)?;
    let n = grid.num_points;
    Ok(Field2D {
        grid_u: grid,
        grid_v: grid,
        samples: Array2::from_shape_fn((n, n), |(_, j)| f.samples[[j, j]]),
    })
}

/// Maximum tail-mass fraction allowed outside [−L/2, L/2].
pub const SUPPORT_TOL: f64 = 1e-8;

fn tail_fraction(grid: &Grid1D, weights: impl Iterator<Item = (usize, f64)>) -> f64 {
    let half = 0.5 * grid.half_length;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (j, w) in weights {
        total += w;
        if grid.x(j).abs() > half + 1e-12 {
            tail += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn check_support_1d(f: &Field1D) -> Result<()> {
    let tail = tail_fraction(&f.grid, f.samples.iter().map(|v| v.abs()).enumerate());
    if tail > SUPPORT_TOL {
        Err(Error::Support {
            tail,
            limit: SUPPORT_TOL,
        })
    } else {
        Ok(())
    }
}

fn check_support_2d(f: &Field2D, ax: usize) -> Result<()> {
    let grid = if ax == 0 { f.grid_u } else { f.grid_v };
    let mut mass = vec![0.0; grid.num_points];
    for ((i, j), v) in f.samples.indexed_iter() {
        mass[if ax == 0 { i } else { j }] += v.abs();
    }
    let tail = tail_fraction(&grid, mass.into_iter().enumerate());
    if tail > SUPPORT_TOL {
        Err(Error::Support {
            tail,
            limit: SUPPORT_TOL,
        })
    } else {
        Ok(())
    }
}

/// Spectral antiderivative of one lane: mean·x + periodic part, shifted to vanish at x = 0.
fn antiderivative_lane(values: &[f64], grid: &Grid1D) -> Vec<f64> {
    let n = values.len();
    let mut spec = fft::forward_real(values);
    let mean = spec[0].re / n as f64;
    spec[0] = Complex64::new(0.0, 0.0);
    let nyq = grid.nyquist();
    for (m, z) in spec.iter_mut().enumerate().skip(1) {
        let xi = grid.freq(m);
        if (xi.abs() - nyq).abs() < 1e-9 * nyq {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z /= Complex64::new(0.0, xi);
        }
    }
    let p = fft::inverse_real(spec);
    let p0 = p[grid.origin()];
    (0..n).map(|j| mean * grid.x(j) + p[j] - p0).collect()
}

/// I f(x) = ∫_0^x f, spectrally exact for band-limited f supported in [−L/2, L/2].
/// The result is step-like; re-window before further spectral operations.
pub fn integrate(f: &Field1D) -> Result<Field1D> {
    check_support_1d(f)?;
    Ok(Field1D {
        grid: f.grid,
        samples: antiderivative_lane(&f.samples, &f.grid),
    })
}

/// I_u or I_v of a 2-D field, lane by lane.
pub fn integrate_partial(f: &Field2D, axis: Axis) -> Result<Field2D> {
    let ax = nd_axis(axis)?;
    check_support_2d(f, ax)?;
    let grid = f.grid_along(axis)?;
    let mut out = f.samples.clone();
    for mut lane in out.lanes_mut(NdAxis(ax)) {
        let vals: Vec<f64> = lane.iter().copied().collect();
        let anti = antiderivative_lane(&vals, &grid);
        for (d, s) in lane.iter_mut().zip(anti) {
            *d = s;
        }
    }
    Ok(Field2D {
        grid_u: f.grid_u,
        grid_v: f.grid_v,
        samples: out,
    })
}

/// Cumulative trapezoid antiderivative vanishing at the origin sample.
pub fn cumulative_trapezoid(values: &[f64], h: f64, origin: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for j in origin + 1..n {
        out[j] = out[j - 1] + 0.5 * h * (values[j - 1] + values[j]);
    }
    for j in (0..origin).rev() {
        out[j] = out[j + 1] - 0.5 * h * (values[j] + values[j + 1]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuhamelMethod {
    /// Nested cumulative trapezoid, symmetrized over the two iteration orders.
    Direct,
    /// (I_v − Tr_u I_v)(I_u − Tr_v I_u) with spectral integrals.
    Factorized,
}

/// Duh[F](u, v) = −∫_u^v dv′ ∫_u^{v′} du′ F(u′, v′).
pub fn duhamel(f: &Field2D, method: DuhamelMethod) -> Result<Field2D> {
    let grid = require_square(f)?;
    check_support_2d(f, 0)?;
    check_support_2d(f, 1)?;
    match method {
        DuhamelMethod::Direct => Ok(Field2D {
            grid_u: grid,
            grid_v: grid,
            samples: duhamel_direct(&f.samples, grid.spacing()),
        }),
        DuhamelMethod::Factorized => {
            let a = integrate_partial(f, Axis::U)?;
            let k = a.sub(&trace_v(&a)?)?;
            let b = integrate_partial(&k, Axis::V)?;
            b.sub(&trace_u(&b)?)
        }
    }
}

/// One iteration order of the nested trapezoid: inner along u, outer along v.
fn duhamel_one_order(f: &Array2<f64>, h: f64) -> Array2<f64> {
    let n = f.nrows();
    // c[i, j] = trapezoid ∫_{u_0}^{u_i} F(·, v_j)
    let mut c = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in 1..n {
            c[[i, j]] = c[[i - 1, j]] + 0.5 * h * (f[[i - 1, j]] + f[[i, j]]);
        }
    }
    // hmat[a, b] = ∫_{u_a}^{v_b} F(u', v_b) du'
    let mut e = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        let mut prev = c[[0, 0]] - c[[a, 0]];
        for b in 1..n {
            let cur = c[[b, b]] - c[[a, b]];
            e[[a, b]] = e[[a, b - 1]] + 0.5 * h * (prev + cur);
            prev = cur;
        }
    }
    let mut out = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        let base = e[[a, a]];
        for b in 0..n {
            out[[a, b]] = -(e[[a, b]] - base);
        }
    }
    out
}

pub(crate) fn duhamel_direct(f: &Array2<f64>, h: f64) -> Array2<f64> {
    let d1 = duhamel_one_order(f, h);
    let ft = f.t().to_owned();
    let d2 = duhamel_one_order(&ft, h);
    let mut out = d1;
    ndarray::Zip::from(&mut out)
        .and(&d2.t())
        .for_each(|a, &b| *a = 0.5 * (*a + b));
    out
}

/// Trigonometric interpolation of a band-limited periodic field at arbitrary points.
pub fn resample(f: &Field1D, points: &[f64]) -> Result<Vec<f64>> {
    let grid = f.grid;
    let n = grid.num_points;
    let l = grid.half_length;
    let spec = fft::forward_real(&f.samples);
    let (band, peak) = band_of(&spec, &grid);
    let kmax = ((band * l / std::f64::consts::PI).round() as usize).min(n / 2);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        if !(x >= -l - 1e-12 && x <= l + 1e-12) {
            return Err(Error::OutOfRange { x, lo: -l, hi: l });
        }
        if peak == 0.0 {
            out.push(0.0);
            continue;
        }
        let theta = std::f64::consts::PI * (x + l) / l;
        let step = Complex64::from_polar(1.0, theta);
        let mut acc = spec[0].re;
        let mut z = Complex64::new(1.0, 0.0);
        for k in 1..=kmax {
            if k % 64 == 0 {
                z = Complex64::from_polar(1.0, theta * k as f64);
            } else {
                z *= step;
            }
            if k == n / 2 {
                acc += spec[k].re * z.re;
            } else {
                acc += 2.0 * (spec[k] * z).re;
            }
        }
        out.push(acc / n as f64);
    }
    Ok(out)
}

/// Least-squares fit of log value against log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn scaling_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 3 {
        return Err(Error::Invalid(format!(
            "scaling_slope needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(s, v)| !(s > 0.0 && v > 0.0)) {
        return Err(Error::Invalid("scaling_slope needs positive scales and values".into()));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(s, v)| (s.ln(), v.ln())).collect();
    Ok(linear_fit(&pts))
}

/// Ordinary least squares y = slope·x + intercept.
pub fn linear_fit(pts: &[(f64, f64)]) -> SlopeFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    SlopeFit {
        slope,
        intercept,
        r_squared,
    }
}
