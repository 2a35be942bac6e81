//! Null-coordinate solver: Picard iteration of the localized Duhamel formulation,
//! an independent characteristic-lattice march, conversion back to Cartesian
//! coordinates and the energy.
//!
//! The state carries ∂_uφ and ∂_vφ next to φ. Derivatives of the Duhamel term
//! come from its integral representation,
//! ∂_u Duh[G](u,v) = ∫_u^v G(u,v′)dv′ and ∂_v Duh[G](u,v) = −∫_u^v G(u′,v)du′,
//! and derivatives of the linear waves are exact, so no spectral derivative is
//! taken across the χ edges.

use crate::cutoff::{chi, chi_deriv, form_bump, plateau, window, Params};
use crate::error::{Error, Result};
use crate::grid::{Field1D, Field2D, Grid1D};
use crate::randomdata::{
    bm_increment_signals, global_path, linear_waves, localize_rescale, smooth_truncate, LinearWaves,
    LocalizedData, Signal, SphereManifold, StreamKind, VelocityField, white_noise_velocity,
};
use crate::spectral::{cumulative_trapezoid, duhamel_direct, holder_norm};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Solver and data-pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dim: usize,
    pub seed: u64,
    pub eps: f64,
    pub tau: f64,
    pub x0: f64,
    pub theta: f64,
    pub params: Params,
    /// Points per null axis.
    pub null_points: usize,
    /// Half-length of the null grid.
    pub null_half_length: f64,
    /// Data grid is `data_refine` times finer than the null grid.
    pub data_refine: usize,
    /// RK4 substeps per data-grid cell.
    pub substeps: usize,
    /// Points of the global periodic grid on [−π, π) carrying W.
    pub global_points: usize,
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Half-width of the time cutoff χ((v−u)/τ_c); defaults to `tau`.
    pub time_cutoff: Option<f64>,
    /// Renormalize φ + shift onto the sphere in every oracle cell.
    pub oracle_renormalize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            seed: 0,
            eps: 1.0 / 16.0,
            tau: 0.1,
            x0: 0.0,
            theta: 1.0,
            params: Params::solver_defaults(),
            null_points: 1024,
            null_half_length: 2.5,
            data_refine: 4,
            substeps: 2,
            global_points: 1 << 14,
            picard_tol: 1e-10,
            max_iter: 100,
            time_cutoff: None,
            oracle_renormalize: false,
        }
    }
}

impl SolverConfig {
    pub fn time_cutoff(&self) -> f64 {
        self.time_cutoff.unwrap_or(self.tau)
    }

    pub fn null_grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.null_points, self.null_half_length)
    }

    pub fn data_grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.null_points * self.data_refine, self.null_half_length)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(Error::Invalid)?;
        if self.dim < 2 {
            return Err(Error::Invalid(format!("dim must be >= 2, got {}", self.dim)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Invalid(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.theta > 0.0) {
            return Err(Error::Invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.null_half_length > 2.1) {
            return Err(Error::Invalid(format!(
                "null_half_length must exceed the χ support 2.1, got {}",
                self.null_half_length
            )));
        }
        if self.data_refine == 0 || !self.data_refine.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "data_refine must be a power of two, got {}",
                self.data_refine
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Invalid(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if let Some(tc) = self.time_cutoff {
            if !(tc > 0.0) {
                return Err(Error::Invalid(format!("time_cutoff must be positive, got {tc}")));
            }
        }
        if self.x0.abs() + 2.1 * self.tau > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Invalid(format!(
                "patch |x0| + 2.1 tau = {} leaves the unwindowed region [-pi/2, pi/2]",
                self.x0.abs() + 2.1 * self.tau
            )));
        }
        self.null_grid()?;
        self.data_grid()?;
        Grid1D::periodic(self.global_points)?;
        Ok(())
    }
}

/// Extended second fundamental form of the sphere, shifted by the basepoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondFormClosure {
    pub shift: Vec<f64>,
}

impl SecondFormClosure {
    /// b(|φ+shift|)·(φ+shift)·⟨X, Y⟩.
    pub fn contract(&self, phi: &[f64], x: &[f64], y: &[f64], out: &mut [f64]) {
        let mut r2 = 0.0;
        for k in 0..phi.len() {
            let p = phi[k] + self.shift[k];
            r2 += p * p;
        }
        let b = form_bump(r2.sqrt());
        let xy: f64 = x.iter().zip(y).map(|(a, c)| a * c).sum();
        for k in 0..phi.len() {
            out[k] = b * (phi[k] + self.shift[k]) * xy;
        }
    }
}

pub fn second_form_contraction(closure: &SecondFormClosure, phi: &[f64], x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    closure.contract(phi, x, y, &mut out);
    out
}

/// Linear waves restricted to the null grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NullWaves {
    pub grid: Grid1D,
    pub theta: f64,
    /// D × n.
    pub plus: Array2<f64>,
    pub minus: Array2<f64>,
    pub dplus: Array2<f64>,
    pub dminus: Array2<f64>,
    pub shift: Vec<f64>,
}

impl NullWaves {
    /// Restrict waves living on a grid `r` times finer with the same half-length.
    pub fn restrict(waves: &LinearWaves, grid: Grid1D) -> Result<Self> {
        let fine = waves.grid;
        if (fine.half_length - grid.half_length).abs() > 1e-12 || fine.num_points % grid.num_points != 0 {
            return Err(Error::GridMismatch(format!(
                "data grid {fine:?} is not a refinement of the null grid {grid:?}"
            )));
        }
        let r = fine.num_points / grid.num_points;
        let d = waves.dim();
        let n = grid.num_points;
        let pick = |a: &Array2<f64>| Array2::from_shape_fn((d, n), |(k, i)| a[[k, i * r]]);
        Ok(Self {
            grid,
            theta: waves.theta,
            plus: pick(&waves.phi_plus),
            minus: pick(&waves.phi_minus),
            dplus: pick(&waves.dphi_plus),
            dminus: pick(&waves.dphi_minus),
            shift: waves.shift.clone(),
        })
    }

    pub fn zeros(grid: Grid1D, dim: usize, shift: Vec<f64>) -> Self {
        let z = Array2::<f64>::zeros((dim, grid.num_points));
        Self {
            grid,
            theta: 1.0,
            plus: z.clone(),
            minus: z.clone(),
            dplus: z.clone(),
            dminus: z,
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.plus.nrows()
    }

    /// Swap the roles of u and v: φ⁺ ↔ φ⁻.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid,
            theta: self.theta,
            plus: self.minus.clone(),
            minus: self.plus.clone(),
            dplus: self.dminus.clone(),
            dminus: self.dplus.clone(),
            shift: self.shift.clone(),
        }
    }
}

/// φ on the null grid with its null derivatives, one field per component.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveMapState {
    pub grid: Grid1D,
    pub phi: Vec<Field2D>,
    pub du: Vec<Field2D>,
    pub dv: Vec<Field2D>,
}

impl WaveMapState {
    pub fn zeros(grid: Grid1D, dim: usize) -> Self {
        let z = Field2D::zeros(grid, grid);
        Self {
            grid,
            phi: vec![z.clone(); dim],
            du: vec![z.clone(); dim],
            dv: vec![z; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// sup over components and samples of |φ − ψ|.
    pub fn sup_diff(&self, other: &WaveMapState) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.phi.iter().zip(&other.phi) {
            ndarray::Zip::from(&a.samples)
                .and(&b.samples)
                .for_each(|x, y| m = m.max((x - y).abs()));
        }
        m
    }

    /// Transpose every field and exchange ∂_u with ∂_v.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid,
            phi: self.phi.iter().map(|f| f.transpose()).collect(),
            du: self.dv.iter().map(|f| f.transpose()).collect(),
            dv: self.du.iter().map(|f| f.transpose()).collect(),
        }
    }
}

/// χ(u)θφ⁺(u) + χ(v)θφ⁻(v) with exact derivatives.
pub fn linear_evolution(waves: &NullWaves) -> WaveMapState {
    let g = waves.grid;
    let n = g.num_points;
    let th = waves.theta;
    let c: Vec<f64> = (0..n).map(|i| chi(g.x(i))).collect();
    let cd: Vec<f64> = (0..n).map(|i| chi_deriv(g.x(i))).collect();
    let mut st = WaveMapState::zeros(g, waves.dim());
    for k in 0..waves.dim() {
        let a: Vec<f64> = (0..n).map(|i| c[i] * th * waves.plus[[k, i]]).collect();
        let b: Vec<f64> = (0..n).map(|j| c[j] * th * waves.minus[[k, j]]).collect();
        let da: Vec<f64> = (0..n)
            .map(|i| th * (cd[i] * waves.plus[[k, i]] + c[i] * waves.dplus[[k, i]]))
            .collect();
        let db: Vec<f64> = (0..n)
            .map(|j| th * (cd[j] * waves.minus[[k, j]] + c[j] * waves.dminus[[k, j]]))
            .collect();
        st.phi[k].samples = Array2::from_shape_fn((n, n), |(i, j)| a[i] + b[j]);
        st.du[k].samples = Array2::from_shape_fn((n, n), |(i, _)| da[i]);
        st.dv[k].samples = Array2::from_shape_fn((n, n), |(_, j)| db[j]);
    }
    st
}

/// χ((v−u)/τ_c)·S^⋄(φ)(∂_uφ, ∂_vφ), one array per component.
fn nonlinearity(state: &WaveMapState, closure: &SecondFormClosure, time_cutoff: f64) -> Vec<Array2<f64>> {
    let g = state.grid;
    let n = g.num_points;
    let d = state.dim();
    let h = g.spacing();
    let mut out = vec![Array2::<f64>::zeros((n, n)); d];
    let mut p = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut s = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            let ct = chi((j as f64 - i as f64) * h / time_cutoff);
            if ct == 0.0 {
                continue;
            }
            for k in 0..d {
                p[k] = state.phi[k].samples[[i, j]];
                x[k] = state.du[k].samples[[i, j]];
                y[k] = state.dv[k].samples[[i, j]];
            }
            closure.contract(&p, &x, &y, &mut s);
            for k in 0..d {
                out[k][[i, j]] = ct * s[k];
            }
        }
    }
    out
}

/// ∫_u^v G(u, v′) dv′ along rows (trapezoid).
fn row_integral(gf: &Array2<f64>, h: f64) -> Array2<f64> {
    let n = gf.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let row: Vec<f64> = gf.row(i).to_vec();
        let c = cumulative_trapezoid(&row, h, 0);
        let base = c[i];
        for j in 0..n {
            out[[i, j]] = c[j] - base;
        }
    }
    out
}

/// −∫_u^v G(u′, v) du′ along columns (trapezoid).
fn col_integral(gf: &Array2<f64>, h: f64) -> Array2<f64> {
    let t = gf.t().to_owned();
    let r = row_integral(&t, h);
    // r[j, i] = ∫_{u_j}^{u_i} G(u′, v_j) du′ ; we need −∫_{u_i}^{v_j}, i.e. r[j, i] with i as the upper limit
    let n = gf.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| r[[j, i]])
}

/// One application of Γ.
pub fn picard_map(state: &WaveMapState, waves: &NullWaves, time_cutoff: f64) -> Result<WaveMapState> {
    let g = waves.grid;
    if !g.same_as(&state.grid) || waves.dim() != state.dim() {
        return Err(Error::GridMismatch("state and waves live on different grids".into()));
    }
    let n = g.num_points;
    let h = g.spacing();
    let closure = SecondFormClosure {
        shift: waves.shift.clone(),
    };
    let lin = linear_evolution(waves);
    let src = nonlinearity(state, &closure, time_cutoff);
    let c: Vec<f64> = (0..n).map(|i| chi(g.x(i))).collect();
    let cd: Vec<f64> = (0..n).map(|i| chi_deriv(g.x(i))).collect();
    let mut out = lin;
    for (k, gk) in src.iter().enumerate() {
        let duh = duhamel_direct(gk, h);
        let eu = row_integral(gk, h);
        let ev = col_integral(gk, h);
        let phi = &mut out.phi[k].samples;
        let du = &mut out.du[k].samples;
        let dv = &mut out.dv[k].samples;
        for i in 0..n {
            for j in 0..n {
                let dd = duh[[i, j]];
                phi[[i, j]] -= c[i] * c[j] * dd;
                du[[i, j]] -= cd[i] * c[j] * dd + c[i] * c[j] * eu[[i, j]];
                dv[[i, j]] -= c[i] * cd[j] * dd + c[i] * c[j] * ev[[i, j]];
            }
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite value in the Picard map".into()));
        }
    }
    Ok(out)
}

/// Per-iteration record of the fixed-point loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate Γ from `initial` (the linear evolution when `None`) until the sup
/// increment drops below `tol`.
pub fn solve_picard_from(
    waves: &NullWaves,
    time_cutoff: f64,
    tol: f64,
    max_iter: usize,
    initial: Option<WaveMapState>,
) -> Result<(WaveMapState, PicardDiagnostics)> {
    let mut phi = initial.unwrap_or_else(|| linear_evolution(waves));
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut streak = 0;
    for it in 1..=max_iter {
        let next = picard_map(&phi, waves, time_cutoff)?;
        let inc = next.sup_diff(&phi);
        phi = next;
        if let Some(&prev) = increments.last() {
            let ratio: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            // the increment can bottom out at roundoff level; only judge above it
            if ratio >= 0.9 && inc > 1e3 * f64::EPSILON {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        increments.push(inc);
        if inc < tol {
            return Ok((
                phi,
                PicardDiagnostics {
                    increments,
                    ratios,
                    iterations: it,
                    converged: true,
                },
            ));
        }
        if streak >= 3 {
            return Err(Error::NonContraction { increments });
        }
    }
    Err(Error::MaxIter {
        max_iter,
        last: increments.last().copied().unwrap_or(f64::NAN),
    })
}

pub fn solve_picard(waves: &NullWaves, cfg: &SolverConfig) -> Result<(WaveMapState, PicardDiagnostics)> {
    solve_picard_from(waves, cfg.time_cutoff(), cfg.picard_tol, cfg.max_iter, None)
}

/// Blow-up threshold of the characteristic march.
pub const ORACLE_BLOWUP: f64 = 10.0;

/// March the upper triangle j ≥ i of ∂_u∂_vφ = −χ((v−u)/τ_c) S^⋄(φ)(∂_uφ, ∂_vφ).
/// `phi[k]` must hold the diagonal and first off-diagonal on entry.
fn march_upper(
    phi: &mut [Array2<f64>],
    closure: &SecondFormClosure,
    h: f64,
    time_cutoff: f64,
    renormalize: bool,
) -> Result<()> {
    let d = phi.len();
    let n = phi[0].nrows();
    let mut pbar = vec![0.0; d];
    let mut xu = vec![0.0; d];
    let mut yv = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut base = vec![0.0; d];
    let mut guess = vec![0.0; d];
    for off in 2..n {
        // cell center sits at v − u = (off − 1) h
        let ct = chi((off as f64 - 1.0) * h / time_cutoff);
        for i in 0..n - off {
            let j = i + off;
            for k in 0..d {
                let a = phi[k][[i, j - 1]];
                let b = phi[k][[i + 1, j]];
                let c = phi[k][[i + 1, j - 1]];
                base[k] = a + b - c;
                guess[k] = base[k];
            }
            if ct != 0.0 {
                // predictor-corrector on the cell-centered source
                for _ in 0..3 {
                    for k in 0..d {
                        let a = phi[k][[i, j - 1]];
                        let b = phi[k][[i + 1, j]];
                        let c = phi[k][[i + 1, j - 1]];
                        let e = guess[k];
                        pbar[k] = 0.25 * (a + b + c + e);
                        xu[k] = ((b + c) - (e + a)) / (2.0 * h);
                        yv[k] = ((e + b) - (a + c)) / (2.0 * h);
                    }
                    closure.contract(&pbar, &xu, &yv, &mut s);
                    for k in 0..d {
                        guess[k] = base[k] + h * h * ct * s[k];
                    }
                }
            }
            if renormalize {
                let r: f64 = (0..d).map(|k| (guess[k] + closure.shift[k]).powi(2)).sum::<f64>().sqrt();
                if r > 0.0 {
                    for k in 0..d {
                        guess[k] = (guess[k] + closure.shift[k]) / r - closure.shift[k];
                    }
                }
            }
            for k in 0..d {
                if !(guess[k].abs() <= ORACLE_BLOWUP) {
                    return Err(Error::BlowUp {
                        offset: off,
                        value: guess[k].abs(),
                    });
                }
                phi[k][[i, j]] = guess[k];
            }
        }
    }
    Ok(())
}

/// Goursat data on the diagonal and the first off-diagonal, from the uncut linear waves.
fn seed_lines(phi: &mut [Array2<f64>], waves: &NullWaves, closure: &SecondFormClosure, time_cutoff: f64) {
    let g = waves.grid;
    let n = g.num_points;
    let h = g.spacing();
    let d = waves.dim();
    let th = waves.theta;
    let ct = chi(h / time_cutoff);
    let mut p = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut s = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            phi[k][[i, i]] = th * (waves.plus[[k, i]] + waves.minus[[k, i]]);
        }
        if i + 1 < n {
            for k in 0..d {
                let lin = th * (waves.plus[[k, i]] + waves.minus[[k, i + 1]]);
                // source at the centroid of the triangle between the two lines
                p[k] = th * (waves.plus[[k, i]] + waves.minus[[k, i + 1]]);
                x[k] = th * (2.0 * waves.dplus[[k, i]] + waves.dplus[[k, i + 1]]) / 3.0;
                y[k] = th * (waves.dminus[[k, i]] + 2.0 * waves.dminus[[k, i + 1]]) / 3.0;
                phi[k][[i, i + 1]] = lin;
            }
            closure.contract(&p, &x, &y, &mut s);
            for k in 0..d {
                phi[k][[i, i + 1]] += 0.5 * h * h * ct * s[k];
            }
        }
    }
}

/// Independent solution of the uncut equation (time cutoff only) on the
/// characteristic lattice. Agrees with the Picard fixed point where χ(u) = χ(v) = 1.
pub fn characteristic_oracle(waves: &NullWaves, time_cutoff: f64, renormalize: bool) -> Result<Vec<Field2D>> {
    let g = waves.grid;
    let n = g.num_points;
    let d = waves.dim();
    let closure = SecondFormClosure {
        shift: waves.shift.clone(),
    };
    let mut upper = vec![Array2::<f64>::zeros((n, n)); d];
    seed_lines(&mut upper, waves, &closure, time_cutoff);
    march_upper(&mut upper, &closure, g.spacing(), time_cutoff, renormalize)?;
    // lower triangle: the same problem with u and v exchanged
    let sw = waves.swapped();
    let mut lower = vec![Array2::<f64>::zeros((n, n)); d];
    seed_lines(&mut lower, &sw, &closure, time_cutoff);
    march_upper(&mut lower, &closure, g.spacing(), time_cutoff, renormalize)?;
    Ok((0..d)
        .map(|k| {
            let s = Array2::from_shape_fn((n, n), |(i, j)| {
                if j >= i {
                    upper[k][[i, j]]
                } else {
                    lower[k][[j, i]]
                }
            });
            Field2D {
                grid_u: g,
                grid_v: g,
                samples: s,
            }
        })
        .collect())
}

/// Region where every cutoff equals one: |u|, |v| ≤ `half` and |v − u| ≤ 2τ_c.
pub fn inner_mask(grid: Grid1D, half: f64, time_cutoff: f64) -> impl Fn(usize, usize) -> bool {
    move |i, j| {
        let u = grid.x(i);
        let v = grid.x(j);
        u.abs() <= half && v.abs() <= half && (v - u).abs() <= 2.0 * time_cutoff
    }
}

/// sup of |∂_u∂_vφ + χ_t S^⋄(φ)(∂_uφ, ∂_vφ)| with all derivatives by central
/// differences of φ, over the inner region shrunk by two cells.
pub fn residual(phi: &[Field2D], shift: &[f64], time_cutoff: f64) -> f64 {
    let g = phi[0].grid_u;
    let n = g.num_points;
    let h = g.spacing();
    let d = phi.len();
    let closure = SecondFormClosure { shift: shift.to_vec() };
    let inside = inner_mask(g, 2.0 - 2.0 * h, time_cutoff - h);
    let mut p = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            if !inside(i, j) {
                continue;
            }
            let ct = chi((g.x(j) - g.x(i)) / time_cutoff);
            let mut mixed = vec![0.0; d];
            for k in 0..d {
                let f = &phi[k].samples;
                p[k] = f[[i, j]];
                x[k] = (f[[i + 1, j]] - f[[i - 1, j]]) / (2.0 * h);
                y[k] = (f[[i, j + 1]] - f[[i, j - 1]]) / (2.0 * h);
                mixed[k] = (f[[i + 1, j + 1]] - f[[i + 1, j - 1]] - f[[i - 1, j + 1]] + f[[i - 1, j - 1]]) / (4.0 * h * h);
            }
            closure.contract(&p, &x, &y, &mut s);
            for k in 0..d {
                worst = worst.max((mixed[k] + ct * s[k]).abs());
            }
        }
    }
    worst
}

/// sup over the inner region of | |φ + shift| − 1 |.
pub fn sphere_defect(phi: &[Field2D], shift: &[f64], time_cutoff: f64) -> f64 {
    let g = phi[0].grid_u;
    let n = g.num_points;
    let inside = inner_mask(g, 2.0, time_cutoff);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if !inside(i, j) {
                continue;
            }
            let r: f64 = phi
                .iter()
                .zip(shift)
                .map(|(f, s)| (f.samples[[i, j]] + s).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max((r - 1.0).abs());
        }
    }
    worst
}

/// sup over the inner region of |φ − ψ|.
pub fn inner_sup_diff(a: &[Field2D], b: &[Field2D], time_cutoff: f64) -> f64 {
    let g = a[0].grid_u;
    let n = g.num_points;
    let inside = inner_mask(g, 2.0, time_cutoff);
    let mut worst = 0.0f64;
    for (fa, fb) in a.iter().zip(b) {
        for i in 0..n {
            for j in 0..n {
                if inside(i, j) {
                    worst = worst.max((fa.samples[[i, j]] - fb.samples[[i, j]]).abs());
                }
            }
        }
    }
    worst
}

/// Position, velocity and ∂_x at a fixed time, on the x-samples whose null
/// coordinates stay inside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianSlice {
    pub t: f64,
    pub x: Vec<f64>,
    /// D rows.
    pub position: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
    /// "grid" when x ± t are grid points, "bilinear" otherwise.
    pub interpolation: String,
}

fn bilinear(f: &Array2<f64>, g: &Grid1D, u: f64, v: f64) -> f64 {
    let h = g.spacing();
    let n = g.num_points;
    let a = ((u + g.half_length) / h).clamp(0.0, (n - 1) as f64);
    let b = ((v + g.half_length) / h).clamp(0.0, (n - 1) as f64);
    let i = (a.floor() as usize).min(n - 2);
    let j = (b.floor() as usize).min(n - 2);
    let (s, t) = (a - i as f64, b - j as f64);
    (1.0 - s) * (1.0 - t) * f[[i, j]] + s * (1.0 - t) * f[[i + 1, j]] + (1.0 - s) * t * f[[i, j + 1]] + s * t * f[[i + 1, j + 1]]
}

/// φ(t, x) = φ̃(x − t, x + t), ∂_tφ = ∂_vφ − ∂_uφ, ∂_xφ = ∂_uφ + ∂_vφ.
pub fn null_to_cartesian(state: &WaveMapState, t: f64) -> Result<CartesianSlice> {
    let g = state.grid;
    let n = g.num_points;
    let h = g.spacing();
    let d = state.dim();
    let lim = g.half_length;
    if !(t.abs() < lim) {
        return Err(Error::OutOfRange { x: t, lo: -lim, hi: lim });
    }
    let k = t / h;
    let on_grid = (k - k.round()).abs() < 1e-9;
    let mut out = CartesianSlice {
        t,
        x: Vec::new(),
        position: vec![Vec::new(); d],
        velocity: vec![Vec::new(); d],
        dx: vec![Vec::new(); d],
        interpolation: if on_grid { "grid".into() } else { "bilinear".into() },
    };
    if on_grid {
        let k = k.round() as i64;
        for i in 0..n as i64 {
            let (a, b) = (i - k, i + k);
            if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            out.x.push(g.x(i as usize));
            for q in 0..d {
                let du = state.du[q].samples[[a, b]];
                let dv = state.dv[q].samples[[a, b]];
                out.position[q].push(state.phi[q].samples[[a, b]]);
                out.velocity[q].push(dv - du);
                out.dx[q].push(du + dv);
            }
        }
    } else {
        for i in 0..n {
            let x = g.x(i);
            let (u, v) = (x - t, x + t);
            if u < g.x(0) || v < g.x(0) || u > g.x(n - 1) || v > g.x(n - 1) {
                continue;
            }
            out.x.push(x);
            for q in 0..d {
                let du = bilinear(&state.du[q].samples, &g, u, v);
                let dv = bilinear(&state.dv[q].samples, &g, u, v);
                out.position[q].push(bilinear(&state.phi[q].samples, &g, u, v));
                out.velocity[q].push(dv - du);
                out.dx[q].push(du + dv);
            }
        }
    }
    Ok(out)
}

/// (1/2)∫ |∂_xφ|² + |∂_tφ|² dx by the trapezoid rule over the slice.
pub fn hamiltonian_energy(slice: &CartesianSlice) -> f64 {
    let m = slice.x.len();
    if m < 2 {
        return 0.0;
    }
    let dens: Vec<f64> = (0..m)
        .map(|i| {
            slice
                .dx
                .iter()
                .zip(&slice.velocity)
                .map(|(a, b)| a[i] * a[i] + b[i] * b[i])
                .sum::<f64>()
        })
        .collect();
    let mut e = 0.0;
    for i in 1..m {
        e += 0.5 * (slice.x[i] - slice.x[i - 1]) * (dens[i] + dens[i - 1]);
    }
    0.5 * e
}

/// Cartesian slice of an oracle field (φ values only): derivatives by central
/// differences in the null directions.
pub fn oracle_state(phi: Vec<Field2D>) -> WaveMapState {
    let g = phi[0].grid_u;
    let n = g.num_points;
    let h = g.spacing();
    let diff = |f: &Array2<f64>, axis: usize| {
        Array2::from_shape_fn((n, n), |(i, j)| {
            let (lo, hi) = if axis == 0 {
                (f[[i.saturating_sub(1), j]], f[[(i + 1).min(n - 1), j]])
            } else {
                (f[[i, j.saturating_sub(1)]], f[[i, (j + 1).min(n - 1)]])
            };
            let span = if axis == 0 {
                ((i + 1).min(n - 1) - i.saturating_sub(1)) as f64
            } else {
                ((j + 1).min(n - 1) - j.saturating_sub(1)) as f64
            };
            (hi - lo) / (span * h)
        })
    };
    let du = phi
        .iter()
        .map(|f| Field2D { grid_u: g, grid_v: g, samples: diff(&f.samples, 0) })
        .collect();
    let dv = phi
        .iter()
        .map(|f| Field2D { grid_u: g, grid_v: g, samples: diff(&f.samples, 1) })
        .collect();
    WaveMapState { grid: g, phi, du, dv }
}

/// Everything the pipeline builds for one (seed, ε, τ, x₀).
#[derive(Debug, Clone)]
pub struct PatchData {
    pub w_eps: Vec<Signal>,
    pub wbar_eps: Vec<Signal>,
    pub local: LocalizedData,
    pub waves: LinearWaves,
    pub null_waves: NullWaves,
}

/// Global W^ε, W̄^ε and B^ε for a seed.
pub fn global_data(cfg: &SolverConfig) -> Result<(Vec<Signal>, Vec<Signal>, crate::randomdata::BrownianPath)> {
    let gg = Grid1D::periodic(cfg.global_points)?;
    let m = SphereManifold::new(cfg.dim)?;
    let w: Vec<Signal> = bm_increment_signals(cfg.seed, gg, cfg.dim, StreamKind::Increments)
        .iter()
        .map(|s| smooth_truncate(s, cfg.eps))
        .collect::<Result<_>>()?;
    let wb: Vec<Signal> = bm_increment_signals(cfg.seed, gg, cfg.dim, StreamKind::IncrementsBar)
        .iter()
        .map(|s| smooth_truncate(s, cfg.eps))
        .collect::<Result<_>>()?;
    let mut path = global_path(&w, &m.default_basepoint(), &m, cfg.substeps)?;
    path.epsilon = Some(cfg.eps);
    Ok((w, wb, path))
}

/// Rescaled, localized data and linear waves on the null grid at patch center `x0`.
pub fn build_patch(
    cfg: &SolverConfig,
    global: &(Vec<Signal>, Vec<Signal>, crate::randomdata::BrownianPath),
    x0: f64,
) -> Result<PatchData> {
    let m = SphereManifold::new(cfg.dim)?;
    let dg = cfg.data_grid()?;
    let local = localize_rescale(&global.0, &global.1, &global.2, cfg.tau, x0, dg, &m, cfg.substeps)?;
    let waves = linear_waves(&local.path, &local.velocity, cfg.theta)?;
    let null_waves = NullWaves::restrict(&waves, cfg.null_grid()?)?;
    Ok(PatchData {
        w_eps: global.0.clone(),
        wbar_eps: global.1.clone(),
        local,
        waves,
        null_waves,
    })
}

/// Waves on the null grid from explicit position/velocity profiles (used by tests
/// and the ill-posedness cross-check): φ^± = (φ₀ ∓ ∫_0^x φ₁)/(2θ).
pub fn waves_from_profiles(
    grid: Grid1D,
    pos: &[Field1D],
    dpos: &[Field1D],
    vel: &[Field1D],
    vel_int: &[Field1D],
    theta: f64,
    shift: Vec<f64>,
) -> NullWaves {
    let d = pos.len();
    let n = grid.num_points;
    let c = 1.0 / (2.0 * theta);
    let mk = |f: &dyn Fn(usize, usize) -> f64| Array2::from_shape_fn((d, n), |(k, i)| f(k, i));
    NullWaves {
        grid,
        theta,
        plus: mk(&|k, i| c * (pos[k].samples[i] - vel_int[k].samples[i])),
        minus: mk(&|k, i| c * (pos[k].samples[i] + vel_int[k].samples[i])),
        dplus: mk(&|k, i| c * (dpos[k].samples[i] - vel[k].samples[i])),
        dminus: mk(&|k, i| c * (dpos[k].samples[i] + vel[k].samples[i])),
        shift,
    }
}

/// One row of the ε-convergence table: differences between ε_i and ε_{i+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// sup over the t-grid of the windowed C^s norm of the position difference.
    pub d_c0cs: Option<f64>,
    /// sup over the t-grid of the windowed C^{s−1} norm of the velocity difference.
    pub d_c1cs1: Option<f64>,
    /// Windowed C^s norm of B^{ε_i} − B^{ε_{i+1}} on the global grid.
    pub data_diff: Option<f64>,
    /// Windowed C^{s−1} norm of V^{ε_i} − V^{ε_{i+1}} on the global grid.
    pub data_diff_velocity: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

/// Agreement of two overlapping patches on their common exact region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCheck {
    pub x0_a: f64,
    pub x0_b: f64,
    /// sup of |(φ_a + shift_a) − (φ_b + shift_b)| over the shared region.
    pub difference: f64,
    /// Picard-vs-oracle sup difference of patch a, the discretization tolerance.
    pub solver_tolerance: f64,
    pub compared_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub seed: u64,
    pub tau: f64,
    pub x0: f64,
    pub s: f64,
    pub t_samples: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    pub patch: Option<PatchCheck>,
}

/// Slices of the solution at the t-grid, in rescaled coordinates.
struct SolvedPatch {
    slices: Vec<CartesianSlice>,
    iterations: usize,
}

/// Time samples: `count` multiples of h spread over [−τ_c, τ_c].
pub fn time_samples(grid: Grid1D, time_cutoff: f64, count: usize) -> Vec<f64> {
    let h = grid.spacing();
    let kmax = (time_cutoff / h).floor() as i64;
    let count = count.max(2);
    let mut ks: Vec<i64> = (0..count)
        .map(|j| (-kmax as f64 + 2.0 * kmax as f64 * j as f64 / (count - 1) as f64).round() as i64)
        .collect();
    ks.dedup();
    ks.into_iter().map(|k| k as f64 * h).collect()
}

/// Spatial weight for the solution norms: 1 on |x| ≤ 1.9 − τ_c, 0 beyond 2 − τ_c.
fn solution_weight(x: f64, time_cutoff: f64) -> f64 {
    plateau(x, 1.9 - time_cutoff, 2.0 - time_cutoff)
}

fn weighted_slice_field(grid: Grid1D, slice: &CartesianSlice, rows: &[Vec<f64>], k: usize, tc: f64) -> Field1D {
    let mut f = Field1D::zeros(grid);
    for (m, &x) in slice.x.iter().enumerate() {
        if let Some(i) = grid.index_of(x) {
            f.samples[i] = solution_weight(x, tc) * rows[k][m];
        }
    }
    f
}

fn solve_for_eps(cfg: &SolverConfig, ts: &[f64]) -> Result<(SolvedPatch, crate::randomdata::BrownianPath, VelocityField)> {
    let global = global_data(cfg)?;
    let m = SphereManifold::new(cfg.dim)?;
    let vel = white_noise_velocity(&global.2, &global.1, &m)?;
    let patch = build_patch(cfg, &global, cfg.x0)?;
    let (state, diag) = solve_picard(&patch.null_waves, cfg)?;
    let mut slices = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut sl = null_to_cartesian(&state, t)?;
        for (k, row) in sl.position.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v += patch.null_waves.shift[k];
            }
        }
        slices.push(sl);
    }
    Ok((
        SolvedPatch {
            slices,
            iterations: diag.iterations,
        },
        global.2,
        vel,
    ))
}

/// ε-convergence of the full pipeline at one patch, plus the patch-overlap check.
///
/// Norms are taken in the rescaled patch coordinates over |x| ≤ 2 − τ_c and
/// |t| ≤ τ_c, the region where the localized problem coincides with the wave map.
pub fn convergence_experiment(cfg: &SolverConfig, eps_list: &[f64], t_count: usize, patch_check: bool) -> Result<ConvergenceTable> {
    cfg.validate()?;
    for w in eps_list.windows(2) {
        if !(w[1] <= w[0]) {
            return Err(Error::Invalid("eps_list must be non-increasing".into()));
        }
    }
    let grid = cfg.null_grid()?;
    let tc = cfg.time_cutoff();
    let s = cfg.params.s;
    let ts = time_samples(grid, tc, t_count);
    let solved: Vec<Result<(SolvedPatch, crate::randomdata::BrownianPath, VelocityField)>> = eps_list
        .iter()
        .map(|&eps| solve_for_eps(&SolverConfig { eps, ..cfg.clone() }, &ts))
        .collect();
    let gg = Grid1D::periodic(cfg.global_points)?;
    let gw = |x: f64| window(x, gg.half_length);
    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        let mut row = ConvergenceRow {
            eps,
            d_c0cs: None,
            d_c1cs1: None,
            data_diff: None,
            data_diff_velocity: None,
            iterations: solved[i].as_ref().ok().map(|p| p.0.iterations),
            error: solved[i].as_ref().err().map(|e| e.to_string()),
        };
        if let (Ok(a), Some(Ok(b))) = (&solved[i], solved.get(i + 1)) {
            let mut d0 = 0.0f64;
            let mut d1 = 0.0f64;
            for (sa, sb) in a.0.slices.iter().zip(&b.0.slices) {
                for k in 0..cfg.dim {
                    let pa = weighted_slice_field(grid, sa, &sa.position, k, tc);
                    let pb = weighted_slice_field(grid, sb, &sb.position, k, tc);
                    d0 = d0.max(holder_norm(&pa.sub(&pb)?, s));
                    let va = weighted_slice_field(grid, sa, &sa.velocity, k, tc);
                    let vb = weighted_slice_field(grid, sb, &sb.velocity, k, tc);
                    d1 = d1.max(holder_norm(&va.sub(&vb)?, s - 1.0));
                }
            }
            row.d_c0cs = Some(d0);
            row.d_c1cs1 = Some(d1);
            let mut db = 0.0f64;
            let mut dv = 0.0f64;
            for k in 0..cfg.dim {
                let ba = a.1.component(k);
                let bb = b.1.component(k);
                db = db.max(holder_norm(&ba.zip(&bb, |p, q| p - q)?.mul(&Field1D::from_fn(gg, gw))?, s));
                let va = Field1D::new(gg, a.2.v.row(k).to_vec())?;
                let vb = Field1D::new(gg, b.2.v.row(k).to_vec())?;
                dv = dv.max(holder_norm(&va.sub(&vb)?.mul(&Field1D::from_fn(gg, gw))?, s - 1.0));
            }
            row.data_diff = Some(db);
            row.data_diff_velocity = Some(dv);
        }
        rows.push(row);
    }
    let patch = if patch_check { Some(patch_consistency(cfg, grid.num_points / 8)?) } else { None };
    Ok(ConvergenceTable {
        seed: cfg.seed,
        tau: cfg.tau,
        x0: cfg.x0,
        s,
        t_samples: ts,
        rows,
        patch,
    })
}

/// Solve at x₀ and at x₀ + τ·shift·h and compare positions where both patches are exact.
pub fn patch_consistency(cfg: &SolverConfig, shift: usize) -> Result<PatchCheck> {
    let grid = cfg.null_grid()?;
    let h = grid.spacing();
    let tc = cfg.time_cutoff();
    let x0b = cfg.x0 + cfg.tau * shift as f64 * h;
    let global = global_data(cfg)?;
    let pa = build_patch(cfg, &global, cfg.x0)?;
    let pb = build_patch(cfg, &global, x0b)?;
    let (sa, _) = solve_picard(&pa.null_waves, cfg)?;
    let (sb, _) = solve_picard(&pb.null_waves, cfg)?;
    let oracle = characteristic_oracle(&pa.null_waves, tc, cfg.oracle_renormalize)?;
    let solver_tolerance = inner_sup_diff(&sa.phi, &oracle, tc);
    // a point (u, v) of patch a sits at (u − shift·h, v − shift·h) in patch b
    let inside = inner_mask(grid, 2.0, tc);
    let n = grid.num_points;
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in shift..n {
        for j in shift..n {
            let (ib, jb) = (i - shift, j - shift);
            if !inside(i, j) || !inside(ib, jb) {
                continue;
            }
            count += 1;
            for k in 0..cfg.dim {
                let a = sa.phi[k].samples[[i, j]] + pa.null_waves.shift[k];
                let b = sb.phi[k].samples[[ib, jb]] + pb.null_waves.shift[k];
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(PatchCheck {
        x0_a: cfg.x0,
        x0_b: x0b,
        difference: worst,
        solver_tolerance,
        compared_points: count,
    })
}
