//! Brownian motion, its smooth truncations, sphere-valued Brownian paths driven by
//! smooth ODEs, tangential white-noise velocities and the rescaled, localized data
//! fed to the solver.

use crate::cutoff::{chi, chi_deriv, projection_bump};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{Field1D, Grid1D};
use crate::spectral::{self, cumulative_trapezoid, Axis};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Stream families; the ChaCha20 stream id is `kind * 1024 + component`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Increments = 0,
    IncrementsBar = 1,
    Fourier = 2,
    FourierBar = 3,
}

/// ChaCha20 seeded with `seed_from_u64(seed)` on stream `kind * 1024 + component`.
pub fn rng(seed: u64, kind: StreamKind, component: usize) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(kind as u64 * 1024 + component as u64);
    r
}

/// Human-readable description of the generator contract, recorded in metadata.
pub const RNG_CONTRACT: &str = "ChaCha20 (rand_chacha 0.9): seed_from_u64(seed), set_stream(kind*1024 + component); \
kinds 0 = W increments, 1 = Wbar increments, 2 = W Fourier, 3 = Wbar Fourier; normals via rand_distr StandardNormal";

/// A scalar driving signal: periodic samples plus an explicit linear drift,
/// value(x) = field(x) + drift·x.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub field: Field1D,
    pub drift: f64,
}

impl Signal {
    pub fn values(&self) -> Vec<f64> {
        let g = self.field.grid;
        (0..g.num_points)
            .map(|j| self.field.samples[j] + self.drift * g.x(j))
            .collect()
    }

    /// ∂_x: spectral derivative of the periodic part plus the drift.
    pub fn derivative(&self) -> Result<Field1D> {
        let d = spectral::derivative(&self.field, Axis::X)?;
        Ok(d.map(|v| v + self.drift))
    }

    pub fn eval(&self, points: &[f64]) -> Result<Vec<f64>> {
        let vals = spectral::resample(&self.field, points)?;
        Ok(vals
            .into_iter()
            .zip(points)
            .map(|(v, &x)| v + self.drift * x)
            .collect())
    }
}

/// Brownian motion from i.i.d. N(0, h) increments, pinned to W(0) = 0 at the
/// origin sample, one field per component.
pub fn sample_bm_increments(seed: u64, grid: Grid1D, dim: usize, kind: StreamKind) -> Vec<Field1D> {
    let n = grid.num_points;
    let o = grid.origin();
    let sd = grid.spacing().sqrt();
    (0..dim)
        .map(|c| {
            let mut r = rng(seed, kind, c);
            let mut w = vec![0.0; n];
            // forward increments first, then backward, in a fixed order
            for j in o + 1..n {
                let z: f64 = StandardNormal.sample(&mut r);
                w[j] = w[j - 1] + sd * z;
            }
            for j in (0..o).rev() {
                let z: f64 = StandardNormal.sample(&mut r);
                w[j] = w[j + 1] - sd * z;
            }
            Field1D { grid, samples: w }
        })
        .collect()
}

/// Windowed increment Brownian motion as a periodic signal without drift.
pub fn bm_increment_signals(seed: u64, grid: Grid1D, dim: usize, kind: StreamKind) -> Vec<Signal> {
    sample_bm_increments(seed, grid, dim, kind)
        .into_iter()
        .map(|w| Signal {
            field: spectral::rewindow(&w),
            drift: 0.0,
        })
        .collect()
}

/// Random Fourier series W(x) = g_0 x/√(2π) + Σ_{0<|m|≤M} g_m (e^{imx} − 1)/(√(2π) i m)
/// with g_{−m} = conj(g_m).
pub fn sample_bm_fourier(
    seed: u64,
    m_max: usize,
    grid: Grid1D,
    dim: usize,
    kind: StreamKind,
) -> Result<Vec<Signal>> {
    if (grid.half_length - PI).abs() > 1e-12 {
        return Err(Error::Invalid("Fourier-series Brownian motion needs L = π".into()));
    }
    let n = grid.num_points;
    if m_max >= n / 2 {
        return Err(Error::Unresolved {
            n: m_max as f64,
            max: (n / 2 - 1) as f64,
        });
    }
    let norm = 1.0 / (2.0 * PI).sqrt();
    let half = 0.5f64.sqrt();
    let mut out = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut r = rng(seed, kind, c);
        let g0: f64 = StandardNormal.sample(&mut r);
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        let mut c0 = Complex64::new(0.0, 0.0);
        for m in 1..=m_max {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            let g = Complex64::new(half * re, half * im);
            let cm = g * norm / Complex64::new(0.0, m as f64);
            // the grid starts at x = −π, so e^{imx_j} = (−1)^m e^{2πi mj/n}
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            spec[m] = cm * sign * n as f64;
            spec[n - m] = cm.conj() * sign * n as f64;
            c0 += cm + cm.conj();
        }
        spec[0] = -c0 * n as f64;
        let mut buf = spec;
        fft::inverse(&mut buf);
        let samples: Vec<f64> = buf.iter().map(|z| z.re).collect();
        let mut field = Field1D { grid, samples };
        // remove roundoff at the origin so W(0) = 0 holds exactly
        let o = grid.origin();
        let w0 = field.samples[o];
        field.samples.iter_mut().for_each(|v| *v -= w0);
        out.push(Signal {
            field,
            drift: g0 * norm,
        });
    }
    Ok(out)
}

/// Closed-form variance of the truncated Fourier series at x.
pub fn fourier_series_variance(m_max: usize, x: f64) -> f64 {
    let mut v = x * x / (2.0 * PI);
    for m in 1..=m_max {
        let mf = m as f64;
        let d2 = 2.0 - 2.0 * (mf * x).cos();
        v += 2.0 * d2 / (2.0 * PI * mf * mf);
    }
    v
}

/// W^ε = P_{≤1/ε} W on the periodic part; the drift passes through.
pub fn smooth_truncate(w: &Signal, eps: f64) -> Result<Signal> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {eps}")));
    }
    let n = 1.0 / eps;
    let grid = w.field.grid;
    if 9.0 * n / 8.0 > grid.nyquist() {
        return Err(Error::Unresolved {
            n,
            max: grid.nyquist() * 8.0 / 9.0,
        });
    }
    Ok(Signal {
        field: spectral::low_pass(&w.field, Axis::X, n)?,
        drift: w.drift,
    })
}

/// Round sphere S^{D−1} ⊂ ℝ^D with a compactly supported extension of the
/// tangential projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereManifold {
    pub dim: usize,
}

impl SphereManifold {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid(format!("sphere needs D >= 2, got {dim}")));
        }
        Ok(Self { dim })
    }

    /// P_ext(p) X = X − w(|p|) p ⟨p, X⟩ / |p|².
    pub fn project(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let r2: f64 = p.iter().map(|a| a * a).sum();
        let w = if r2 > 0.0 { projection_bump(r2.sqrt()) } else { 0.0 };
        let px: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
        let c = if r2 > 0.0 { w * px / r2 } else { 0.0 };
        for k in 0..p.len() {
            out[k] = x[k] - c * p[k];
        }
    }

    pub fn default_basepoint(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        b[self.dim - 1] = 1.0;
        b
    }
}

/// Path on the sphere sampled on a grid, with its tangent for Hermite evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: Grid1D,
    /// D × num_points.
    pub samples: Array2<f64>,
    /// ∂_x B at the samples.
    pub tangent: Array2<f64>,
    pub basepoint: Vec<f64>,
    pub epsilon: Option<f64>,
    /// Largest pre-renormalization | |B|² − 1 | over all steps.
    pub constraint_drift: f64,
}

impl BrownianPath {
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn component(&self, k: usize) -> Field1D {
        Field1D {
            grid: self.grid,
            samples: self.samples.row(k).to_vec(),
        }
    }

    /// sup_j | |B(x_j)|² − 1 |.
    pub fn sphere_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.grid.num_points {
            let r2: f64 = self.samples.column(j).iter().map(|a| a * a).sum();
            m = m.max((r2 - 1.0).abs());
        }
        m
    }

    /// Cubic Hermite interpolation from samples and tangents.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let g = self.grid;
        let h = g.spacing();
        let t = (x + g.half_length) / h;
        let last = (g.num_points - 1) as f64;
        if !(t >= -1e-9 && t <= last + 1e-9) {
            return Err(Error::OutOfRange {
                x,
                lo: g.x(0),
                hi: g.x(g.num_points - 1),
            });
        }
        let t = t.clamp(0.0, last);
        let j = (t.floor() as usize).min(g.num_points - 2);
        let s = t - j as f64;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok((0..self.dim())
            .map(|k| {
                h00 * self.samples[[k, j]]
                    + h10 * h * self.tangent[[k, j]]
                    + h01 * self.samples[[k, j + 1]]
                    + h11 * h * self.tangent[[k, j + 1]]
            })
            .collect())
    }
}

/// Largest allowed per-step pre-renormalization drift.
pub const STEP_DRIFT_LIMIT: f64 = 1e-3;

/// Driving values on a refined grid: sample k sits at x = −L + k·h/factor, with
/// factor = 2·substeps so every RK4 stage lands on a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FineForcing {
    pub grid: Grid1D,
    pub substeps: usize,
    /// D rows of length num_points·2·substeps.
    pub values: Vec<Vec<f64>>,
}

impl FineForcing {
    pub fn factor(&self) -> usize {
        2 * self.substeps
    }

    /// Spectral (zero-padded) refinement of band-limited grid fields.
    pub fn from_fields(fields: &[Field1D], substeps: usize) -> Result<Self> {
        let substeps = substeps.max(1);
        let grid = fields
            .first()
            .ok_or_else(|| Error::Invalid("no forcing components".into()))?
            .grid;
        for f in fields {
            crate::grid::check_same(&grid, &f.grid)?;
        }
        Ok(Self {
            grid,
            substeps,
            values: fields.iter().map(|f| upsample(f, 2 * substeps)).collect(),
        })
    }

    /// Pointwise evaluation of a vector-valued driver on the refined grid.
    pub fn from_fn(grid: Grid1D, dim: usize, substeps: usize, f: impl Fn(&[f64]) -> Result<Vec<Vec<f64>>>) -> Result<Self> {
        let substeps = substeps.max(1);
        let nf = grid.num_points * 2 * substeps;
        let hf = grid.spacing() / (2 * substeps) as f64;
        let xs: Vec<f64> = (0..nf).map(|k| -grid.half_length + k as f64 * hf).collect();
        let values = f(&xs)?;
        if values.len() != dim || values.iter().any(|v| v.len() != nf) {
            return Err(Error::Invalid("fine forcing has the wrong shape".into()));
        }
        Ok(Self {
            grid,
            substeps,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Values at the coarse grid points.
    pub fn at_grid(&self, k: usize, j: usize) -> f64 {
        self.values[k][j * self.factor()]
    }
}

/// Zero-padded spectral upsampling by an integer factor.
fn upsample(f: &Field1D, factor: usize) -> Vec<f64> {
    let n = f.grid.num_points;
    let nf = n * factor;
    let spec = fft::forward_real(&f.samples);
    let mut big = vec![Complex64::new(0.0, 0.0); nf];
    for m in 0..n {
        let k = fft::mode(m, n);
        if k == -(n as i64) / 2 {
            // split the Nyquist mode symmetrically
            big[n / 2] = spec[m] * 0.5;
            big[nf - n / 2] = spec[m] * 0.5;
            continue;
        }
        let idx = if k >= 0 { k as usize } else { (nf as i64 + k) as usize };
        big[idx] = spec[m];
    }
    let mut out = fft::inverse_real(big);
    out.iter_mut().for_each(|v| *v *= factor as f64);
    out
}

/// Integrate ∂_x B = λ P_ext(B) forcing(x) from B(0) = B0 in both directions by
/// RK4 with `substeps` steps per grid cell and renormalization after each step.
/// The forcing fields are refined spectrally, so they should be band-limited.
pub fn solve_path_ode(
    forcing: &[Field1D],
    b0: &[f64],
    manifold: &SphereManifold,
    lambda: f64,
    substeps: usize,
) -> Result<BrownianPath> {
    let fine = FineForcing::from_fields(forcing, substeps)?;
    Ok(integrate_path(&fine, None, b0, manifold, lambda)?.0)
}

/// RK4 integration of B, and optionally of 𝒱 with ∂_x 𝒱 = λ P_ext(B) velocity(x),
/// starting from B(0) = B0 and 𝒱(0) = 0.
pub fn integrate_path(
    forcing: &FineForcing,
    velocity: Option<&FineForcing>,
    b0: &[f64],
    manifold: &SphereManifold,
    lambda: f64,
) -> Result<(BrownianPath, Option<VelocityField>)> {
    let d = manifold.dim;
    if forcing.dim() != d || b0.len() != d {
        return Err(Error::Invalid(format!(
            "dimension mismatch: D = {d}, forcing {}, basepoint {}",
            forcing.dim(),
            b0.len()
        )));
    }
    if let Some(v) = velocity {
        if v.dim() != d || v.substeps != forcing.substeps || !v.grid.same_as(&forcing.grid) {
            return Err(Error::Invalid("velocity driver does not match the forcing".into()));
        }
    }
    let r0: f64 = b0.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (r0 - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("basepoint must be a unit vector, |B0| = {r0}")));
    }
    let grid = forcing.grid;
    let n = grid.num_points;
    let substeps = forcing.substeps;
    let factor = forcing.factor();
    let dt = grid.spacing() / substeps as f64;
    let o = grid.origin();
    let with_v = velocity.is_some();

    let mut samples = Array2::<f64>::zeros((d, n));
    let mut vint = Array2::<f64>::zeros((d, n));
    let mut max_drift = 0.0f64;

    // right-hand side for B and 𝒱 at refined index fi
    let rhs = |b: &[f64], fi: usize, kb: &mut [f64], kv: &mut [f64]| {
        let x: Vec<f64> = (0..d).map(|k| lambda * forcing.values[k][fi]).collect();
        manifold.project(b, &x, kb);
        if let Some(v) = velocity {
            let y: Vec<f64> = (0..d).map(|k| lambda * v.values[k][fi]).collect();
            manifold.project(b, &y, kv);
        }
    };

    for k in 0..d {
        samples[[k, o]] = b0[k];
    }
    let mut b = b0.to_vec();
    let mut vi = vec![0.0; d];
    let mut kb = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut kv = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp = vec![0.0; d];

    for dir in [1i64, -1i64] {
        b.copy_from_slice(b0);
        vi.iter_mut().for_each(|a| *a = 0.0);
        let steps = if dir > 0 { n - 1 - o } else { o };
        for s in 0..steps {
            let cell = o as i64 + dir * s as i64;
            for sub in 0..substeps {
                let i0 = cell * factor as i64 + dir * (2 * sub) as i64;
                let idx = [i0 as usize, (i0 + dir) as usize, (i0 + dir) as usize, (i0 + 2 * dir) as usize];
                let step = dir as f64 * dt;
                let coef = [0.0, 0.5, 0.5, 1.0];
                for stage in 0..4 {
                    if stage == 0 {
                        tmp.copy_from_slice(&b);
                    } else {
                        for q in 0..d {
                            tmp[q] = b[q] + coef[stage] * step * kb[stage - 1][q];
                        }
                    }
                    let (kbs, kvs) = (&mut kb[stage], &mut kv[stage]);
                    rhs(&tmp, idx[stage], kbs, kvs);
                }
                for q in 0..d {
                    b[q] += step / 6.0 * (kb[0][q] + 2.0 * kb[1][q] + 2.0 * kb[2][q] + kb[3][q]);
                    if with_v {
                        vi[q] += step / 6.0 * (kv[0][q] + 2.0 * kv[1][q] + 2.0 * kv[2][q] + kv[3][q]);
                    }
                }
                let r2: f64 = b.iter().map(|a| a * a).sum();
                let drift = (r2 - 1.0).abs();
                if drift > STEP_DRIFT_LIMIT {
                    return Err(Error::StepRejected {
                        x: grid.x(cell as usize) + step * (sub + 1) as f64,
                        drift,
                        limit: STEP_DRIFT_LIMIT,
                    });
                }
                max_drift = max_drift.max(drift);
                let r = r2.sqrt();
                b.iter_mut().for_each(|a| *a /= r);
            }
            let j = (cell + dir) as usize;
            for q in 0..d {
                samples[[q, j]] = b[q];
                vint[[q, j]] = vi[q];
            }
        }
    }
    let mut tangent = Array2::<f64>::zeros((d, n));
    let mut v = Array2::<f64>::zeros((d, n));
    let mut col = vec![0.0; d];
    let mut x = vec![0.0; d];
    for j in 0..n {
        for q in 0..d {
            col[q] = samples[[q, j]];
            x[q] = lambda * forcing.at_grid(q, j);
        }
        manifold.project(&col, &x, &mut tmp);
        for q in 0..d {
            tangent[[q, j]] = tmp[q];
        }
        if let Some(vf) = velocity {
            for q in 0..d {
                x[q] = lambda * vf.at_grid(q, j);
            }
            manifold.project(&col, &x, &mut tmp);
            for q in 0..d {
                v[[q, j]] = tmp[q];
            }
        }
    }
    let path = BrownianPath {
        grid,
        samples,
        tangent,
        basepoint: b0.to_vec(),
        epsilon: None,
        constraint_drift: max_drift,
    };
    let vel = velocity.map(|_| VelocityField {
        grid,
        v,
        vint,
        integral: IntegralMethod::Rk4,
    });
    Ok((path, vel))
}

/// Quadrature used for 𝒱.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMethod {
    /// Spectral antiderivative (V supported in the central half).
    Spectral,
    /// Cumulative trapezoid on the grid.
    Trapezoid,
    /// RK4, integrated together with the path.
    Rk4,
}

/// Tangential velocity V with its integral 𝒱 (zero at x = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub grid: Grid1D,
    pub v: Array2<f64>,
    pub vint: Array2<f64>,
    /// How 𝒱 was obtained.
    pub integral: IntegralMethod,
}

impl VelocityField {
    /// sup_j |⟨V(x_j), B(x_j)⟩|.
    pub fn tangency_defect(&self, path: &BrownianPath) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.grid.num_points {
            let ip: f64 = self
                .v
                .column(j)
                .iter()
                .zip(path.samples.column(j))
                .map(|(a, b)| a * b)
                .sum();
            m = m.max(ip.abs());
        }
        m
    }
}

/// V = λ P_ext(B) ∂_x W̄ with the driving derivatives supplied per component.
pub fn velocity_from_derivatives(
    path: &BrownianPath,
    dwbar: &[Field1D],
    manifold: &SphereManifold,
    lambda: f64,
) -> Result<VelocityField> {
    let d = path.dim();
    if dwbar.len() != d {
        return Err(Error::Invalid(format!(
            "expected {d} velocity components, got {}",
            dwbar.len()
        )));
    }
    let grid = path.grid;
    let n = grid.num_points;
    let mut v = Array2::<f64>::zeros((d, n));
    let mut col = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut out = vec![0.0; d];
    for j in 0..n {
        for q in 0..d {
            col[q] = path.samples[[q, j]];
            x[q] = lambda * dwbar[q].samples[j];
        }
        manifold.project(&col, &x, &mut out);
        for q in 0..d {
            v[[q, j]] = out[q];
        }
    }
    let comps: Vec<Field1D> = (0..d)
        .map(|q| Field1D {
            grid,
            samples: v.row(q).to_vec(),
        })
        .collect();
    let mut vint = Array2::<f64>::zeros((d, n));
    let mut spectral_integral = true;
    let mut rows = Vec::with_capacity(d);
    for c in &comps {
        match spectral::integrate(c) {
            Ok(i) => rows.push(i.samples),
            Err(Error::Support { .. }) => {
                spectral_integral = false;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !spectral_integral {
        rows = comps
            .iter()
            .map(|c| cumulative_trapezoid(&c.samples, grid.spacing(), grid.origin()))
            .collect();
    }
    for (q, r) in rows.into_iter().enumerate() {
        for j in 0..n {
            vint[[q, j]] = r[j];
        }
    }
    Ok(VelocityField {
        grid,
        v,
        vint,
        integral: if spectral_integral { IntegralMethod::Spectral } else { IntegralMethod::Trapezoid },
    })
}

/// V^ε = P(B^ε) ∂_x W̄^ε.
pub fn white_noise_velocity(
    path: &BrownianPath,
    wbar: &[Signal],
    manifold: &SphereManifold,
) -> Result<VelocityField> {
    let dw: Vec<Field1D> = wbar.iter().map(|w| w.derivative()).collect::<Result<_>>()?;
    velocity_from_derivatives(path, &dw, manifold, 1.0)
}

/// Global smooth path B^ε driven by the truncated signals W^ε.
pub fn global_path(
    w_eps: &[Signal],
    b0: &[f64],
    manifold: &SphereManifold,
    substeps: usize,
) -> Result<BrownianPath> {
    let forcing: Vec<Field1D> = w_eps.iter().map(|w| w.derivative()).collect::<Result<_>>()?;
    solve_path_ode(&forcing, b0, manifold, 1.0, substeps)
}

/// Rescaled, translated and χ-localized data on a local grid.
#[derive(Debug, Clone)]
pub struct LocalizedData {
    pub tau: f64,
    pub x0: f64,
    /// χ(x) W^ε_{τ,x₀}(x) per component.
    pub w_loc: Vec<Field1D>,
    pub wbar_loc: Vec<Field1D>,
    pub path: BrownianPath,
    pub velocity: VelocityField,
}

/// χ(x)·W_{τ,x₀}(x) and its exact x-derivative at `xs`, where
/// W_{τ,x₀}(x) = τ^{−1/2}(W(τx + x₀) − W(x₀)); zero where χ vanishes.
fn localized_driver(w: &Signal, dw: &Field1D, tau: f64, x0: f64, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let idx: Vec<usize> = (0..xs.len()).filter(|&j| chi(xs[j]) > 0.0).collect();
    let mut pts: Vec<f64> = idx.iter().map(|&j| tau * xs[j] + x0).collect();
    pts.push(x0);
    let vals = w.eval(&pts)?;
    let ders = spectral::resample(dw, &pts[..pts.len() - 1])?;
    let base = vals[vals.len() - 1];
    let s = tau.powf(-0.5);
    let st = tau.sqrt();
    let mut val = vec![0.0; xs.len()];
    let mut der = vec![0.0; xs.len()];
    for (k, &j) in idx.iter().enumerate() {
        let x = xs[j];
        let raw = s * (vals[k] - base);
        val[j] = chi(x) * raw;
        der[j] = chi_deriv(x) * raw + chi(x) * st * ders[k];
    }
    Ok((val, der))
}

/// χ(x)·τ^{−1/2}(W(τx + x₀) − W(x₀)) on `grid`, zero where χ vanishes.
pub fn rescale_signal(w: &Signal, tau: f64, x0: f64, grid: Grid1D) -> Result<Field1D> {
    let dw = w.derivative()?;
    let (val, _) = localized_driver(w, &dw, tau, x0, &grid.points())?;
    Ok(Field1D { grid, samples: val })
}

fn localized_forcing(sigs: &[Signal], tau: f64, x0: f64, grid: Grid1D, substeps: usize) -> Result<FineForcing> {
    let dws: Vec<Field1D> = sigs.iter().map(|w| w.derivative()).collect::<Result<_>>()?;
    FineForcing::from_fn(grid, sigs.len(), substeps, |xs| {
        sigs.iter()
            .zip(&dws)
            .map(|(w, dw)| localized_driver(w, dw, tau, x0, xs).map(|(_, d)| d))
            .collect()
    })
}

/// Build B^ε_{τ,x₀,loc}, V^ε_{τ,x₀,loc} and 𝒱^ε_{τ,x₀,loc} on `grid`.
///
/// The forcing ∂_x(χ W^ε_{τ,x₀}) is evaluated pointwise (χ′ analytically, W^ε and
/// ∂_x W^ε by trigonometric interpolation of the global band-limited signals), so
/// no spectral operation ever touches the χ edge. 𝒱 is integrated alongside B.
#[allow(clippy::too_many_arguments)]
pub fn localize_rescale(
    w_eps: &[Signal],
    wbar_eps: &[Signal],
    global: &BrownianPath,
    tau: f64,
    x0: f64,
    grid: Grid1D,
    manifold: &SphereManifold,
    substeps: usize,
) -> Result<LocalizedData> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Invalid(format!("tau must be in (0, 1], got {tau}")));
    }
    let w_loc: Vec<Field1D> = w_eps
        .iter()
        .map(|w| rescale_signal(w, tau, x0, grid))
        .collect::<Result<_>>()?;
    let wbar_loc: Vec<Field1D> = wbar_eps
        .iter()
        .map(|w| rescale_signal(w, tau, x0, grid))
        .collect::<Result<_>>()?;
    let forcing = localized_forcing(w_eps, tau, x0, grid, substeps)?;
    let vdrive = localized_forcing(wbar_eps, tau, x0, grid, substeps)?;
    let b0 = global.eval(x0)?;
    let r: f64 = b0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let b0: Vec<f64> = b0.iter().map(|a| a / r).collect();
    let (mut path, velocity) = integrate_path(&forcing, Some(&vdrive), &b0, manifold, tau.sqrt())?;
    path.epsilon = global.epsilon;
    let velocity = velocity.expect("velocity requested");
    Ok(LocalizedData {
        tau,
        x0,
        w_loc,
        wbar_loc,
        path,
        velocity,
    })
}

/// Linear waves φ^± = ((B − B(0)) ∓ 𝒱)/(2θ) with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWaves {
    pub grid: Grid1D,
    pub theta: f64,
    /// D × num_points.
    pub phi_plus: Array2<f64>,
    pub phi_minus: Array2<f64>,
    pub dphi_plus: Array2<f64>,
    pub dphi_minus: Array2<f64>,
    /// B(0), the shift of the second fundamental form.
    pub shift: Vec<f64>,
}

impl LinearWaves {
    pub fn dim(&self) -> usize {
        self.phi_plus.nrows()
    }

    pub fn zeros(grid: Grid1D, dim: usize, shift: Vec<f64>) -> Self {
        let z = Array2::<f64>::zeros((dim, grid.num_points));
        Self {
            grid,
            theta: 1.0,
            phi_plus: z.clone(),
            phi_minus: z.clone(),
            dphi_plus: z.clone(),
            dphi_minus: z,
            shift,
        }
    }

    pub fn plus(&self, k: usize) -> Field1D {
        Field1D {
            grid: self.grid,
            samples: self.phi_plus.row(k).to_vec(),
        }
    }

    pub fn minus(&self, k: usize) -> Field1D {
        Field1D {
            grid: self.grid,
            samples: self.phi_minus.row(k).to_vec(),
        }
    }

    /// Waves from explicit profiles; derivatives computed spectrally on the re-windowed profiles.
    pub fn from_profiles(
        plus: &[Field1D],
        minus: &[Field1D],
        theta: f64,
        shift: Vec<f64>,
    ) -> Result<Self> {
        let d = plus.len();
        if minus.len() != d || shift.len() != d || d == 0 {
            return Err(Error::Invalid("inconsistent wave dimensions".into()));
        }
        let grid = plus[0].grid;
        let n = grid.num_points;
        let mut w = Self::zeros(grid, d, shift);
        w.theta = theta;
        for k in 0..d {
            crate::grid::check_same(&grid, &plus[k].grid)?;
            crate::grid::check_same(&grid, &minus[k].grid)?;
            let dp = spectral::derivative(&spectral::rewindow(&plus[k]), Axis::X)?;
            let dm = spectral::derivative(&spectral::rewindow(&minus[k]), Axis::X)?;
            for j in 0..n {
                w.phi_plus[[k, j]] = plus[k].samples[j];
                w.phi_minus[[k, j]] = minus[k].samples[j];
                w.dphi_plus[[k, j]] = dp.samples[j];
                w.dphi_minus[[k, j]] = dm.samples[j];
            }
        }
        Ok(w)
    }
}

pub fn linear_waves(path: &BrownianPath, vel: &VelocityField, theta: f64) -> Result<LinearWaves> {
    if !(theta > 0.0) {
        return Err(Error::Invalid(format!("theta must be positive, got {theta}")));
    }
    crate::grid::check_same(&path.grid, &vel.grid)?;
    let d = path.dim();
    let n = path.grid.num_points;
    let o = path.grid.origin();
    let shift: Vec<f64> = (0..d).map(|k| path.samples[[k, o]]).collect();
    let mut w = LinearWaves::zeros(path.grid, d, shift.clone());
    w.theta = theta;
    let c = 1.0 / (2.0 * theta);
    for k in 0..d {
        for j in 0..n {
            let b = path.samples[[k, j]] - shift[k];
            let vi = vel.vint[[k, j]];
            w.phi_plus[[k, j]] = c * (b - vi);
            w.phi_minus[[k, j]] = c * (b + vi);
            let db = path.tangent[[k, j]];
            let v = vel.v[[k, j]];
            w.dphi_plus[[k, j]] = c * (db - v);
            w.dphi_minus[[k, j]] = c * (db + v);
        }
    }
    Ok(w)
}

/// χ-windowed norms of the global data at one ε, and the difference to the next ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataNormRow {
    pub eps: f64,
    /// max_k ‖χ B^ε_k‖_{C^s}
    pub path_norm: f64,
    /// max_k ‖χ V^ε_k‖_{C^{s−1}}
    pub velocity_norm: f64,
    /// max_k ‖χ (B^{ε_i} − B^{ε_{i+1}})_k‖_{C^s}
    pub data_diff: Option<f64>,
    /// max_k ‖χ (V^{ε_i} − V^{ε_{i+1}})_k‖_{C^{s−1}}
    pub data_diff_velocity: Option<f64>,
    pub sphere_defect: f64,
    pub tangency_defect: f64,
}

/// Global data B^ε, V^ε on `Grid1D::periodic(points)` for each ε of `eps_list`,
/// measured on [−2, 2] through the cutoff χ.
pub fn data_norm_table(
    seed: u64,
    dim: usize,
    points: usize,
    eps_list: &[f64],
    s: f64,
    substeps: usize,
) -> Result<Vec<DataNormRow>> {
    let grid = Grid1D::periodic(points)?;
    let m = SphereManifold::new(dim)?;
    let w = bm_increment_signals(seed, grid, dim, StreamKind::Increments);
    let wb = bm_increment_signals(seed, grid, dim, StreamKind::IncrementsBar);
    let cut = Field1D::from_fn(grid, chi);
    let mut data = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let we: Vec<Signal> = w.iter().map(|x| smooth_truncate(x, eps)).collect::<Result<_>>()?;
        let wbe: Vec<Signal> = wb.iter().map(|x| smooth_truncate(x, eps)).collect::<Result<_>>()?;
        let mut path = global_path(&we, &m.default_basepoint(), &m, substeps)?;
        path.epsilon = Some(eps);
        let vel = white_noise_velocity(&path, &wbe, &m)?;
        data.push((path, vel));
    }
    let comp = |a: &Array2<f64>, k: usize| Field1D::new(grid, a.row(k).to_vec());
    let mut rows = Vec::with_capacity(data.len());
    for (i, (path, vel)) in data.iter().enumerate() {
        let mut pn = 0.0f64;
        let mut vn = 0.0f64;
        for k in 0..dim {
            pn = pn.max(spectral::holder_norm(&comp(&path.samples, k)?.mul(&cut)?, s));
            vn = vn.max(spectral::holder_norm(&comp(&vel.v, k)?.mul(&cut)?, s - 1.0));
        }
        let (mut dd, mut dv) = (None, None);
        if let Some((p2, v2)) = data.get(i + 1) {
            let (mut a, mut b) = (0.0f64, 0.0f64);
            for k in 0..dim {
                let db = comp(&path.samples, k)?.sub(&comp(&p2.samples, k)?)?;
                a = a.max(spectral::holder_norm(&db.mul(&cut)?, s));
                let dvk = comp(&vel.v, k)?.sub(&comp(&v2.v, k)?)?;
                b = b.max(spectral::holder_norm(&dvk.mul(&cut)?, s - 1.0));
            }
            dd = Some(a);
            dv = Some(b);
        }
        rows.push(DataNormRow {
            eps: eps_list[i],
            path_norm: pn,
            velocity_norm: vn,
            data_diff: dd,
            data_diff_velocity: dv,
            sphere_defect: path.sphere_defect(),
            tangency_defect: vel.tangency_defect(path),
        });
    }
    Ok(rows)
}
