//! Lacunary data whose first Picard iterate grows linearly in the number of
//! frequencies while the data stay bounded in C^{1/2}.

use crate::cutoff::{chi, chi_deriv};
use crate::error::{Error, Result};
use crate::grid::{Field1D, Grid1D};
use crate::spectral::{holder_norm, linear_fit, SlopeFit};
use crate::solver::{linear_evolution, picard_map, NullWaves};
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};
use std::num::NonZeroUsize;

/// Nodes per Gauss-Legendre panel.
pub const PANEL_NODES: usize = 16;

/// Radius of the support of χ(·/ε) in units of ε.
const SUPPORT: f64 = 2.1;

/// Frequencies F = {b^{gk} : κ₀ ≤ k ≤ κ} localized at scale ε_loc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LacunaryProfile {
    pub base: u32,
    pub gap: u32,
    pub kappa0: u32,
    pub kappa: u32,
    pub eps_loc: f64,
}

impl LacunaryProfile {
    pub fn new(base: u32, gap: u32, kappa0: u32, kappa: u32, eps_loc: f64) -> Result<Self> {
        let p = Self {
            base,
            gap,
            kappa0,
            kappa,
            eps_loc,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base < 2 || self.gap < 1 {
            return Err(Error::Invalid(format!(
                "base must be >= 2 and gap >= 1, got base {} gap {}",
                self.base, self.gap
            )));
        }
        let ratio = (self.base as f64).powi(self.gap as i32);
        if ratio < 8.0 {
            return Err(Error::Invalid(format!("frequency ratio b^g = {ratio} must be >= 8")));
        }
        if self.kappa < self.kappa0 {
            return Err(Error::Invalid(format!(
                "kappa {} must be >= kappa0 {}",
                self.kappa, self.kappa0
            )));
        }
        if ratio.powi(self.kappa as i32) > 2f64.powi(40) {
            return Err(Error::Invalid(format!(
                "top frequency b^(g kappa) = {} exceeds 2^40",
                ratio.powi(self.kappa as i32)
            )));
        }
        if !(self.eps_loc > 0.0 && self.eps_loc.is_finite()) {
            return Err(Error::Invalid(format!("eps_loc must be positive, got {}", self.eps_loc)));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let ratio = (self.base as f64).powi(self.gap as i32);
        (self.kappa0..=self.kappa).map(|k| ratio.powi(k as i32)).collect()
    }

    pub fn max_frequency(&self) -> f64 {
        *self.frequencies().last().expect("kappa >= kappa0")
    }

    pub fn with_kappa(&self, kappa: u32) -> Result<Self> {
        Self::new(self.base, self.gap, self.kappa0, kappa, self.eps_loc)
    }

    /// ψ¹, (ψ¹)′, ψ², (ψ²)′ at y, with the derivatives summed termwise.
    pub fn eval(&self, y: f64) -> [f64; 4] {
        let e = self.eps_loc;
        let c = chi(y / e);
        let cd = chi_deriv(y / e) / e;
        if c == 0.0 && cd == 0.0 {
            return [0.0; 4];
        }
        let (mut s1, mut d1, mut s2, mut d2) = (0.0, 0.0, y.sin(), y.cos());
        for n in self.frequencies() {
            let a = n.powf(-0.5);
            let (sn, cn) = (n * y).sin_cos();
            let (sm, cm) = ((n - 1.0) * y).sin_cos();
            s1 += a * sn;
            d1 += a * n * cn;
            s2 += a * sm;
            d2 += a * (n - 1.0) * cm;
        }
        [c * s1, c * d1 + cd * s1, c * s2, c * d2 + cd * s2]
    }
}

/// ψ¹ and ψ² sampled on `grid`.
pub fn lacunary_fields(profile: &LacunaryProfile, grid: Grid1D) -> Result<(Field1D, Field1D)> {
    profile.validate()?;
    let top = profile.max_frequency();
    if top > grid.norm_cap() as f64 {
        return Err(Error::Unresolved {
            n: top,
            max: grid.norm_cap() as f64,
        });
    }
    if SUPPORT * profile.eps_loc > 0.5 * grid.half_length {
        return Err(Error::Invalid(format!(
            "support radius {} does not fit in the central half of the grid",
            SUPPORT * profile.eps_loc
        )));
    }
    let pts = grid.points();
    let vals: Vec<[f64; 4]> = pts.iter().map(|&y| profile.eval(y)).collect();
    Ok((
        Field1D::new(grid, vals.iter().map(|v| v[0]).collect())?,
        Field1D::new(grid, vals.iter().map(|v| v[2]).collect())?,
    ))
}

/// Smallest grid carrying the profile: half-length π·2^{−j} ≥ 2·2.1ε_loc so that
/// every scale is dyadic, top frequency inside the norm range and at least
/// 4096 points.
pub fn norm_grid(profile: &LacunaryProfile) -> Result<Grid1D> {
    let mut l = std::f64::consts::PI;
    while 0.5 * l >= 2.0 * SUPPORT * profile.eps_loc {
        l *= 0.5;
    }
    let top = profile.max_frequency();
    let mut n = 4096usize;
    loop {
        let g = Grid1D::new(n, l)?;
        if g.norm_cap() as f64 >= top {
            return Ok(g);
        }
        n *= 2;
    }
}

/// (‖ψ¹‖_{C^{1/2}}, ‖ψ²‖_{C^{1/2}}) on the norm grid.
pub fn psi_norms(profile: &LacunaryProfile) -> Result<(f64, f64)> {
    let (a, b) = lacunary_fields(profile, norm_grid(profile)?)?;
    Ok((holder_norm(&a, 0.5), holder_norm(&b, 0.5)))
}

/// Composite Gauss-Legendre rule with panels no wider than `max_width`.
pub struct CompositeRule {
    rule: GaussLegendre,
    pub max_width: f64,
}

impl CompositeRule {
    pub fn new(max_width: f64) -> Self {
        Self {
            rule: GaussLegendre::new(NonZeroUsize::new(PANEL_NODES).expect("nonzero")),
            max_width,
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let panels = ((b - a) / self.max_width).ceil().max(1.0) as usize;
        let w = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * w;
                self.rule.integrate(lo, lo + w, &mut f)
            })
            .sum()
    }
}

/// Panel width giving at least 8 nodes per period of the integrand ψ¹′(ψ²)²
/// (top frequency ≈ 3n) and 4 panels across each χ transition; `refine` divides it.
pub fn panel_width(profile: &LacunaryProfile, refine: u32) -> f64 {
    let period = 2.0 * std::f64::consts::PI / (3.0 * profile.max_frequency());
    let by_freq = 2.0 * period;
    let by_edge = profile.eps_loc / 40.0;
    by_freq.min(by_edge) / refine.max(1) as f64
}

fn support_interval(profile: &LacunaryProfile, lo: f64, hi: f64) -> (f64, f64) {
    let r = SUPPORT * profile.eps_loc;
    (lo.max(-r), hi.min(r))
}

/// ⟨Pic(t,x), e₁⟩ = (1/8)∫_{x−t}^{x+t} (ψ¹)′(ψ²)² dy.
pub fn picard_first_component(profile: &LacunaryProfile, t: f64, x: f64, refine: u32) -> Result<f64> {
    profile.validate()?;
    if !(t >= 0.0 && t.is_finite() && x.is_finite()) {
        return Err(Error::Invalid(format!("need finite t >= 0 and x, got t = {t}, x = {x}")));
    }
    let rule = CompositeRule::new(panel_width(profile, refine));
    let (a, b) = support_interval(profile, x - t, x + t);
    Ok(0.125
        * rule.integrate(a, b, |y| {
            let v = profile.eval(y);
            v[1] * v[2] * v[2]
        }))
}

/// ∫ χ(x/ε)·inner(x) dx with `inner` evaluated once per distinct clipped interval.
fn weighted_outer(profile: &LacunaryProfile, t: f64, refine: u32, inner: impl Fn(f64, f64) -> f64) -> f64 {
    let e = profile.eps_loc;
    let outer = CompositeRule::new(e / 40.0 / refine.max(1) as f64);
    let mut cache: Vec<((u64, u64), f64)> = Vec::new();
    outer.integrate(-SUPPORT * e, SUPPORT * e, |x| {
        let w = chi(x / e);
        if w == 0.0 {
            return 0.0;
        }
        let (a, b) = support_interval(profile, x - t, x + t);
        let key = (a.to_bits(), b.to_bits());
        let v = match cache.iter().find(|c| c.0 == key) {
            Some(c) => c.1,
            None => {
                let v = inner(a, b);
                cache.push((key, v));
                v
            }
        };
        w * v
    })
}

/// J(κ) = ∫ χ(x/ε_loc)⟨Pic(t,x), e₁⟩ dx.
pub fn divergence_functional(profile: &LacunaryProfile, t: f64, refine: u32) -> f64 {
    let rule = CompositeRule::new(panel_width(profile, refine));
    weighted_outer(profile, t, refine, |a, b| {
        0.125
            * rule.integrate(a, b, |y| {
                let v = profile.eval(y);
                v[1] * v[2] * v[2]
            })
    })
}

/// ∬ χ(x/ε)·1_{[x−t,x+t]}(y)·χ(y/ε)³(1 − cos 2y) dy dx.
pub fn main_term_integral(profile: &LacunaryProfile, t: f64, refine: u32) -> f64 {
    let e = profile.eps_loc;
    let rule = CompositeRule::new(e / 40.0 / refine.max(1) as f64);
    weighted_outer(profile, t, refine, |a, b| {
        rule.integrate(a, b, |y| chi(y / e).powi(3) * (1.0 - (2.0 * y).cos()))
    })
}

/// One row of the κ-scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub kappa: u32,
    #[serde(rename = "J")]
    pub j: f64,
    pub predicted: f64,
    pub residual: f64,
    pub psi1_norm: f64,
    pub psi2_norm: f64,
    /// |J(refine 2) − J| / |J|
    pub self_convergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScan {
    pub profile: LacunaryProfile,
    pub t: f64,
    /// the main-term double integral
    pub main_integral: f64,
    /// κ-coefficient of the predicted main term, −I/16
    pub predicted_slope: f64,
    pub fit: SlopeFit,
    pub rows: Vec<DivergenceRow>,
    /// max/min of max(‖ψ¹‖, ‖ψ²‖) over the scan
    pub norm_spread: f64,
    pub max_abs_residual: f64,
    pub max_self_convergence: f64,
}

/// Scan κ = κ₀+1 ..= κ_max at time t.
pub fn divergence_scan(base: &LacunaryProfile, kappa_max: u32, t: f64) -> Result<DivergenceScan> {
    base.validate()?;
    if kappa_max <= base.kappa0 {
        return Err(Error::Invalid(format!(
            "kappa_max {} must exceed kappa0 {}",
            kappa_max, base.kappa0
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Invalid(format!("t must be positive, got {t}")));
    }
    let main = main_term_integral(base, t, 1);
    let slope = -main / 16.0;
    let mut rows = Vec::new();
    for kappa in base.kappa0 + 1..=kappa_max {
        let p = base.with_kappa(kappa)?;
        let j = divergence_functional(&p, t, 1);
        let j2 = divergence_functional(&p, t, 2);
        let predicted = slope * (kappa - base.kappa0) as f64;
        let (n1, n2) = psi_norms(&p)?;
        rows.push(DivergenceRow {
            kappa,
            j,
            predicted,
            residual: j - predicted,
            psi1_norm: n1,
            psi2_norm: n2,
            self_convergence: if j != 0.0 { (j2 - j).abs() / j.abs() } else { (j2 - j).abs() },
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.kappa as f64, r.j)).collect();
    let fit = linear_fit(&pts);
    let norms: Vec<f64> = rows.iter().map(|r| r.psi1_norm.max(r.psi2_norm)).collect();
    let hi = norms.iter().cloned().fold(f64::MIN, f64::max);
    let lo = norms.iter().cloned().fold(f64::MAX, f64::min);
    Ok(DivergenceScan {
        profile: base.clone(),
        t,
        main_integral: main,
        predicted_slope: slope,
        fit,
        norm_spread: hi / lo,
        max_abs_residual: rows.iter().fold(0.0f64, |a, r| a.max(r.residual.abs())),
        max_self_convergence: rows.iter().fold(0.0f64, |a, r| a.max(r.self_convergence)),
        rows,
    })
}

/// Linear waves φ^± = (e_D ∓ ψ)/2 with ψ = ψ¹e₁ + ψ²e₂ on a null grid, unshifted.
pub fn lacunary_null_waves(profile: &LacunaryProfile, grid: Grid1D, dim: usize) -> Result<NullWaves> {
    if dim < 3 {
        return Err(Error::Invalid("the lacunary data need D >= 3".into()));
    }
    lacunary_fields(profile, grid)?;
    let mut w = NullWaves::zeros(grid, dim, vec![0.0; dim]);
    for (i, &y) in grid.points().iter().enumerate() {
        let v = profile.eval(y);
        w.plus[[dim - 1, i]] = 0.5;
        w.minus[[dim - 1, i]] = 0.5;
        w.plus[[0, i]] = -0.5 * v[0];
        w.minus[[0, i]] = 0.5 * v[0];
        w.plus[[1, i]] = -0.5 * v[2];
        w.minus[[1, i]] = 0.5 * v[2];
        w.dplus[[0, i]] = -0.5 * v[1];
        w.dminus[[0, i]] = 0.5 * v[1];
        w.dplus[[1, i]] = -0.5 * v[3];
        w.dminus[[1, i]] = 0.5 * v[3];
    }
    Ok(w)
}

/// One comparison point of the solver cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckPoint {
    pub t: f64,
    pub x: f64,
    pub solver: f64,
    pub quadrature: f64,
}

/// First component of Γ(L) − L at the grid points (u, v) = (x − t, x + t)
/// against the direct quadrature.
pub fn solver_cross_check(
    profile: &LacunaryProfile,
    grid: Grid1D,
    points: &[(usize, usize)],
    time_cutoff: f64,
) -> Result<Vec<CrossCheckPoint>> {
    let waves = lacunary_null_waves(profile, grid, 3)?;
    let lin = linear_evolution(&waves);
    let once = picard_map(&lin, &waves, time_cutoff)?;
    points
        .iter()
        .map(|&(i, j)| {
            let (u, v) = (grid.x(i), grid.x(j));
            let (t, x) = (0.5 * (v - u), 0.5 * (u + v));
            Ok(CrossCheckPoint {
                t,
                x,
                solver: once.phi[0].samples[[i, j]] - lin.phi[0].samples[[i, j]],
                quadrature: picard_first_component(profile, t, x, 2)?,
            })
        })
        .collect()
}
