//! Smooth cutoffs: the Fourier cutoff ρ, the spatial cutoff χ, and the bumps
//! used by the manifold extension and the re-windowing rule.

use serde::{Deserialize, Serialize};

/// e^{−1/t} for t > 0, else 0.
#[inline]
fn glue(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C^∞ monotone step: 0 for t ≤ 0, 1 for t ≥ 1.
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = glue(t);
        a / (a + glue(1.0 - t))
    }
}

/// Derivative of `smooth_step`.
pub fn smooth_step_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = glue(t);
    let b = glue(1.0 - t);
    let da = a / (t * t);
    let db = -b / ((1.0 - t) * (1.0 - t));
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Plateau-to-zero profile: 1 on |x| ≤ a, 0 on |x| ≥ b.
#[inline]
pub fn plateau(x: f64, a: f64, b: f64) -> f64 {
    1.0 - smooth_step((x.abs() - a) / (b - a))
}

fn plateau_deriv(x: f64, a: f64, b: f64) -> f64 {
    -smooth_step_deriv((x.abs() - a) / (b - a)) / (b - a) * x.signum()
}

/// Fourier cutoff: 1 on |ξ| ≤ 7/8, 0 on |ξ| ≥ 9/8.
#[inline]
pub fn rho(xi: f64) -> f64 {
    plateau(xi, 7.0 / 8.0, 9.0 / 8.0)
}

/// ρ_N(ξ) = ρ(ξ) for N = 1, ρ(ξ/N) − ρ(2ξ/N) for N ≥ 2.
#[inline]
pub fn dyadic_symbol(xi: f64, n: u64) -> f64 {
    if n <= 1 {
        rho(xi)
    } else {
        let nf = n as f64;
        rho(xi / nf) - rho(2.0 * xi / nf)
    }
}

/// Spatial cutoff: 1 on |x| ≤ 2, 0 on |x| ≥ 21/10.
#[inline]
pub fn chi(x: f64) -> f64 {
    plateau(x, 2.0, 2.1)
}

pub fn chi_deriv(x: f64) -> f64 {
    plateau_deriv(x, 2.0, 2.1)
}

/// Re-windowing profile for a grid of half-length L: 1 on [−L/2, L/2], 0 for |x| ≥ 3L/4.
#[inline]
pub fn window(x: f64, half_length: f64) -> f64 {
    plateau(x, 0.5 * half_length, 0.75 * half_length)
}

/// Radial bump of the projection extension: 1 on [3/4, 5/4], 0 outside [1/2, 3/2].
#[inline]
pub fn projection_bump(r: f64) -> f64 {
    plateau(r - 1.0, 0.25, 0.5)
}

/// Radial bump of the extended second fundamental form: 1 on [1/2, 3/2], 0 outside [1/4, 2].
#[inline]
pub fn form_bump(r: f64) -> f64 {
    if r <= 1.0 {
        smooth_step((r - 0.25) / 0.25)
    } else {
        1.0 - smooth_step((r - 1.5) / 0.5)
    }
}

/// Analysis parameters; σ is kept separate from δ so diagnostic runs can use the
/// decoupled default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub s: f64,
    pub r: f64,
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl Params {
    /// Solver defaults: s = 0.45, r = 0.74, δ = 0.01, η = 0.001, σ = 100δ = 1.
    pub fn solver_defaults() -> Self {
        Self {
            s: 0.45,
            r: 0.74,
            delta: 0.01,
            eta: 0.001,
            sigma: 1.0,
        }
    }

    /// Diagnostic defaults: δ = 0.005 so that σ = 100δ = 0.5.
    pub fn diagnostic_defaults() -> Self {
        Self {
            delta: 0.005,
            sigma: 0.5,
            ..Self::solver_defaults()
        }
    }

    /// Hard constraints: 0 < s < 1/2, 1/2 < r < 3/4, δ, η > 0, 0 < σ ≤ 1.
    /// The qualitative chain is reported by `chain_holds`, not enforced.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.s > 0.0 && self.s < 0.5) {
            return Err(format!("s must be < 1/2 and > 0, got {}", self.s));
        }
        if !(self.r > 0.5 && self.r < 0.75) {
            return Err(format!("r must be in (1/2, 3/4), got {}", self.r));
        }
        if !(self.delta > 0.0) {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.eta > 0.0) {
            return Err(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(format!("sigma must be in (0, 1], got {}", self.sigma));
        }
        Ok(())
    }

    /// Whether 1/2 − s < δ < 3/4 − r holds. The shipped defaults do not satisfy it.
    pub fn chain_holds(&self) -> bool {
        0.5 - self.s < self.delta && self.delta < 0.75 - self.r
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::solver_defaults()
    }
}
