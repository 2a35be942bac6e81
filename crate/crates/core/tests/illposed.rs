use proptest::prelude::*;
use wavemaps_core::cutoff::chi;
use wavemaps_core::illposed::*;
use wavemaps_core::Grid1D;

fn profile(k0: u32, k: u32, eps: f64) -> LacunaryProfile {
    LacunaryProfile::new(2, 3, k0, k, eps).unwrap()
}

#[test]
fn frequencies_are_lacunary() {
    assert_eq!(profile(1, 3, 0.01).frequencies(), vec![8.0, 64.0, 512.0]);
    assert_eq!(profile(2, 2, 0.01).frequencies(), vec![64.0]);
}

#[test]
fn invalid_profiles_are_rejected() {
    assert!(LacunaryProfile::new(2, 2, 1, 2, 0.01).is_err());
    assert!(LacunaryProfile::new(1, 3, 1, 2, 0.01).is_err());
    assert!(LacunaryProfile::new(2, 3, 3, 2, 0.01).is_err());
    assert!(LacunaryProfile::new(2, 3, 1, 2, 0.0).is_err());
    assert!(LacunaryProfile::new(2, 10, 1, 5, 0.01).is_err());
}

#[test]
fn fields_are_odd_and_localized() {
    let p = profile(2, 2, 0.05);
    let g = Grid1D::new(4096, 0.5).unwrap();
    let (a, b) = lacunary_fields(&p, g).unwrap();
    assert_eq!(p.eval(0.0)[0], 0.0);
    for (i, &x) in g.points().iter().enumerate() {
        if x.abs() >= 3.0 * p.eps_loc {
            assert_eq!(a.samples[i], 0.0);
            assert_eq!(b.samples[i], 0.0);
        }
        let y = -x;
        let (f, r) = (p.eval(x), p.eval(y));
        assert!((f[0] + r[0]).abs() < 1e-14);
        assert!((f[2] + r[2]).abs() < 1e-14);
    }
}

#[test]
fn resolution_guard_on_fields() {
    let p = profile(1, 3, 0.05);
    assert!(lacunary_fields(&p, Grid1D::new(256, 0.5).unwrap()).is_err());
    assert!(lacunary_fields(&p, Grid1D::new(8192, 0.5).unwrap()).is_ok());
    // support does not fit the central half of the grid
    assert!(lacunary_fields(&profile(1, 1, 0.2), Grid1D::new(4096, 0.5).unwrap()).is_err());
}

#[test]
fn empty_interval_gives_zero() {
    let p = profile(1, 3, 0.01);
    assert_eq!(picard_first_component(&p, 0.0, 0.003, 1).unwrap(), 0.0);
    // interval misses the support, so ψ¹ vanishes there
    assert_eq!(picard_first_component(&p, 0.01, 0.5, 1).unwrap(), 0.0);
    assert!(picard_first_component(&p, -1.0, 0.0, 1).is_err());
}

#[test]
fn single_level_matches_resonant_term() {
    // (ψ¹)′(ψ²)² for one frequency n ≫ 1/ε averages to −½χ³(1 − cos 2y)
    let p = profile(6, 6, 0.01);
    let full = 8.0 * picard_first_component(&p, 1.0, 0.0, 1).unwrap();
    let rule = CompositeRule::new(p.eps_loc / 80.0);
    let r = 2.1 * p.eps_loc;
    let main = rule.integrate(-r, r, |y| -0.5 * chi(y / p.eps_loc).powi(3) * (1.0 - (2.0 * y).cos()));
    assert!((full - main).abs() < 0.01 * main.abs(), "{full} vs {main}");
    assert!((main + 5.625424795655e-6).abs() < 1e-15);
}

#[test]
fn integration_by_parts_identity() {
    // ∫ψ¹′(ψ²)² = −2∫ψ¹ψ²ψ²′ over the full support
    let p = profile(1, 3, 0.05);
    let rule = CompositeRule::new(panel_width(&p, 2));
    let r = 2.1 * p.eps_loc;
    let lhs = rule.integrate(-r, r, |y| {
        let v = p.eval(y);
        v[1] * v[2] * v[2]
    });
    let rhs = rule.integrate(-r, r, |y| {
        let v = p.eval(y);
        -2.0 * v[0] * v[2] * v[3]
    });
    assert!((lhs - rhs).abs() < 1e-9 * lhs.abs(), "{lhs} vs {rhs}");
}

#[test]
fn main_integral_frozen() {
    let p = profile(4, 4, 0.01);
    let i = main_term_integral(&p, 1.0, 1);
    assert!((i - 4.6128483324373e-7).abs() < 1e-18, "{i:e}");
    assert!((main_term_integral(&p, 1.0, 2) - i).abs() < 1e-8 * i);
}

#[test]
fn divergence_scan_is_linear_in_kappa() {
    let base = profile(4, 4, 0.01);
    let scan = divergence_scan(&base, 7, 1.0).unwrap();
    assert_eq!(scan.rows.len(), 3);
    let rel = (scan.fit.slope - scan.predicted_slope).abs() / scan.predicted_slope.abs();
    assert!(rel < 0.1, "slope {} vs {}", scan.fit.slope, scan.predicted_slope);
    assert!(scan.fit.r_squared >= 0.99);
    assert!(scan.norm_spread <= 2.0);
    assert!(scan.max_self_convergence <= 1e-8);
    assert!(scan.max_abs_residual <= 1e-8, "{}", scan.max_abs_residual);
    for w in scan.rows.windows(2) {
        assert!(w[1].j < w[0].j);
    }
    let r0 = &scan.rows[0];
    assert!((r0.j + 3.288390981200e-8).abs() < 1e-17, "{:e}", r0.j);
    assert!((r0.psi1_norm - 0.95419879957).abs() < 1e-9, "{}", r0.psi1_norm);
}

#[test]
fn divergence_scan_rejects_bad_range() {
    let base = profile(4, 4, 0.01);
    assert!(divergence_scan(&base, 4, 1.0).is_err());
    assert!(divergence_scan(&base, 6, 0.0).is_err());
}

#[test]
fn low_base_levels_pollute_the_slope() {
    // with b^{gκ₀}ε_loc < 1 the cross terms between levels dominate the resonant term
    let j = |k0, k| divergence_functional(&profile(k0, k, 0.01), 1.0, 1);
    let step = j(1, 6) - j(1, 5);
    let main = -main_term_integral(&profile(1, 1, 0.01), 1.0, 1) / 16.0;
    assert!(step / main > 5.0, "{step:e} vs {main:e}");
}

#[test]
fn solver_agrees_with_quadrature() {
    let p = profile(1, 1, 0.4);
    let g = Grid1D::new(2048, 2.5).unwrap();
    let idx = |x: f64| ((x + g.half_length) / g.spacing()).round() as usize;
    let r = 2.2 * p.eps_loc;
    let pts: Vec<(usize, usize)> = [(-r, r), (-1.5 * r, r), (-r, 1.7 * r), (1.0, 1.5), (-1.9, -1.2)]
        .iter()
        .map(|&(u, v)| (idx(u), idx(v)))
        .collect();
    let c = solver_cross_check(&p, g, &pts, 2.0).unwrap();
    for q in &c {
        assert!((q.solver - q.quadrature).abs() < 1e-5, "{q:?}");
    }
    assert!(c[0].quadrature.abs() > 1e-2);
    assert_eq!(c[3].quadrature, 0.0);
}

#[test]
fn solver_agrees_with_quadrature_fine_grid() {
    let p = profile(1, 1, 0.2);
    let g = Grid1D::new(4096, 1.25).unwrap();
    let idx = |x: f64| ((x + g.half_length) / g.spacing()).round() as usize;
    let r = 2.2 * p.eps_loc;
    let pts: Vec<(usize, usize)> = [(-r, r), (-1.5 * r, r), (-r, 1.7 * r)]
        .iter()
        .map(|&(u, v)| (idx(u), idx(v)))
        .collect();
    for q in solver_cross_check(&p, g, &pts, 2.0).unwrap() {
        assert!((q.solver - q.quadrature).abs() < 1e-6, "{q:?}");
    }
}

#[test]
fn null_waves_need_three_components() {
    let p = profile(1, 1, 0.4);
    let g = Grid1D::new(256, 2.5).unwrap();
    assert!(lacunary_null_waves(&p, g, 2).is_err());
    let w = lacunary_null_waves(&p, g, 3).unwrap();
    assert!(w.plus.row(2).iter().all(|&v| v == 0.5));
}

proptest! {
    #[test]
    fn derivatives_match_differences(y in -0.11f64..0.11, k in 1u32..3) {
        let p = profile(1, k, 0.05);
        let h = 1e-6;
        let (a, b) = (p.eval(y + h), p.eval(y - h));
        let v = p.eval(y);
        let scale = p.max_frequency().sqrt() * 10.0;
        prop_assert!(((a[0] - b[0]) / (2.0 * h) - v[1]).abs() < 1e-5 * scale);
        prop_assert!(((a[2] - b[2]) / (2.0 * h) - v[3]).abs() < 1e-5 * scale);
    }

    #[test]
    fn picard_component_is_even_in_x(x in -0.05f64..0.05, t in 0.0f64..0.1) {
        // ψ¹′ even and ψ² odd make the integrand even
        let p = profile(1, 2, 0.01);
        let a = picard_first_component(&p, t, x, 1).unwrap();
        let b = picard_first_component(&p, t, -x, 1).unwrap();
        prop_assert!((a - b).abs() < 1e-12 + 1e-9 * a.abs());
    }
}
