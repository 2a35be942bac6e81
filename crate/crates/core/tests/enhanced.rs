use proptest::prelude::*;
use wavemaps_core::cutoff::dyadic_symbol;
use wavemaps_core::enhanced::*;
use wavemaps_core::randomdata::{linear_waves, white_noise_velocity, LinearWaves, SphereManifold};
use wavemaps_core::solver::{global_data, SolverConfig};
use wavemaps_core::spectral::{holder_norm, shift, Axis};
use wavemaps_core::{Error, Field1D, Grid1D};

fn periodic(n: usize) -> Grid1D {
    Grid1D::periodic(n).unwrap()
}

fn brownian_linear(points: usize, eps: f64, seed: u64) -> LinearWaves {
    let cfg = SolverConfig {
        seed,
        eps,
        global_points: points,
        ..Default::default()
    };
    let (_, wb, path) = global_data(&cfg).unwrap();
    let vel = white_noise_velocity(&path, &wb, &SphereManifold::new(3).unwrap()).unwrap();
    linear_waves(&path, &vel, 1.0).unwrap()
}

fn smooth_pair(grid: Grid1D) -> WaveProfiles {
    let f = |a: f64, b: f64| Field1D::from_fn(grid, move |x| (a * x).sin() + 0.3 * (b * x).cos());
    WaveProfiles::new(vec![f(3.0, 7.0), f(5.0, 2.0)], vec![f(6.0, 1.0), f(4.0, 9.0)]).unwrap()
}

#[test]
fn zero_and_constant_waves_give_zero_products() {
    let g = periodic(256);
    let z = WaveProfiles::new(vec![Field1D::zeros(g); 2], vec![Field1D::zeros(g); 2]).unwrap();
    let p = hhl_product(&z, Sign::Plus, Sign::Minus, 0, 1, 4, 4, 0.45, 0.3).unwrap();
    assert_eq!(p.sup_norm(), 0.0);
    let e = ds_norm(&z, 0.45, &[1, 2, 4], &[0.0, 0.5]).unwrap();
    assert_eq!(e.ds_value, 0.0);
    let mut w = smooth_pair(g);
    w.minus[1] = Field1D::from_fn(g, |_| 2.5);
    for big_n in [1, 2, 4, 8] {
        let p = hhl_product(&w, Sign::Plus, Sign::Minus, 0, 1, 4, big_n, 0.45, 0.0).unwrap();
        assert!(p.sup_norm() < 1e-12);
    }
}

#[test]
fn lacunary_block_matches_the_trigonometric_expansion() {
    let g = periodic(1024);
    let s = 0.45;
    for big_m in [16u64, 32, 64] {
        let mf = big_m as f64;
        let plus = Field1D::from_fn(g, move |x| mf.powf(-0.5) * (mf * x).sin());
        let minus = Field1D::from_fn(g, move |x| mf.powf(-0.5) * ((mf - 1.0) * x).sin());
        let w = WaveProfiles::new(vec![plus], vec![minus]).unwrap();
        let p = hhl_product(&w, Sign::Plus, Sign::Minus, 0, 0, big_m, big_m, s, 0.0).unwrap();
        let a = dyadic_symbol(mf, big_m) * mf.powf(-0.5);
        let b = dyadic_symbol(mf - 1.0, big_m) * mf.powf(-0.5) * (mf - 1.0);
        let c = mf.powf(s) * a * b / 2.0;
        for (i, &x) in g.points().iter().enumerate() {
            let exact = c * (((2.0 * mf - 1.0) * x).sin() + x.sin());
            assert!((p.samples[i] - exact).abs() < 1e-11);
        }
        // the frequency-one piece has size comparable to M^s/2
        assert!(c > 0.2 * mf.powf(s) / 2.0);
    }
}

#[test]
fn ds_norm_is_homogeneous_and_dominates_the_linear_branch() {
    let w = smooth_pair(periodic(256));
    let scales = [1, 2, 4, 8];
    let ts = default_shifts(2.0, 5);
    let base = ds_norm(&w, 0.45, &scales, &ts).unwrap();
    assert!(base.ds_value >= base.linear_branch);
    assert!(base.table.iter().all(|e| e.norm >= 0.0));
    assert_eq!(base.table.len(), 4 * 4 * 16 + 4 * 2 * 4 * 16);
    for lambda in [-2.0, 0.5, 3.0] {
        let e = ds_norm(&w.scale(lambda), 0.45, &scales, &ts).unwrap();
        assert!((e.ds_value - lambda.abs() * base.ds_value).abs() < 1e-10 * e.ds_value);
    }
}

#[test]
fn distance_is_a_symmetric_metric_on_the_computed_range() {
    let g = periodic(256);
    let a = smooth_pair(g);
    let mut b = a.clone();
    b.plus[0] = Field1D::from_fn(g, |x| (3.0 * x).sin() + 0.2 * (11.0 * x).sin());
    let scales = [1, 2, 4, 8];
    let ts = [-1.0, 0.0, 1.0];
    assert_eq!(ds_distance(&a, &a, 0.45, &scales, &ts).unwrap().ds_value, 0.0);
    let ab = ds_distance(&a, &b, 0.45, &scales, &ts).unwrap();
    let ba = ds_distance(&b, &a, 0.45, &scales, &ts).unwrap();
    assert!((ab.ds_value - ba.ds_value).abs() < 1e-13);
    let lin = holder_norm(&a.plus[0].sub(&b.plus[0]).unwrap(), 0.45);
    assert!(lin <= ab.ds_value && ab.ds_value > 0.0);
    let other = smooth_pair(periodic(512));
    assert!(matches!(ds_distance(&a, &other, 0.45, &scales, &ts), Err(Error::GridMismatch(_))));
}

#[test]
fn unshifted_mixed_product_equals_the_zero_shift() {
    let w = smooth_pair(periodic(256));
    let p = hhl_product(&w, Sign::Minus, Sign::Plus, 1, 0, 4, 8, 0.45, 0.0).unwrap();
    let lo = wavemaps_core::spectral::lp_project(&w.minus[1], Axis::X, 4, false).unwrap();
    let hi = wavemaps_core::spectral::lp_project(&w.plus[0], Axis::X, 8, false).unwrap();
    let hi = wavemaps_core::spectral::derivative(&hi, Axis::X).unwrap();
    let lo = shift(&lo, Axis::X, 0.0).unwrap();
    let hi = shift(&hi, Axis::X, -0.0).unwrap();
    let q = lo.zip(&hi, |a, b| 4f64.powf(0.45) * a * b).unwrap();
    assert!(p.sub(&q).unwrap().sup_norm() < 1e-12);
}

#[test]
fn shifted_product_moves_each_factor() {
    let g = periodic(256);
    let h = g.spacing();
    let w = smooth_pair(g);
    let t = 5.0 * h;
    let c = WaveProfiles::new(w.plus.clone(), vec![Field1D::from_fn(g, |x| (4.0 * x).sin()); 2]).unwrap();
    let a = hhl_product(&c, Sign::Plus, Sign::Minus, 0, 0, 4, 4, 0.45, t).unwrap();
    let lo = wavemaps_core::spectral::lp_project(&c.plus[0], Axis::X, 4, false).unwrap();
    let hi = wavemaps_core::spectral::lp_project(&c.minus[0], Axis::X, 4, false).unwrap();
    let hi = wavemaps_core::spectral::derivative(&hi, Axis::X).unwrap();
    let n = g.num_points;
    for i in 0..n {
        let lo_v = lo.samples[(i + n - 5) % n];
        let hi_v = hi.samples[(i + 5) % n];
        assert!((a.samples[i] - 4f64.powf(0.45) * lo_v * hi_v).abs() < 1e-11);
    }
}

#[test]
fn single_scale_waves_only_light_up_their_scale() {
    let g = periodic(2048);
    let m0 = 32u64;
    let f = Field1D::from_fn(g, |x| (24.0 * x).sin());
    let w = WaveProfiles::new(vec![f.clone(), f.scale(0.5)], vec![Field1D::zeros(g); 2]).unwrap();
    let scales = default_scales(g);
    let column: Vec<u64> = scales.iter().copied().filter(|&m| m >= 4).collect();
    let rep = hhl_scaling_report(&w, 0.45, 0.74, &scales, &column, None, false).unwrap();
    let peak = rep.column.iter().find(|c| c.0 == m0).unwrap().1;
    assert!(peak > 0.1);
    for &(m, v) in &rep.column {
        if m != m0 {
            assert!(v < 1e-10 * peak, "M = {m}: {v}");
        }
    }
}

#[test]
fn lacunary_adversary_grows_like_m_to_the_s() {
    let g = periodic(4096);
    let scales = default_scales(g);
    let column: Vec<u64> = (4..=8).map(|k| 1u64 << k).collect();
    let adv = matched_adversary(g, 3, &column, 0.45, 2.0).unwrap();
    let lin = adv.plus.iter().map(|f| holder_norm(f, 0.45)).fold(0.0, f64::max);
    assert!((lin - 2.0).abs() < 1e-12);
    let rep = hhl_scaling_report(&adv, 0.45, 0.74, &scales, &column, None, false).unwrap();
    assert!((rep.fit.slope - 0.45).abs() < 0.02, "{:?}", rep.fit);
    assert!(lacunary_adversary(Grid1D::new(256, 2.0).unwrap(), 3, &column, 1.0).is_err());
    assert!(lacunary_adversary(periodic(256), 3, &[1024], 1.0).is_err());
}

#[test]
fn brownian_column_stays_bounded() {
    let waves = WaveProfiles::from_linear(&brownian_linear(1 << 14, 2f64.powi(-11), 11)).unwrap();
    let scales = default_scales(waves.grid);
    let column: Vec<u64> = (4..=10).map(|k| 1u64 << k).collect();
    let rep = hhl_scaling_report(&waves, 0.45, 0.74, &scales, &column, None, false).unwrap();
    assert!(rep.fit.slope >= -0.5 && rep.fit.slope <= 0.1, "{:?}", rep.fit);
}

#[test]
fn ds_norm_is_stable_under_refinement_and_the_product_estimate_holds() {
    let fine = brownian_linear(1 << 12, 2f64.powi(-7), 5);
    let fw = WaveProfiles::from_linear(&fine).unwrap();
    let cg = periodic(1 << 11);
    let restrict = |f: &Field1D| Field1D::new(cg, f.samples.iter().step_by(2).copied().collect()).unwrap();
    let cw = WaveProfiles::new(
        fw.plus.iter().map(restrict).collect(),
        fw.minus.iter().map(restrict).collect(),
    )
    .unwrap();
    let scales = default_scales(cg);
    let ts = default_shifts(2.0, 8);
    let a = ds_norm(&cw, 0.45, &scales, &ts).unwrap();
    let b = ds_norm(&fw, 0.45, &scales, &ts).unwrap();
    assert!(a.ds_value.is_finite() && a.ds_value > 0.0);
    assert!((a.ds_value - b.ds_value).abs() <= 0.1 * b.ds_value, "{} vs {}", a.ds_value, b.ds_value);
    let rep = hhl_scaling_report(&cw, 0.45, 0.74, &scales, &scales[2..], Some(a.ds_value), true).unwrap();
    assert_eq!(rep.lemma.len(), scales.len() * (scales.len() + 1) / 2);
    assert_eq!(rep.lemma_holds, Some(true), "max ratio {}", rep.lemma_max_ratio);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hhl_product_is_bilinear(a in -2.0f64..2.0, b in -2.0f64..2.0, t in -1.0f64..1.0) {
        let g = periodic(256);
        let w1 = smooth_pair(g);
        let w2 = WaveProfiles::new(
            vec![Field1D::from_fn(g, |x| (2.0 * x).cos()), Field1D::from_fn(g, |x| (7.0 * x).sin())],
            vec![Field1D::from_fn(g, |x| (5.0 * x).sin()), Field1D::from_fn(g, |x| (3.0 * x).cos())],
        ).unwrap();
        let mix = |p: &[Field1D], q: &[Field1D]| -> Vec<Field1D> {
            p.iter().zip(q).map(|(x, y)| x.zip(y, |u, v| a * u + b * v).unwrap()).collect()
        };
        // linear in the first factor with the second held fixed
        let lhs_w = WaveProfiles::new(mix(&w1.plus, &w2.plus), w1.minus.clone()).unwrap();
        let w2f = WaveProfiles::new(w2.plus.clone(), w1.minus.clone()).unwrap();
        for (m, n) in [(0, 0), (1, 0), (0, 1)] {
            let l = hhl_product(&lhs_w, Sign::Plus, Sign::Minus, m, n, 4, 8, 0.45, t).unwrap();
            let r1 = hhl_product(&w1, Sign::Plus, Sign::Minus, m, n, 4, 8, 0.45, t).unwrap();
            let r2 = hhl_product(&w2f, Sign::Plus, Sign::Minus, m, n, 4, 8, 0.45, t).unwrap();
            let r = r1.zip(&r2, |u, v| a * u + b * v).unwrap();
            prop_assert!(l.sub(&r).unwrap().sup_norm() < 1e-10);
        }
    }
}
