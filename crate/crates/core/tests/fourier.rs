use std::f64::consts::PI;

use coagkin::evolution::{evolve, EvolutionConfig};
use coagkin::fourier::*;
use coagkin::norms::norm;
use coagkin::{make_grid, GridFunction, GridKind, KernelSpec, NormKind};

fn uniform01() -> LineDensity {
    CorpusDensity::Uniform.sample(DEFAULT_SAMPLES).unwrap()
}

fn exponential() -> LineDensity {
    CorpusDensity::Exponential.sample(DEFAULT_SAMPLES).unwrap()
}

#[test]
fn modulus_closed_forms() {
    for d in CorpusDensity::ALL {
        let f = d.sample(DEFAULT_SAMPLES).unwrap();
        assert!((fourier_modulus(&f, 0.0) - f.mass()).abs() < 1e-12, "{}", d.name());
    }
    assert!((fourier_modulus(&uniform01(), 1.0) - 2.0 * 0.5f64.sin()).abs() < 1e-4);
    assert!((fourier_modulus(&exponential(), 1.0) - 0.5f64.sqrt()).abs() < 1e-4);
}

#[test]
fn local_sine_alpha() {
    let a = alpha_local_from(1.0, 1.0, 2.0 * PI);
    assert!((a - 1.0 / (512.0 * PI)).abs() < 1e-15);
    assert!((a - 6.2176e-4).abs() < 1e-7);
    assert!((alpha_local_from(1.0, 2.0, 2.0 * PI) - a / 16.0).abs() < 1e-18);
    // Uniform on [-pi, pi]: the sine integral vanishes.
    let f = LineDensity::from_fn(-PI, PI, 4001, |_| 1.0 / (2.0 * PI)).unwrap();
    let alpha = alpha_local(&f, PI).unwrap();
    assert!(alpha > 0.0 && alpha < 1.0);
    assert!(f.sine_integral().abs() < 1e-12);
    assert!(f.sine_integral() <= (1.0 - alpha) * f.mass());
    assert!(alpha_local(&f, 0.0).is_err());
}

#[test]
fn delta_lower_bound() {
    assert!((delta_lower(PI / 4.0).unwrap() - PI / 16.0).abs() < 1e-15);
    assert!((delta_lower(PI / 4.0).unwrap() - 0.19635).abs() < 1e-5);
    for i in 1..200 {
        let e = i as f64 / 200.0 * PI / 2.0;
        assert!(1.0 - (PI / 2.0 - e).sin() >= delta_lower(e).unwrap() - 1e-15, "eps={e}");
    }
    assert!(delta_lower(1e-9).unwrap() < 1e-17);
    for bad in [0.0, PI / 2.0, -1.0, 2.0] {
        assert!(delta_lower(bad).is_err());
    }
}

#[test]
fn global_sine_alpha() {
    // R = max(M, 2 int |x| f) = 1.
    assert!((alpha_global_from(1.0, 0.5, 1.0) - 2f64.powi(-17)).abs() < 1e-20);
    assert!((2f64.powi(-17) - 7.6294e-6).abs() < 1e-9);
    // A symmetric density has zero sine integral.
    let f = LineDensity::from_fn(-3.0, 3.0, 6001, |x| (-x * x).exp() / PI.sqrt()).unwrap();
    assert!(f.sine_integral().abs() < 1e-12);
    assert!(f.sine_integral() <= (1.0 - alpha_global(&f)) * f.mass());
    // e^{-x}: M = 1, int x f = 1, ||f||^2 = 1/2, R = 2: alpha = 2^-17 / (4 * 1/4) = 2^-17.
    let e = exponential();
    assert!((e.sine_integral() - 0.5).abs() < 1e-6);
    let alpha = alpha_global(&e);
    assert!((alpha / 2f64.powi(-17) - 1.0).abs() < 1e-4, "{alpha:e}");
    assert!(e.sine_integral() <= (1.0 - alpha) * e.mass());
}

#[test]
fn fourier_bound_rows() {
    let rep = fourier_bound_verify(&uniform01(), &[0.0, 1.0]);
    let zero = rep.rows[0];
    assert_eq!(zero.alpha, 0.0);
    assert_eq!(zero.bound, rep.mass);
    assert!(zero.holds());
    let one = rep.rows[1];
    assert!((one.r - (1.0 + 2.0 * PI)).abs() < 1e-6);
    assert!((one.alpha - 2.876e-7).abs() < 1e-10, "{:e}", one.alpha);
    assert!((one.bound - 0.9999997).abs() < 1e-7);
    assert!((one.measured - 0.95885).abs() < 1e-4);
    assert!(rep.all_hold() && rep.violations().is_empty());
}

#[test]
fn corpus_satisfies_the_bound_with_positive_margin() {
    let xis = [0.5, 1.0, 2.0, 5.0, 10.0];
    for d in CorpusDensity::ALL {
        let rep = fourier_bound_verify(&d.sample(DEFAULT_SAMPLES).unwrap(), &xis);
        for row in &rep.rows {
            assert!(row.alpha > 0.0 && row.alpha < 1.0);
            assert!(row.margin > 0.0, "{} xi={}: margin {}", d.name(), row.xi, row.margin);
        }
    }
}

#[test]
fn alpha_is_monotone_in_frequency_and_norm() {
    let (m, a, l2) = (1.0, 0.7, 1.3);
    let mut prev = 0.0;
    for i in 1..50 {
        let (alpha, _) = alpha_fourier(m, a, l2, i as f64 * 0.2);
        assert!(alpha > prev);
        prev = alpha;
    }
    let (lo, _) = alpha_fourier(m, a, l2 * 1.01, 1.0);
    let (hi, _) = alpha_fourier(m, a, l2, 1.0);
    assert!(lo < hi);
}

#[test]
fn csv_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    fourier_bound_verify(&exponential(), &[1.0, 2.0]).write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi,measured,R,alpha,bound,margin"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn l2_envelope() {
    let g = make_grid(GridKind::LogUniform, 1e-4, 60.0, 512).unwrap();
    let f0 = GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp());
    let l2sq = norm(&f0, NormKind::L2Exp { mu: 0.0 }).unwrap().powi(2);
    assert!((l2sq - 0.5).abs() < 1e-6);
    assert!((l2_growth_envelope(&f0, 0.0).unwrap() - l2sq).abs() < 1e-15);
    for t in [0.5, 1.0, 2.0] {
        assert!((l2_growth_envelope(&f0, t).unwrap() / (l2sq * (5.0 * t).exp()) - 1.0).abs() < 1e-12);
    }
    assert!(l2_growth_envelope(&f0, -1.0).is_err());
    let cfg = EvolutionConfig { dt: 0.02, t_final: 2.0, keep_snapshots: true, ..Default::default() };
    let tr = evolve(&f0, &KernelSpec::constant(), &cfg).unwrap();
    for (t, f) in &tr.snapshots {
        let m = norm(f, NormKind::L2Exp { mu: 0.0 }).unwrap().powi(2);
        assert!(m <= l2_growth_envelope(&f0, *t).unwrap() * (1.0 + 1e-12), "t={t}");
    }
}
