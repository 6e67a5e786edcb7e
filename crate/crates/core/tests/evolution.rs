use std::sync::Arc;

use coagkin::evolution::*;
use coagkin::grid::{self, moment};
use coagkin::norms::norm;
use coagkin::{make_grid, Grid, GridFunction, GridKind, KernelSpec, NormKind, PerturbationFamily};

fn log_grid(n: usize) -> Arc<Grid> {
    make_grid(GridKind::LogUniform, 1e-4, 60.0, n).unwrap()
}

fn gamma_two(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g, |x| 4.0 * x * (-2.0 * x).exp())
}

fn l1k2(f: &GridFunction) -> f64 {
    norm(f, NormKind::L1k { k: 2.0 }).unwrap()
}

#[test]
fn dilation_semigroup() {
    let g = log_grid(512);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    assert_eq!(apply_s(0.0, &e).unwrap(), e);
    let h = gamma_two(&g);
    for t in [0.1, 0.37, 1.0] {
        let s = apply_s(t, &h).unwrap();
        assert!((moment(&s, 1.0) / moment(&h, 1.0) - 1.0).abs() < 1e-6, "t={t}");
    }
    let s = apply_s(2f64.ln(), &e).unwrap();
    let exact = GridFunction::from_fn(&g, |x| 4.0 * (-2.0 * x).exp());
    assert!(s.sub(&exact).unwrap().max_abs() < 1e-6);
    assert!(apply_s(-1.0, &e).is_err());
}

#[test]
fn transport_semigroup_decay() {
    let g = log_grid(512);
    let h = GridFunction::from_fn(&g, |x| x * x * (-x).exp() * (1.0 + 0.5 * x.sin()));
    assert_eq!(apply_t(0.0, &h).unwrap(), h);
    for t in [0.2, 0.8, 2.0] {
        let th = apply_t(t, &h).unwrap();
        let l1 = norm(&th, NormKind::L1k { k: 0.0 }).unwrap();
        let expect = (-t).exp() * norm(&h, NormKind::L1k { k: 0.0 }).unwrap();
        assert!((l1 / expect - 1.0).abs() < 1e-6, "t={t}: {l1} vs {expect}");
        for k in [1.0, 2.0] {
            let nk = NormKind::L1k { k };
            assert!(norm(&th, nk).unwrap() <= (-t).exp() * norm(&h, nk).unwrap() + 1e-12);
        }
        let l2 = NormKind::L2Exp { mu: 0.5 };
        assert!(norm(&th, l2).unwrap() <= (-t / 2.0).exp() * norm(&h, l2).unwrap() + 1e-6);
        let hm = NormKind::Hm1Exp { mu: 0.5 };
        assert!(norm(&th, hm).unwrap() <= (-1.5 * t).exp() * norm(&h, hm).unwrap() + 1e-6);
    }
}

#[test]
fn stationary_profile_is_a_fixed_point_of_a_step() {
    let g = log_grid(512);
    let g0 = GridFunction::from_fn(&g, |x| (-x).exp());
    // Exact-shift step with the exponential schemes: the Duhamel integral of
    // the frozen collision term reproduces the drift exactly at a fixed point.
    let dt = EvolutionConfig::default().effective_dt(&g);
    for scheme in [Scheme::EtdEuler, Scheme::EtdRk2] {
        let s = step_mild(&g0, &KernelSpec::constant(), dt, scheme).unwrap();
        let d = l1k2(&s.sub(&g0).unwrap());
        assert!(d <= 1e-4 * dt, "{scheme:?}: {d:.3e}");
    }
    assert!(step_mild(&g0, &KernelSpec::constant(), 0.0, Scheme::MildEuler).is_err());
}

fn m0_error(dt: f64, scheme: Scheme) -> f64 {
    let g = log_grid(256);
    let f0 = gamma_two(&g);
    let cfg = EvolutionConfig { dt, t_final: 1.5, scheme, ..Default::default() };
    let tr = evolve(&f0, &KernelSpec::constant(), &cfg).unwrap();
    let r = tr.records.last().unwrap();
    (r.m0 - m0_logistic(r.t, tr.records[0].m0)).abs()
}

#[test]
fn midpoint_scheme_is_second_order() {
    let h = log_grid(256).coord_step();
    let (e1, e2) = (m0_error(8.0 * h, Scheme::MildMidpoint), m0_error(4.0 * h, Scheme::MildMidpoint));
    let ratio = e1 / e2;
    assert!((3.0..5.5).contains(&ratio), "errors {e1:.3e} {e2:.3e}, ratio {ratio}");
}

#[test]
fn euler_step_against_fine_substeps() {
    let g = log_grid(512);
    let f0 = gamma_two(&g);
    let k = KernelSpec::constant();
    let defect = |dt: f64| {
        let one = step_mild(&f0, &k, dt, Scheme::MildEuler).unwrap();
        let mut fine = f0.clone();
        for _ in 0..100 {
            fine = step_mild(&fine, &k, dt / 100.0, Scheme::MildEuler).unwrap();
        }
        l1k2(&one.sub(&fine).unwrap())
    };
    let (d1, d2) = (defect(0.1), defect(0.05));
    // The defect is O(dt^2): halving dt divides it by about 4.
    let ratio = d1 / d2;
    assert!((3.0..5.0).contains(&ratio), "{d1:.3e} {d2:.3e}");
}

#[test]
fn evolution_from_the_profile_stays_put() {
    let g = log_grid(512);
    let g0 = GridFunction::from_fn(&g, |x| (-x).exp());
    let cfg = EvolutionConfig { dt: 0.02, t_final: 5.0, reference: Some(g0.clone()), ..Default::default() };
    let tr = evolve(&g0, &KernelSpec::constant(), &cfg).unwrap();
    let worst = tr.distances().into_iter().fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst:.3e}");
}

#[test]
fn moments_and_positivity_over_long_runs() {
    let g = log_grid(512);
    let f0 = gamma_two(&g);
    let cfg = EvolutionConfig { dt: 0.02, t_final: 12.0, record_stride: 10, ..Default::default() };
    let tr = evolve(&f0, &KernelSpec::constant(), &cfg).unwrap();
    assert!(tr.m1_drift <= 1e-3, "m1 drift {:.3e}", tr.m1_drift);
    assert!(tr.min_ratio >= -1e-8, "undershoot {:.3e}", tr.min_ratio);
    let m00 = tr.records[0].m0;
    for r in &tr.records {
        assert!((r.m0 - m0_logistic(r.t, m00)).abs() < 1e-3, "t={}: {}", r.t, r.m0);
    }
    // With eps > 0 the logistic curve bounds m0 from above.
    let k = KernelSpec::new(0.2, PerturbationFamily::ratio_sym_default()).unwrap();
    let tr = evolve(&f0, &k, &cfg).unwrap();
    for r in &tr.records {
        assert!(r.m0 <= m0_logistic(r.t, m00) + 1e-3, "t={}", r.t);
    }
    assert!(tr.m1_drift <= 1e-3);
}

#[test]
fn mass_drift_decreases_under_refinement() {
    let drift = |n| {
        let g = log_grid(n);
        let cfg = EvolutionConfig { dt: 0.05, t_final: 3.0, ..Default::default() };
        let k = KernelSpec::new(0.3, PerturbationFamily::ratio_sym_default()).unwrap();
        evolve(&gamma_two(&g), &k, &cfg).unwrap().m1_drift
    };
    let (a, b) = (drift(128), drift(256));
    assert!(b < a, "{a:.3e} -> {b:.3e}");
}

#[test]
fn constant_perturbation_is_a_rescaling() {
    // K = 2 + eps is solved by f = g / a with a = 1 + eps/2 and g a K = 2 solution.
    let g = log_grid(256);
    let eps = 0.3;
    let a = 1.0 + eps / 2.0;
    let f0 = gamma_two(&g);
    let cfg = EvolutionConfig { dt: 0.05, t_final: 3.0, ..Default::default() };
    let te = evolve(&f0, &KernelSpec::new(eps, PerturbationFamily::One).unwrap(), &cfg).unwrap();
    let t0 = evolve(&f0.scaled(a), &KernelSpec::constant(), &cfg).unwrap();
    let d = l1k2(&te.final_state.sub(&t0.final_state.scaled(1.0 / a)).unwrap());
    assert!(d <= 5e-3, "{d:.3e}");
}

#[test]
fn dynamics_stay_close_at_first_order() {
    let g = log_grid(256);
    let f0 = gamma_two(&g);
    let cfg = EvolutionConfig { dt: 0.02, t_final: 1.0, ..Default::default() };
    let base = evolve(&f0, &KernelSpec::constant(), &cfg).unwrap().final_state;
    let ratios: Vec<f64> = [0.01, 0.02, 0.04]
        .iter()
        .map(|&eps| {
            let k = KernelSpec::new(eps, PerturbationFamily::ratio_sym_default()).unwrap();
            l1k2(&evolve(&f0, &k, &cfg).unwrap().final_state.sub(&base).unwrap()) / eps
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo - 1.0 <= 0.25, "{ratios:?}");
}

#[test]
fn logistic_closed_form() {
    assert!((m0_logistic(0.0, 0.7) - 0.7).abs() < 1e-15);
    assert!((m0_logistic(60.0, 0.3) - 1.0).abs() < 1e-12);
    let e = 1f64.exp();
    assert!((m0_logistic(1.0, 2.0) - e / (0.5 + e - 1.0)).abs() < 1e-14);
    assert!((m0_logistic(1.0, 2.0) - 1.22541).abs() < 2e-5);
}

#[test]
fn physical_variables_round_trip() {
    let g = log_grid(512);
    let f = gamma_two(&g);
    let p0 = to_physical(&f, 0.0).unwrap();
    assert_eq!(p0.tau, 0.0);
    assert_eq!(p0.phi.values(), f.values());
    for t in [0.3, 1.7] {
        let p = to_physical(&f, t).unwrap();
        assert!((p.tau - (t.exp() - 1.0)).abs() < 1e-14);
        let (t2, back) = from_physical(&p).unwrap();
        assert!((t2 - t).abs() < 1e-12);
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-300)));
        let mass = moment(&p.phi, 1.0);
        assert!((mass / moment(&f, 1.0) - 1.0).abs() < 1e-6);
        // Sampled back on the original grid by interpolation.
        let resampled = rescaled_physical(&p, &g);
        assert!(resampled.sub(&f).unwrap().max_abs() < 1e-4);
    }
    assert!(to_physical(&f, -0.1).is_err());
    assert!(grid::integrate(&clipped_physical(&to_physical(&f, 0.5).unwrap())).is_finite());
}
