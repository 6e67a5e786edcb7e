use std::sync::Arc;

use coagkin::coagulation::apply_bilinear;
use coagkin::grid::moment;
use coagkin::linearized::*;
use coagkin::norms::norm;
use coagkin::profiles::{constant_family_profile, solve_profile, ProfileOptions};
use coagkin::{make_grid, Grid, GridFunction, GridKind, KernelSpec, NormKind, PerturbationFamily};
use nalgebra::DMatrix;

fn log_grid(n: usize) -> Arc<Grid> {
    make_grid(GridKind::LogUniform, 1e-4, 60.0, n).unwrap()
}

fn l1k(f: &GridFunction, k: f64) -> f64 {
    norm(f, NormKind::L1k { k }).unwrap()
}

fn sup_on(f: &GridFunction, lo: f64, hi: f64, exact: impl Fn(f64) -> f64) -> f64 {
    f.grid()
        .nodes()
        .iter()
        .zip(f.values())
        .filter(|(x, _)| (lo..=hi).contains(*x))
        .map(|(&x, &v)| (v - exact(x)).abs())
        .fold(0.0, f64::max)
}

fn exponential(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g, |x| (-x).exp())
}

fn bump(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g, |x| {
        let s = (x - 2.0) / 1.5;
        if s.abs() < 1.0 {
            (-1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    })
}

#[test]
fn scaling_direction_is_in_the_kernel() {
    let err = |n| {
        let g = log_grid(n);
        let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap();
        let v = GridFunction::from_fn(&g, |x| (1.0 - x) * (-x).exp());
        l1k(&l0.apply(&v).unwrap(), 2.0)
    };
    let (coarse, fine) = (err(256), err(512));
    assert!(fine <= 5e-3, "{fine:.3e}");
    assert!(coarse / fine >= 2.0, "{coarse:.3e} -> {fine:.3e}");
}

#[test]
fn linearisation_on_the_exponential() {
    let g = log_grid(512);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap();
    let r = l0.apply(&exponential(&g)).unwrap();
    assert!(sup_on(&r, 0.1, 20.0, |x| (x - 2.0) * (-x).exp()) < 5e-3);
}

#[test]
fn three_forms_agree() {
    let g = log_grid(512);
    let forms: Vec<OperatorMatrix> = [OperatorForm::Direct, OperatorForm::Convolution, OperatorForm::Primitive]
        .iter()
        .map(|&f| assemble_l0(&g, f).unwrap())
        .collect();
    let corpus = [
        bump(&g),
        GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp()),
        GridFunction::from_fn(&g, |x| x * x * (-x).exp() * (1.0 + 0.3 * x.sin())),
    ];
    for h in &corpus {
        let outs: Vec<GridFunction> = forms.iter().map(|l| l.apply(h).unwrap()).collect();
        for o in &outs[1..] {
            let d = o.sub(&outs[0]).unwrap();
            assert!(d.max_abs() < 5e-3, "sup {:.3e}", d.max_abs());
            assert!(l1k(&d, 2.0) < 1e-3, "L1_2 {:.3e}", l1k(&d, 2.0));
        }
    }
}

#[test]
fn perturbed_operator_reduces_and_splits() {
    let g = log_grid(256);
    let g0 = exponential(&g);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap();
    let le0 = assemble_leps(&g, &g0, &KernelSpec::constant()).unwrap();
    assert!((l0.matrix() - le0.matrix()).abs().max() < 1e-10);

    // Closed-form profile of K = 2.2: the scaling direction G + x G' is a null direction.
    let big = log_grid(512);
    let ge = constant_family_profile(&big, 0.2);
    let k = KernelSpec::new(0.2, PerturbationFamily::One).unwrap();
    let le = assemble_leps(&big, &ge, &k).unwrap();
    let a = 1.1f64;
    let v = GridFunction::from_fn(&big, |x| (1.0 - x / a) * (-x / a).exp() / (a * a));
    assert!(l1k(&le.apply(&v).unwrap(), 2.0) <= 5e-3);

    // L_eps h - L_0 h = 2 C_2(G_eps - G_0, h) + 2 (C_K - C_2)(G_eps, h).
    let k = KernelSpec::new(0.1, PerturbationFamily::ratio_sym_default()).unwrap();
    let ge = solve_profile(&k, &g, &ProfileOptions::default()).unwrap().g;
    let le = assemble_leps(&g, &ge, &k).unwrap();
    let h = random_zero_mass_seed(&g, 7);
    let lhs = le.apply(&h).unwrap().sub(&l0.apply(&h).unwrap()).unwrap();
    let c2 = KernelSpec::constant();
    let first = apply_bilinear(&c2, &ge.sub(&g0).unwrap(), &h).unwrap();
    let second = apply_bilinear(&k, &ge, &h).unwrap().sub(&apply_bilinear(&c2, &ge, &h).unwrap()).unwrap();
    let rhs = first.add(&second).unwrap().scaled(2.0);
    assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-8);
}

#[test]
fn operators_preserve_mass_on_zero_mass_inputs() {
    let g = log_grid(256);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap().projected();
    let k = KernelSpec::new(0.1, PerturbationFamily::ratio_sym_default()).unwrap();
    let ge = solve_profile(&k, &g, &ProfileOptions::default()).unwrap().g;
    let le = assemble_leps(&g, &ge, &k).unwrap().projected();
    for seed in 0..5 {
        let h = random_zero_mass_seed(&g, seed);
        assert!(moment(&h, 1.0).abs() < 1e-10);
        for l in [&l0, &le] {
            let out = l.apply(&h).unwrap();
            assert!(moment(&out, 1.0).abs() <= 1e-8 * l1k(&h, 0.0).max(1.0));
        }
    }
    assert!(l0.mass_defect() < 1e-8);
}

#[test]
fn projection_to_zero_mass() {
    let g = log_grid(512);
    let e = exponential(&g);
    assert!(zero_mass_project(&e).max_abs() < 1e-12);
    let h = GridFunction::from_fn(&g, |x| x * (-x).exp());
    let p = zero_mass_project(&h);
    assert!(moment(&p, 1.0).abs() < 1e-10);
    let expect = GridFunction::from_fn(&g, |x| (x - 2.0) * (-x).exp());
    assert!(p.sub(&expect).unwrap().max_abs() < 1e-3);
    assert!(moment(&expect, 1.0).abs() < 1e-6);
    let p2 = zero_mass_project(&p);
    assert!(p2.sub(&p).unwrap().max_abs() < 1e-12);
}

#[test]
fn linear_decay_samples() {
    let g = log_grid(256);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap().projected();
    let zero = GridFunction::zeros(&g);
    let s = evolve_linear(&l0, &zero, 2.0, 1e-2, NormKind::L1k { k: 3.0 }, 10).unwrap();
    assert!(s.norms.iter().all(|&v| v == 0.0));
    let h0 = zero_mass_project(&GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp()));
    let s = evolve_linear(&l0, &h0, 10.0, 1e-2, NormKind::Wm1Inf, 10).unwrap();
    assert!(s.fitted_rate(5.0, 10.0).unwrap() > 0.0);
    assert!(s.norms.last().unwrap() < &s.norms[0]);
    assert!(evolve_linear(&l0, &h0, 1.0, 0.1, NormKind::Wm1Inf, 1).is_err());
}

#[test]
fn gap_estimates_of_the_unperturbed_operator() {
    let g = log_grid(256);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap();
    let opts = GapOptions { trials: 5, ..Default::default() };
    let hm = estimate_gap(&l0, NormKind::Hm1Exp { mu: 0.5 }, &opts).unwrap();
    assert!(hm.worst_rate >= 0.9, "{}", hm.worst_rate);
    assert_eq!(hm.rates.len(), 5);
    let l1 = estimate_gap(&l0, NormKind::L1k { k: 3.0 }, &opts).unwrap();
    assert!(l1.worst_rate >= 0.45, "{}", l1.worst_rate);
    assert!(estimate_gap(&l0, NormKind::L1k { k: 3.0 }, &GapOptions { trials: 4, ..opts }).is_err());

    let k = KernelSpec::new(0.1, PerturbationFamily::ratio_sym_default()).unwrap();
    let ge = solve_profile(&k, &g, &ProfileOptions::default()).unwrap().g;
    let le = assemble_leps(&g, &ge, &k).unwrap();
    let est = estimate_gap(&le, NormKind::L1k { k: 3.0 }, &opts).unwrap();
    assert!(est.worst_rate >= 0.3, "{}", est.worst_rate);
}

#[test]
fn operator_norm_differences() {
    let g = log_grid(256);
    let l0 = assemble_l0(&g, OperatorForm::Direct).unwrap();
    assert_eq!(op_norm_diff_l1k(&l0, &l0, 3.0).unwrap(), 0.0);
    let n = g.len();
    let shifted = OperatorMatrix::new(g.clone(), l0.matrix() + DMatrix::identity(n, n) * -0.7, l0.space, l0.form).unwrap();
    assert!((op_norm_diff_l1k(&shifted, &l0, 3.0).unwrap() - 0.7).abs() < 1e-12);
    let ratios: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&eps| {
            let k = KernelSpec::new(eps, PerturbationFamily::ratio_sym_default()).unwrap();
            let ge = solve_profile(&k, &g, &ProfileOptions::default()).unwrap().g;
            op_norm_diff_l1k(&assemble_leps(&g, &ge, &k).unwrap(), &l0, 3.0).unwrap() / eps
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo - 1.0 <= 0.2, "{ratios:?}");
    let other = log_grid(128);
    let l_other = assemble_l0(&other, OperatorForm::Direct).unwrap();
    assert!(op_norm_diff_l1k(&l0, &l_other, 3.0).is_err());
}

#[test]
fn cutoff_splitting() {
    let g = log_grid(512);
    let r = default_cutoff(&g, 1.1, 3.0).unwrap();
    assert!(r >= cutoff_threshold(1.1, 3.0).unwrap());
    let cfg = SplittingConfig { r, mu: 0.5 };
    let (a, b) = assemble_splitting(&g, &cfg).unwrap();
    let lc = assemble_l0(&g, OperatorForm::Convolution).unwrap();
    for seed in 0..3 {
        let h = random_zero_mass_seed(&g, seed);
        let sum = a.apply(&h).unwrap().add(&b.apply(&h).unwrap()).unwrap();
        assert!(sum.sub(&lc.apply(&h).unwrap()).unwrap().max_abs() < 1e-10);
        let ah = norm(&a.apply(&h).unwrap(), NormKind::L2Exp { mu: 0.5 }).unwrap();
        assert!(ah <= splitting_a_bound(r, 0.5, 3.0) * l1k(&h, 3.0) + 1e-6);
    }
    let est = estimate_gap(&b, NormKind::L1k { k: 3.0 }, &GapOptions { trials: 5, ..Default::default() }).unwrap();
    assert!(est.worst_rate >= 0.9, "{}", est.worst_rate);
    assert!(assemble_splitting(&g, &SplittingConfig { r: 100.0, mu: 0.5 }).is_err());
    assert!(assemble_splitting(&g, &SplittingConfig { r, mu: 1.0 }).is_err());
}

#[test]
fn gap_transfer_formulas() {
    let (c, l) = compose_gap_constants(1.0, 1.0, 1.0, 0.5, 1.0, 1.0, TransferMode::Restrict).unwrap();
    assert!((c - 3.0).abs() < 1e-14 && l == 0.5);
    let (c, l) = compose_gap_constants(1.0, 0.5, 1.0, 1.0, 1.0, 1.0, TransferMode::Extend).unwrap();
    assert!((c - 3.0).abs() < 1e-14 && l == 0.5);
    let (c, _) = compose_gap_constants(2.0, 1.0, 1.7, 0.5, 0.0, 1.0, TransferMode::Restrict).unwrap();
    assert_eq!(c, 1.7);
    assert!(compose_gap_constants(1.0, 0.5, 1.0, 0.5, 1.0, 1.0, TransferMode::Restrict).is_err());
    assert!(compose_gap_constants(1.0, 1.0, 1.0, 0.5, 1.0, 1.0, TransferMode::Extend).is_err());
}

#[test]
fn perturbed_gap_constants() {
    let gc = GapConstants::new(1.5, 2.0).unwrap();
    assert_eq!(gc.m, 3.0);
    assert!((gc.eps0 - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(perturbed_gap(&gc, 0.0).unwrap(), (0.5, true));
    let (lam, ok) = perturbed_gap(&gc, gc.eps0).unwrap();
    // The gap closes exactly at eps0, which is itself not admissible.
    assert!(lam.abs() < 1e-14 && !ok);
    let lams: Vec<f64> = [0.0, 0.05, 0.1].iter().map(|&e| perturbed_gap(&gc, e).unwrap().0).collect();
    assert!(lams.windows(2).all(|w| w[1] < w[0]));
    assert!(perturbed_gap(&gc, -0.1).is_err());
    assert!(GapConstants::new(0.0, 1.0).is_err());
}

#[test]
fn linearisation_is_the_derivative_of_the_nonlinear_operator() {
    let g = log_grid(256);
    let k = KernelSpec::new(0.1, PerturbationFamily::ratio_sym_default()).unwrap();
    let ge = solve_profile(&k, &g, &ProfileOptions::default()).unwrap().g;
    let le = assemble_leps(&g, &ge, &k).unwrap();
    let v = random_zero_mass_seed(&g, 3);
    let lv = le.apply(&v).unwrap();
    let n0 = nonlinear_operator(&k, &ge);
    let err = |d: f64| {
        let nd = nonlinear_operator(&k, &ge.lin_comb(1.0, &v, d).unwrap());
        l1k(&nd.sub(&n0).unwrap().scaled(1.0 / d).sub(&lv).unwrap(), 2.0)
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!((1.8..2.2).contains(&(e1 / e2)), "{e1:.3e} {e2:.3e}");
}

#[test]
fn nonlinear_operators_stay_close() {
    let g = log_grid(256);
    let corpus = [
        exponential(&g),
        GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp()),
        GridFunction::from_fn(&g, |x| x * x * (-x).exp() / 2.0),
    ];
    for eps in [0.05, 0.2] {
        let k = KernelSpec::new(eps, PerturbationFamily::ratio_sym_default()).unwrap();
        for f in &corpus {
            let d = nonlinear_operator(&k, f).sub(&nonlinear_operator(&KernelSpec::constant(), f)).unwrap();
            for kk in [0.0, 2.0, 3.0] {
                assert!(l1k(&d, kk) <= 1.5 * eps * l1k(f, kk).powi(2) + 1e-6);
            }
        }
    }
}
