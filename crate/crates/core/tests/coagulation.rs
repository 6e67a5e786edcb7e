use coagkin::coagulation::*;
use coagkin::grid::{self, moment};
use coagkin::norms::norm;
use coagkin::{make_grid, Grid, GridFunction, GridKind, KernelSpec, NormKind, PerturbationFamily};
use proptest::prelude::*;
use std::sync::Arc;

fn log_grid(n: usize) -> Arc<Grid> {
    make_grid(GridKind::LogUniform, 1e-4, 60.0, n).unwrap()
}

fn k_eps(eps: f64, fam: PerturbationFamily) -> KernelSpec {
    KernelSpec::new(eps, fam).unwrap()
}

fn sup_on(f: &GridFunction, lo: f64, hi: f64, exact: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid();
    g.nodes()
        .iter()
        .zip(f.values())
        .filter(|(x, _)| (lo..=hi).contains(*x))
        .map(|(&x, &v)| (v - exact(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn quadratic_constant_kernel_on_exponential() {
    let g = log_grid(512);
    let f = GridFunction::from_fn(&g, |x| (-x).exp());
    let r = apply_quadratic(&KernelSpec::constant(), &f);
    assert!(sup_on(&r.total, 0.1, 20.0, |x| (x - 2.0) * (-x).exp()) < 3e-3);
    for i in 0..g.len() {
        assert_eq!(r.total.values()[i], r.gain.values()[i] - r.loss.values()[i]);
    }
    // A constant kernel 2.1 scales the operator by 1.05.
    let r = apply_quadratic(&k_eps(0.1, PerturbationFamily::One), &f);
    assert!(sup_on(&r.total, 0.1, 20.0, |x| 1.05 * (x - 2.0) * (-x).exp()) < 3e-3);
    let z = apply_quadratic(&KernelSpec::constant(), &GridFunction::zeros(&g));
    assert_eq!(z.total.max_abs(), 0.0);
}

#[test]
fn bilinear_matches_quadratic_and_is_symmetric() {
    let g = log_grid(256);
    let k = k_eps(0.3, PerturbationFamily::ratio_sym_default());
    let f = GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp());
    let h = GridFunction::from_fn(&g, |x| (-x).exp() * (1.0 + x.sin()));
    let q = apply_quadratic(&k, &f).total;
    let b = apply_bilinear(&k, &f, &f).unwrap();
    assert!(b.sub(&q).unwrap().max_abs() < 1e-12);
    let fh = apply_bilinear(&k, &f, &h).unwrap();
    let hf = apply_bilinear(&k, &h, &f).unwrap();
    assert!(fh.sub(&hf).unwrap().max_abs() < 1e-12);
    let other = log_grid(128);
    assert!(apply_bilinear(&k, &f, &GridFunction::zeros(&other)).is_err());
}

/// Dense trapezoid reference for `C_K(g, h)` from the closed-form inputs.
fn brute_bilinear(k: &KernelSpec, g: &dyn Fn(f64) -> f64, h: &dyn Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let m = 4096;
    let trap = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
        let step = (b - a) / m as f64;
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * f(a + i as f64 * step)
            })
            .sum::<f64>()
            * step
    };
    let kk = |a: f64, b: f64| coagkin::kernels::eval_k(k, a, b).unwrap();
    let gain = if x > 2.0 * lo {
        0.5 * trap(lo, x - lo, &|y| kk(x - y, y) * g(x - y) * h(y))
    } else {
        0.0
    };
    // Loss integrals in log variables to resolve the small sizes.
    let (la, lb) = (lo.ln(), hi.ln());
    let lg = trap(la, lb, &|s| {
        let y = s.exp();
        kk(x, y) * g(y) * y
    });
    let lh = trap(la, lb, &|s| {
        let y = s.exp();
        kk(x, y) * h(y) * y
    });
    gain - 0.5 * g(x) * lh - 0.5 * h(x) * lg
}

#[test]
fn bilinear_against_dense_oracle() {
    let (lo, hi) = (1e-3, 30.0);
    let g = make_grid(GridKind::LogUniform, lo, hi, 64).unwrap();
    let k = k_eps(0.5, PerturbationFamily::MinOverMax);
    let gf = |x: f64| (-x).exp() * (1.0 + 0.5 * (0.7 * x).cos());
    let hf = |x: f64| x * (-1.5 * x).exp();
    let gv = GridFunction::from_fn(&g, gf);
    let hv = GridFunction::from_fn(&g, hf);
    let b = apply_bilinear(&k, &gv, &hv).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &x) in g.nodes().iter().enumerate() {
        let r = brute_bilinear(&k, &gf, &hf, x, lo, hi);
        worst = worst.max((b.values()[i] - r).abs());
    }
    assert!(worst < 2e-3, "sup error {worst:.3e}");
}

#[test]
fn number_loss_balance() {
    let g = log_grid(512);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let (l, r) = number_loss_identity(&KernelSpec::constant(), &e);
    assert!((l + 1.0).abs() < 2e-3 && (r + 1.0).abs() < 2e-3, "{l} {r}");
    let (l, r) = number_loss_identity(&KernelSpec::constant(), &GridFunction::zeros(&g));
    assert_eq!((l, r), (0.0, 0.0));
    let f = GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp());
    let (l, r) = number_loss_identity(&k_eps(0.5, PerturbationFamily::MinOverMax), &f);
    assert!((l - r).abs() < 2e-3, "{l} {r}");
}

#[test]
fn integrated_residual_of_known_profiles() {
    let g = log_grid(512);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let r = integrated_residual(&KernelSpec::constant(), &e);
    let rel = |r: &GridFunction| {
        g.nodes()
            .iter()
            .zip(r.values())
            .filter(|(x, _)| (0.1..=20.0).contains(*x))
            .map(|(x, v)| v.abs() / (x * x))
            .fold(0.0, f64::max)
    };
    assert!(rel(&r) < 5e-3, "{}", rel(&r));
    assert_eq!(integrated_residual(&KernelSpec::constant(), &GridFunction::zeros(&g)).max_abs(), 0.0);
    // K = 2.2 is solved by the rescaled exponential with a = 1 + eps / 2.
    let a = 1.1f64;
    let p = GridFunction::from_fn(&g, |x| (-x / a).exp() / (a * a));
    let r = integrated_residual(&k_eps(0.2, PerturbationFamily::One), &p);
    assert!(rel(&r) < 5e-3, "{}", rel(&r));
}

#[test]
fn mass_is_annihilated() {
    let g = log_grid(512);
    let corpus: Vec<GridFunction> = vec![
        GridFunction::from_fn(&g, |x| (-x).exp()),
        GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp()),
        GridFunction::from_fn(&g, |x| x * x * (-x).exp() / 2.0),
    ];
    for fam in [PerturbationFamily::Zero, PerturbationFamily::ratio_sym_default(), PerturbationFamily::MinOverMax] {
        let k = k_eps(0.5, fam);
        for f in &corpus {
            let c = apply_quadratic(&k, f).total;
            let bound = 1e-6 * moment(f, 0.0) * moment(f, 1.0);
            assert!(moment(&c, 1.0).abs() <= bound, "{}: {} > {bound}", k.family().name(), moment(&c, 1.0));
        }
    }
}

fn bump(g: &Arc<Grid>, a: f64, b: f64, c: f64) -> GridFunction {
    GridFunction::from_fn(g, |x| a * (-b * x).exp() * (1.0 + c * (x * 1.3).sin()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bilinear_continuity(a in -2.0..2.0f64, b in 0.5..3.0f64, c in -0.9..0.9f64,
                           d in -2.0..2.0f64, e in 0.5..3.0f64, s in -0.9..0.9f64) {
        let g = log_grid(128);
        let gf = bump(&g, a, b, c);
        let hf = bump(&g, d, e, s).map(|x, v| v * x);
        let k = k_eps(0.7, PerturbationFamily::ratio_sym_default());
        let kinf = 2.0 + 0.7;
        let cb = apply_bilinear(&k, &gf, &hf).unwrap();
        for kk in [0.0, 2.0, 3.0] {
            let nk = NormKind::L1k { k: kk };
            let lhs = norm(&cb, nk).unwrap();
            let rhs = 1.5 * kinf * norm(&gf, nk).unwrap() * norm(&hf, nk).unwrap() + 1e-6;
            prop_assert!(lhs <= rhs, "k={kk}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn bilinear_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -0.9..0.9f64) {
        let g = log_grid(96);
        let k = k_eps(0.4, PerturbationFamily::MinOverMax);
        let g1 = bump(&g, 1.0, 1.0, c);
        let g2 = bump(&g, 1.0, 2.0, -c);
        let h = bump(&g, 1.0, 1.5, 0.3);
        let lhs = apply_bilinear(&k, &g1.lin_comb(a, &g2, b).unwrap(), &h).unwrap();
        let rhs = apply_bilinear(&k, &g1, &h).unwrap().lin_comb(a, &apply_bilinear(&k, &g2, &h).unwrap(), b).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn quadrature_of_zero_is_exact() {
    let g = log_grid(64);
    assert_eq!(grid::integrate(&GridFunction::zeros(&g)), 0.0);
}
