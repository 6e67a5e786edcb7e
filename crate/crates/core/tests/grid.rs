use coagkin::grid::*;
use coagkin::{make_grid, GridFunction, GridKind};
use proptest::prelude::*;

fn log_grid(n: usize) -> std::sync::Arc<Grid> {
    make_grid(GridKind::LogUniform, 1e-4, 60.0, n).unwrap()
}

fn sup_on(g: &GridFunction, lo: f64, hi: f64, exact: impl Fn(f64) -> f64) -> f64 {
    g.grid()
        .nodes()
        .iter()
        .zip(g.values())
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, v)| (v - exact(*x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn grid_construction() {
    let u = make_grid(GridKind::Uniform, 1e-4, 10.0, 101).unwrap();
    let x = u.nodes();
    assert!((x[1] - x[0] - (10.0 - 1e-4) / 100.0).abs() < 1e-9);
    let g = log_grid(512);
    let ratio = (60.0f64 / 1e-4).powf(1.0 / 511.0);
    for w in g.nodes().windows(2) {
        assert!((w[1] / w[0] - ratio).abs() < 1e-12);
    }
    assert!(g.weights().iter().all(|w| *w >= 0.0));
    assert!(make_grid(GridKind::LogUniform, 0.0, 1.0, 10).is_err());
    assert!(make_grid(GridKind::LogUniform, 1.0, 0.5, 10).is_err());
}

#[test]
fn integrate_constants_and_exponentials() {
    let u = make_grid(GridKind::Uniform, 1e-4, 10.0, 101).unwrap();
    let one = GridFunction::from_fn(&u, |_| 1.0);
    assert!((integrate(&one) - 9.9999).abs() < 1e-8);
    let g = log_grid(512);
    let one = GridFunction::from_fn(&g, |_| 1.0);
    assert!((integrate(&one) / (60.0 - 1e-4) - 1.0).abs() < 1e-10);
    // integrate covers [xmin, xmax] only; the cell [0, xmin] carries 1e-4 of
    // the unit mass and is added by moment(f, 0).
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let truncated = (-1e-4f64).exp() - (-60.0f64).exp();
    assert!((integrate(&e) - truncated).abs() < 1e-6);
    assert!((moment(&e, 0.0) - 1.0).abs() < 1e-4);
    assert_eq!(integrate(&GridFunction::zeros(&g)), 0.0);
}

#[test]
fn moments_match_gamma_values() {
    let g = log_grid(512);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    assert!((moment(&e, 2.0) - 2.0).abs() < 1e-4);
    assert!((moment(&e, 0.0) - 1.0).abs() < 1e-4);
    assert!((moment(&e, -0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-3);
    let f = GridFunction::from_fn(&g, |x| 4.0 * x * (-2.0 * x).exp());
    assert!((moment(&f, 1.0) - 1.0).abs() < 1e-4);
}

#[test]
fn convolution_of_exponentials() {
    let g = log_grid(512);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let c = convolve(&e, &e).unwrap();
    assert!(sup_on(&c, 0.1, 20.0, |x| x * (-x).exp()) < 2e-3);
    let z = convolve(&e, &GridFunction::zeros(&g)).unwrap();
    assert_eq!(z.max_abs(), 0.0);
}

/// Exact convolution of two piecewise-linear functions at `x`: between the
/// breakpoints `ka` and `x - kb` the integrand is quadratic, so Simpson's rule
/// on each piece is exact.
fn exact_convolution(a: &[(f64, f64)], b: &[(f64, f64)], x: f64) -> f64 {
    let mut cuts = vec![0.0, x];
    cuts.extend(a.iter().map(|k| k.0).filter(|&t| t > 0.0 && t < x));
    cuts.extend(b.iter().map(|k| x - k.0).filter(|&t| t > 0.0 && t < x));
    cuts.sort_by(f64::total_cmp);
    let h = |y: f64| piecewise_linear(a, y) * piecewise_linear(b, x - y);
    cuts.windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (h(w[0]) + 4.0 * h(0.5 * (w[0] + w[1])) + h(w[1])))
        .sum()
}

/// Piecewise-linear interpolant of `(x, value)` knots, zero outside.
fn piecewise_linear(knots: &[(f64, f64)], x: f64) -> f64 {
    knots
        .windows(2)
        .find(|w| x >= w[0].0 && x <= w[1].0)
        .map_or(0.0, |w| w[0].1 + (x - w[0].0) / (w[1].0 - w[0].0) * (w[1].1 - w[0].1))
}

fn knots(values: &[f64], jitter: &[f64]) -> Vec<(f64, f64)> {
    let mut k = vec![(0.0, 0.0)];
    k.extend(values.iter().zip(jitter).enumerate().map(|(i, (v, j))| (0.5 * (i as f64 + 1.0) + j, *v)));
    k.push((2.0, 0.0));
    k
}

/// Largest nodal deviation from the exact convolution on a uniform grid.
fn convolution_error(n: usize, a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let u = make_grid(GridKind::Uniform, 1e-4, 4.0, n).unwrap();
    let f = GridFunction::from_fn(&u, |x| piecewise_linear(a, x));
    let g = GridFunction::from_fn(&u, |x| piecewise_linear(b, x));
    let c = convolve(&f, &g).unwrap();
    u.nodes()
        .iter()
        .zip(c.values())
        .map(|(x, v)| (v - exact_convolution(a, b, *x)).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn convolution_matches_exact_piecewise_linear(
        va in proptest::collection::vec(0.0f64..0.5, 3),
        vb in proptest::collection::vec(0.0f64..0.5, 3),
        ja in proptest::collection::vec(-0.1f64..0.1, 3),
        jb in proptest::collection::vec(-0.1f64..0.1, 3),
    ) {
        let (a, b) = (knots(&va, &ja), knots(&vb, &jb));
        let coarse = convolution_error(64, &a, &b);
        prop_assert!(coarse < 1e-3, "error {coarse}");
        // Kinks limit the rule to second order, and the gain over a single
        // doubling depends on where the kinks fall between nodes, so the order
        // is checked over four doublings.
        let fine = convolution_error(1024, &a, &b);
        prop_assert!(fine < coarse / 32.0 || coarse < 1e-6, "{fine} vs {coarse}");
    }
}

#[test]
fn tail_primitives() {
    let g = log_grid(512);
    let e = tail_primitive(&GridFunction::from_fn(&g, |x| (-x).exp()));
    assert!(sup_on(&e, 0.0, 60.0, |x| (-x).exp() - (-60.0f64).exp()) < 1e-4);
    // d/dx (x e^{-x}) = (1 - x) e^{-x}, so the tail integral is -x e^{-x}.
    let d = tail_primitive(&GridFunction::from_fn(&g, |x| (1.0 - x) * (-x).exp()));
    assert!(sup_on(&d, 0.0, 60.0, |x| -x * (-x).exp()) < 2e-4);
    // Zero total integral: the primitive vanishes at the first node.
    assert!(d.values()[0].abs() < 1e-3);
}

#[test]
fn interpolation() {
    let g = log_grid(256);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let x = g.nodes();
    assert_eq!(interp(&e, x[100]), e.values()[100]);
    assert_eq!(interp(&e, 61.0), 0.0);
    let mut prev = f64::INFINITY;
    for n in [128, 256, 512] {
        let g = log_grid(n);
        let e = GridFunction::from_fn(&g, |x| (-x).exp());
        let x = g.nodes();
        let err = (100..n - 1)
            .step_by(7)
            .map(|i| {
                let m = (x[i] * x[i + 1]).sqrt();
                (interp(&e, m) - (-m).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < prev / 3.0, "midpoint error {err} did not shrink quadratically from {prev}");
        prev = err;
    }
}

#[test]
fn csv_round_trip() {
    let g = log_grid(64);
    let e = GridFunction::from_fn(&g, |x| (-x).exp());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    e.write_csv(&p).unwrap();
    assert_eq!(GridFunction::read_csv(&g, &p).unwrap().values(), e.values());
    assert!(GridFunction::read_csv(&log_grid(65), &p).is_err());
}

proptest! {
    #[test]
    fn integration_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.1f64..3.0) {
        let g = log_grid(128);
        let f = GridFunction::from_fn(&g, |x| (-s * x).exp());
        let h = GridFunction::from_fn(&g, |x| x / (1.0 + x * x));
        let lhs = integrate(&f.lin_comb(a, &h, b).unwrap());
        let rhs = a * integrate(&f) + b * integrate(&h);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn convolution_is_symmetric(s in 0.3f64..3.0, t in 0.3f64..3.0) {
        let g = log_grid(96);
        let f = GridFunction::from_fn(&g, |x| (-s * x).exp());
        let h = GridFunction::from_fn(&g, |x| x * (-t * x).exp());
        let a = convolve(&f, &h).unwrap();
        let b = convolve(&h, &f).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            prop_assert!((u - v).abs() < 1e-3 * (1.0 + u.abs()));
        }
    }
}

