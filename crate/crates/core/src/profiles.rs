//! Self-similar profiles as fixed points of the integrated stationary
//! equation `x^2 G = int_0^x y G(y) int_{x-y}^inf K(y, z) G(z) dz dy`, and
//! checks of their a-priori bounds.
//!
//! The map `G -> D[G] / x^2` is quadratic, so a plain fixed-point iteration is
//! unstable along the amplitude direction. Each step therefore rescales the
//! image by `(m0(G) / m0(T[G]))^2`, which is exact on the dilation family of a
//! solution and equals 1 at any fixed point, and then restores unit mass with
//! the dilation `G -> a G(a x)`.
//!
//! Relative perturbations that vary slowly in the tail are only weakly damped
//! by that map, so once the residual is moderate the solver switches to
//! Newton steps on the discrete equation bordered by the unit-mass constraint.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};

use crate::coagulation::{CoagOperator, IntegratedOperator};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFunction};
use crate::kernels::{KernelSpec, PerturbationFamily};
use crate::norms::{norm_values, NormKind};
use crate::stats::{line_fit, LineFit};

/// Starting iterate of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialIterate {
    /// `e^{-x}`.
    Exponential,
    /// `4 x e^{-2x}`.
    GammaTwo,
    /// `0.5 e^{-x/2}`, brought to unit mass by dilation before the first step.
    WideExponential,
    Custom(GridFunction),
}

impl InitialIterate {
    fn values(&self, grid: &Arc<Grid>) -> Result<Vec<f64>> {
        Ok(match self {
            InitialIterate::Exponential => grid.nodes().iter().map(|x| (-x).exp()).collect(),
            InitialIterate::GammaTwo => grid.nodes().iter().map(|x| 4.0 * x * (-2.0 * x).exp()).collect(),
            InitialIterate::WideExponential => {
                grid.nodes().iter().map(|x| 0.5 * (-0.5 * x).exp()).collect()
            }
            InitialIterate::Custom(f) => {
                if !grid::same_grid(f.grid(), grid) {
                    return Err(Error::GridMismatch);
                }
                f.values().to_vec()
            }
        })
    }
}

/// Iteration used by [`solve_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    /// Damped fixed-point steps only.
    Picard,
    /// Fixed-point steps down to `newton_switch`, then bordered Newton steps.
    #[default]
    Hybrid,
}

/// Iteration controls of [`solve_profile`].
#[derive(Debug, Clone)]
pub struct ProfileOptions {
    /// Target of `||x^2 G - D[G]||_{L1_2} / ||x^2 G||_{L1_0}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight in `(0, 1]`.
    pub damping: f64,
    pub initial: InitialIterate,
    pub method: ProfileMethod,
    /// Residual below which the hybrid method switches to Newton steps.
    pub newton_switch: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            damping: 0.7,
            initial: InitialIterate::Exponential,
            method: ProfileMethod::Hybrid,
            newton_switch: 1e-3,
        }
    }
}

impl ProfileOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// A converged profile and its summary statistics.
#[derive(Debug, Clone)]
pub struct ProfileResult {
    pub g: GridFunction,
    pub epsilon: f64,
    pub iterations: usize,
    /// Relative integrated residual in `L1_2`.
    pub residual_l1k: f64,
    pub m0: f64,
    /// Moments of orders `-0.5, 0, 1, 2, 3, 4`, keyed by the order as text.
    pub moments: BTreeMap<String, f64>,
    pub l2_norm: f64,
}

/// Moment orders recorded in [`ProfileResult::moments`].
pub const RECORDED_MOMENTS: [f64; 6] = [-0.5, 0.0, 1.0, 2.0, 3.0, 4.0];

fn moment_key(p: f64) -> String {
    format!("{p}")
}

impl ProfileResult {
    pub fn moment(&self, p: f64) -> Option<f64> {
        self.moments.get(&moment_key(p)).copied()
    }
}

/// `a v(a x)` at every node by cubic interpolation in the native coordinate;
/// held at `v(xmin)` below the grid and zero above it.
pub fn dilate_values(grid: &Grid, v: &[f64], a: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| {
            let y = a * x;
            if y <= grid.xmin() {
                a * v[0]
            } else {
                grid.cubic_stencil(y).map_or(0.0, |s| a * s.apply(v))
            }
        })
        .collect()
}

/// Dilation `a G(a x)` with `a = m1(G)`, giving unit first moment.
fn normalize_mass(grid: &Grid, v: &mut Vec<f64>) {
    let m1 = grid::moment_values(grid, v, 1.0);
    if m1 > 0.0 && (m1 - 1.0).abs() > 0.0 {
        *v = dilate_values(grid, v, m1);
    }
}

/// Relative residual `||x^2 G - D[G]||_{L1_2} / ||x^2 G||_{L1_0}` and `D[G]`.
fn relative_residual(grid: &Grid, g: &[f64], d: &[f64]) -> f64 {
    let x = grid.nodes();
    let x2g: Vec<f64> = (0..g.len()).map(|i| x[i] * x[i] * g[i]).collect();
    let r: Vec<f64> = (0..g.len()).map(|i| x2g[i] - d[i]).collect();
    norm_values(grid, &r, NormKind::L1k { k: 2.0 }) / norm_values(grid, &x2g, NormKind::L1k { k: 0.0 })
}

/// Solves for the unit-mass profile of `kernel` on `grid`.
pub fn solve_profile(kernel: &KernelSpec, grid: &Arc<Grid>, opts: &ProfileOptions) -> Result<ProfileResult> {
    let op = CoagOperator::new(kernel, grid);
    solve_profile_with(&op, opts)
}

/// [`solve_profile`] with a prebuilt operator.
pub fn solve_profile_with(op: &CoagOperator, opts: &ProfileOptions) -> Result<ProfileResult> {
    opts.validate()?;
    let grid = op.grid().clone();
    let x = grid.nodes();
    let n = grid.len();
    let integ = op.integrated();
    let mut g = opts.initial.values(&grid)?;
    if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain("initial iterate must be finite and nonnegative".into()));
    }
    normalize_mass(&grid, &mut g);
    let mut clipped_warned = false;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut newton = false;
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let d = integ.apply(&g);
        residual = relative_residual(&grid, &g, &d);
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual });
        }
        if residual <= opts.tol {
            return Ok(summarize(op.kernel(), GridFunction::from_vec(grid, g), it, residual));
        }
        if residual < best * (1.0 - 1e-3) {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if opts.method == ProfileMethod::Hybrid && !newton && (residual <= opts.newton_switch || stalled >= 10) {
            log::debug!("profile iteration {it}: switching to Newton at residual {residual:.3e}");
            newton = true;
        }
        if newton {
            g = newton_step(&grid, &integ, &g, &d, residual)?;
        } else {
            let mut t: Vec<f64> = (0..n).map(|i| d[i] / (x[i] * x[i])).collect();
            let m0g = grid::moment_values(&grid, &g, 0.0);
            let m0t = grid::moment_values(&grid, &t, 0.0);
            if !(m0t > 0.0) {
                return Err(Error::NonConvergence { iterations: it, residual });
            }
            let lambda = (m0g / m0t).powi(2);
            t.iter_mut().for_each(|v| *v *= lambda);
            for i in 0..n {
                g[i] = (1.0 - opts.damping) * g[i] + opts.damping * t[i];
            }
            normalize_mass(&grid, &mut g);
        }
        if g.iter().any(|&v| v < 0.0) {
            if !clipped_warned {
                log::warn!("profile iterate has negative values at iteration {it}; clipping to 0");
                clipped_warned = true;
            }
            g.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        log::debug!("profile iteration {it}: residual {residual:.3e}");
    }
    let d = integ.apply(&g);
    let last = relative_residual(&grid, &g, &d);
    if last <= opts.tol {
        return Ok(summarize(op.kernel(), GridFunction::from_vec(grid, g), opts.max_iter, last));
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: last.min(residual) })
}

/// One Newton step on `x^2 G - D[G] = 0`, `m1(G) = 1`, bordered with the
/// dilation generator `G + x G'` as the extra unknown direction. Halves the
/// step until the residual decreases.
fn newton_step(grid: &Arc<Grid>, integ: &IntegratedOperator<'_>, g: &[f64], d: &[f64], residual: f64) -> Result<Vec<f64>> {
    let n = g.len();
    let x = grid.nodes();
    let jd = integ.jacobian(g);
    let gen: Vec<f64> = {
        let xd = grid::dilation_derivative(grid, g);
        (0..n).map(|i| g[i] + xd[i]).collect()
    };
    let mass_row = grid::mass_functional(grid);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for m in 0..n {
            a[(i, m)] = -jd[(i, m)];
        }
        a[(i, i)] += x[i] * x[i];
        a[(i, n)] = gen[i];
        a[(n, i)] = mass_row[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        rhs[i] = -(x[i] * x[i] * g[i] - d[i]);
    }
    rhs[n] = 1.0 - grid::dot(&mass_row, g);
    let sol = a.lu().solve(&rhs).ok_or(Error::NonConvergence { iterations: 0, residual })?;
    let mut step = 1.0;
    for _ in 0..12 {
        let trial: Vec<f64> = (0..n).map(|i| g[i] + step * sol[i]).collect();
        let r = relative_residual(grid, &trial, &integ.apply(&trial));
        if r < residual {
            return Ok(trial);
        }
        step *= 0.5;
    }
    Err(Error::NonConvergence { iterations: 0, residual })
}

fn summarize(kernel: &KernelSpec, g: GridFunction, iterations: usize, residual: f64) -> ProfileResult {
    let moments = RECORDED_MOMENTS.iter().map(|&p| (moment_key(p), grid::moment(&g, p))).collect();
    let m0 = grid::moment(&g, 0.0);
    let l2_norm = norm_values(g.grid(), g.values(), NormKind::L2Exp { mu: 0.0 });
    ProfileResult { g, epsilon: kernel.epsilon(), iterations, residual_l1k: residual, m0, moments, l2_norm }
}

/// Closed-form profile for `W = 1`: `(1 + eps/2)^{-2} e^{-x / (1 + eps/2)}`.
pub fn constant_family_profile(grid: &Arc<Grid>, epsilon: f64) -> GridFunction {
    let a = 1.0 + 0.5 * epsilon;
    GridFunction::from_fn(grid, |x| (-x / a).exp() / (a * a))
}

/// Upper end of the small-size window of the log-log slope fit.
pub const SMALL_X_WINDOW: f64 = 0.05;

/// One pass/fail item of a [`BoundsReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

/// A-priori bounds of a profile.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub epsilon: f64,
    pub m0: f64,
    pub m0_lower: f64,
    pub moments: BTreeMap<String, f64>,
    pub small_x_fit: Option<LineFit>,
    /// `-2 eps / (2 + eps)`.
    pub small_x_exponent: f64,
    pub l2_norm: f64,
    /// `sup_{x <= 1} G(x) x^{2 eps / (2 + eps)}`.
    pub c_star: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One `name: value (bound) PASS|FAIL` line per item.
    pub fn to_text(&self) -> String {
        let mut s = format!("epsilon = {}\n", self.epsilon);
        for c in &self.checks {
            s += &format!(
                "{}: {:.8e} ({}) {}\n",
                c.name,
                c.value,
                c.bound,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        s += &format!("c_star: {:.8e}\n", self.c_star);
        for (p, v) in &self.moments {
            s += &format!("moment[{p}]: {v:.8e}\n");
        }
        s
    }
}

/// Evaluates the mass bracket, moments, small-size exponent, `L^2` norm and
/// negative moment of a converged profile.
pub fn check_profile_bounds(result: &ProfileResult) -> BoundsReport {
    let eps = result.epsilon;
    let g = &result.g;
    let grid = g.grid();
    let m0_lower = 1.0 / (1.0 + 0.5 * eps);
    let mut checks = vec![BoundCheck {
        name: "m0_bracket",
        value: result.m0,
        bound: format!("[{:.6}, 1] +- 1e-3", m0_lower),
        pass: result.m0 >= m0_lower - 1e-3 && result.m0 <= 1.0 + 1e-3,
    }];
    let moments: BTreeMap<String, f64> =
        (0..=4).map(|p| (moment_key(p as f64), grid::moment(g, p as f64))).collect();
    let worst = moments.values().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    checks.push(BoundCheck {
        name: "moments_finite",
        value: worst,
        bound: "orders 0..=4 finite".into(),
        pass: worst.is_finite(),
    });
    let exponent = -2.0 * eps / (2.0 + eps);
    let (lx, lg): (Vec<f64>, Vec<f64>) = grid
        .nodes()
        .iter()
        .zip(g.values())
        .filter(|(x, v)| **x <= SMALL_X_WINDOW && **v > 0.0)
        .map(|(x, v)| (x.ln(), v.ln()))
        .unzip();
    let fit = line_fit(&lx, &lg).ok();
    let slope = fit.map_or(f64::NAN, |f| f.slope);
    checks.push(BoundCheck {
        name: "small_x_slope",
        value: slope,
        bound: format!(">= {:.6}", exponent - 0.05),
        pass: slope >= exponent - 0.05,
    });
    let l2_norm = result.l2_norm;
    checks.push(BoundCheck { name: "l2_norm", value: l2_norm, bound: "finite".into(), pass: l2_norm.is_finite() });
    let neg = grid::moment(g, -0.5);
    checks.push(BoundCheck {
        name: "negative_moment_half",
        value: neg,
        bound: if eps < 0.5 { "finite".into() } else { "not required for eps >= 0.5".into() },
        pass: eps >= 0.5 || neg.is_finite(),
    });
    let p = -exponent;
    let c_star = grid
        .nodes()
        .iter()
        .zip(g.values())
        .filter(|(x, _)| **x <= 1.0)
        .map(|(x, v)| v * x.powf(p))
        .fold(0.0, f64::max);
    BoundsReport {
        epsilon: eps,
        m0: result.m0,
        m0_lower,
        moments,
        small_x_fit: fit,
        small_x_exponent: exponent,
        l2_norm,
        c_star,
        checks,
    }
}

/// `(int_{a}^inf G, (1 - a)^2 / m2(G))`: mass cannot concentrate at zero.
pub fn mass_away_from_zero(g: &GridFunction, a: f64) -> (f64, f64) {
    let grid = g.grid();
    let w = grid.prefix_weights(a, grid.len() - 1);
    let below = if a <= grid.xmin() {
        a * g.values()[0]
    } else {
        grid.xmin() * g.values()[0] + grid::dot(&w, &g.values()[..w.len()])
    };
    let total = grid::moment(g, 0.0);
    (total - below, (1.0 - a).powi(2) / grid::moment(g, 2.0))
}

/// `(int_0^x G, C x^{1 - eps})` at the nodes `x <= 1` sampled at `count`
/// evenly spaced indices, with `C = c_star / (1 - 2 eps / (2 + eps))`.
pub fn primitive_bound_samples(g: &GridFunction, epsilon: f64, c_star: f64, count: usize) -> Vec<(f64, f64, f64)> {
    let grid = g.grid();
    let x = grid.nodes();
    let last = x.partition_point(|&v| v <= 1.0).saturating_sub(1);
    let p = 2.0 * epsilon / (2.0 + epsilon);
    let c = c_star / (1.0 - p);
    let step = (last / count.max(1)).max(1);
    (1..=count.max(1))
        .map(|q| (q * step).min(last))
        .map(|i| {
            let w = grid.prefix_weights(x[i], i);
            let prim = x[0] * g.values()[0] + grid::dot(&w, &g.values()[..w.len()]);
            (x[i], prim, c * x[i].powf(1.0 - epsilon))
        })
        .collect()
}

/// Distances `||G_eps - G_0||_{L1_k}` over `eps_list` and their log-log slope.
#[derive(Debug, Clone)]
pub struct StabilityScan {
    pub epsilons: Vec<f64>,
    pub distances: Vec<f64>,
    /// Log-log fit of distance against `eps`; `None` when fewer than two
    /// distances are positive (for instance `W = 0`).
    pub fit: Option<LineFit>,
    pub profiles: Vec<ProfileResult>,
}

/// Solves a profile per `eps` (in parallel) and compares with the `eps = 0`
/// profile from the same solver.
pub fn profile_stability_scan(
    family: &PerturbationFamily,
    eps_list: &[f64],
    k: f64,
    grid: &Arc<Grid>,
    opts: &ProfileOptions,
) -> Result<StabilityScan> {
    if eps_list.len() < 3 {
        return Err(Error::Config(format!("need at least 3 epsilons, got {}", eps_list.len())));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e <= 0.3)) {
        return Err(Error::Config(format!("epsilons must lie in (0, 0.3], got {e}")));
    }
    NormKind::L1k { k }.validate()?;
    let base = solve_profile(&KernelSpec::constant(), grid, opts)?;
    let profiles = eps_list
        .par_iter()
        .map(|&e| solve_profile(&KernelSpec::new(e, family.clone())?, grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = profiles
        .iter()
        .map(|p| {
            let d: Vec<f64> = p.g.values().iter().zip(base.g.values()).map(|(a, b)| a - b).collect();
            norm_values(grid, &d, NormKind::L1k { k })
        })
        .collect();
    let lx: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let fit = line_fit(&lx, &ly).ok();
    Ok(StabilityScan { epsilons: eps_list.to_vec(), distances, fit, profiles })
}

/// Profiles from the three standard starting iterates and the largest
/// pairwise `L1_2` distance between them.
pub fn multistart_profiles(kernel: &KernelSpec, grid: &Arc<Grid>, opts: &ProfileOptions) -> Result<(Vec<ProfileResult>, f64)> {
    let op = CoagOperator::new(kernel, grid);
    let starts = [InitialIterate::Exponential, InitialIterate::GammaTwo, InitialIterate::WideExponential];
    let results = starts
        .par_iter()
        .map(|s| solve_profile_with(&op, &ProfileOptions { initial: s.clone(), ..opts.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for a in 0..results.len() {
        for b in a + 1..results.len() {
            let d: Vec<f64> =
                results[a].g.values().iter().zip(results[b].g.values()).map(|(u, v)| u - v).collect();
            worst = worst.max(norm_values(grid, &d, NormKind::L1k { k: 2.0 }));
        }
    }
    Ok((results, worst))
}
