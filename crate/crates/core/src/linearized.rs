//! The linearised self-similar operator around a profile, its splitting into
//! a regularising and a dissipative part, semigroup decay estimates, and the
//! constant bookkeeping of the gap-transfer statements.
//!
//! Operators are dense matrices acting on node values. Decay is measured by
//! integrating `h' = L h` and fitting the late-time slope of `log ||h(t)||`;
//! no eigenvalue of the non-normal matrix is trusted as a rate.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coagulation::{self_similar_residual_values, CoagOperator};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFunction};
use crate::kernels::KernelSpec;
use crate::norms::{norm_values, shifted_gamma_moment, NormKind, TAIL_SCAN_LIMIT};
use crate::stats::line_fit;

/// Which analytic expression an [`OperatorMatrix`] discretises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorForm {
    /// `2h + x h' + 2 C(G, h)` with the bilinear coagulation form.
    Direct,
    /// `x h' + 2 e^{-x} int_0^x h (e^y - 1) dy - 2 e^{-x} int_x^inf h`.
    Convolution,
    /// `x h' - 2H + 2 int_0^x H(y) e^{-(x-y)} dy` with `H` the tail primitive.
    Primitive,
    /// Regularising part of the cutoff splitting.
    SplitA,
    /// Dissipative part of the cutoff splitting.
    SplitB,
}

/// A dense operator on node values of one grid.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    mat: DMatrix<f64>,
    /// Space in which decay of this operator is measured by default.
    pub space: NormKind,
    pub form: OperatorForm,
}

impl OperatorMatrix {
    pub fn new(grid: Arc<Grid>, mat: DMatrix<f64>, space: NormKind, form: OperatorForm) -> Result<Self> {
        let n = grid.len();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Config(format!("{}x{} matrix for {n} nodes", mat.nrows(), mat.ncols())));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("operator matrix has non-finite entries".into()));
        }
        Ok(Self { grid, mat, space, form })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn with_space(mut self, space: NormKind) -> Self {
        self.space = space;
        self
    }

    pub fn apply_values(&self, h: &[f64]) -> Vec<f64> {
        (&self.mat * DVector::from_column_slice(h)).as_slice().to_vec()
    }

    pub fn apply(&self, h: &GridFunction) -> Result<GridFunction> {
        if !grid::same_grid(h.grid(), &self.grid) {
            return Err(Error::GridMismatch);
        }
        GridFunction::new(self.grid.clone(), self.apply_values(h.values()))
    }

    /// `P L` with `P = I - e0 m^T / m(e0)`, `e0 = e^{-x}` and `m` the discrete
    /// first moment: the image has zero discrete mass for every input.
    pub fn projected(&self) -> Self {
        let (e0, m) = projector_parts(&self.grid);
        let row = DVector::from_column_slice(&m).transpose() * &self.mat;
        let mut mat = self.mat.clone();
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                mat[(i, j)] -= e0[i] * row[j];
            }
        }
        Self { grid: self.grid.clone(), mat, space: self.space, form: self.form }
    }

    /// Largest `|m^T L h|` over the columns, the mass leak of the discrete operator.
    pub fn mass_defect(&self) -> f64 {
        let m = grid::mass_functional(&self.grid);
        let row = DVector::from_column_slice(&m).transpose() * &self.mat;
        row.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Entrywise sum with an operator on the same grid.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if !grid::same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: self.grid.clone(), mat: &self.mat + &other.mat, space: self.space, form: self.form })
    }
}

/// `e0 / m(e0)` and the mass row `m`.
fn projector_parts(grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let m = grid::mass_functional(grid);
    let e0: Vec<f64> = grid.nodes().iter().map(|x| (-x).exp()).collect();
    let me0 = grid::dot(&m, &e0);
    (e0.iter().map(|v| v / me0).collect(), m)
}

/// `h - m(h) e^{-x} / m(e^{-x})`, which has zero discrete first moment.
pub fn zero_mass_project(h: &GridFunction) -> GridFunction {
    let (e0, m) = projector_parts(h.grid());
    let mh = grid::dot(&m, h.values());
    let v = h.values().iter().zip(&e0).map(|(v, e)| v - mh * e).collect();
    GridFunction::from_vec(h.grid().clone(), v)
}

/// Matrix of `h -> x h'`.
fn dilation_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, c) in grid::dilation_stencil(grid, i) {
            m[(i, j)] += c;
        }
    }
    m
}

/// Row-major tail matrix `int_{x_i}^{xmax} h = sum_j T_ij h_j` as a matrix.
fn tail_dmatrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_row_slice(n, n, &grid::tail_matrix(grid))
}

/// Rows of `int_0^{x_i} h(y) (e^{y - x_i} - e^{-x_i}) dy`, split at node
/// `split` into the parts from `y < x_split` and `y > x_split`.
fn gain_rows(grid: &Grid, split: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = grid.len();
    let x = grid.nodes();
    let mut lo = DMatrix::zeros(n, n);
    let mut hi = DMatrix::zeros(n, n);
    for i in 0..n {
        let (wl, wh) = grid.prefix_weights_split(x[i], i, split);
        let ex = (-x[i]).exp();
        for (j, (a, b)) in wl.iter().zip(&wh).enumerate() {
            let f = (x[j] - x[i]).exp() - ex;
            lo[(i, j)] = a * f;
            hi[(i, j)] = b * f;
        }
        // Cell [0, xmin] with h frozen: int_0^{x_0} (e^y - 1) dy ~ x_0^2 / 2.
        lo[(i, 0)] += ex * 0.5 * x[0] * x[0];
    }
    (lo, hi)
}

/// Linearisation of the constant-kernel equation around `e^{-x}`.
pub fn assemble_l0(grid: &Arc<Grid>, form: OperatorForm) -> Result<OperatorMatrix> {
    let space = NormKind::L1k { k: 3.0 };
    let n = grid.len();
    let x = grid.nodes();
    let mat = match form {
        OperatorForm::Direct => {
            let g0 = GridFunction::from_fn(grid, |x| (-x).exp());
            return assemble_leps(grid, &g0, &KernelSpec::constant()).map(|mut m| {
                m.form = OperatorForm::Direct;
                m
            });
        }
        OperatorForm::Convolution => {
            let (lo, hi) = gain_rows(grid, usize::MAX);
            let tail = tail_dmatrix(grid);
            let mut m = dilation_matrix(grid) + (lo + hi) * 2.0;
            for i in 0..n {
                let ex = 2.0 * (-x[i]).exp();
                for j in 0..n {
                    m[(i, j)] -= ex * tail[(i, j)];
                }
            }
            m
        }
        OperatorForm::Primitive => {
            let tail = tail_dmatrix(grid);
            // int_0^{x_i} F(y) e^{y - x_i} dy, with F frozen on [0, xmin].
            let mut conv = DMatrix::zeros(n, n);
            for i in 0..n {
                let w = grid.prefix_weights(x[i], i);
                for (j, wj) in w.iter().enumerate() {
                    conv[(i, j)] = wj * (x[j] - x[i]).exp();
                }
                conv[(i, 0)] += x[0] * (-x[i]).exp();
            }
            dilation_matrix(grid) - &tail * 2.0 + (conv * &tail) * 2.0
        }
        OperatorForm::SplitA | OperatorForm::SplitB => {
            return Err(Error::Config("use assemble_splitting for the split parts".into()));
        }
    };
    OperatorMatrix::new(grid.clone(), mat, space, form)
}

/// `h -> 2h + x h' + 2 C_K(G, h)` around a profile `g`.
pub fn assemble_leps(grid: &Arc<Grid>, g: &GridFunction, kernel: &KernelSpec) -> Result<OperatorMatrix> {
    if !grid::same_grid(g.grid(), grid) {
        return Err(Error::GridMismatch);
    }
    let op = CoagOperator::new(kernel, grid);
    let mut m = op.bilinear_matrix(g.values()) * 2.0 + dilation_matrix(grid);
    for i in 0..grid.len() {
        m[(i, i)] += 2.0;
    }
    OperatorMatrix::new(grid.clone(), m, NormKind::L1k { k: 3.0 }, OperatorForm::Direct)
}

/// Induced `L1_k` norm of `L1 - L2` on the discrete space: the largest
/// weighted column sum `sum_i w_i (1+x_i)^k |D_ij| / (w_j (1+x_j)^k)`.
pub fn op_norm_diff_l1k(l1: &OperatorMatrix, l2: &OperatorMatrix, k: f64) -> Result<f64> {
    if !grid::same_grid(&l1.grid, &l2.grid) {
        return Err(Error::GridMismatch);
    }
    NormKind::L1k { k }.validate()?;
    let g = &l1.grid;
    let wt: Vec<f64> = g.weights().iter().zip(g.nodes()).map(|(w, x)| w * (1.0 + x).powf(k)).collect();
    let n = g.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let s: f64 = (0..n).map(|i| wt[i] * (l1.mat[(i, j)] - l2.mat[(i, j)]).abs()).sum();
        worst = worst.max(s / wt[j]);
    }
    Ok(worst)
}

/// Norm samples of a linear evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySamples {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

impl DecaySamples {
    /// `-slope` of `log ||h||` on `[t_lo, t_hi]`.
    pub fn fitted_rate(&self, t_lo: f64, t_hi: f64) -> Result<f64> {
        let (t, l): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.norms)
            .filter(|(t, n)| **t >= t_lo - 1e-12 && **t <= t_hi + 1e-12 && **n > 0.0)
            .map(|(t, n)| (*t, n.ln()))
            .unzip();
        Ok(-line_fit(&t, &l)?.slope)
    }

    /// `max_t ||h(t)|| e^{rate t} / ||h(0)||`.
    pub fn prefactor(&self, rate: f64) -> f64 {
        let n0 = self.norms.first().copied().unwrap_or(0.0);
        if !(n0 > 0.0) {
            return 0.0;
        }
        self.times.iter().zip(&self.norms).map(|(t, n)| n * (rate * t).exp() / n0).fold(0.0, f64::max)
    }
}

/// Largest admissible step of [`evolve_linear`].
pub const MAX_LINEAR_DT: f64 = 1e-2;

/// One classical fourth-order Runge-Kutta step for `h' = L h` as a matrix,
/// `I + dt L (I + dt L / 2 (I + dt L / 3 (I + dt L / 4)))`.
pub fn rk4_step_matrix(l: &OperatorMatrix, dt: f64) -> DMatrix<f64> {
    let n = l.grid.len();
    let id = DMatrix::<f64>::identity(n, n);
    let a = &l.mat * dt;
    let mut p = &id + &a * 0.25;
    for c in [1.0 / 3.0, 0.5, 1.0] {
        p = &id + (&a * &p) * c;
    }
    p
}

/// Integrates `h' = L h` with the classical four-stage scheme and records
/// `||h||` every `stride` steps (and at `t_final`).
pub fn evolve_linear(
    l: &OperatorMatrix,
    h0: &GridFunction,
    t_final: f64,
    dt: f64,
    norm: NormKind,
    stride: usize,
) -> Result<DecaySamples> {
    check_linear_args(l, h0, t_final, dt, norm, stride)?;
    let step = rk4_step_matrix(l, dt);
    evolve_with_step(&step, l.grid(), h0.values(), t_final, dt, norm, stride)
}

fn check_linear_args(l: &OperatorMatrix, h0: &GridFunction, t_final: f64, dt: f64, norm: NormKind, stride: usize) -> Result<()> {
    if !grid::same_grid(h0.grid(), &l.grid) {
        return Err(Error::GridMismatch);
    }
    if !(dt > 0.0 && dt <= MAX_LINEAR_DT) {
        return Err(Error::Config(format!("dt must lie in (0, {MAX_LINEAR_DT}], got {dt}")));
    }
    if !(t_final > 0.0) || stride == 0 {
        return Err(Error::Config("need t_final > 0 and stride >= 1".into()));
    }
    norm.validate()
}

fn evolve_with_step(
    step: &DMatrix<f64>,
    grid: &Arc<Grid>,
    h0: &[f64],
    t_final: f64,
    dt: f64,
    norm: NormKind,
    stride: usize,
) -> Result<DecaySamples> {
    let steps = (t_final / dt).round().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let mut h = DVector::from_column_slice(h0);
    let n0 = norm_values(grid, h0, norm);
    let mut times = vec![0.0];
    let mut norms = vec![n0];
    let mut buf = DVector::zeros(h.len());
    for s in 1..=steps {
        buf.gemv(1.0, step, &h, 0.0);
        std::mem::swap(&mut h, &mut buf);
        if s % stride == 0 || s == steps {
            let v = norm_values(grid, h.as_slice(), norm);
            let t = s as f64 * dt;
            if !v.is_finite() || (n0 > 0.0 && v > 10.0 * n0) {
                return Err(Error::BlowUp {
                    t,
                    detail: format!("norm grew from {n0:.3e} to {v:.3e}; the step may be unstable"),
                });
            }
            times.push(t);
            norms.push(v);
        }
    }
    Ok(DecaySamples { times, norms })
}

/// Smooth sign-changing zero-mass test function from `seed`: the difference
/// of two unit-mass gamma-like bumps, projected to zero discrete mass.
pub fn random_zero_mass_seed(grid: &Arc<Grid>, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bump = || {
        let p: f64 = rng.gen_range(0.0..4.0);
        let q: f64 = rng.gen_range(0.5..3.0);
        let v: Vec<f64> = grid.nodes().iter().map(|&x| x.powf(p) * (-q * x).exp()).collect();
        let m = grid::moment_values(grid, &v, 1.0);
        v.into_iter().map(|u| u / m).collect::<Vec<f64>>()
    };
    let (a, b) = (bump(), bump());
    let h = GridFunction::from_vec(grid.clone(), a.iter().zip(&b).map(|(u, v)| u - v).collect());
    zero_mass_project(&h)
}

/// Settings of [`estimate_gap`].
#[derive(Debug, Clone)]
pub struct GapOptions {
    pub trials: usize,
    pub t_final: f64,
    pub dt: f64,
    pub stride: usize,
    pub seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { trials: 10, t_final: 20.0, dt: 1e-2, stride: 10, seed: 0 }
    }
}

/// Result of [`estimate_gap`].
#[derive(Debug, Clone)]
pub struct GapEstimate {
    pub worst_rate: f64,
    pub rates: Vec<f64>,
    pub samples: Vec<DecaySamples>,
}

impl GapEstimate {
    /// Largest observed `||e^{Lt} h|| e^{rate t} / ||h||` over the trials.
    pub fn prefactor(&self, rate: f64) -> f64 {
        self.samples.iter().map(|s| s.prefactor(rate)).fold(0.0, f64::max)
    }
}

/// Evolves `trials` random zero-mass seeds under the mass-projected operator
/// and fits the decay rate of `norm` on `[T/2, T]`.
pub fn estimate_gap(l: &OperatorMatrix, norm: NormKind, opts: &GapOptions) -> Result<GapEstimate> {
    if opts.trials < 5 {
        return Err(Error::Config(format!("need at least 5 trials, got {}", opts.trials)));
    }
    let grid = l.grid().clone();
    let probe = GridFunction::zeros(&grid);
    check_linear_args(l, &probe, opts.t_final, opts.dt, norm, opts.stride)?;
    let lp = l.projected();
    let step = rk4_step_matrix(&lp, opts.dt);
    let samples = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let h0 = random_zero_mass_seed(&grid, opts.seed.wrapping_add(t as u64));
            evolve_with_step(&step, &grid, h0.values(), opts.t_final, opts.dt, norm, opts.stride)
        })
        .collect::<Result<Vec<_>>>()?;
    let rates = samples
        .iter()
        .map(|s| s.fitted_rate(0.5 * opts.t_final, opts.t_final))
        .collect::<Result<Vec<_>>>()?;
    let worst_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GapEstimate { worst_rate, rates, samples })
}

/// Decay rate of the slowest mode seen by power iteration on the one-step
/// propagator of the projected operator. Diagnostic only.
pub fn power_iteration_rate(l: &OperatorMatrix, dt: f64, iterations: usize, seed: u64) -> Result<f64> {
    if !(dt > 0.0 && dt <= MAX_LINEAR_DT) {
        return Err(Error::Config(format!("dt must lie in (0, {MAX_LINEAR_DT}], got {dt}")));
    }
    let lp = l.projected();
    let step = rk4_step_matrix(&lp, dt);
    // Propagate over blocks of unit time so the ratio is well above rounding.
    let block = (1.0 / dt).round().max(1.0) as usize;
    let mut h = DVector::from_column_slice(random_zero_mass_seed(l.grid(), seed).values());
    let mut rate = f64::NAN;
    for _ in 0..iterations.max(1) {
        let before = h.norm();
        for _ in 0..block {
            h = &step * &h;
        }
        let after = h.norm();
        if !(after > 0.0) {
            return Ok(f64::INFINITY);
        }
        rate = -(after / before).ln() / (block as f64 * dt);
        h /= after;
    }
    Ok(rate)
}

/// Cutoff and weight of the regularising/dissipative splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingConfig {
    /// Cutoff size; snapped to the nearest grid node.
    pub r: f64,
    pub mu: f64,
}

impl SplittingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Config(format!("cutoff R must be positive, got {}", self.r)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Config(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        Ok(())
    }
}

/// Smallest `R` with both dissipativity conditions of the cutoff splitting:
/// the tail ratio `int_y^inf e^{-x}(1+x)^k / (e^{-y}(1+y)^k) <= beta` for all
/// `y >= R`, and `2 beta (1+x)(1-e^{-x}) + 2 J_k (1+x)/(R+1)^{k-1} - k x < 0`
/// for all `x >= R`, with `J_k = int_0^inf (1+x)^k e^{-x}`. Needs `k > 2 beta`.
pub fn cutoff_threshold(beta: f64, k: f64) -> Result<f64> {
    if !(beta > 1.0) || !(k > 2.0 * beta) {
        return Err(Error::Domain(format!("need beta > 1 and k > 2 beta, got beta={beta}, k={k}")));
    }
    let tail = crate::norms::tail_ratio_threshold(beta, k)
        .ok_or_else(|| Error::Domain(format!("tail ratio above {beta} up to {TAIL_SCAN_LIMIT}")))?;
    let jk = shifted_gamma_moment(k);
    // Dropping the e^{-x} term leaves an affine function of x, negative on
    // [R, inf) when it is negative at R and decreasing.
    let ok = |r: f64| {
        let c = 2.0 * jk / (r + 1.0).powf(k - 1.0);
        let slope = 2.0 * beta + c - k;
        slope < 0.0 && slope * (1.0 + r) + k < 0.0
    };
    let mut lo = 0.0;
    let mut hi = TAIL_SCAN_LIMIT;
    if !ok(hi) {
        return Err(Error::Domain(format!("pointwise condition fails up to {TAIL_SCAN_LIMIT}")));
    }
    if ok(lo) {
        hi = lo;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(tail.max(hi))
}

/// Smallest grid node at or above [`cutoff_threshold`].
pub fn default_cutoff(grid: &Grid, beta: f64, k: f64) -> Result<f64> {
    let r = cutoff_threshold(beta, k)?;
    grid.nodes()
        .iter()
        .copied()
        .find(|&x| x >= r)
        .ok_or_else(|| Error::Domain(format!("cutoff {r:.4} exceeds xmax {}", grid.xmax())))
}

/// `A = A1 + A2 + A3`, `B = B1 + B2 + B3` with the gain split at `R`:
/// `A1 = 2 e^{-x} int_0^x h chi_{y<=R} (e^y - 1)`, `A2 = -2 e^{-x} int_x^inf h`,
/// `A3 = -B3 = 2 e^{-x} int_R^inf h(y) (y+1)(1 - e^{-y}) dy`, `B1 = x h'` and
/// `B2 = 2 e^{-x} int_0^x h chi_{y>R} (e^y - 1)`. `A + B` equals the
/// convolution form of the linearised operator.
pub fn assemble_splitting(grid: &Arc<Grid>, cfg: &SplittingConfig) -> Result<(OperatorMatrix, OperatorMatrix)> {
    cfg.validate()?;
    if !grid.in_range(grid.position(cfg.r)) {
        return Err(Error::Domain(format!("cutoff {} outside [{}, {}]", cfg.r, grid.xmin(), grid.xmax())));
    }
    let n = grid.len();
    let x = grid.nodes();
    let r_idx = grid.position(cfg.r).round() as usize;
    let (a1, b2) = gain_rows(grid, r_idx);
    let tail = tail_dmatrix(grid);
    let corr: Vec<f64> = (0..n).map(|j| tail[(r_idx, j)] * (x[j] + 1.0) * (1.0 - (-x[j]).exp())).collect();
    let mut a = a1 * 2.0;
    let mut b = dilation_matrix(grid) + b2 * 2.0;
    for i in 0..n {
        let ex = 2.0 * (-x[i]).exp();
        for j in 0..n {
            a[(i, j)] += ex * (corr[j] - tail[(i, j)]);
            b[(i, j)] -= ex * corr[j];
        }
    }
    let a = OperatorMatrix::new(grid.clone(), a, NormKind::L2Exp { mu: cfg.mu }, OperatorForm::SplitA)?;
    let b = OperatorMatrix::new(grid.clone(), b, NormKind::L1k { k: 3.0 }, OperatorForm::SplitB)?;
    Ok((a, b))
}

/// `(2 / sqrt(2 - mu)) (e^{2R} + 1 + (R+1)^{2(1-k)})^{1/2}`, the bound of
/// `||A h||_{L2(e^{mu x})} / ||h||_{L1_k}`.
pub fn splitting_a_bound(r: f64, mu: f64, k: f64) -> f64 {
    2.0 / (2.0 - mu).sqrt() * ((2.0 * r).exp() + 1.0 + (r + 1.0).powf(2.0 * (1.0 - k))).sqrt()
}

/// Which gap-transfer statement [`compose_gap_constants`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// From a large space to a smaller one: `C = C2 (1 + C_A C1 C_Y / |l2 - l1|)`, rate `min(l1, l2)`.
    Restrict,
    /// From a small space to a larger one: `C = C2 + C_Y C1 C2 C_A / (l2 - l1)`, rate `l1`.
    Extend,
}

/// Prefactor and rate of a gap transferred between two spaces.
pub fn compose_gap_constants(
    c1: f64,
    lambda1: f64,
    c2: f64,
    lambda2: f64,
    c_a: f64,
    c_y: f64,
    mode: TransferMode,
) -> Result<(f64, f64)> {
    if lambda1 == lambda2 {
        return Err(Error::Domain(format!("rates must differ, both are {lambda1}")));
    }
    match mode {
        TransferMode::Restrict => {
            Ok((c2 * (1.0 + c_a * c1 * c_y / (lambda2 - lambda1).abs()), lambda1.min(lambda2)))
        }
        TransferMode::Extend => {
            if !(lambda2 > lambda1) {
                return Err(Error::Domain(format!("extension needs lambda2 > lambda1, got {lambda2} <= {lambda1}")));
            }
            Ok((c2 + c_y * c1 * c2 * c_a / (lambda2 - lambda1), lambda1))
        }
    }
}

/// Constants of the perturbed gap `lambda_eps = 1/2 - C M2 eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConstants {
    /// Prefactor of the unperturbed `L1_k` gap.
    pub c: f64,
    /// `2 C`.
    pub m: f64,
    /// Slope of `||L_eps - L_0|| <= eps M2`.
    pub m2: f64,
    /// `1 / (2 C M2)`.
    pub eps0: f64,
}

impl GapConstants {
    pub fn new(c: f64, m2: f64) -> Result<Self> {
        if !(c > 0.0 && m2 > 0.0) {
            return Err(Error::Domain(format!("need C > 0 and M2 > 0, got C={c}, M2={m2}")));
        }
        Ok(Self { c, m: 2.0 * c, m2, eps0: 1.0 / (2.0 * c * m2) })
    }

    pub fn lambda_eps(&self, eps: f64) -> f64 {
        0.5 - self.c * self.m2 * eps
    }
}

/// `(1/2 - C M2 eps, eps < eps0)`.
pub fn perturbed_gap(consts: &GapConstants, eps: f64) -> Result<(f64, bool)> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("eps must be >= 0, got {eps}")));
    }
    Ok((consts.lambda_eps(eps), eps < consts.eps0))
}

/// `N_K(f) = 2f + x f' + C_K(f, f)`.
pub fn nonlinear_operator(kernel: &KernelSpec, f: &GridFunction) -> GridFunction {
    let op = CoagOperator::new(kernel, f.grid());
    GridFunction::from_vec(f.grid().clone(), self_similar_residual_values(&op, f.values()))
}

/// `x h'` on node values, shared with the matrices above.
pub fn dilation_generator(h: &GridFunction) -> GridFunction {
    GridFunction::from_vec(h.grid().clone(), grid::dilation_derivative(h.grid(), h.values()))
}
