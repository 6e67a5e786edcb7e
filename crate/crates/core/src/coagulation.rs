//! The coagulation operator `C_K(f, f)`, its symmetric bilinear form, the
//! self-similar residual and the integrated stationary equation.
//!
//! Gain terms use the half-domain convolution plan of [`crate::grid`]; loss
//! terms are truncated at `xmin` and `xmax` exactly like the gain, so that the
//! truncation errors cancel in the number and mass balances. Kernel values on
//! the quadrature nodes are tabulated once per [`CoagOperator`].

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::grid::{self, ConvPlan, Grid, GridFunction, Stencil};
use crate::kernels::KernelSpec;

/// Gain, loss and their difference on a grid.
#[derive(Debug, Clone)]
pub struct CoagResult {
    pub gain: GridFunction,
    pub loss: GridFunction,
    pub total: GridFunction,
}

/// Kernel values either constant or tabulated per entry.
#[derive(Debug)]
enum Table {
    Constant(f64),
    Values(Vec<f64>),
}

impl Table {
    #[inline]
    fn get(&self, idx: usize) -> f64 {
        match self {
            Table::Constant(c) => *c,
            Table::Values(v) => v[idx],
        }
    }
}

/// The coagulation operator for one kernel on one grid, with tabulated
/// kernel values. Immutable after construction and safe to share.
#[derive(Debug)]
pub struct CoagOperator {
    kernel: KernelSpec,
    plan: Arc<ConvPlan>,
    /// `K(x_i - y_j, y_j)` per convolution entry.
    gain_k: Table,
    /// `K(x_i, x_j)` row-major.
    node_k: Table,
    /// Loss quadrature coefficients `c_ij` with `int K(x_i, y) f(y) dy ~ sum_j c_ij f_j`,
    /// present when the kernel has a diagonal kink. The integral is split at
    /// `x_i` and each side uses the smooth extension of its branch.
    loss_c: Option<Vec<f64>>,
}

impl CoagOperator {
    pub fn new(kernel: &KernelSpec, grid: &Arc<Grid>) -> Self {
        Self::with_plan(kernel, Arc::new(ConvPlan::new(grid)))
    }

    /// Reuses a convolution plan built for the same grid.
    pub fn with_plan(kernel: &KernelSpec, plan: Arc<ConvPlan>) -> Self {
        let grid = plan.grid().clone();
        let (gain_k, node_k) = if kernel.is_constant() {
            let c = kernel.k(1.0, 1.0);
            (Table::Constant(c), Table::Constant(c))
        } else {
            let x = grid.nodes();
            // Entries near `y = x/2` may sample nodes just past the midpoint;
            // kinked kernels use the smooth extension of the `y <= x - y` branch.
            let gain = plan
                .entries()
                .iter()
                .map(|e| kernel.diagonal_branches(e.s, x[e.j]).map_or_else(|| kernel.k(e.s, x[e.j]), |b| b.0))
                .collect();
            let n = grid.len();
            let mut node = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    node[i * n + j] = kernel.k(x[i], x[j]);
                }
            }
            (Table::Values(gain), Table::Values(node))
        };
        let loss_c = split_loss_coefficients(kernel, &grid);
        Self { kernel: kernel.clone(), plan, gain_k, node_k, loss_c }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.plan.grid()
    }

    pub fn plan(&self) -> &Arc<ConvPlan> {
        &self.plan
    }

    /// `K(x_i, x_j)`.
    #[inline]
    pub fn node_kernel(&self, i: usize, j: usize) -> f64 {
        self.node_k.get(i * self.grid().len() + j)
    }

    /// Quadrature coefficient of `f_j` in the loss integral at node `i`.
    #[inline]
    pub fn loss_coeff(&self, i: usize, j: usize) -> f64 {
        let n = self.grid().len();
        match &self.loss_c {
            Some(c) => c[i * n + j],
            None => self.node_k.get(i * n + j) * self.grid().weights()[j],
        }
    }

    /// `int_{xmin}^{xmax} K(x_i, y) f(y) dy` at every node.
    pub fn collision_rates(&self, f: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let n = g.len();
        let w = g.weights();
        if let Some(c) = &self.loss_c {
            return (0..n).map(|i| grid::dot(&c[i * n..(i + 1) * n], f)).collect();
        }
        match &self.node_k {
            Table::Constant(c) => vec![c * grid::dot(w, f); n],
            Table::Values(t) => (0..n)
                .map(|i| {
                    let row = &t[i * n..(i + 1) * n];
                    (0..n).map(|j| row[j] * w[j] * f[j]).sum()
                })
                .collect(),
        }
    }

    /// `int_0^x K(x - y, y) f(x - y) g(y) dy` at every node.
    pub fn kernel_convolution(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.grid().len();
        (0..n)
            .map(|i| {
                let range = self.plan.row_range(i);
                let entries = &self.plan.entries()[range.clone()];
                entries
                    .iter()
                    .zip(range)
                    .filter_map(|(e, idx)| {
                        e.stencil.as_ref().map(|st| {
                            e.w * self.gain_k.get(idx) * (st.apply(f) * g[e.j] + st.apply(g) * f[e.j])
                        })
                    })
                    .sum()
            })
            .collect()
    }

    /// Gain and loss of `C_K(f, f)` on raw node values.
    pub fn quadratic_values(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gain = self.kernel_convolution(f, f);
        gain.iter_mut().for_each(|v| *v *= 0.5);
        let rates = self.collision_rates(f);
        let loss = f.iter().zip(&rates).map(|(a, b)| a * b).collect();
        (gain, loss)
    }

    /// `C_K(f, f) = gain - loss` on raw node values.
    pub fn total_values(&self, f: &[f64]) -> Vec<f64> {
        let (gain, loss) = self.quadratic_values(f);
        gain.iter().zip(&loss).map(|(g, l)| g - l).collect()
    }

    /// Symmetric bilinear form `C_K(g, h)` on raw node values.
    pub fn bilinear_values(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        let conv = self.kernel_convolution(g, h);
        let rg = self.collision_rates(g);
        let rh = self.collision_rates(h);
        (0..g.len()).map(|i| 0.5 * conv[i] - 0.5 * g[i] * rh[i] - 0.5 * h[i] * rg[i]).collect()
    }

    /// Matrix of `h -> C_K(g, h)`.
    pub fn bilinear_matrix(&self, g: &[f64]) -> DMatrix<f64> {
        let gr = self.grid();
        let n = gr.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let range = self.plan.row_range(i);
            for (e, idx) in self.plan.entries()[range.clone()].iter().zip(range) {
                let Some(st) = e.stencil.as_ref() else { continue };
                let a = 0.5 * e.w * self.gain_k.get(idx);
                m[(i, e.j)] += a * st.apply(g);
                let gj = g[e.j];
                scatter(&mut m, i, st, a * gj);
            }
        }
        let rg = self.collision_rates(g);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] -= 0.5 * g[i] * self.loss_coeff(i, j);
            }
            m[(i, i)] -= 0.5 * rg[i];
        }
        m
    }

    /// Integrated stationary operator `int_0^x int_{x-y}^inf y K(y, z) G(y) G(z) dz dy`.
    pub fn integrated(&self) -> IntegratedOperator<'_> {
        IntegratedOperator::new(self)
    }
}

fn split_loss_coefficients(kernel: &KernelSpec, grid: &Grid) -> Option<Vec<f64>> {
    let x = grid.nodes();
    kernel.diagonal_branches(x[0], x[0])?;
    let n = grid.len();
    let w = grid.weights();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        let lo = grid.prefix_weights(x[i], n - 1);
        for j in 0..n {
            let wl = lo.get(j).copied().unwrap_or(0.0);
            let (kl, kh) = kernel.diagonal_branches(x[i], x[j]).expect("family has a diagonal kink");
            c[i * n + j] = wl * kl + (w[j] - wl) * kh;
        }
    }
    Some(c)
}

fn scatter(m: &mut DMatrix<f64>, row: usize, st: &Stencil, a: f64) {
    for q in 0..4 {
        m[(row, st.base + q)] += a * st.c[q];
    }
}

/// Gain, loss and total of `C_K(f, f)`.
pub fn apply_quadratic(kernel: &KernelSpec, f: &GridFunction) -> CoagResult {
    let op = CoagOperator::new(kernel, f.grid());
    op.apply(f)
}

impl CoagOperator {
    pub fn apply(&self, f: &GridFunction) -> CoagResult {
        let (gain, loss) = self.quadratic_values(f.values());
        let total = gain.iter().zip(&loss).map(|(g, l)| g - l).collect();
        let grid = f.grid().clone();
        CoagResult {
            gain: GridFunction::from_vec(grid.clone(), gain),
            loss: GridFunction::from_vec(grid.clone(), loss),
            total: GridFunction::from_vec(grid, total),
        }
    }
}

/// `C_K(g, h) = (1/2) int K g(x-y) h(y) dy - (1/2) g int K h - (1/2) h int K g`.
pub fn apply_bilinear(kernel: &KernelSpec, g: &GridFunction, h: &GridFunction) -> Result<GridFunction> {
    grid::check_same(g, h)?;
    let op = CoagOperator::new(kernel, g.grid());
    Ok(GridFunction::from_vec(g.grid().clone(), op.bilinear_values(g.values(), h.values())))
}

/// `(int C_K(f, f), -(1/2) int int K f f)`; both sides of the number balance.
pub fn number_loss_identity(kernel: &KernelSpec, f: &GridFunction) -> (f64, f64) {
    let op = CoagOperator::new(kernel, f.grid());
    let lhs = grid::integrate(&op.apply(f).total);
    let w = f.grid().weights();
    let v = f.values();
    let rates = op.collision_rates(v);
    let rhs: f64 = (0..v.len()).map(|i| w[i] * v[i] * rates[i]).sum();
    (lhs, -0.5 * rhs)
}

/// Self-similar residual `2f + x f' + C_K(f, f)`, with `x f'` by finite differences.
pub fn self_similar_residual_values(op: &CoagOperator, f: &[f64]) -> Vec<f64> {
    let xdf = grid::dilation_derivative(op.grid(), f);
    let c = op.total_values(f);
    (0..f.len()).map(|i| 2.0 * f[i] + xdf[i] + c[i]).collect()
}

pub fn self_similar_residual(kernel: &KernelSpec, f: &GridFunction) -> GridFunction {
    let op = CoagOperator::new(kernel, f.grid());
    GridFunction::from_vec(f.grid().clone(), self_similar_residual_values(&op, f.values()))
}

/// Evaluates `D[G](x) = int_0^x y G(y) Phi(y, x - y) dy` with
/// `Phi(y, s) = int_s^{xmax} K(y, z) G(z) dz`.
// TODO: split the inner `Phi` integral at `z = y` for kernels with a diagonal
// kink, as the collision rates already do; it currently uses node values.
pub struct IntegratedOperator<'a> {
    op: &'a CoagOperator,
    rows: Vec<Vec<RowEntry>>,
}

struct RowEntry {
    j: usize,
    w: f64,
    s: f64,
    stencil: Option<Stencil>,
}

impl<'a> IntegratedOperator<'a> {
    fn new(op: &'a CoagOperator) -> Self {
        let g = op.grid();
        let x = g.nodes();
        let rows = (0..g.len())
            .map(|i| {
                let mut row: Vec<RowEntry> = g
                    .prefix_weights(x[i], i)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w != 0.0)
                    .map(|(j, w)| {
                        let s = x[i] - x[j];
                        RowEntry { j, w, s, stencil: g.cubic_stencil(s) }
                    })
                    .collect();
                // Cell [0, x_0] with G frozen at G(x_0): int_0^{x_0} y dy = x_0^2 / 2,
                // Phi taken at the centroid y = 2 x_0 / 3.
                let s = x[i] - 2.0 * x[0] / 3.0;
                row.push(RowEntry { j: 0, w: 0.5 * x[0], s, stencil: g.cubic_stencil(s) });
                row
            })
            .collect();
        Self { op, rows }
    }

    /// `D[G]` at every node.
    pub fn apply(&self, gv: &[f64]) -> Vec<f64> {
        let g = self.op.grid();
        let n = g.len();
        let x = g.nodes();
        let x0 = x[0];
        // tails[j][l] = int_{x_l}^{xmax} K(y_j, z) G(z) dz
        let tails: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let integrand: Vec<f64> =
                    (0..n).map(|l| self.op.node_kernel(j, l) * gv[l]).collect();
                grid::tail_values(g, &integrand)
            })
            .collect();
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        let t = &tails[e.j];
                        let phi = match &e.stencil {
                            Some(st) => st.apply(t),
                            None => t[0] + (x0 - e.s) * self.op.node_kernel(e.j, 0) * gv[0],
                        };
                        e.w * x[e.j] * gv[e.j] * phi
                    })
                    .sum()
            })
            .collect()
    }

    /// Jacobian of `G -> D[G]` at `gv`.
    pub fn jacobian(&self, gv: &[f64]) -> DMatrix<f64> {
        let g = self.op.grid();
        let n = g.len();
        let x = g.nodes();
        let x0 = x[0];
        let tw = grid::tail_matrix(g);
        let tails: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let integrand: Vec<f64> = (0..n).map(|l| self.op.node_kernel(j, l) * gv[l]).collect();
                grid::tail_values(g, &integrand)
            })
            .collect();
        let mut jac = DMatrix::zeros(n, n);
        let mut coef = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            for e in row {
                let j = e.j;
                let a = e.w * x[j];
                // d/dG_j of the outer factor.
                let t = &tails[j];
                let phi = match &e.stencil {
                    Some(st) => st.apply(t),
                    None => t[0] + (x0 - e.s) * self.op.node_kernel(j, 0) * gv[0],
                };
                jac[(i, j)] += a * phi;
                // d/dG_m of Phi: stencil-weighted tail rows times K(y_j, z_m).
                coef.iter_mut().for_each(|c| *c = 0.0);
                match &e.stencil {
                    Some(st) => {
                        for q in 0..4 {
                            let r = &tw[(st.base + q) * n..(st.base + q + 1) * n];
                            let c = st.c[q];
                            for m in 0..n {
                                coef[m] += c * r[m];
                            }
                        }
                    }
                    None => {
                        coef.copy_from_slice(&tw[..n]);
                        coef[0] += x0 - e.s;
                    }
                }
                let b = a * gv[j];
                for m in 0..n {
                    if coef[m] != 0.0 {
                        jac[(i, m)] += b * coef[m] * self.op.node_kernel(j, m);
                    }
                }
            }
        }
        jac
    }

    /// `x^2 G - D[G]` at every node.
    pub fn residual(&self, gv: &[f64]) -> Vec<f64> {
        let x = self.op.grid().nodes();
        let d = self.apply(gv);
        (0..gv.len()).map(|i| x[i] * x[i] * gv[i] - d[i]).collect()
    }
}

/// Residual of the integrated stationary equation, `x^2 G - D[G]`.
pub fn integrated_residual(kernel: &KernelSpec, g: &GridFunction) -> GridFunction {
    if g.values().iter().any(|&v| v < 0.0) {
        log::warn!("integrated residual evaluated on a profile with negative entries");
    }
    let op = CoagOperator::new(kernel, g.grid());
    let r = op.integrated().residual(g.values());
    GridFunction::from_vec(g.grid().clone(), r)
}
