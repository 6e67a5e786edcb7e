//! Positive-size grids with a composite-cubic quadrature rule, interpolation,
//! finite convolution and tail primitives.
//!
//! The half-line is truncated to `[xmin, xmax]`; everything outside is zero by
//! fiat. Every integral is assembled from per-cell rules that integrate the
//! cubic Lagrange interpolant through four neighbouring nodes exactly, which
//! makes the rule fourth order on smooth data and keeps all weights positive.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Uniform,
    #[serde(alias = "log", alias = "log-uniform")]
    LogUniform,
}

/// Weights of one cell `[x_c, x_{c+1}]` on the four nodes `start..start+4`.
#[derive(Debug, Clone, Copy)]
pub struct CellRule {
    pub start: usize,
    pub w: [f64; 4],
}

/// Interpolation stencil: value = `sum_m c[m] * f[base + m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub base: usize,
    pub c: [f64; 4],
}

impl Stencil {
    #[inline]
    pub fn apply(&self, f: &[f64]) -> f64 {
        let b = self.base;
        self.c[0] * f[b] + self.c[1] * f[b + 1] + self.c[2] * f[b + 2] + self.c[3] * f[b + 3]
    }
}

#[derive(Debug)]
pub struct Grid {
    kind: GridKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cells: Vec<CellRule>,
    coord0: f64,
    step: f64,
}

pub const MIN_NODES: usize = 16;

/// Builds a grid of the given kind with its quadrature rule attached.
pub fn make_grid(kind: GridKind, xmin: f64, xmax: f64, n: usize) -> Result<Arc<Grid>> {
    if !(xmin > 0.0 && xmax > xmin && xmax.is_finite()) {
        return Err(Error::Config(format!("need 0 < xmin < xmax, got [{xmin}, {xmax}]")));
    }
    if n < MIN_NODES {
        return Err(Error::Config(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
    }
    let last = (n - 1) as f64;
    let (coord0, step, nodes) = match kind {
        GridKind::Uniform => {
            let step = (xmax - xmin) / last;
            let mut nodes: Vec<f64> = (0..n).map(|i| xmin + step * i as f64).collect();
            nodes[n - 1] = xmax;
            (xmin, step, nodes)
        }
        GridKind::LogUniform => {
            let (l0, l1) = (xmin.ln(), xmax.ln());
            let step = (l1 - l0) / last;
            let mut nodes: Vec<f64> = (0..n).map(|i| (l0 + step * i as f64).exp()).collect();
            nodes[0] = xmin;
            nodes[n - 1] = xmax;
            (l0, step, nodes)
        }
    };
    let cells: Vec<CellRule> = (0..n - 1)
        .map(|c| {
            let start = c.saturating_sub(1).min(n - 4);
            let st = [nodes[start], nodes[start + 1], nodes[start + 2], nodes[start + 3]];
            CellRule { start, w: lagrange_integrals(&st, nodes[c], nodes[c + 1]) }
        })
        .collect();
    let mut weights = vec![0.0; n];
    for cell in &cells {
        for m in 0..4 {
            weights[cell.start + m] += cell.w[m];
        }
    }
    Ok(Arc::new(Grid { kind, nodes, weights, cells, coord0, step }))
}

/// Integrals over `[a, b]` of the Lagrange basis polynomials through `nodes`
/// (up to four of them), by two-point Gauss-Legendre, exact for cubics.
fn lagrange_integrals<const M: usize>(nodes: &[f64; M], a: f64, b: f64) -> [f64; M] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let g = half / 3f64.sqrt();
    let mut out = [0.0; M];
    for t in [mid - g, mid + g] {
        for m in 0..M {
            let mut l = 1.0;
            for q in 0..M {
                if q != m {
                    l *= (t - nodes[q]) / (nodes[m] - nodes[q]);
                }
            }
            out[m] += half * l;
        }
    }
    out
}

/// Cubic Lagrange coefficients for equispaced nodes `0, 1, 2, 3` at offset `t`.
#[inline]
pub fn cubic_coeffs(t: f64) -> [f64; 4] {
    let (t1, t2, t3) = (t - 1.0, t - 2.0, t - 3.0);
    [-t1 * t2 * t3 / 6.0, t * t2 * t3 / 2.0, -t * t1 * t3 / 2.0, t * t1 * t2 / 6.0]
}

impl Grid {
    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cells(&self) -> &[CellRule] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn xmin(&self) -> f64 {
        self.nodes[0]
    }

    pub fn xmax(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Node spacing in the native coordinate (`ln x` for log grids, `x` otherwise).
    pub fn coord_step(&self) -> f64 {
        self.step
    }

    /// The factor turning `d/d(coordinate)` into `x d/dx` at node `i`.
    #[inline]
    pub fn dilation_factor(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::LogUniform => 1.0,
            GridKind::Uniform => self.nodes[i],
        }
    }

    /// Fractional node index of a size `x > 0`.
    #[inline]
    pub fn position(&self, x: f64) -> f64 {
        match self.kind {
            GridKind::LogUniform => (x.ln() - self.coord0) / self.step,
            GridKind::Uniform => (x - self.coord0) / self.step,
        }
    }

    /// True when the fractional index `p` lies on the grid.
    pub fn in_range(&self, p: f64) -> bool {
        p >= -1e-9 && p <= (self.len() - 1) as f64 + 1e-9
    }

    /// Cubic stencil in the native coordinate, `None` outside `[xmin, xmax]`.
    #[inline]
    pub fn cubic_stencil(&self, x: f64) -> Option<Stencil> {
        if !(x > 0.0) {
            return None;
        }
        self.cubic_stencil_at(self.position(x))
    }

    /// Cubic stencil at a fractional node index.
    #[inline]
    pub fn cubic_stencil_at(&self, p: f64) -> Option<Stencil> {
        if !self.in_range(p) {
            return None;
        }
        let n = self.len();
        let base = ((p.floor() as isize) - 1).clamp(0, n as isize - 4) as usize;
        Some(Stencil { base, c: cubic_coeffs(p - base as f64) })
    }

    /// Adds the weights of `int_a^e` (inside cell `c`) to `w`, with a stencil
    /// restricted to the nodes `0..w.len()`.
    fn add_segment(&self, w: &mut [f64], c: usize, a: f64, e: f64) {
        let x = &self.nodes;
        match w.len() {
            0 => {}
            1 => w[0] += e - a,
            2 => {
                let cw = lagrange_integrals(&[x[0], x[1]], a, e);
                w[0] += cw[0];
                w[1] += cw[1];
            }
            3 => {
                let cw = lagrange_integrals(&[x[0], x[1], x[2]], a, e);
                for q in 0..3 {
                    w[q] += cw[q];
                }
            }
            avail => {
                let s = c.saturating_sub(1).min(avail - 4);
                let cw = lagrange_integrals(&[x[s], x[s + 1], x[s + 2], x[s + 3]], a, e);
                for q in 0..4 {
                    w[s + q] += cw[q];
                }
            }
        }
    }

    /// Weights `omega_j` with `int_{xmin}^{b} f ~ sum_j omega_j f_j`, using only
    /// nodes `0..=max_node`. Returns an empty vector when `b <= xmin`.
    pub fn prefix_weights(&self, b: f64, max_node: usize) -> Vec<f64> {
        let (mut lo, hi) = self.prefix_weights_split(b, max_node, usize::MAX);
        for (l, h) in lo.iter_mut().zip(hi) {
            *l += h;
        }
        lo
    }

    /// [`Grid::prefix_weights`] with the contributions of cells below node
    /// `split` (that is, of `[xmin, x_split]`) and of the remaining cells
    /// returned separately. The two parts sum to the unsplit weights.
    pub fn prefix_weights_split(&self, b: f64, max_node: usize, split: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let x = &self.nodes;
        if !(b > x[0]) {
            return (Vec::new(), Vec::new());
        }
        let b = b.min(x[n - 1]);
        let max_node = max_node.min(n - 1);
        // Last node with x_m <= b.
        let m = x.partition_point(|&v| v <= b).saturating_sub(1).min(n - 1);
        let mut lo = vec![0.0; max_node + 1];
        let mut hi = vec![0.0; max_node + 1];
        for c in 0..m {
            let w = if c < split { &mut lo } else { &mut hi };
            let cell = &self.cells[c];
            if cell.start + 3 <= max_node {
                for q in 0..4 {
                    w[cell.start + q] += cell.w[q];
                }
            } else {
                self.add_segment(w, c, x[c], x[c + 1]);
            }
        }
        if b > x[m] && m < n - 1 {
            let w = if m < split { &mut lo } else { &mut hi };
            self.add_segment(w, m, x[m], b);
        }
        (lo, hi)
    }
}

/// A sampled density on a shared grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

/// True when both handles describe the same nodes.
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || (a.kind == b.kind && a.nodes == b.nodes)
}

pub(crate) fn check_same(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if same_grid(&a.grid, &b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values known to be finite and of the right length.
    pub(crate) fn from_vec(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&x| f(x)).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.grid.nodes.iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect();
        Self { grid: self.grid.clone(), values }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        check_same(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `x,value` rows with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(out, "{x:.16e},{v:.16e}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an `x,value` file written by [`GridFunction::write_csv`] onto `grid`.
    /// Abscissae must match the grid nodes to 1e-12 relative.
    pub fn read_csv(grid: &Arc<Grid>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let mut cols = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad row in {}: {line}", path.display())))
            };
            let x = parse(cols.next())?;
            let v = parse(cols.next())?;
            let i = values.len();
            if i >= grid.len() || ((x - grid.nodes[i]) / grid.nodes[i]).abs() > 1e-12 {
                return Err(Error::GridMismatch);
            }
            values.push(v);
        }
        Self::new(grid.clone(), values)
    }
}

/// Quadrature of `f` over `[xmin, xmax]`.
pub fn integrate(f: &GridFunction) -> f64 {
    dot(f.grid.weights(), f.values())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `int x^p f dx`. The cell `[0, xmin]` is added with `f` frozen at `f(xmin)`,
/// which matters for negative `p`.
pub fn moment(f: &GridFunction, p: f64) -> f64 {
    if p <= -0.9 {
        log::warn!("moment of order {p} may diverge near zero");
    }
    moment_values(f.grid(), f.values(), p)
}

pub(crate) fn moment_values(g: &Grid, v: &[f64], p: f64) -> f64 {
    let body: f64 = if p == 0.0 {
        dot(g.weights(), v)
    } else {
        g.nodes().iter().zip(g.weights()).zip(v).map(|((&x, &w), &v)| w * x.powf(p) * v).sum()
    };
    if p > -1.0 {
        let x0 = g.xmin();
        body + x0.powf(p + 1.0) / (p + 1.0) * v[0]
    } else {
        body
    }
}

/// Row vector of the discrete first moment, `m1(v) = sum_i c_i v_i`, with
/// the cell `[0, xmin]` taken at `v(xmin)`.
pub fn mass_functional(grid: &Grid) -> Vec<f64> {
    let x = grid.nodes();
    let mut c: Vec<f64> = grid.weights().iter().zip(x).map(|(w, x)| w * x).collect();
    c[0] += 0.5 * x[0] * x[0];
    c
}

/// Per-cell integrals `int_{x_c}^{x_{c+1}} h`.
pub(crate) fn cell_integrals(grid: &Grid, h: &[f64]) -> Vec<f64> {
    grid.cells
        .iter()
        .map(|c| {
            let s = c.start;
            c.w[0] * h[s] + c.w[1] * h[s + 1] + c.w[2] * h[s + 2] + c.w[3] * h[s + 3]
        })
        .collect()
}

/// `H(x_i) = int_{x_i}^{xmax} h` on raw node values.
pub(crate) fn tail_values(grid: &Grid, h: &[f64]) -> Vec<f64> {
    let cells = cell_integrals(grid, h);
    let n = grid.len();
    let mut out = vec![0.0; n];
    for c in (0..n - 1).rev() {
        out[c] = out[c + 1] + cells[c];
    }
    out
}

/// Matrix `M` with `tail_values(h) = M h`, row-major `n x n`.
pub(crate) fn tail_matrix(grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    let mut m = vec![0.0; n * n];
    for c in (0..n - 1).rev() {
        let (head, rest) = m.split_at_mut((c + 1) * n);
        let row = &mut head[c * n..];
        row.copy_from_slice(&rest[..n]);
        let cell = &grid.cells[c];
        for q in 0..4 {
            row[cell.start + q] += cell.w[q];
        }
    }
    m
}

/// Tail primitive `H(x) = int_x^{xmax} h`.
pub fn tail_primitive(h: &GridFunction) -> GridFunction {
    GridFunction::from_vec(h.grid.clone(), tail_values(&h.grid, &h.values))
}

/// Linear interpolation in `(ln x, value)` on log grids and `(x, value)` on
/// uniform grids; zero outside `[xmin, xmax]`.
pub fn interp(f: &GridFunction, x: f64) -> f64 {
    let g = f.grid();
    if !(x > 0.0) {
        return 0.0;
    }
    let p = g.position(x);
    if !g.in_range(p) {
        return 0.0;
    }
    let n = g.len();
    let j = (p.floor().max(0.0) as usize).min(n - 2);
    let t = (p - j as f64).clamp(0.0, 1.0);
    f.values[j] * (1.0 - t) + f.values[j + 1] * t
}

/// Cubic Lagrange interpolation in the native coordinate; zero outside the grid.
pub fn interp_cubic(f: &GridFunction, x: f64) -> f64 {
    f.grid().cubic_stencil(x).map_or(0.0, |s| s.apply(&f.values))
}

/// One quadrature entry of a half-domain convolution row.
#[derive(Debug, Clone, Copy)]
pub struct ConvEntry {
    /// Node index of the inner variable `y_j`.
    pub j: usize,
    /// Quadrature weight of `y_j` in `int_0^{x_i / 2}`.
    pub w: f64,
    /// Complementary size `x_i - y_j`.
    pub s: f64,
    /// Interpolation stencil at `s` (`None` when `s < xmin`).
    pub stencil: Option<Stencil>,
}

/// Precomputed geometry for `int_0^x F(x - y, y) dy`, evaluated through the
/// symmetric split `int_0^{x/2} [F(x - y, y) + F(y, x - y)] dy` so that the
/// interpolated argument stays in the well-resolved half `[x/2, x]`.
#[derive(Debug)]
pub struct ConvPlan {
    grid: Arc<Grid>,
    row_start: Vec<usize>,
    entries: Vec<ConvEntry>,
}

impl ConvPlan {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let n = grid.len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        for i in 0..n {
            row_start.push(entries.len());
            let xi = grid.nodes[i];
            if i == 0 {
                continue;
            }
            let w = grid.prefix_weights(0.5 * xi, i - 1);
            for (j, &wj) in w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                let s = xi - grid.nodes[j];
                entries.push(ConvEntry { j, w: wj, s, stencil: grid.cubic_stencil(s) });
            }
        }
        row_start.push(entries.len());
        Self { grid: grid.clone(), row_start, entries }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn row(&self, i: usize) -> &[ConvEntry] {
        &self.entries[self.row_start[i]..self.row_start[i + 1]]
    }

    pub fn entries(&self) -> &[ConvEntry] {
        &self.entries
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_start[i]..self.row_start[i + 1]
    }

    /// `(f * g)(x_i)` for raw node values.
    pub fn convolve_values(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|e| {
                        let (fs, gs) = match &e.stencil {
                            Some(st) => (st.apply(f), st.apply(g)),
                            None => (0.0, 0.0),
                        };
                        e.w * (fs * g[e.j] + gs * f[e.j])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Finite convolution `(f * g)(x) = int_0^x f(x - y) g(y) dy` at every node.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    check_same(f, g)?;
    let plan = ConvPlan::new(f.grid());
    Ok(GridFunction::from_vec(f.grid.clone(), plan.convolve_values(&f.values, &g.values)))
}

/// Finite-difference stencil of `x d/dx` at row `i`, as `(node, coefficient)`.
///
/// Third-order upwind-biased differences in the native coordinate. The
/// transport `h_t = x h_x` carries information from large to small sizes, so
/// the stencil leans towards larger indices and values beyond `xmax` are
/// zero. The first row uses a second-order one-sided difference looking
/// inward, since the transport leaves the domain at `xmin`.
pub fn dilation_stencil(grid: &Grid, i: usize) -> Vec<(usize, f64)> {
    let n = grid.len();
    let scale = grid.dilation_factor(i) / grid.coord_step();
    let raw: Vec<(usize, f64)> = if i == 0 {
        vec![(0, -1.5), (1, 2.0), (2, -0.5)]
    } else {
        [(i - 1, -2.0 / 6.0), (i, -3.0 / 6.0), (i + 1, 1.0), (i + 2, -1.0 / 6.0)]
            .into_iter()
            .filter(|&(j, _)| j < n)
            .collect()
    };
    raw.into_iter().map(|(j, c)| (j, c * scale)).collect()
}

/// `x f'(x)` at every node by [`dilation_stencil`].
pub fn dilation_derivative(grid: &Grid, v: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| dilation_stencil(grid, i).iter().map(|&(j, c)| c * v[j]).sum())
        .collect()
}
