//! Time integration of the self-similar equation
//! `df/dt = C_K(f, f) + 2f + x df/dx` in mild (Duhamel) form.
//!
//! The drift `2f + x f'` generates the explicit dilation semigroup
//! `(S_t h)(x) = e^{2t} h(e^t x)`, which is applied exactly (an index shift on
//! log grids when `t` is a multiple of the log spacing), and only the
//! coagulation term is integrated numerically in time.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coagulation::CoagOperator;
use crate::error::{Error, Result};
use crate::grid::{self, make_grid, Grid, GridFunction, GridKind, Stencil};
use crate::kernels::KernelSpec;
use crate::norms::{norm_values, NormKind};

/// The linear map `v -> e^{2 tau} v(x e^{tau})` (or without the `e^{2 tau}`
/// factor) at every node, precomputed for a fixed `tau`.
#[derive(Debug, Clone)]
pub struct ShiftOp {
    factor: f64,
    kind: ShiftKind,
}

#[derive(Debug, Clone)]
enum ShiftKind {
    Index(usize),
    Interp(Vec<Option<Stencil>>),
}

impl ShiftOp {
    /// `tau >= 0`; `amplitude` is the power of `e^tau` multiplying the result.
    pub fn new(grid: &Grid, tau: f64, amplitude: f64) -> Self {
        let factor = (amplitude * tau).exp();
        if grid.kind() == GridKind::LogUniform {
            let m = tau / grid.coord_step();
            if (m - m.round()).abs() < 1e-9 {
                return Self { factor, kind: ShiftKind::Index(m.round() as usize) };
            }
        }
        let e = tau.exp();
        let stencils = grid.nodes().iter().map(|&x| grid.cubic_stencil(x * e)).collect();
        Self { factor, kind: ShiftKind::Interp(stencils) }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, ShiftKind::Index(_))
    }

    /// `out += a * shift(v)`.
    pub fn accumulate(&self, v: &[f64], a: f64, out: &mut [f64]) {
        let c = a * self.factor;
        match &self.kind {
            ShiftKind::Index(m) => {
                for i in 0..v.len().saturating_sub(*m) {
                    out[i] += c * v[i + m];
                }
            }
            ShiftKind::Interp(st) => {
                for (o, s) in out.iter_mut().zip(st) {
                    if let Some(s) = s {
                        *o += c * s.apply(v);
                    }
                }
            }
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.accumulate(v, 1.0, &mut out);
        out
    }
}

/// `(S_t h)(x) = e^{2t} h(e^t x)`.
pub fn apply_s(t: f64, h: &GridFunction) -> Result<GridFunction> {
    shift_checked(t, h, 2.0)
}

/// `(T_t h)(x) = h(x e^t)`.
pub fn apply_t(t: f64, h: &GridFunction) -> Result<GridFunction> {
    shift_checked(t, h, 0.0)
}

fn shift_checked(t: f64, h: &GridFunction, amplitude: f64) -> Result<GridFunction> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
    }
    let op = ShiftOp::new(h.grid(), t, amplitude);
    Ok(GridFunction::from_vec(h.grid().clone(), op.apply(h.values())))
}

/// Time-stepping scheme for the mild formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `S_dt f + dt S_dt C(f)`.
    #[serde(alias = "euler")]
    MildEuler,
    /// Euler predictor `f*`, then `S_dt f + dt/2 (S_dt C(f) + C(f*))`.
    #[serde(alias = "midpoint")]
    MildMidpoint,
    /// `S_dt f + int_0^dt S_s ds C(f)`, the Duhamel integral taken exactly in time.
    #[serde(alias = "etd1")]
    EtdEuler,
    /// Second-order exponential Runge-Kutta: the ETD Euler stage `a`, then the
    /// correction `int_0^dt S_s (dt - s)/dt ds (C(a) - C(f))`.
    #[serde(alias = "etd2")]
    EtdRk2,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" | "mild_euler" => Ok(Scheme::MildEuler),
            "midpoint" | "mild_midpoint" => Ok(Scheme::MildMidpoint),
            "etd1" | "etd_euler" => Ok(Scheme::EtdEuler),
            "etd2" | "etd_rk2" => Ok(Scheme::EtdRk2),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Six-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL6: [(f64, f64); 6] = [
    (-0.932_469_514_203_152, 0.171_324_492_379_170),
    (-0.661_209_386_466_265, 0.360_761_573_048_139),
    (-0.238_619_186_083_197, 0.467_913_934_572_691),
    (0.238_619_186_083_197, 0.467_913_934_572_691),
    (0.661_209_386_466_265, 0.360_761_573_048_139),
    (0.932_469_514_203_152, 0.171_324_492_379_170),
];

/// One step of a fixed length for a fixed kernel and grid.
pub struct Stepper {
    op: Arc<CoagOperator>,
    dt: f64,
    scheme: Scheme,
    s_dt: ShiftOp,
    /// Gauss nodes of `int_0^dt S_s (...) ds`, weights for the constant and
    /// the linearly decaying profile.
    quad: Vec<(ShiftOp, f64, f64)>,
}

impl Stepper {
    pub fn new(op: Arc<CoagOperator>, dt: f64, scheme: Scheme) -> Self {
        let grid = op.grid().clone();
        let s_dt = ShiftOp::new(&grid, dt, 2.0);
        let quad = match scheme {
            Scheme::EtdEuler | Scheme::EtdRk2 => GL6
                .iter()
                .map(|&(z, w)| {
                    let s = 0.5 * dt * (z + 1.0);
                    let wq = 0.5 * dt * w;
                    (ShiftOp::new(&grid, s, 2.0), wq, wq * (dt - s) / dt)
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { op, dt, scheme, s_dt, quad }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn operator(&self) -> &Arc<CoagOperator> {
        &self.op
    }

    fn duhamel(&self, v: &[f64], out: &mut [f64], decaying: bool) {
        for (op, w1, w2) in &self.quad {
            op.accumulate(v, if decaying { *w2 } else { *w1 }, out);
        }
    }

    /// Advances `f` by one step.
    pub fn step(&self, f: &[f64]) -> Vec<f64> {
        let nf = self.op.total_values(f);
        let mut out = self.s_dt.apply(f);
        match self.scheme {
            Scheme::MildEuler => self.s_dt.accumulate(&nf, self.dt, &mut out),
            Scheme::MildMidpoint => {
                let mut pred = out.clone();
                self.s_dt.accumulate(&nf, self.dt, &mut pred);
                let np = self.op.total_values(&pred);
                self.s_dt.accumulate(&nf, 0.5 * self.dt, &mut out);
                out.iter_mut().zip(&np).for_each(|(o, c)| *o += 0.5 * self.dt * c);
            }
            Scheme::EtdEuler => self.duhamel(&nf, &mut out, false),
            Scheme::EtdRk2 => {
                self.duhamel(&nf, &mut out, false);
                let na = self.op.total_values(&out);
                let diff: Vec<f64> = na.iter().zip(&nf).map(|(a, b)| a - b).collect();
                self.duhamel(&diff, &mut out, true);
            }
        }
        out
    }
}

/// One mild step of length `dt` from `f`.
pub fn step_mild(f: &GridFunction, kernel: &KernelSpec, dt: f64, scheme: Scheme) -> Result<GridFunction> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let op = Arc::new(CoagOperator::new(kernel, f.grid()));
    let st = Stepper::new(op, dt, scheme);
    Ok(GridFunction::from_vec(f.grid().clone(), st.step(f.values())))
}

/// Settings of a trajectory run.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub record_stride: usize,
    pub tracked_norms: Vec<NormKind>,
    pub reference: Option<GridFunction>,
    /// Norm used for the distance to `reference`.
    pub distance_norm: NormKind,
    /// Round `dt` to a multiple of the log spacing so `S_dt` is an index shift.
    pub exact_shift: bool,
    /// Keep a copy of the state at every recorded time.
    pub keep_snapshots: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::EtdRk2,
            record_stride: 1,
            tracked_norms: vec![NormKind::L1k { k: 2.0 }],
            reference: None,
            distance_norm: NormKind::L1k { k: 3.0 },
            exact_shift: true,
            keep_snapshots: false,
        }
    }
}

impl EvolutionConfig {
    /// Step length actually used on `grid`.
    pub fn effective_dt(&self, grid: &Grid) -> f64 {
        if self.exact_shift && grid.kind() == GridKind::LogUniform {
            let h = grid.coord_step();
            (self.dt / h).round().max(1.0) * h
        } else {
            self.dt
        }
    }
}

/// Quantities recorded at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    /// Values of `tracked_norms`, in order.
    pub norms: Vec<f64>,
    pub dist_ref: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub norm_kinds: Vec<NormKind>,
    pub snapshots: Vec<(f64, GridFunction)>,
    pub final_state: GridFunction,
    pub dt: f64,
    /// `max_t |m1(t) - m1(0)| / m1(0)`.
    pub m1_drift: f64,
    /// Supremum over recorded times of each tracked norm.
    pub sup_norms: Vec<f64>,
    /// `min_t min_x f / max_x f`; negative values are interpolation undershoots.
    pub min_ratio: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_ref.unwrap_or(f64::NAN)).collect()
    }

    /// Writes `t,m0,m1,<norm columns>,dist_ref`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let labels: Vec<String> = self.norm_kinds.iter().map(|k| k.label()).collect();
        let mut header = vec!["t".to_string(), "m0".into(), "m1".into()];
        header.extend(labels);
        header.push("dist_ref".into());
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![fmt17(r.t), fmt17(r.m0), fmt17(r.m1)];
            row.extend(r.norms.iter().map(|&v| fmt17(v)));
            row.push(r.dist_ref.map(fmt17).unwrap_or_default());
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn record(grid: &Grid, f: &[f64], t: f64, cfg: &EvolutionConfig) -> Record {
    let m0 = grid::moment_values(grid, f, 0.0);
    let m1 = grid::moment_values(grid, f, 1.0);
    let norms = cfg.tracked_norms.iter().map(|&k| norm_values(grid, f, k)).collect();
    let dist_ref = cfg.reference.as_ref().map(|r| {
        let d: Vec<f64> = f.iter().zip(r.values()).map(|(a, b)| a - b).collect();
        norm_values(grid, &d, cfg.distance_norm)
    });
    Record { t, m0, m1, norms, dist_ref }
}

/// Evolves `f0` under `kernel` and records the configured metrics.
///
/// Steps have the effective length of [`EvolutionConfig::effective_dt`]; a
/// final shorter step (with an interpolated dilation) lands exactly on
/// `t_final`.
pub fn evolve(f0: &GridFunction, kernel: &KernelSpec, cfg: &EvolutionConfig) -> Result<Trajectory> {
    let op = Arc::new(CoagOperator::new(kernel, f0.grid()));
    evolve_with(f0, op, cfg)
}

/// [`evolve`] with a prebuilt operator.
pub fn evolve_with(f0: &GridFunction, op: Arc<CoagOperator>, cfg: &EvolutionConfig) -> Result<Trajectory> {
    if !(cfg.dt > 0.0) || !(cfg.t_final > 0.0) || cfg.dt > cfg.t_final {
        return Err(Error::Config(format!(
            "need 0 < dt <= t_final, got dt={}, t_final={}",
            cfg.dt, cfg.t_final
        )));
    }
    if cfg.record_stride == 0 {
        return Err(Error::Config("record_stride must be >= 1".into()));
    }
    for k in &cfg.tracked_norms {
        k.validate()?;
    }
    cfg.distance_norm.validate()?;
    if let Some(r) = &cfg.reference {
        grid::check_same(f0, r)?;
    }
    let grid = f0.grid().clone();
    if f0.values().iter().any(|&v| v < 0.0) {
        log::warn!("initial datum has negative entries");
    }
    let dt = cfg.effective_dt(&grid);
    if (dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        log::info!("dt {} rounded to {} for exact dilation shifts", cfg.dt, dt);
    }
    let full_steps = ((cfg.t_final / dt) * (1.0 + 1e-12)).floor() as usize;
    let remainder = cfg.t_final - full_steps as f64 * dt;
    let stepper = Stepper::new(op.clone(), dt, cfg.scheme);
    let last = (remainder > 1e-9 * dt).then(|| Stepper::new(op, remainder, cfg.scheme));

    let mut f = f0.values().to_vec();
    let mut records = vec![record(&grid, &f, 0.0, cfg)];
    let mut snapshots = Vec::new();
    if cfg.keep_snapshots {
        snapshots.push((0.0, f0.clone()));
    }
    let mut min_ratio = min_ratio_of(&f);
    let total_steps = full_steps + usize::from(last.is_some());
    for n in 1..=total_steps {
        let (st, t) = if n <= full_steps {
            (&stepper, n as f64 * dt)
        } else {
            (last.as_ref().expect("partial step exists"), cfg.t_final)
        };
        f = st.step(&f);
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t, detail: format!("non-finite value at node {i}") });
        }
        min_ratio = min_ratio.min(min_ratio_of(&f));
        if n % cfg.record_stride == 0 || n == total_steps {
            records.push(record(&grid, &f, t, cfg));
            if cfg.keep_snapshots {
                snapshots.push((t, GridFunction::from_vec(grid.clone(), f.clone())));
            }
        }
    }
    let m1_0 = records[0].m1;
    let m1_drift = records.iter().map(|r| (r.m1 - m1_0).abs()).fold(0.0, f64::max) / m1_0.abs().max(f64::MIN_POSITIVE);
    let sup_norms = (0..cfg.tracked_norms.len())
        .map(|k| records.iter().map(|r| r.norms[k]).fold(0.0, f64::max))
        .collect();
    Ok(Trajectory {
        records,
        norm_kinds: cfg.tracked_norms.clone(),
        snapshots,
        final_state: GridFunction::from_vec(grid, f),
        dt,
        m1_drift,
        sup_norms,
        min_ratio,
    })
}

fn min_ratio_of(f: &[f64]) -> f64 {
    let max = f.iter().fold(0.0f64, |m, &v| m.max(v));
    let min = f.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

/// Zeroth moment predicted for the constant kernel, `e^t / (1/m0 + e^t - 1)`.
pub fn m0_logistic(t: f64, m0_init: f64) -> f64 {
    let e = t.exp();
    e / (1.0 / m0_init + e - 1.0)
}

/// A density in physical variables at physical time `tau`.
///
/// `phi` lives on the original grid dilated by `1 + tau`, so the change of
/// variables needs no interpolation.
#[derive(Debug, Clone)]
pub struct PhysicalState {
    pub tau: f64,
    pub phi: GridFunction,
}

fn dilated_grid(grid: &Grid, a: f64) -> Result<Arc<Grid>> {
    make_grid(grid.kind(), grid.xmin() * a, grid.xmax() * a, grid.len())
}

/// `tau = e^t - 1`, `phi(tau, xi) = (1 + tau)^{-2} f(t, xi / (1 + tau))`.
pub fn to_physical(f: &GridFunction, t: f64) -> Result<PhysicalState> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("self-similar time must be >= 0, got {t}")));
    }
    let a = t.exp();
    let grid = dilated_grid(f.grid(), a)?;
    let phi = GridFunction::from_vec(grid, f.values().iter().map(|v| v / (a * a)).collect());
    Ok(PhysicalState { tau: a - 1.0, phi })
}

/// Inverse of [`to_physical`]: `t = ln(1 + tau)`, `f(x) = (1+tau)^2 phi((1+tau) x)`.
pub fn from_physical(state: &PhysicalState) -> Result<(f64, GridFunction)> {
    if !(state.tau >= 0.0) {
        return Err(Error::Domain(format!("physical time must be >= 0, got {}", state.tau)));
    }
    let a = 1.0 + state.tau;
    let grid = dilated_grid(state.phi.grid(), 1.0 / a)?;
    let f = GridFunction::from_vec(grid, state.phi.values().iter().map(|v| v * a * a).collect());
    Ok((a.ln(), f))
}

/// `(1 + tau)^2 phi(tau, (1 + tau) x)` sampled on `grid` by interpolation.
pub fn rescaled_physical(state: &PhysicalState, grid: &Arc<Grid>) -> GridFunction {
    let a = 1.0 + state.tau;
    GridFunction::from_fn(grid, |x| a * a * grid::interp(&state.phi, a * x))
}

/// Physical density with negative interpolation undershoots clipped to zero.
pub fn clipped_physical(state: &PhysicalState) -> GridFunction {
    state.phi.map(|_, v| v.max(0.0))
}
