//! Coagulation kernels `K = 2 + eps * W` with a bounded, symmetric
//! perturbation `W` that is homogeneous of degree zero.
//!
//! Homogeneity zero means `W` only depends on the ratio `x / y`, so every
//! family here is evaluated through the log-ratio `ln x - ln y`.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar map on `[2, inf)` used by [`PerturbationFamily::RatioSym`].
#[derive(Debug, Clone, PartialEq)]
pub enum Psi {
    /// `psi(s) = 2 / s`; with `alpha = 1` this gives `W = 2xy / (x^2 + y^2)`.
    TwoOverS,
    /// Piecewise-linear samples `(s, psi)`, clamped outside the sampled range.
    Table(Arc<SampledCurve>),
}

impl Psi {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Psi::TwoOverS => 2.0 / s,
            Psi::Table(curve) => curve.eval(s),
        }
    }
}

/// Monotone abscissae with values, linearly interpolated and clamped at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    abscissae: Vec<f64>,
    values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(abscissae: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if abscissae.len() != values.len() || abscissae.len() < 2 {
            return Err(Error::Config(
                "sampled curve needs at least two (abscissa, value) pairs".into(),
            ));
        }
        if abscissae.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sampled curve abscissae must increase".into()));
        }
        if abscissae.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Config("sampled curve contains non-finite entries".into()));
        }
        Ok(Self { abscissae, values })
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let a = &self.abscissae;
        let n = a.len();
        if t <= a[0] {
            return self.values[0];
        }
        if t >= a[n - 1] {
            return self.values[n - 1];
        }
        let j = a.partition_point(|&v| v <= t) - 1;
        let s = (t - a[j]) / (a[j + 1] - a[j]);
        self.values[j] * (1.0 - s) + self.values[j + 1] * s
    }

    /// Reads a two-column CSV (`abscissa,value`), skipping a non-numeric header line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Config(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    lineno + 1
                )));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    xs.push(a);
                    ys.push(b);
                }
                _ if xs.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "{}:{}: unparsable row",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(xs, ys)
    }
}

/// The perturbation `W` in `K = 2 + eps * W`.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationFamily {
    Zero,
    One,
    /// `W(x, y) = psi((x/y)^alpha + (y/x)^alpha)`.
    RatioSym { alpha: f64, psi: Psi },
    /// `W(x, y) = min(x, y) / max(x, y)`.
    MinOverMax,
    /// `W` sampled as a function of `ln(x / y)`.
    Tabulated(Arc<SampledCurve>),
}

impl PerturbationFamily {
    /// The default smooth family, `W = 2xy / (x^2 + y^2)`.
    pub fn ratio_sym_default() -> Self {
        PerturbationFamily::RatioSym { alpha: 1.0, psi: Psi::TwoOverS }
    }

    /// Builds a tabulated family from samples of `W` at ratios `x / y`.
    pub fn tabulated(ratios: &[f64], values: &[f64]) -> Result<Self> {
        if ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("tabulated ratios must be positive".into()));
        }
        let logs = ratios.iter().map(|r| r.ln()).collect();
        Ok(PerturbationFamily::Tabulated(Arc::new(SampledCurve::new(
            logs,
            values.to_vec(),
        )?)))
    }

    /// Loads a tabulated family from a `ratio,w` CSV file.
    pub fn tabulated_from_csv(path: &Path) -> Result<Self> {
        let curve = SampledCurve::from_csv(path)?;
        Self::tabulated(curve.abscissae(), curve.values())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PerturbationFamily::Zero => "zero",
            PerturbationFamily::One => "one",
            PerturbationFamily::RatioSym { .. } => "ratio_sym",
            PerturbationFamily::MinOverMax => "min_over_max",
            PerturbationFamily::Tabulated(_) => "tabulated",
        }
    }

    /// Evaluates `W` as a function of `t = ln x - ln y`.
    pub fn eval_log_ratio(&self, t: f64) -> f64 {
        match self {
            PerturbationFamily::Zero => 0.0,
            PerturbationFamily::One => 1.0,
            PerturbationFamily::RatioSym { alpha, psi } => psi.eval(2.0 * (alpha * t).cosh()),
            PerturbationFamily::MinOverMax => (-t.abs()).exp(),
            PerturbationFamily::Tabulated(curve) => curve.eval(t),
        }
    }

    /// For families with a kink on the diagonal, the smooth extensions of the
    /// branches `y <= x` and `y >= x`, evaluated at `(x, y)`.
    pub fn diagonal_branches(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match self {
            PerturbationFamily::MinOverMax => Some((y / x, x / y)),
            _ => None,
        }
    }

    /// `W(x, y)` without argument checks; callers guarantee positive sizes.
    #[inline]
    pub fn w(&self, x: f64, y: f64) -> f64 {
        match self {
            PerturbationFamily::Zero => 0.0,
            PerturbationFamily::One => 1.0,
            PerturbationFamily::MinOverMax => {
                if x <= y {
                    x / y
                } else {
                    y / x
                }
            }
            _ => self.eval_log_ratio(x.ln() - y.ln()),
        }
    }
}

fn check_sizes(x: f64, y: f64) -> Result<()> {
    if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel sizes must be positive and finite, got ({x}, {y})")))
    }
}

/// `W(x, y)` with domain checks.
pub fn eval_w(family: &PerturbationFamily, x: f64, y: f64) -> Result<f64> {
    check_sizes(x, y)?;
    Ok(family.w(x, y))
}

/// A kernel `K = 2 + eps * W`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    epsilon: f64,
    family: PerturbationFamily,
}

impl KernelSpec {
    pub fn new(epsilon: f64, family: PerturbationFamily) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(Self { epsilon, family })
    }

    /// The constant kernel `K = 2`.
    pub fn constant() -> Self {
        Self { epsilon: 0.0, family: PerturbationFamily::Zero }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn family(&self) -> &PerturbationFamily {
        &self.family
    }

    /// Same family with a different perturbation strength.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.family.clone())
    }

    /// Branch values of `K` across the diagonal kink; see
    /// [`PerturbationFamily::diagonal_branches`].
    pub fn diagonal_branches(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if self.epsilon == 0.0 {
            return None;
        }
        self.family.diagonal_branches(x, y).map(|(lo, hi)| (2.0 + self.epsilon * lo, 2.0 + self.epsilon * hi))
    }

    /// True when `K` does not depend on the sizes.
    pub fn is_constant(&self) -> bool {
        self.epsilon == 0.0
            || matches!(self.family, PerturbationFamily::Zero | PerturbationFamily::One)
    }

    #[inline]
    pub fn k(&self, x: f64, y: f64) -> f64 {
        if self.epsilon == 0.0 {
            2.0
        } else {
            2.0 + self.epsilon * self.family.w(x, y)
        }
    }
}

/// `K(x, y)` with domain checks.
pub fn eval_k(spec: &KernelSpec, x: f64, y: f64) -> Result<f64> {
    check_sizes(x, y)?;
    Ok(spec.k(x, y))
}

/// Acceptance thresholds for [`validate_kernel_with`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationThresholds {
    pub symmetry: f64,
    pub bound: f64,
    pub homogeneity: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        Self { symmetry: 1e-12, bound: 1e-12, homogeneity: 1e-12 }
    }
}

/// Largest defects found while sampling a perturbation family.
#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub max_symmetry_defect: f64,
    /// Largest distance of a sampled `W` value outside `[0, 1]`.
    pub max_bound_violation: f64,
    pub max_homogeneity_defect: f64,
    pub thresholds: ValidationThresholds,
    pub pairs_checked: usize,
}

impl ViolationReport {
    /// Human-readable list of the defects that exceed their thresholds.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_symmetry_defect > self.thresholds.symmetry {
            out.push(format!("symmetry defect {:.3e}", self.max_symmetry_defect));
        }
        if self.max_bound_violation > self.thresholds.bound {
            out.push(format!("range [0,1] violated by {:.3e}", self.max_bound_violation));
        }
        if self.max_homogeneity_defect > self.thresholds.homogeneity {
            out.push(format!("homogeneity defect {:.3e}", self.max_homogeneity_defect));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.findings().is_empty()
    }
}

/// Samples `W` over log-spaced size pairs in `[1e-3, 1e3]` and scaling factors
/// `{0.1, 1, 7.3}`.
pub fn validate_kernel(spec: &KernelSpec, sample_count: usize) -> ViolationReport {
    validate_kernel_with(spec, sample_count, ValidationThresholds::default())
}

pub fn validate_kernel_with(
    spec: &KernelSpec,
    sample_count: usize,
    thresholds: ValidationThresholds,
) -> ViolationReport {
    let n = sample_count.max(1);
    let sizes: Vec<f64> = (0..n)
        .map(|i| {
            let s = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            10f64.powf(-3.0 + 6.0 * s)
        })
        .collect();
    let family = spec.family();
    let mut report = ViolationReport {
        max_symmetry_defect: 0.0,
        max_bound_violation: 0.0,
        max_homogeneity_defect: 0.0,
        thresholds,
        pairs_checked: 0,
    };
    for &x in &sizes {
        for &y in &sizes {
            let w = family.w(x, y);
            report.max_symmetry_defect = report.max_symmetry_defect.max((w - family.w(y, x)).abs());
            let outside = (-w).max(w - 1.0).max(0.0);
            report.max_bound_violation = report.max_bound_violation.max(outside);
            for lambda in [0.1, 1.0, 7.3] {
                let d = (family.w(lambda * x, lambda * y) - w).abs();
                report.max_homogeneity_defect = report.max_homogeneity_defect.max(d);
            }
            report.pairs_checked += 1;
        }
    }
    report
}

/// A kernel rewritten with a nonnegative perturbation:
/// `K = constant + eps * scale * family` with `family` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recentered {
    pub constant: f64,
    pub scale: f64,
    pub family: PerturbationFamily,
}

/// Rewrites `2 + eps * W` with a signed `|W| <= wbound` as
/// `(2 - wbound) + eps * (W + wbound)`, normalising `W + wbound` into `[0, 1]`
/// by the factor `1 / (2 wbound)`.
///
/// Analytic families are resampled onto a log-ratio table before shifting.
pub fn recenter_signed(wbound: f64, family: &PerturbationFamily) -> Result<Recentered> {
    if !(wbound >= 0.0) || !wbound.is_finite() {
        return Err(Error::Domain(format!("bound must be finite and nonnegative, got {wbound}")));
    }
    if wbound > 2.0 {
        return Err(Error::Unsupported(format!(
            "bound {wbound} > 2 leaves a nonpositive constant part"
        )));
    }
    let (grid, values): (Vec<f64>, Vec<f64>) = match family {
        PerturbationFamily::Tabulated(curve) => {
            (curve.abscissae().to_vec(), curve.values().to_vec())
        }
        other => {
            let grid: Vec<f64> = (0..=800).map(|i| -20.0 + 0.05 * i as f64).collect();
            let values = grid.iter().map(|&t| other.eval_log_ratio(t)).collect();
            (grid, values)
        }
    };
    let tol = 1e-12 * wbound.max(1.0);
    if let Some(v) = values.iter().find(|v| v.abs() > wbound + tol) {
        return Err(Error::Domain(format!("|W| = {} exceeds the stated bound {wbound}", v.abs())));
    }
    if wbound == 0.0 {
        return Ok(Recentered { constant: 2.0, scale: 1.0, family: family.clone() });
    }
    let shifted: Vec<f64> =
        values.iter().map(|v| ((v + wbound) / (2.0 * wbound)).clamp(0.0, 1.0)).collect();
    let family = if shifted.iter().all(|&v| v == 0.0) {
        PerturbationFamily::Zero
    } else if shifted.iter().all(|&v| v == 1.0) {
        PerturbationFamily::One
    } else {
        PerturbationFamily::Tabulated(Arc::new(SampledCurve::new(grid, shifted)?))
    };
    Ok(Recentered { constant: 2.0 - wbound, scale: 2.0 * wbound, family })
}
