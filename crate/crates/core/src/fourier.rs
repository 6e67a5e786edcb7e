//! Lower bounds on `1 - |phi(xi)|` for the Fourier transform of a
//! nonnegative density, and the `L^2` growth envelope of the coagulation
//! dynamics.
//!
//! Densities live on uniform samples of an interval of the real line
//! (densities on the half-line are extended by zero) and are integrated with
//! the composite Simpson rule.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{self, GridFunction};
use crate::norms::{norm_values, NormKind};

/// A density sampled at `n` (odd) equispaced points of `[a, b]`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDensity {
    a: f64,
    b: f64,
    values: Vec<f64>,
}

/// Default number of samples of [`LineDensity::from_fn`] callers.
pub const DEFAULT_SAMPLES: usize = 20_001;

impl LineDensity {
    /// Samples `f` on `[a, b]`; `n` is rounded up to an odd count >= 3.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("need a finite interval a < b, got [{a}, {b}]")));
        }
        let n = (n.max(3)) | 1;
        let h = (b - a) / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|i| f(a + i as f64 * h)).collect();
        Self::new(a, b, values)
    }

    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 || values.len().is_multiple_of(2) {
            return Err(Error::Config(format!("Simpson samples must be odd and >= 3, got {}", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("density samples must be finite and nonnegative".into()));
        }
        Ok(Self { a, b, values })
    }

    /// Resamples a grid function on `[0, xmax]` by linear interpolation.
    pub fn from_grid_function(f: &GridFunction, n: usize) -> Result<Self> {
        let x0 = f.grid().xmin();
        let v0 = f.values()[0];
        Self::from_fn(0.0, f.grid().xmax(), n, |x| {
            if x <= x0 {
                v0.max(0.0)
            } else {
                grid::interp(f, x).max(0.0)
            }
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn step(&self) -> f64 {
        (self.b - self.a) / (self.values.len() - 1) as f64
    }

    fn abscissa(&self, i: usize) -> f64 {
        self.a + i as f64 * self.step()
    }

    /// Composite Simpson rule of `g(x) f(x)`.
    fn integrate_with(&self, g: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len();
        let s: f64 = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * g(self.abscissa(i)) * self.values[i]
            })
            .sum();
        s * self.step() / 3.0
    }

    /// `M = int f`.
    pub fn mass(&self) -> f64 {
        self.integrate_with(|_| 1.0)
    }

    /// `int |x| f`.
    pub fn abs_moment(&self) -> f64 {
        self.integrate_with(f64::abs)
    }

    /// `||f||_{L^2}`.
    pub fn l2_norm(&self) -> f64 {
        let sq = Self { a: self.a, b: self.b, values: self.values.iter().map(|v| v * v).collect() };
        sq.mass().sqrt()
    }

    /// `int f(x) sin(x) dx`.
    pub fn sine_integral(&self) -> f64 {
        self.integrate_with(f64::sin)
    }
}

/// `|int f(x) e^{-i xi x} dx|`.
pub fn fourier_modulus(f: &LineDensity, xi: f64) -> f64 {
    let re = f.integrate_with(|x| (xi * x).cos());
    let im = f.integrate_with(|x| (xi * x).sin());
    re.hypot(im)
}

/// `M^4 / (128 pi n^2 ||f||^4)` with `n = 1 + R / (2 pi)`, the sine bound for
/// densities supported in `[-R, R]`.
pub fn alpha_local(f: &LineDensity, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("R must be positive, got {r}")));
    }
    Ok(alpha_local_from(f.mass(), f.l2_norm(), r))
}

/// [`alpha_local`] from its scalar inputs.
pub fn alpha_local_from(mass: f64, l2: f64, r: f64) -> f64 {
    let n = 1.0 + r / (2.0 * PI);
    mass.powi(4) / (128.0 * PI * n * n * l2.powi(4))
}

/// `eps^2 / pi`, a lower bound of `1 - sup_{0 < x < pi/2 - eps} sin x`.
pub fn delta_lower(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < PI / 2.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, pi/2), got {epsilon}")));
    }
    Ok(epsilon * epsilon / PI)
}

/// `M^6 / (2^17 R^2 ||f||^4)` with `R = max{M, 2 int |x| f}`.
pub fn alpha_global(f: &LineDensity) -> f64 {
    alpha_global_from(f.mass(), f.abs_moment(), f.l2_norm())
}

/// [`alpha_global`] from its scalar inputs.
pub fn alpha_global_from(mass: f64, abs_moment: f64, l2: f64) -> f64 {
    let r = mass.max(2.0 * abs_moment);
    mass.powi(6) / (2f64.powi(17) * r * r * l2.powi(4))
}

/// `xi^2 M^6 / (2^16 R^2 ||f||^4)` with `R = 2 |xi| int |x| f + 2 pi M`.
pub fn alpha_fourier(mass: f64, abs_moment: f64, l2: f64, xi: f64) -> (f64, f64) {
    let r = 2.0 * xi.abs() * abs_moment + 2.0 * PI * mass;
    (xi * xi * mass.powi(6) / (2f64.powi(16) * r * r * l2.powi(4)), r)
}

/// One frequency of a [`FourierBoundReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierRow {
    pub xi: f64,
    pub measured: f64,
    pub r: f64,
    pub alpha: f64,
    /// `(1 - alpha) M`.
    pub bound: f64,
    /// `bound - measured`.
    pub margin: f64,
}

impl FourierRow {
    /// The bound holds up to quadrature rounding.
    pub fn holds(&self) -> bool {
        self.margin >= -1e-12 * self.bound.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBoundReport {
    pub mass: f64,
    pub abs_moment: f64,
    pub l2norm: f64,
    pub rows: Vec<FourierRow>,
}

impl FourierBoundReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(FourierRow::holds)
    }

    /// Rows where the measured modulus exceeds the bound.
    pub fn violations(&self) -> Vec<FourierRow> {
        self.rows.iter().copied().filter(|r| !r.holds()).collect()
    }

    /// Writes `xi,measured,R,alpha,bound,margin`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "xi,measured,R,alpha,bound,margin")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.xi, r.measured, r.r, r.alpha, r.bound, r.margin
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Measured `|phi(xi)|` against `(1 - alpha(xi)) M` at every `xi`.
pub fn fourier_bound_verify(f: &LineDensity, xi_list: &[f64]) -> FourierBoundReport {
    let mass = f.mass();
    let abs_moment = f.abs_moment();
    let l2norm = f.l2_norm();
    let rows: Vec<FourierRow> = xi_list
        .iter()
        .map(|&xi| {
            let measured = fourier_modulus(f, xi);
            let (alpha, r) = alpha_fourier(mass, abs_moment, l2norm, xi);
            let bound = (1.0 - alpha) * mass;
            FourierRow { xi, measured, r, alpha, bound, margin: bound - measured }
        })
        .collect();
    for v in rows.iter().filter(|r| !r.holds()) {
        log::warn!("Fourier bound violated at xi={}: {} > {}", v.xi, v.measured, v.bound);
    }
    FourierBoundReport { mass, abs_moment, l2norm, rows }
}

/// `||f0||^2_{L^2} e^{(3 + 2 C1) t}` with `C1 = max{1, int f0}`.
pub fn l2_growth_envelope(f0: &GridFunction, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let l2 = norm_values(f0.grid(), f0.values(), NormKind::L2Exp { mu: 0.0 });
    let c1 = grid::moment(f0, 0.0).max(1.0);
    Ok(l2 * l2 * ((3.0 + 2.0 * c1) * t).exp())
}

/// Named densities of the verification corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusDensity {
    /// Uniform on `[0, 1]`.
    Uniform,
    /// `e^{-x}`.
    Exponential,
    /// `4 x e^{-2x}`.
    GammaTwo,
    /// `sqrt(2/pi) e^{-x^2/2}` on `[0, 4]`, renormalised to unit mass.
    TruncatedHalfGaussian,
}

impl CorpusDensity {
    pub const ALL: [CorpusDensity; 4] =
        [CorpusDensity::Uniform, CorpusDensity::Exponential, CorpusDensity::GammaTwo, CorpusDensity::TruncatedHalfGaussian];

    pub fn name(&self) -> &'static str {
        match self {
            CorpusDensity::Uniform => "uniform",
            CorpusDensity::Exponential => "exponential",
            CorpusDensity::GammaTwo => "gamma2",
            CorpusDensity::TruncatedHalfGaussian => "half_gaussian",
        }
    }

    pub fn sample(&self, n: usize) -> Result<LineDensity> {
        match self {
            CorpusDensity::Uniform => LineDensity::from_fn(0.0, 1.0, n, |_| 1.0),
            CorpusDensity::Exponential => LineDensity::from_fn(0.0, 60.0, n, |x| (-x).exp()),
            CorpusDensity::GammaTwo => LineDensity::from_fn(0.0, 40.0, n, |x| 4.0 * x * (-2.0 * x).exp()),
            CorpusDensity::TruncatedHalfGaussian => {
                let raw = LineDensity::from_fn(0.0, 4.0, n, |x| (-0.5 * x * x).exp())?;
                let m = raw.mass();
                LineDensity::new(0.0, 4.0, raw.values.iter().map(|v| v / m).collect())
            }
        }
    }
}
