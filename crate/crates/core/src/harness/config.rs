//! Structured experiment configuration read from TOML.
//!
//! A file has the sections `[kernel]`, `[grid]`, `[evolution]`, `[norms]` and
//! `[experiment]`. `[grid]` is mandatory; the other sections fall back to
//! their defaults field by field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EvolutionConfig, Scheme};
use crate::grid::{make_grid, Grid, GridKind};
use crate::kernels::{KernelSpec, PerturbationFamily, Psi, SampledCurve};
use crate::norms::NormKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Zero,
    One,
    RatioSym,
    MinOverMax,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub family: FamilyName,
    pub epsilon: f64,
    /// Exponent of the ratio-symmetric family.
    pub alpha: f64,
    /// `two_over_s`, or `table:<path>` with `s,psi` samples, for the
    /// ratio-symmetric family.
    pub psi: String,
    /// `ratio,w` samples for the tabulated family.
    pub table_path: Option<PathBuf>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: FamilyName::RatioSym,
            epsilon: 0.1,
            alpha: 1.0,
            psi: "two_over_s".into(),
            table_path: None,
        }
    }
}

impl KernelSection {
    pub fn family(&self) -> Result<PerturbationFamily> {
        Ok(match self.family {
            FamilyName::Zero => PerturbationFamily::Zero,
            FamilyName::One => PerturbationFamily::One,
            FamilyName::MinOverMax => PerturbationFamily::MinOverMax,
            FamilyName::RatioSym => {
                if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                    return Err(Error::Config(format!("kernel.alpha must be positive, got {}", self.alpha)));
                }
                let psi = match self.psi.strip_prefix("table:") {
                    Some(p) => Psi::Table(Arc::new(SampledCurve::from_csv(Path::new(p))?)),
                    None if self.psi == "two_over_s" => Psi::TwoOverS,
                    None => return Err(Error::Config(format!("unknown kernel.psi `{}`", self.psi))),
                };
                PerturbationFamily::RatioSym { alpha: self.alpha, psi }
            }
            FamilyName::Tabulated => {
                let path = self
                    .table_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("kernel.table_path is required for the tabulated family".into()))?;
                PerturbationFamily::tabulated_from_csv(path)?
            }
        })
    }

    pub fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.epsilon, self.family()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub kind: GridKind,
    pub xmin: f64,
    pub xmax: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { kind: GridKind::LogUniform, xmin: 1e-4, xmax: 60.0, n: 512 }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<Arc<Grid>> {
        make_grid(self.kind, self.xmin, self.xmax, self.n)
    }

    /// The same grid with `n` nodes.
    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

/// Initial data of a trajectory run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    /// `4 x e^{-2x}`.
    GammaTwo,
    /// `e^{-x}`.
    Exponential,
    /// `4 e^{-2x}`: unit first moment with zeroth moment 2.
    DoubleExponential,
}

impl InitialData {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialData::GammaTwo => 4.0 * x * (-2.0 * x).exp(),
            InitialData::Exponential => (-x).exp(),
            InitialData::DoubleExponential => 4.0 * (-2.0 * x).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub record_stride: usize,
    pub exact_shift: bool,
    pub initial: InitialData,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        Self {
            dt: d.dt,
            t_final: 12.0,
            scheme: d.scheme,
            record_stride: 1,
            exact_shift: d.exact_shift,
            initial: InitialData::GammaTwo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsSection {
    /// Weight exponents of the recorded `L1_k` norms.
    pub k: Vec<f64>,
    /// Exponential weight of the `L^2` and `H^{-1}` norms.
    pub mu: f64,
    /// Weight exponent of the `L1_k` distance to the profile.
    pub distance_k: f64,
    pub l1k: bool,
    pub l2exp: bool,
    pub hm1exp: bool,
    pub wm1inf: bool,
}

impl Default for NormsSection {
    fn default() -> Self {
        Self { k: vec![2.0], mu: 0.5, distance_k: 3.0, l1k: true, l2exp: false, hm1exp: false, wm1inf: false }
    }
}

impl NormsSection {
    /// The norms recorded along a trajectory, in a fixed order.
    pub fn tracked(&self) -> Vec<NormKind> {
        let mut out = Vec::new();
        if self.l1k {
            out.extend(self.k.iter().map(|&k| NormKind::L1k { k }));
        }
        if self.l2exp {
            out.push(NormKind::L2Exp { mu: self.mu });
        }
        if self.hm1exp {
            out.push(NormKind::Hm1Exp { mu: self.mu });
        }
        if self.wm1inf {
            out.push(NormKind::Wm1Inf);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub preset: Option<String>,
    /// Perturbation strengths for the `profile` subcommand.
    pub epsilons: Vec<f64>,
    /// Overrides every preset's decay-fit window.
    pub fit_window: Option<(f64, f64)>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Random seeds per gap estimate.
    pub trials: usize,
    pub plots: bool,
    /// Overrides of check thresholds, keyed `preset.check` (`.lo` / `.hi` for ranges).
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            preset: None,
            epsilons: vec![0.05, 0.1, 0.2],
            fit_window: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            trials: 10,
            plots: true,
            thresholds: BTreeMap::new(),
        }
    }
}

/// All sections of a configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExperimentConfig {
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub evolution: EvolutionSection,
    pub norms: NormsSection,
    pub experiment: ExperimentSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: Option<KernelSection>,
    grid: Option<GridSection>,
    evolution: Option<EvolutionSection>,
    norms: Option<NormsSection>,
    experiment: Option<ExperimentSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let grid = raw.grid.ok_or_else(|| Error::Config("missing [grid] section".into()))?;
        let cfg = Self {
            kernel: raw.kernel.unwrap_or_default(),
            grid,
            evolution: raw.evolution.unwrap_or_default(),
            norms: raw.norms.unwrap_or_default(),
            experiment: raw.experiment.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section against the rules of the module it configures.
    pub fn validate(&self) -> Result<()> {
        self.kernel.spec()?;
        self.grid.build()?;
        let e = &self.evolution;
        if !(e.dt > 0.0 && e.dt.is_finite()) {
            return Err(Error::Config(format!("evolution.dt must be positive, got {}", e.dt)));
        }
        if !(e.t_final > 0.0 && e.t_final.is_finite()) {
            return Err(Error::Config(format!("evolution.t_final must be positive, got {}", e.t_final)));
        }
        if e.record_stride == 0 {
            return Err(Error::Config("evolution.record_stride must be >= 1".into()));
        }
        NormKind::L1k { k: self.norms.distance_k }.validate()?;
        NormKind::Hm1Exp { mu: self.norms.mu }.validate()?;
        for n in self.norms.tracked() {
            n.validate()?;
        }
        let x = &self.experiment;
        if let Some((lo, hi)) = x.fit_window {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::Config(format!("experiment.fit_window must satisfy 0 <= lo < hi, got ({lo}, {hi})")));
            }
        }
        if x.trials < 5 {
            return Err(Error::Config(format!("experiment.trials must be >= 5, got {}", x.trials)));
        }
        if let Some(e) = x.epsilons.iter().find(|e| !(**e >= 0.0 && **e <= 1.0)) {
            return Err(Error::Config(format!("experiment.epsilons must lie in [0, 1], got {e}")));
        }
        if let Some((k, v)) = x.thresholds.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("threshold `{k}` is not finite: {v}")));
        }
        Ok(())
    }

    /// The evolution settings with the configured norms.
    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.evolution.dt,
            t_final: self.evolution.t_final,
            scheme: self.evolution.scheme,
            record_stride: self.evolution.record_stride,
            tracked_norms: self.norms.tracked(),
            reference: None,
            distance_norm: NormKind::L1k { k: self.norms.distance_k },
            exact_shift: self.evolution.exact_shift,
            keep_snapshots: false,
        }
    }

    pub fn threshold(&self, key: &str, default: f64) -> f64 {
        self.experiment.thresholds.get(key).copied().unwrap_or(default)
    }
}
