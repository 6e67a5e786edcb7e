//! Named experiments, one per acceptance criterion, each producing a list
//! of measured-versus-threshold checks and its CSV/SVG artifacts.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::coagulation::self_similar_residual;
use crate::error::{Error, Result};
use crate::evolution::{evolve, m0_logistic, rescaled_physical, to_physical, EvolutionConfig, Trajectory};
use crate::fourier::{fourier_bound_verify, fourier_modulus, l2_growth_envelope, CorpusDensity, DEFAULT_SAMPLES};
use crate::grid::{Grid, GridFunction};
use crate::harness::config::{ExperimentConfig, GridSection, InitialData};
use crate::harness::fit::{fit_decay, DecayFit};
use crate::harness::plot::{emit_plot, PlotOptions, Series};
use crate::kernels::{KernelSpec, PerturbationFamily};
use crate::linearized::{
    assemble_l0, assemble_leps, assemble_splitting, default_cutoff, estimate_gap, op_norm_diff_l1k, GapEstimate,
    GapOptions, OperatorForm, SplittingConfig,
};
use crate::norms::{norm, NormKind};
use crate::profiles::{
    check_profile_bounds, constant_family_profile, multistart_profiles, profile_stability_scan, solve_profile,
    ProfileOptions, ProfileResult,
};

/// The experiments run by `verify-all`, in acceptance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Stationarity,
    ConstantConvergence,
    M0Logistic,
    ProfileClosedform,
    ProfileBounds,
    StabilityScan,
    KernelDirection,
    GapHm1,
    GapL1k,
    OpnormLinear,
    BDecay,
    DynamicsCloseness,
    PerturbedRate,
    PhysicalRescale,
    FourierCorpus,
    L2Envelope,
    Multistart,
}

impl Preset {
    pub const ALL: [Preset; 17] = [
        Preset::Stationarity,
        Preset::ConstantConvergence,
        Preset::M0Logistic,
        Preset::ProfileClosedform,
        Preset::ProfileBounds,
        Preset::StabilityScan,
        Preset::KernelDirection,
        Preset::GapHm1,
        Preset::GapL1k,
        Preset::OpnormLinear,
        Preset::BDecay,
        Preset::DynamicsCloseness,
        Preset::PerturbedRate,
        Preset::PhysicalRescale,
        Preset::FourierCorpus,
        Preset::L2Envelope,
        Preset::Multistart,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Stationarity => "stationarity",
            Preset::ConstantConvergence => "constant-convergence",
            Preset::M0Logistic => "m0-logistic",
            Preset::ProfileClosedform => "profile-closedform",
            Preset::ProfileBounds => "profile-bounds",
            Preset::StabilityScan => "stability-scan",
            Preset::KernelDirection => "kernel-direction",
            Preset::GapHm1 => "gap-hm1",
            Preset::GapL1k => "gap-l1k",
            Preset::OpnormLinear => "opnorm-linear",
            Preset::BDecay => "b-decay",
            Preset::DynamicsCloseness => "dynamics-closeness",
            Preset::PerturbedRate => "perturbed-rate",
            Preset::PhysicalRescale => "physical-rescale",
            Preset::FourierCorpus => "fourier-corpus",
            Preset::L2Envelope => "l2-envelope",
            Preset::Multistart => "multistart",
        }
    }

    /// Position in the acceptance list, starting at 1.
    pub fn criterion(&self) -> usize {
        Preset::ALL.iter().position(|p| p == self).map_or(0, |i| i + 1)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Acceptance region of a measured value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtLeast(f64),
    AtMost(f64),
    /// Strictly greater than.
    Above(f64),
    Between(f64, f64),
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtLeast(t) => v >= t,
            Bound::AtMost(t) => v <= t,
            Bound::Above(t) => v > t,
            Bound::Between(lo, hi) => v >= lo && v <= hi,
        }
    }
}

/// Plain notation for moderate magnitudes, scientific otherwise.
fn compact(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Bound::AtLeast(t) => write!(f, ">={}", compact(t)),
            Bound::AtMost(t) => write!(f, "<={}", compact(t)),
            Bound::Above(t) => write!(f, ">{}", compact(t)),
            Bound::Between(lo, hi) => write!(f, "[{};{}]", compact(lo), compact(hi)),
        }
    }
}

/// One measured quantity against its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub pass: bool,
}

/// Outcome of one preset run.
#[derive(Debug, Clone)]
pub struct PresetReport {
    pub preset: Preset,
    pub checks: Vec<Check>,
    /// Artifacts written under the output directory.
    pub files: Vec<PathBuf>,
    /// Informational lines (fitted r^2, intermediate values).
    pub notes: Vec<String>,
}

impl PresetReport {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    /// One `PASS|FAIL preset/check measured=... threshold ...` line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}/{} measured={:.6e} threshold {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    self.preset,
                    c.name,
                    c.measured,
                    c.bound
                )
            })
            .collect()
    }
}

/// Private state of one preset run.
struct Run<'a> {
    preset: Preset,
    cfg: &'a ExperimentConfig,
    dir: Option<PathBuf>,
    checks: Vec<Check>,
    files: Vec<PathBuf>,
    notes: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(preset: Preset, cfg: &'a ExperimentConfig, out: Option<&Path>) -> Result<Self> {
        let dir = match out {
            Some(o) => {
                let d = o.join(preset.name());
                std::fs::create_dir_all(&d)?;
                Some(d)
            }
            None => None,
        };
        Ok(Self { preset, cfg, dir, checks: Vec::new(), files: Vec::new(), notes: Vec::new() })
    }

    /// Records a check, applying any configured threshold override.
    fn check(&mut self, name: &str, measured: f64, bound: Bound) {
        let key = format!("{}.{}", self.preset, name);
        let t = |k: &str, d: f64| self.cfg.threshold(k, d);
        let bound = match bound {
            Bound::AtLeast(d) => Bound::AtLeast(t(&key, d)),
            Bound::AtMost(d) => Bound::AtMost(t(&key, d)),
            Bound::Above(d) => Bound::Above(t(&key, d)),
            Bound::Between(lo, hi) => Bound::Between(t(&format!("{key}.lo"), lo), t(&format!("{key}.hi"), hi)),
        };
        let pass = measured.is_finite() && bound.admits(measured);
        self.checks.push(Check { name: name.to_string(), measured, bound, pass });
    }

    fn note(&mut self, s: String) {
        log::info!("{}: {s}", self.preset);
        self.notes.push(s);
    }

    fn path(&mut self, file: &str) -> Option<PathBuf> {
        let p = self.dir.as_ref()?.join(file);
        self.files.push(p.clone());
        Some(p)
    }

    /// Writes `header` and `rows` as CSV with 17 significant digits.
    fn csv(&mut self, file: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let Some(p) = self.path(file) else { return Ok(()) };
        let mut out = std::io::BufWriter::new(std::fs::File::create(p)?);
        writeln!(out, "{header}")?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    fn trajectory(&mut self, file: &str, tr: &Trajectory) -> Result<()> {
        if let Some(p) = self.path(file) {
            tr.write_csv(&p)?;
        }
        Ok(())
    }

    fn plot(&mut self, file: &str, series: &[Series], opts: PlotOptions) -> Result<()> {
        if !self.cfg.experiment.plots {
            return Ok(());
        }
        if let Some(p) = self.path(file) {
            emit_plot(series, &p, &opts)?;
        }
        Ok(())
    }

    fn finish(self) -> PresetReport {
        PresetReport { preset: self.preset, checks: self.checks, files: self.files, notes: self.notes }
    }

    fn grid(&self) -> Result<Arc<Grid>> {
        self.cfg.grid.build()
    }

    fn refined(&self) -> GridSection {
        self.cfg.grid.with_n(2 * self.cfg.grid.n)
    }

    fn window(&self, default: (f64, f64)) -> (f64, f64) {
        self.cfg.experiment.fit_window.unwrap_or(default)
    }

    fn gap_options(&self) -> GapOptions {
        GapOptions { trials: self.cfg.experiment.trials, seed: self.cfg.experiment.seed, ..GapOptions::default() }
    }
}

fn ratio_sym(eps: f64) -> Result<KernelSpec> {
    KernelSpec::new(eps, PerturbationFamily::ratio_sym_default())
}

fn constant_one(eps: f64) -> Result<KernelSpec> {
    KernelSpec::new(eps, PerturbationFamily::One)
}

fn profile(kernel: &KernelSpec, grid: &Arc<Grid>) -> Result<ProfileResult> {
    solve_profile(kernel, grid, &ProfileOptions::default())
}

fn l1k_distance(a: &GridFunction, b: &GridFunction, k: f64) -> Result<f64> {
    norm(&a.sub(b)?, NormKind::L1k { k })
}

/// Spread `max / min - 1` of positive values.
fn spread(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
    if mn > 0.0 {
        mx / mn - 1.0
    } else {
        f64::INFINITY
    }
}

/// Evolves the given initial data to `t_final` with the profile of `kernel` as reference.
fn converge_run(
    run: &Run<'_>,
    kernel: &KernelSpec,
    grid: &Arc<Grid>,
    t_final: f64,
    snapshots: bool,
) -> Result<(Trajectory, ProfileResult)> {
    let p = profile(kernel, grid)?;
    let init = run.cfg.evolution.initial;
    let f0 = GridFunction::from_fn(grid, |x| init.eval(x));
    let cfg = EvolutionConfig {
        t_final,
        reference: Some(p.g.clone()),
        keep_snapshots: snapshots,
        ..run.cfg.evolution_config()
    };
    Ok((evolve(&f0, kernel, &cfg)?, p))
}

fn decay_of(tr: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    fit_decay(&tr.times(), &tr.distances(), window)
}

fn distance_series(label: &str, tr: &Trajectory) -> Series {
    Series::new(label, tr.times(), tr.distances())
}

fn gap_series(est: &GapEstimate) -> Vec<Series> {
    est.samples
        .iter()
        .enumerate()
        .map(|(i, s)| Series::new(format!("seed {i}"), s.times.clone(), s.norms.clone()))
        .collect()
}

fn gap_rows(est: &GapEstimate) -> Vec<Vec<f64>> {
    est.rates.iter().enumerate().map(|(i, r)| vec![i as f64, *r]).collect()
}

/// Runs one preset. `out` is the root output directory; `None` skips file output.
pub fn run_preset(preset: Preset, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PresetReport> {
    cfg.validate()?;
    let mut run = Run::new(preset, cfg, out)?;
    match preset {
        Preset::Stationarity => stationarity(&mut run)?,
        Preset::ConstantConvergence => constant_convergence(&mut run)?,
        Preset::M0Logistic => m0_logistic_preset(&mut run)?,
        Preset::ProfileClosedform => profile_closedform(&mut run)?,
        Preset::ProfileBounds => profile_bounds(&mut run)?,
        Preset::StabilityScan => stability_scan(&mut run)?,
        Preset::KernelDirection => kernel_direction(&mut run)?,
        Preset::GapHm1 => gap_hm1(&mut run)?,
        Preset::GapL1k => gap_l1k(&mut run)?,
        Preset::OpnormLinear => opnorm_linear(&mut run)?,
        Preset::BDecay => b_decay(&mut run)?,
        Preset::DynamicsCloseness => dynamics_closeness(&mut run)?,
        Preset::PerturbedRate => perturbed_rate(&mut run)?,
        Preset::PhysicalRescale => physical_rescale(&mut run)?,
        Preset::FourierCorpus => fourier_corpus(&mut run)?,
        Preset::L2Envelope => l2_envelope(&mut run)?,
        Preset::Multistart => multistart(&mut run)?,
    }
    Ok(run.finish())
}

/// [`run_preset`] by name.
pub fn run_preset_named(name: &str, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PresetReport> {
    run_preset(name.parse()?, cfg, out)
}

fn stationarity(run: &mut Run<'_>) -> Result<()> {
    let mut rows = Vec::new();
    for section in [run.cfg.grid.clone(), run.refined()] {
        let grid = section.build()?;
        let g0 = GridFunction::from_fn(&grid, |x| (-x).exp());
        let r = norm(&self_similar_residual(&KernelSpec::constant(), &g0), NormKind::L1k { k: 2.0 })?;
        rows.push(vec![section.n as f64, r]);
    }
    run.csv("residual.csv", "n,residual_l1_2", &rows)?;
    let (coarse, fine) = (rows[0][1], rows[1][1]);
    run.check("residual", coarse, Bound::AtMost(5e-3));
    run.check("refinement_ratio", coarse / fine, Bound::AtLeast(1.8));
    Ok(())
}

fn constant_convergence(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let (tr, _) = converge_run(run, &KernelSpec::constant(), &grid, 12.0, false)?;
    let fit = decay_of(&tr, run.window((4.0, 10.0)))?;
    run.trajectory("trajectory.csv", &tr)?;
    run.plot(
        "distance.svg",
        &[distance_series("K = 2", &tr)],
        PlotOptions { title: "distance to the profile".into(), y_label: "L1_3".into(), ..Default::default() },
    )?;
    run.note(format!("prefactor {:.4e}", fit.prefactor));
    run.check("rate", fit.rate, Bound::AtLeast(0.45));
    run.check("r_squared", fit.r_squared, Bound::AtLeast(0.98));
    Ok(())
}

fn m0_logistic_preset(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let f0 = GridFunction::from_fn(&grid, |x| InitialData::DoubleExponential.eval(x));
    let cfg = EvolutionConfig { t_final: 5.0, ..run.cfg.evolution_config() };
    let tr = evolve(&f0, &KernelSpec::constant(), &cfg)?;
    let rows: Vec<Vec<f64>> = tr
        .records
        .iter()
        .map(|r| {
            let exact = m0_logistic(r.t, 2.0);
            vec![r.t, r.m0, exact, (r.m0 - exact).abs() / exact]
        })
        .collect();
    let worst = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    run.csv("m0.csv", "t,m0,logistic,rel_dev", &rows)?;
    run.check("max_rel_deviation", worst, Bound::AtMost(1e-3));
    Ok(())
}

const PROFILE_EPS: [f64; 3] = [0.05, 0.1, 0.2];

fn profile_closedform(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let mut rows = Vec::new();
    for eps in PROFILE_EPS {
        let p = profile(&constant_one(eps)?, &grid)?;
        let err = l1k_distance(&p.g, &constant_family_profile(&grid, eps), 2.0)?;
        rows.push(vec![eps, err, p.m0, p.iterations as f64]);
        run.check(&format!("error_eps_{eps}"), err, Bound::AtMost(1e-3));
    }
    run.csv("closedform.csv", "epsilon,error_l1_2,m0,iterations", &rows)
}

fn profile_bounds(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let mut rows = Vec::new();
    let mut text = String::new();
    for eps in PROFILE_EPS {
        let p = profile(&ratio_sym(eps)?, &grid)?;
        let rep = check_profile_bounds(&p);
        text += &rep.to_text();
        rows.push(vec![eps, p.m0, rep.m0_lower, rep.c_star, p.l2_norm]);
        run.check(&format!("m0_eps_{eps}"), p.m0, Bound::Between(rep.m0_lower - 1e-3, 1.0 + 1e-3));
        if let Some(path) = run.path(&format!("profile_eps_{eps}.csv")) {
            p.g.write_csv(&path)?;
        }
    }
    run.csv("bounds.csv", "epsilon,m0,m0_lower,c_star,l2_norm", &rows)?;
    if let Some(p) = run.path("bounds.txt") {
        std::fs::write(p, text)?;
    }
    Ok(())
}

fn stability_scan(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let eps = [0.025, 0.05, 0.1, 0.2];
    let opts = ProfileOptions::default();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (label, fam, bound) in [
        ("ratio_sym", PerturbationFamily::ratio_sym_default(), Bound::Between(0.8, 1.2)),
        ("one", PerturbationFamily::One, Bound::Between(0.95, 1.05)),
    ] {
        let scan = profile_stability_scan(&fam, &eps, 2.0, &grid, &opts)?;
        for (e, d) in scan.epsilons.iter().zip(&scan.distances) {
            rows.push(vec![if label == "one" { 1.0 } else { 0.0 }, *e, *d]);
        }
        series.push(Series::new(label, scan.epsilons.iter().map(|e| e.log10()).collect(), scan.distances.clone()));
        let (slope, r2) = scan.fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r2));
        run.note(format!("{label}: r^2 {r2:.6}"));
        run.check(&format!("slope_{label}"), slope, bound);
    }
    run.csv("scan.csv", "family_is_one,epsilon,distance_l1_2", &rows)?;
    run.plot(
        "scan.svg",
        &series,
        PlotOptions { title: "profile distance".into(), x_label: "log10 eps".into(), y_label: "L1_2".into(), ..Default::default() },
    )
}

fn kernel_direction(run: &mut Run<'_>) -> Result<()> {
    let mut rows = Vec::new();
    for (section, limit) in [(run.cfg.grid.clone(), 5e-3), (run.refined(), 2.8e-3)] {
        let grid = section.build()?;
        let l0 = assemble_l0(&grid, OperatorForm::Direct)?;
        let v = GridFunction::from_fn(&grid, |x| (1.0 - x) * (-x).exp());
        let r = norm(&l0.apply(&v)?, NormKind::L1k { k: 2.0 })?;
        rows.push(vec![section.n as f64, r]);
        run.check(&format!("residual_n_{}", section.n), r, Bound::AtMost(limit));
    }
    run.csv("residual.csv", "n,residual_l1_2", &rows)
}

fn gap_common(run: &mut Run<'_>, norm_kind: NormKind, threshold: f64) -> Result<()> {
    let grid = run.grid()?;
    let l0 = assemble_l0(&grid, OperatorForm::Direct)?;
    let est = estimate_gap(&l0, norm_kind, &run.gap_options())?;
    run.csv("rates.csv", "trial,rate", &gap_rows(&est))?;
    run.plot(
        "decay.svg",
        &gap_series(&est),
        PlotOptions { title: format!("linearised decay in {norm_kind}"), ..Default::default() },
    )?;
    run.note(format!("prefactor at rate 0.5: {:.4}", est.prefactor(0.5)));
    run.check("worst_rate", est.worst_rate, Bound::AtLeast(threshold));
    Ok(())
}

fn gap_hm1(run: &mut Run<'_>) -> Result<()> {
    let mu = run.cfg.norms.mu;
    gap_common(run, NormKind::Hm1Exp { mu }, 0.9)
}

fn gap_l1k(run: &mut Run<'_>) -> Result<()> {
    gap_common(run, NormKind::L1k { k: 3.0 }, 0.45)
}

fn opnorm_linear(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let l0 = assemble_l0(&grid, OperatorForm::Direct)?;
    let mut rows = Vec::new();
    for eps in PROFILE_EPS {
        let k = ratio_sym(eps)?;
        let p = profile(&k, &grid)?;
        let le = assemble_leps(&grid, &p.g, &k)?;
        rows.push(vec![eps, op_norm_diff_l1k(&le, &l0, 3.0)? / eps]);
    }
    run.csv("opnorm.csv", "epsilon,diff_over_eps", &rows)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    run.check("spread", spread(&ratios), Bound::AtMost(0.2));
    Ok(())
}

fn b_decay(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let r = default_cutoff(&grid, 1.1, 3.0)?;
    let (a, b) = assemble_splitting(&grid, &SplittingConfig { r, mu: run.cfg.norms.mu })?;
    let lc = assemble_l0(&grid, OperatorForm::Convolution)?;
    let defect = (a.matrix() + b.matrix() - lc.matrix()).abs().max();
    let est = estimate_gap(&b, NormKind::L1k { k: 3.0 }, &run.gap_options())?;
    run.note(format!("cutoff R = {r:.6}"));
    run.csv("rates.csv", "trial,rate", &gap_rows(&est))?;
    run.check("worst_rate", est.worst_rate, Bound::AtLeast(0.9));
    run.check("split_defect", defect, Bound::AtMost(1e-10));
    Ok(())
}

fn dynamics_closeness(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let init = run.cfg.evolution.initial;
    let f0 = GridFunction::from_fn(&grid, |x| init.eval(x));
    let cfg = EvolutionConfig { t_final: 1.0, ..run.cfg.evolution_config() };
    let base = evolve(&f0, &KernelSpec::constant(), &cfg)?.final_state;
    let mut rows = Vec::new();
    for eps in [0.01, 0.02, 0.04] {
        let fe = evolve(&f0, &ratio_sym(eps)?, &cfg)?.final_state;
        rows.push(vec![eps, l1k_distance(&fe, &base, 2.0)? / eps]);
    }
    run.csv("closeness.csv", "epsilon,distance_over_eps", &rows)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    run.check("spread", spread(&ratios), Bound::AtMost(0.25));
    Ok(())
}

fn perturbed_rate(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let window = run.window((4.0, 10.0));
    let mut series = Vec::new();
    for (label, kernel, bound) in [
        ("ratio_sym_0.1", ratio_sym(0.1)?, Bound::AtLeast(0.3)),
        ("one_0.2", constant_one(0.2)?, Bound::Between(0.45, 0.6)),
    ] {
        let (tr, _) = converge_run(run, &kernel, &grid, 12.0, false)?;
        let fit = decay_of(&tr, window)?;
        run.trajectory(&format!("trajectory_{label}.csv"), &tr)?;
        series.push(distance_series(label, &tr));
        run.note(format!("{label}: r^2 {:.6}", fit.r_squared));
        run.check(&format!("rate_{label}"), fit.rate, bound);
    }
    run.plot(
        "distance.svg",
        &series,
        PlotOptions { title: "distance to the perturbed profile".into(), y_label: "L1_3".into(), ..Default::default() },
    )
}

fn physical_rescale(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let k = run.cfg.norms.distance_k;
    let (tr, p) = converge_run(run, &ratio_sym(0.1)?, &grid, 12.0, true)?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for ((t, f), rec) in tr.snapshots.iter().zip(&tr.records) {
        let state = to_physical(f, *t)?;
        let back = rescaled_physical(&state, &grid);
        let dp = l1k_distance(&back, &p.g, k)?;
        let ds = rec.dist_ref.unwrap_or(f64::NAN);
        worst = worst.max((dp - ds).abs() / ds);
        rows.push(vec![*t, state.tau, ds, dp]);
    }
    run.csv("physical.csv", "t,tau,self_similar_distance,physical_distance", &rows)?;
    let (lo, hi) = run.window((4.0, 10.0));
    let (x, y): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r[0] >= lo - 1e-9 && r[0] <= hi + 1e-9).map(|r| ((1.0 + r[1]).ln(), r[3])).unzip();
    // ln(1 + tau) = t, so the exponent in (1 + tau) is a decay rate in t.
    let (Some(&x0), Some(&x1)) = (x.first(), x.last()) else {
        return Err(Error::Fit(format!("no snapshots in [{lo}, {hi}]")));
    };
    let fit = fit_decay(&x, &y, (x0, x1))?;
    run.check("identity_rel_error", worst, Bound::AtMost(1e-6));
    run.check("exponent", fit.rate, Bound::AtLeast(0.3));
    Ok(())
}

const FOURIER_XI: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

fn fourier_corpus(run: &mut Run<'_>) -> Result<()> {
    let mut min_margin = f64::INFINITY;
    for d in CorpusDensity::ALL {
        let f = d.sample(DEFAULT_SAMPLES)?;
        let rep = fourier_bound_verify(&f, &FOURIER_XI);
        min_margin = rep.rows.iter().map(|r| r.margin).fold(min_margin, f64::min);
        if let Some(p) = run.path(&format!("bounds_{}.csv", d.name())) {
            rep.write_csv(&p)?;
        }
    }
    let uniform = (fourier_modulus(&CorpusDensity::Uniform.sample(DEFAULT_SAMPLES)?, 1.0) - 2.0 * 0.5f64.sin()).abs();
    let expo = (fourier_modulus(&CorpusDensity::Exponential.sample(DEFAULT_SAMPLES)?, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs();
    run.check("min_margin", min_margin, Bound::Above(0.0));
    run.check("uniform_closed_form", uniform, Bound::AtMost(1e-4));
    run.check("exponential_closed_form", expo, Bound::AtMost(1e-4));
    Ok(())
}

fn l2_envelope(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let init = run.cfg.evolution.initial;
    let f0 = GridFunction::from_fn(&grid, |x| init.eval(x));
    let l2 = NormKind::L2Exp { mu: 0.0 };
    let cfg = EvolutionConfig { t_final: 2.0, tracked_norms: vec![l2], ..run.cfg.evolution_config() };
    let tr = evolve(&f0, &KernelSpec::constant(), &cfg)?;
    let mut rows = Vec::new();
    for r in &tr.records {
        let env = l2_growth_envelope(&f0, r.t)?;
        rows.push(vec![r.t, r.norms[0] * r.norms[0], env]);
    }
    let worst = rows.iter().map(|r| r[1] / r[2]).fold(0.0, f64::max);
    run.csv("envelope.csv", "t,l2_squared,envelope", &rows)?;
    run.check("max_ratio", worst, Bound::AtMost(1.0));
    Ok(())
}

fn multistart(run: &mut Run<'_>) -> Result<()> {
    let grid = run.grid()?;
    let opts = ProfileOptions::default();
    let (results, worst) = multistart_profiles(&ratio_sym(0.1)?, &grid, &opts)?;
    let rows: Vec<Vec<f64>> =
        results.iter().enumerate().map(|(i, r)| vec![i as f64, r.m0, r.residual_l1k, r.iterations as f64]).collect();
    run.csv("starts.csv", "start,m0,residual,iterations", &rows)?;
    run.check("worst_pairwise_l1_2", worst, Bound::AtMost(2.0 * opts.tol));
    Ok(())
}
