//! The `verify-all` runner: every preset, one summary, one exit status.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::presets::{run_preset, Preset, PresetReport};

/// Exit status when every check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a check fails or a preset errors numerically.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;

/// Outcome of one preset inside [`verify_all`].
#[derive(Debug)]
pub enum PresetOutcome {
    Report(PresetReport),
    Failed { preset: Preset, error: String },
}

impl PresetOutcome {
    pub fn pass(&self) -> bool {
        matches!(self, PresetOutcome::Report(r) if r.pass())
    }

    pub fn preset(&self) -> Preset {
        match self {
            PresetOutcome::Report(r) => r.preset,
            PresetOutcome::Failed { preset, .. } => *preset,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        match self {
            PresetOutcome::Report(r) => r.lines(),
            PresetOutcome::Failed { preset, error } => vec![format!("FAIL {preset} error: {error}")],
        }
    }
}

#[derive(Debug)]
pub struct VerifySummary {
    pub outcomes: Vec<PresetOutcome>,
}

impl VerifySummary {
    /// Conjunction of the individual preset outcomes.
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(PresetOutcome::pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }

    /// Rows `preset,measured,threshold,pass`; the preset column names the check
    /// as `preset/check`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("preset,measured,threshold,pass\n");
        for o in &self.outcomes {
            match o {
                PresetOutcome::Report(r) => {
                    for c in &r.checks {
                        s += &format!("{}/{},{:.16e},{},{}\n", r.preset, c.name, c.measured, c.bound, c.pass);
                    }
                }
                PresetOutcome::Failed { preset, .. } => s += &format!("{preset},NaN,error,false\n"),
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Maps a finished or aborted run to the process exit status.
pub fn exit_code_for(result: &Result<VerifySummary>) -> i32 {
    match result {
        Ok(s) => s.exit_code(),
        Err(Error::Config(_)) => EXIT_CONFIG,
        Err(_) => EXIT_FAIL,
    }
}

/// Runs `presets` on up to `jobs` threads and writes `verify_summary.csv`
/// under `out` when given. Configuration errors abort before any run.
pub fn verify_presets(cfg: &ExperimentConfig, presets: &[Preset], out: Option<&Path>, jobs: usize) -> Result<VerifySummary> {
    cfg.validate()?;
    if let Some(o) = out {
        std::fs::create_dir_all(o)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<PresetOutcome> = pool.install(|| {
        presets
            .par_iter()
            .map(|&p| match run_preset(p, cfg, out) {
                Ok(r) => PresetOutcome::Report(r),
                Err(e) => PresetOutcome::Failed { preset: p, error: e.to_string() },
            })
            .collect()
    });
    let summary = VerifySummary { outcomes };
    if let Some(o) = out {
        summary.write_csv(&o.join("verify_summary.csv"))?;
    }
    Ok(summary)
}

/// Every preset in acceptance order.
pub fn verify_all(cfg: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<VerifySummary> {
    verify_presets(cfg, &Preset::ALL, out, jobs)
}
