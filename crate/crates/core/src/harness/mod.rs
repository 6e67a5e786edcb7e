//! Experiment plumbing: decay fits, configuration, presets, plots and the
//! acceptance runner behind the command-line interface.

pub mod config;
pub mod fit;
pub mod plot;
pub mod presets;
pub mod verify;

pub use config::ExperimentConfig;
pub use fit::{fit_decay, DecayFit};
pub use plot::{emit_plot, PlotOptions, Series};
pub use presets::{run_preset, run_preset_named, Bound, Check, Preset, PresetReport};
pub use verify::{exit_code_for, verify_all, verify_presets, VerifySummary};
