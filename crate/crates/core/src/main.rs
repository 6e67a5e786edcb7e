//! Command-line front end of the coagulation laboratory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coagkin::evolution::evolve;
use coagkin::fourier::{fourier_bound_verify, CorpusDensity, DEFAULT_SAMPLES};
use coagkin::harness::plot::{emit_plot, PlotOptions, Series};
use coagkin::harness::verify::{EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};
use coagkin::harness::{exit_code_for, run_preset_named, verify_all, ExperimentConfig};
use coagkin::linearized::{
    assemble_l0, assemble_leps, estimate_gap, op_norm_diff_l1k, GapConstants, GapOptions, OperatorForm,
};
use coagkin::norms::norm;
use coagkin::profiles::{check_profile_bounds, solve_profile, ProfileOptions};
use coagkin::{Error, GridFunction, NormKind, Result};

#[derive(Parser)]
#[command(name = "coagkin", version, about = "Self-similar coagulation experiments")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `experiment.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Presets run concurrently by `verify-all`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolves the configured initial data and records the distance to the profile.
    Evolve,
    /// Solves the profile for every `experiment.epsilons` entry.
    Profile,
    /// Estimates the decay rates of the linearised operator.
    Spectrum,
    /// Checks the Fourier modulus bound on the built-in corpus.
    Fourier {
        /// Frequencies to test.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 5.0, 10.0])]
        xi: Vec<f64>,
    },
    /// Runs one named preset.
    Preset { name: String },
    /// Runs every preset and writes `verify_summary.csv`.
    VerifyAll,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run_evolve(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let grid = cfg.grid.build()?;
    let kernel = cfg.kernel.spec()?;
    let profile = solve_profile(&kernel, &grid, &ProfileOptions::default())?;
    let init = cfg.evolution.initial;
    let f0 = GridFunction::from_fn(&grid, |x| init.eval(x));
    let ecfg = coagkin::evolution::EvolutionConfig { reference: Some(profile.g), ..cfg.evolution_config() };
    let tr = evolve(&f0, &kernel, &ecfg)?;
    tr.write_csv(&out.join("trajectory.csv"))?;
    tr.final_state.write_csv(&out.join("final_state.csv"))?;
    emit_plot(
        &[Series::new("distance", tr.times(), tr.distances())],
        &out.join("distance.svg"),
        &PlotOptions { title: "distance to the profile".into(), ..Default::default() },
    )?;
    println!("steps of {:.6}, m1 drift {:.3e}, final distance {:.6e}", tr.dt, tr.m1_drift, tr.distances().last().copied().unwrap_or(f64::NAN));
    Ok(EXIT_PASS)
}

fn run_profile(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let grid = cfg.grid.build()?;
    let base = cfg.kernel.spec()?;
    let opts = ProfileOptions::default();
    let g0 = solve_profile(&base.with_epsilon(0.0)?, &grid, &opts)?.g;
    let k = cfg.norms.k.first().copied().unwrap_or(2.0);
    let mut scan = format!("epsilon,distance_L1k_{k}\n");
    let mut all_pass = true;
    for &eps in &cfg.experiment.epsilons {
        let p = solve_profile(&base.with_epsilon(eps)?, &grid, &opts)?;
        p.g.write_csv(&out.join(format!("profile_eps_{eps}.csv")))?;
        let rep = check_profile_bounds(&p);
        std::fs::write(out.join(format!("bounds_eps_{eps}.txt")), rep.to_text())?;
        let d = norm(&p.g.sub(&g0)?, NormKind::L1k { k })?;
        scan += &format!("{eps},{d:.16e}\n");
        all_pass &= rep.all_pass();
        println!(
            "eps {eps}: m0 {:.8}, residual {:.3e}, {} iterations, distance to eps=0 {d:.4e}, bounds {}",
            p.m0,
            p.residual_l1k,
            p.iterations,
            if rep.all_pass() { "PASS" } else { "FAIL" }
        );
    }
    std::fs::write(out.join("scan.csv"), scan)?;
    Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
}

fn run_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let grid = cfg.grid.build()?;
    let kernel = cfg.kernel.spec()?;
    let l0 = assemble_l0(&grid, OperatorForm::Direct)?;
    let eps = kernel.epsilon();
    let leps = if eps > 0.0 {
        let p = solve_profile(&kernel, &grid, &ProfileOptions::default())?;
        Some(assemble_leps(&grid, &p.g, &kernel)?)
    } else {
        None
    };
    let l = leps.as_ref().unwrap_or(&l0);
    let opts = GapOptions { trials: cfg.experiment.trials, seed: cfg.experiment.seed, ..GapOptions::default() };
    let mut report = format!("operator: {}\n", if eps > 0.0 { format!("L_eps, eps = {eps}") } else { "L_0".into() });
    for norm_kind in [NormKind::Hm1Exp { mu: cfg.norms.mu }, NormKind::L1k { k: cfg.norms.distance_k }] {
        let est = estimate_gap(l, norm_kind, &opts)?;
        let slowest = est.rates.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
        let s = &est.samples[slowest];
        let mut csv = String::from("t,norm\n");
        for (t, v) in s.times.iter().zip(&s.norms) {
            csv += &format!("{t:.16e},{v:.16e}\n");
        }
        std::fs::write(out.join(format!("decay_{norm_kind}.csv")), csv)?;
        report += &format!("{norm_kind}: worst rate {:.6}, prefactor at 1/2 {:.4}\n", est.worst_rate, est.prefactor(0.5));
        for (i, r) in est.rates.iter().enumerate() {
            report += &format!("  trial {i}: {r:.6}\n");
        }
    }
    // Measured constants of the perturbed gap: C from the unperturbed L1_k
    // decay, M2 from the operator difference.
    let c_hat = estimate_gap(&l0, NormKind::L1k { k: cfg.norms.distance_k }, &opts)?.prefactor(0.5);
    let m2_hat = match &leps {
        Some(le) => op_norm_diff_l1k(le, &l0, cfg.norms.distance_k)? / eps,
        None => f64::NAN,
    };
    let mut consts = format!("c = {c_hat:.10e}\nm2 = {m2_hat:.10e}\n");
    match GapConstants::new(c_hat, m2_hat) {
        Ok(gc) => consts += &format!("eps0 = {:.10e}\n", gc.eps0),
        Err(_) => consts += "eps0 = nan\n",
    }
    std::fs::write(out.join("gap_constants"), consts)?;
    print!("{report}");
    std::fs::write(out.join("gap_report.txt"), report)?;
    Ok(EXIT_PASS)
}

fn run_fourier(xi: &[f64], out: &Path) -> Result<i32> {
    let mut all = true;
    for d in CorpusDensity::ALL {
        let rep = fourier_bound_verify(&d.sample(DEFAULT_SAMPLES)?, xi);
        rep.write_csv(&out.join(format!("fourier_{}.csv", d.name())))?;
        let min = rep.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        println!("{}: mass {:.6}, min margin {min:.3e}, {}", d.name(), rep.mass, if rep.all_hold() { "holds" } else { "VIOLATED" });
        all &= rep.all_hold();
    }
    Ok(if all { EXIT_PASS } else { EXIT_FAIL })
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let out = out_dir(cli, &cfg)?;
    match &cli.command {
        Command::Evolve => run_evolve(&cfg, &out),
        Command::Profile => run_profile(&cfg, &out),
        Command::Spectrum => run_spectrum(&cfg, &out),
        Command::Fourier { xi } => run_fourier(xi, &out),
        Command::Preset { name } => {
            let rep = run_preset_named(name, &cfg, Some(&out))?;
            for l in rep.lines().iter().chain(&rep.notes) {
                println!("{l}");
            }
            Ok(if rep.pass() { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::VerifyAll => {
            let res = verify_all(&cfg, Some(&out), cli.jobs);
            if let Ok(s) = &res {
                for o in &s.outcomes {
                    for l in o.lines() {
                        println!("{l}");
                    }
                }
            }
            let code = exit_code_for(&res);
            res?;
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_FAIL } as u8)
        }
    }
}
