use std::path::Path;
use std::process::Command;

fn coagkin(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_coagkin"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = "[grid]\nkind = \"log\"\nxmin = 1e-4\nxmax = 60.0\nn = 192\n[experiment]\nepsilons = [0.1]\ntrials = 5\n";

#[test]
fn fourier_subcommand_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = coagkin(&["fourier", "--xi", "1,2"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("fourier_exponential.csv")).unwrap();
    assert!(csv.starts_with("xi,measured,R,alpha,bound,margin\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn missing_grid_section_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[kernel]\nepsilon = 0.1\n");
    let (code, _) = coagkin(&["--config", &cfg, "verify-all"], dir.path());
    assert_eq!(code, 2);
    let (code, _) = coagkin(&["preset", "no-such-preset"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn broken_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}[experiment.thresholds]\n\"fourier-corpus.min_margin\" = 5.0\n"));
    let (code, stdout) = coagkin(&["--config", &cfg, "preset", "fourier-corpus"], dir.path());
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("FAIL fourier-corpus/"));
}

#[test]
fn profile_and_spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (code, _) = coagkin(&["--config", &cfg, "profile"], dir.path());
    assert_eq!(code, 0);
    let scan = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(scan.starts_with("epsilon,distance_L1k"));
    assert!(dir.path().join("profile_eps_0.1.csv").exists());
    assert!(dir.path().join("bounds_eps_0.1.txt").exists());

    let (code, _) = coagkin(&["--config", &cfg, "--seed", "3", "spectrum"], dir.path());
    assert_eq!(code, 0);
    let consts = std::fs::read_to_string(dir.path().join("gap_constants")).unwrap();
    for key in ["c = ", "m2 = ", "eps0 = "] {
        assert!(consts.contains(key), "{consts}");
    }
    assert!(dir.path().join("gap_report.txt").exists());
    let decay: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("decay_"))
        .collect();
    assert_eq!(decay.len(), 2);
    let text = std::fs::read_to_string(decay[0].path()).unwrap();
    assert!(text.starts_with("t,norm\n"));
}

#[test]
fn evolve_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}[evolution]\nt_final = 1.0\ndt = 0.05\n"));
    let (code, _) = coagkin(&["--config", &cfg, "evolve"], dir.path());
    assert_eq!(code, 0);
    let tr = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = tr.lines().next().unwrap();
    assert!(header.starts_with("t,m0,m1,") && header.ends_with(",dist_ref"), "{header}");
    assert!(dir.path().join("distance.svg").exists());
}
