//! End-to-end checks of the `lpsim` binary: exit codes, diagnostics, and
//! output shapes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn lpsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpsim")).args(args).output().unwrap()
}

const MINIMAL: &str = "schema_version = 1\n\
    [simulation]\nmode = \"continuous\"\nseed = 1\n\
    [arrival]\nkind = \"poisson\"\nrate = 0.5\ncount = 500\n\
    [service]\nkind = \"exponential\"\nmean = 1.0\n\
    [policy]\nkind = \"sprpt\"\n";

#[test]
fn minimal_config_simulates_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["simulate", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mean_lat"), "summary header missing: {stdout}");
    assert!(out_dir.join("per_job.csv").exists());
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn missing_service_section_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let body = MINIMAL.replace("[service]\nkind = \"exponential\"\nmean = 1.0\n", "");
    let cfg = write_config(tmp.path(), "broken.toml", &body);
    let out = lpsim(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("service"), "diagnostic should name the field: {stderr}");
}

#[test]
fn unknown_key_is_rejected_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", &format!("{MINIMAL}\nbogus_key = 1\n"));
    let out = lpsim(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bogus_key"), "{stderr}");
    assert!(stderr.contains("line"), "diagnostic should cite the line: {stderr}");
}

#[test]
fn unstable_config_warns_but_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = MINIMAL.replace("rate = 0.5", "rate = 1.5");
    let cfg = write_config(tmp.path(), "hot.toml", &body);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["simulate", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("no steady state"), "{stderr}");
}

#[test]
fn sweep_grid_emits_one_row_per_point_with_ci_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{}\n[sweep]\nlambdas = [0.5, 0.7]\ncs = [0.0, 0.5, 1.0]\n",
        MINIMAL
            .replace("kind = \"sprpt\"", "kind = \"sprpt_lp\"\nc = 0.5")
            .replace("seed = 1", "seed = 1\nreplications = 3")
    );
    let cfg = write_config(tmp.path(), "sweep.toml", &body);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["sweep", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("latency_ci") && header.contains("ttft_ci"), "{header}");
    assert_eq!(lines.count(), 6, "2x3 grid should yield 6 rows");
}

#[test]
fn validate_flags_mismatched_densities() {
    let tmp = tempfile::tempdir().unwrap();
    // simulate with noisy predictions, analyse as if they were perfect
    let body = "schema_version = 1\n\
        [simulation]\nmode = \"continuous\"\nseed = 3\n\
        [arrival]\nkind = \"poisson\"\nrate = 0.7\ncount = 50000\n\
        [service]\nkind = \"exponential\"\nmean = 1.0\n\
        [predictor]\nkind = \"exponential_noise\"\n\
        [policy]\nkind = \"sprpt\"\n\
        [validate]\ntolerance = 0.05\nanalytic_predictor = \"perfect\"\n";
    let cfg = write_config(tmp.path(), "mismatch.toml", body);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["validate", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("tolerance"), "{stderr}");
}

#[test]
fn validate_light_traffic_matches_service_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "schema_version = 1\n\
        [simulation]\nmode = \"continuous\"\nseed = 4\nreplications = 2\n\
        [arrival]\nkind = \"poisson\"\nrate = 0.05\ncount = 100000\n\
        [service]\nkind = \"exponential\"\nmean = 1.0\n\
        [predictor]\nkind = \"perfect\"\n\
        [policy]\nkind = \"sprpt\"\n\
        [validate]\ntolerance = 0.02\n";
    let cfg = write_config(tmp.path(), "light.toml", body);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["validate", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("validate.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let analytic: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((analytic - 1.0).abs() < 0.05, "light traffic should approach the bare mean: {row}");
}

#[test]
fn refine_single_bin_estimates_collapse_to_midpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "schema_version = 1\n\
        [simulation]\nmode = \"batch\"\nseed = 6\n\
        [arrival]\nkind = \"burst\"\nn = 1\n\
        [service]\nkind = \"exponential\"\nmean = 10.0\n\
        [policy]\nkind = \"spjf\"\n\
        [bins]\nboundaries = [0.0, 40.0]\n\
        [observation]\nconcentration = 2.0\n\
        [refine]\nensemble_size = 5\nsize_mean = 10.0\nclip_hi = 39\nemit_trajectories = 5\n";
    let cfg = write_config(tmp.path(), "onebin.toml", body);
    let out_dir = tmp.path().join("out");
    let out = lpsim(&["refine", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("refine.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], "20.0", "raw estimate must be the single midpoint: {line}");
        assert_eq!(fields[4], "20.0", "refined estimate must be the single midpoint: {line}");
    }
}

#[test]
fn flag_overrides_file_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let run = |dir: &Path, seed: &str| {
        let out = lpsim(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        std::fs::read(dir.join("per_job.csv")).unwrap()
    };
    let with_file_seed = run(&a, "1");
    let with_flag_seed = run(&b, "99");
    assert_ne!(with_file_seed, with_flag_seed, "seed flag should change the run");
}

#[test]
fn workload_roundtrip_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let workload = tmp.path().join("workload.csv");
    let direct = tmp.path().join("direct");
    let replay = tmp.path().join("replay");
    let out = lpsim(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--export-workload",
        workload.to_str().unwrap(),
        "--out-dir",
        direct.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(&workload).unwrap();
    assert!(header.starts_with("id,arrival,size,prediction"), "{header}");
    let out = lpsim(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--workload",
        workload.to_str().unwrap(),
        "--out-dir",
        replay.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(direct.join("per_job.csv")).unwrap();
    let b = std::fs::read(replay.join("per_job.csv")).unwrap();
    assert_eq!(a, b, "replayed workload must reproduce the original run");
}

#[test]
fn env_var_sets_default_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let out_dir = tmp.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_lpsim"))
        .args(["simulate", cfg.to_str().unwrap()])
        .env("LPSIM_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("summary.json").exists());
}
