use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn catmmv(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catmmv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("CATMMV_SEED")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

#[test]
fn frontier_has_one_row_per_time_on_upper_branch() {
    let d = tempfile::tempdir().unwrap();
    let cfg = configs().join("reference.json");
    let o = catmmv(&["frontier", "--t", "25,50,75,100", "--config", cfg.to_str().unwrap()], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(d.path(), "frontier.csv");
    assert!(text.starts_with("t,mean_P,mean_Q,var_P,C1,C2,C3\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    for row in &r {
        let (mean_p, mean_q, c1, c2) = (row[1], row[2], row[4], row[5]);
        assert!(c1 > 0.0 && mean_p > mean_q + c2);
    }
}

#[test]
fn diffusion_engine_rejects_reference_parameters() {
    let d = tempfile::tempdir().unwrap();
    let o = catmmv(&["--model", "diffusion", "coeffs"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Delta"));
    assert!(std::fs::read_dir(d.path()).map_or(true, |mut it| it.next().is_none()));

    let cfg = configs().join("diffusion_variant.json");
    let o = catmmv(&["--model", "diffusion", "--grid", "201", "coeffs", "--config", cfg.to_str().unwrap()], d.path());
    assert!(o.status.success());
    assert!(read(d.path(), "coeffs.csv").starts_with("t,xi,eta,zeta,alpha,beta\n"));
}

#[test]
fn validation_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    let text = std::fs::read_to_string(configs().join("reference.json")).unwrap();
    std::fs::write(&bad, text.replace("\"sigma0\": 0.4", "\"sigma0\": 0.0").replace("\"theta\": 1.0", "\"theta\": -1.0")).unwrap();
    let out = d.path().join("out");
    let o = catmmv(&["coeffs", "--config", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sigma0") && err.contains("theta"), "{err}");
    assert!(!out.exists());

    std::fs::write(&bad, "{\"market\": 1}").unwrap();
    assert_eq!(catmmv(&["coeffs", "--config", bad.to_str().unwrap()], &out).status.code(), Some(1));
    assert_eq!(catmmv(&["sensitivity", "--param", "nope", "--values", "1"], &out).status.code(), Some(1));
    assert_eq!(catmmv(&["value", "--t", "150"], &out).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn csv_values_round_trip() {
    let d = tempfile::tempdir().unwrap();
    assert!(catmmv(&["--grid", "101", "coeffs"], d.path()).status.success());
    let text = read(d.path(), "coeffs.csv");
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:?}"), cell);
        }
    }
    let m = manifest(d.path());
    assert_eq!(m["subcommand"], "coeffs");
    let entry = &m["outputs"][0];
    assert_eq!(entry["name"], "coeffs.csv");
    assert_eq!(entry["sha256"].as_str().unwrap(), catmmv_cli::output::sha256_hex(text.as_bytes()));
}

#[test]
fn simulation_is_reproducible() {
    let cfg = configs().join("short_horizon.json");
    let run = |threads: &str| {
        let d = tempfile::tempdir().unwrap();
        let o = catmmv(
            &["simulate", "--paths", "400", "--record", "5,10", "--threads", threads, "--config", cfg.to_str().unwrap()],
            d.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (read(d.path(), "ensemble.csv"), read(d.path(), "objective.csv"), manifest(d.path())["outputs"].clone())
    };
    let a = run("1");
    let b = run("1");
    let c = run("8");
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.1.ends_with(",400\n"));
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let cfg = configs().join("short_horizon.json");
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let args = ["simulate", "--paths", "50", "--seed", "1", "--config", cfg.to_str().unwrap()];
    assert!(catmmv(&args, d1.path()).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_catmmv"))
        .args(args)
        .arg("--out")
        .arg(d2.path())
        .env("CATMMV_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(d1.path())["seed"], 1);
    assert_eq!(manifest(d2.path())["seed"], 77);
    assert_ne!(read(d1.path(), "objective.csv"), read(d2.path(), "objective.csv"));
}

#[test]
fn single_value_sensitivity_matches_policy() {
    let d = tempfile::tempdir().unwrap();
    let o = catmmv(&["sensitivity", "--param", "catastrophe.rho", "--values", "0.01", "--x-points", "5"], d.path());
    assert!(o.status.success());
    let s = rows(&read(d.path(), "sensitivity_catastrophe.rho.csv"));
    let o = catmmv(&["policy", "--t", "1", "--lambda", "5", "--x", "0,25,50,75,100"], d.path());
    assert!(o.status.success());
    let p = rows(&read(d.path(), "policy.csv"));
    assert_eq!(s.len(), p.len());
    for (a, b) in s.iter().zip(&p) {
        assert_eq!((a[1], a[2], a[3]), (b[1], b[4], b[5]));
    }
}

#[test]
fn verify_prints_table_and_residuals() {
    let d = tempfile::tempdir().unwrap();
    let o = catmmv(&["verify", "--random", "0"], d.path());
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("HJBI") && stdout.contains("PASS") && !stdout.contains("FAIL"));
    let text = read(d.path(), "residuals.csv");
    assert!(text.starts_with("t,x,y,lambda,residual,scale\n"));
    assert_eq!(text.lines().count(), 1 + 750);
}

#[test]
fn value_reports_objective() {
    let d = tempfile::tempdir().unwrap();
    let o = catmmv(&["value", "--t", "0", "--x", "100", "--lambda", "1"], d.path());
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let v: f64 = stdout.lines().next().unwrap().trim_start_matches("V = ").parse().unwrap();
    assert!((v + 874.2390502583718).abs() < 1e-9);
    let r = rows(&read(d.path(), "value.csv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][3], v);
}
