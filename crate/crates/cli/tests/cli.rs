use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SIMULATE: &str = r#"
[model]
n_species = 2
horizon = 0.05
profile = [{ mean = 0.3, cos = [0.1] }, { mean = 0.25, sin = [0.1] }]

[lattice]
sites = [64]
replicas = 3
"#;

const DRIVEN: &str = r#"
[model]
n_species = 2
horizon = 0.05
profile = [{ mean = 0.3, cos = [0.1] }, { mean = 0.25, sin = [0.1] }]
potential = [{ cos = [0.5] }, { sin = [0.5] }]
field_points = 64

[lattice]
sites = [16]
replicas = 200

[grid]
m = 32
k = 16
"#;

const SWEEP: &str = r#"
[model]
n_species = 2
horizon = 0.2
profile = [{ mean = 0.3 }, { mean = 0.3 }]
field_points = 64

[lattice]
sites = [16, 32]
replicas = 40

[statistic]
labels = [1, 2]
eps = 0.1
delta = 0.005
"#;

const ENUMERATION: &str = r#"
[blocks]
n_species = 2
labels = [1, 2]
k_max = 4

[equivalence]
n_species = 2
labels = [1, 2]
sites = [6, 8, 10]
"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, out: &str, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_stirlab"));
        cmd.args(args)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .env_remove("STIRLAB_THREADS");
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    fn ok(&self, out: &str, args: &[&str]) -> Value {
        let o = self.exec(out, args, &[]);
        assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_slice(&o.stdout).unwrap()
    }
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Every file under `root` except the manifest, keyed by relative path.
fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_logs_densities_and_manifest() {
    let run = Run::new(SIMULATE);
    let s = run.ok("a", &["simulate", "--seed", "11"]);
    assert_eq!(s["paths"], 3);
    let out = run.out("a");
    for r in 0..3 {
        let log = fs::read_to_string(out.join(format!("N64/replica{r:04}.events.jsonl"))).unwrap();
        assert!(log.lines().count() > 1);
        let density = fs::read_to_string(out.join(format!("N64/replica{r:04}.density.csv"))).unwrap();
        assert!(density.lines().count() > 64);
    }
    let m = json_file(&out.join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["inputs_sha256"].as_str().unwrap().len(), 64);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["files"].as_array().unwrap().iter().any(|f| f == "N64/replica0002.events.jsonl"));
}

#[test]
fn same_seed_reproduces_outputs_byte_for_byte() {
    let run = Run::new(SIMULATE);
    run.ok("a", &["simulate", "--seed", "5"]);
    run.ok("b", &["simulate", "--seed", "5", "--threads", "1"]);
    run.ok("c", &["simulate", "--seed", "6"]);
    let (a, b, c) = (tree(&run.out("a")), tree(&run.out("b")), tree(&run.out("c")));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (ma, mb) = (json_file(&run.out("a/manifest.json")), json_file(&run.out("b/manifest.json")));
    assert_eq!(ma["inputs_sha256"], mb["inputs_sha256"]);
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn thread_count_from_environment_does_not_change_results() {
    let run = Run::new(SWEEP);
    let one = run.exec("a", &["sweep"], &[("STIRLAB_THREADS", "1")]);
    let two = run.exec("b", &["sweep"], &[("STIRLAB_THREADS", "2")]);
    assert!(one.status.success() && two.status.success());
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(tree(&run.out("a")), tree(&run.out("b")));
    let bad = run.exec("c", &["sweep"], &[("STIRLAB_THREADS", "many")]);
    assert!(!bad.status.success());
}

#[test]
fn sweep_writes_one_sample_file_per_lattice_size() {
    let run = Run::new(SWEEP);
    let s = run.ok("a", &["sweep"]);
    assert_eq!(s["log_rates"].as_array().unwrap().len(), 2);
    for n in [16, 32] {
        let samples = fs::read_to_string(run.out(&format!("a/N{n}/samples.csv"))).unwrap();
        assert_eq!(samples.lines().count(), 41);
    }
    assert!(run.out("a/sweep.gp").exists());
}

#[test]
fn rate_matches_driving_cost_on_driven_trajectory() {
    let run = Run::new(DRIVEN);
    let s = run.ok("a", &["rate"]);
    assert!(s["residual"].as_f64().unwrap() < 1e-10);
    assert!(s["relative_error"].as_f64().unwrap() < 1e-2);
    assert!(s["variational_lb"].as_f64().unwrap() <= s["I0"].as_f64().unwrap() + 1e-12);
    let report = json_file(&run.out("a/rate.json"));
    for key in ["I0", "I_total", "residual", "variational_lb", "grid"] {
        assert!(report.get(key).is_some(), "rate.json lacks {key}");
    }
}

#[test]
fn hydro_conserves_mass_and_writes_plot_script() {
    let run = Run::new(DRIVEN);
    let s = run.ok("a", &["hydro"]);
    assert!(s["mass_drift"].as_f64().unwrap() < 1e-12);
    assert_eq!(s["M"], 32);
    let gp = fs::read_to_string(run.out("a/final_profile.gp")).unwrap();
    assert!(gp.contains("final_profile.csv") && gp.contains("final_profile.png"));
}

#[test]
fn girsanov_and_martingale_checks() {
    let run = Run::new(DRIVEN);
    let s = run.ok("a", &["girsanov"]);
    assert!(s["max_identity_gap"].as_f64().unwrap() < 1e-9);
    let v = run.ok("b", &["verify", "martingale"]);
    assert_eq!(v["pass"], true);
}

#[test]
fn json_format_writes_json_tables() {
    let run = Run::new(ENUMERATION);
    run.ok("a", &["blocks", "--format", "json"]);
    let rows = json_file(&run.out("a/blocks.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["one_block"].as_f64().unwrap() > 0.0));
    assert!(run.out("a/blocks.csv").exists(), "plot script needs its csv copy");
}

#[test]
fn verify_einstein_and_equivalence_pass() {
    let run = Run::new(ENUMERATION);
    let e = run.ok("a", &["verify", "einstein"]);
    assert!(e["max_residual"].as_f64().unwrap() <= 1e-12);
    let q = run.ok("b", &["verify", "equivalence"]);
    let gaps: Vec<f64> = q["gaps"].as_array().unwrap().iter().map(|g| g.as_f64().unwrap()).collect();
    assert!((gaps[2] - 1.0 / 36.0).abs() < 1e-12);
}

#[test]
fn failed_verification_exits_three_with_detail() {
    let run = Run::new("[equivalence]\nn_species = 2\nlabels = [1]\nsites = [6, 8]\n");
    let o = run.exec("a", &["verify", "equivalence"], &[]);
    assert_eq!(o.status.code(), Some(3));
    let rec = json_file(&run.out("a/error.json"));
    assert_eq!(rec["error"]["kind"], "verification");
    assert_eq!(rec["error"]["detail"]["pass"], false);
}

#[test]
fn schema_violation_exits_two_with_error_record() {
    let run = Run::new("[model]\nn_species = 1\nhorizon = 1.0\nprofile = [{ mean = 0.5 }]\nbogus = 3\n");
    let o = run.exec("a", &["hydro"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let stderr: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stderr["error"]["kind"], "config");
    assert_eq!(stderr["error"]["command"], "hydro");
    assert!(stderr["error"]["message"].as_str().unwrap().contains("bogus"));
    assert_eq!(json_file(&run.out("a/error.json")), stderr);
}

#[test]
fn inconsistent_config_is_rejected() {
    let run = Run::new("[model]\nn_species = 2\nhorizon = 1.0\nprofile = [{ mean = 0.5 }]\n");
    let o = run.exec("a", &["simulate"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_section_is_a_runtime_error() {
    let run = Run::new(ENUMERATION);
    let o = run.exec("a", &["simulate"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let rec = json_file(&run.out("a/error.json"));
    assert!(rec["error"]["message"].as_str().unwrap().contains("[model]"));
}
