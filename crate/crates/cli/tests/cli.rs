use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FREE: &str = r#"{"alpha0":{"re":0.70710678,"im":0},"entries":[]}"#;
const DEFECT: &str = r#"{"alpha0":{"re":0.6,"im":0},"preset":"single-defect"}"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qwalk"))
            .current_dir(self.dir.path())
            .args(["--cache-dir", self.path("cache").to_str().unwrap()])
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn cache_files(&self) -> Vec<PathBuf> {
        let mut v: Vec<_> = std::fs::read_dir(self.path("cache"))
            .map(|d| d.map(|e| e.unwrap().path()).collect())
            .unwrap_or_default();
        v.sort();
        v
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn validate_free_profile() {
    let sb = Sandbox::new();
    let p = sb.file("free.json", FREE);
    let v = json(&sb.ok(&["validate", "--profile", s(&p)]));
    assert_eq!(v["weight_order"], 2);
    assert!(v["hypotheses"]
        .as_object()
        .unwrap()
        .values()
        .all(|h| h == true));
    assert_eq!(v["perturbation_norms"]["sigma2"], 0.0);
}

#[test]
fn validate_names_the_offending_site() {
    let sb = Sandbox::new();
    let p = sb.file(
        "bad.json",
        r#"{"alpha0":{"re":0.6,"im":0},"entries":[{"x":3,"alpha":{"re":1,"im":0},"theta":0}]}"#,
    );
    let out = sb.run(&["validate", "--profile", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("x = 3") && err.contains("standing coin assumption"),
        "{err}"
    );
}

#[test]
fn validate_heavy_tail_is_generic_only() {
    let sb = Sandbox::new();
    let p = sb.file(
        "heavy.json",
        r#"{"alpha0":{"re":0.6,"im":0},"preset":"power-decay","params":{"rate":2.5,"strength":0.2}}"#,
    );
    let v = json(&sb.ok(&["validate", "--profile", s(&p)]));
    assert_eq!(v["summary"], "generic-case ready, exceptional-case not");
    assert!(v["perturbation_norms"]["sigma1"].is_f64());
    assert!(v["perturbation_norms"]["sigma2"].is_null());
}

#[test]
fn scattering_fills_and_reuses_the_cache() {
    let sb = Sandbox::new();
    let p = sb.file("defect.json", DEFECT);
    let args = |stem: &str| {
        [
            "scattering",
            "--profile",
            s(&p),
            "--grid",
            "128",
            "--out",
            stem,
        ]
        .map(String::from)
    };
    let run = |stem: &str| sb.ok(&args(stem).iter().map(String::as_str).collect::<Vec<_>>());
    run("a");
    let first = sb.cache_files();
    assert_eq!(first.len(), 2);
    run("b");
    assert_eq!(sb.cache_files(), first);
    for ext in ["json", "csv"] {
        let a = std::fs::read(sb.path(&format!("a.{ext}"))).unwrap();
        let b = std::fs::read(sb.path(&format!("b.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext} differs");
    }
    let report: Value = serde_json::from_slice(&std::fs::read(sb.path("a.json")).unwrap()).unwrap();
    assert!(report["meta"]["config_hash"].is_string());
    assert_eq!(report["bound_states"].as_array().unwrap().len(), 4);
    assert!(report["branches"][0]["unitarity_defect"].as_f64().unwrap() < 1e-8);

    sb.ok(&[
        "scattering",
        "--profile",
        s(&p),
        "--grid",
        "256",
        "--out",
        "c",
    ]);
    assert_eq!(sb.cache_files().len(), 4);
}

#[test]
fn corrupt_cache_entry_is_recomputed() {
    let sb = Sandbox::new();
    let p = sb.file("defect.json", DEFECT);
    sb.ok(&[
        "scattering",
        "--profile",
        s(&p),
        "--grid",
        "64",
        "--branch",
        "plus",
        "--out",
        "a",
    ]);
    let files = sb.cache_files();
    std::fs::write(&files[0], b"not json").unwrap();
    let out = sb.ok(&[
        "--log-level",
        "warn",
        "scattering",
        "--profile",
        s(&p),
        "--grid",
        "64",
        "--branch",
        "plus",
        "--out",
        "b",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stale"));
    assert_eq!(
        std::fs::read(sb.path("a.csv")).unwrap(),
        std::fs::read(sb.path("b.csv")).unwrap()
    );
    assert!(std::fs::read(&files[0]).unwrap().starts_with(b"{"));
}

#[test]
fn dispersion_table_columns() {
    let sb = Sandbox::new();
    sb.ok(&[
        "dispersion",
        "--rho0",
        "0.6",
        "--grid",
        "64",
        "--out",
        "d.csv",
    ]);
    let text = std::fs::read_to_string(sb.path("d.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# qwalk "));
    assert_eq!(
        lines.next().unwrap(),
        "xi,lambda,lambda_1,lambda_2,lambda_3,w0_re,w0_im"
    );
    assert_eq!(lines.count(), 64);
    let out = sb.run(&["dispersion", "--rho0", "1.0", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_seeded() {
    let sb = Sandbox::new();
    let p = sb.file("defect.json", DEFECT);
    let sim = |seed: &str, out: &str| {
        sb.ok(&[
            "--seed",
            seed,
            "simulate",
            "--profile",
            s(&p),
            "--t",
            "12",
            "--initial",
            "random",
            "--out",
            out,
        ]);
        std::fs::read(sb.path(out)).unwrap()
    };
    let a = sim("7", "a.csv");
    assert_eq!(a, sim("7", "b.csv"));
    assert_ne!(a, sim("8", "c.csv"));

    sb.ok(&["simulate", "--profile", s(&p), "--t", "5", "--out", "d.csv"]);
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(sb.path("d.csv"))
        .unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["x", "up_re", "up_im", "down_re", "down_im"]
    );
    let norm: f64 = r
        .records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().unwrap().powi(2))
                .sum::<f64>()
        })
        .sum();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn dispersive_then_fit() {
    let sb = Sandbox::new();
    let p = sb.file("free.json", FREE);
    sb.ok(&["dispersive", "--profile", s(&p), "--out", "decay.csv"]);
    let v = json(&sb.ok(&["fit", "--in", "decay.csv"]));
    assert_eq!(v["route"], "direct");
    assert!(v["n_points"].as_u64().unwrap() >= 8);
    assert!(
        (v["exponent"].as_f64().unwrap() + 1.0 / 3.0).abs() < 0.05,
        "{v}"
    );

    sb.ok(&[
        "dispersive",
        "--profile",
        s(&p),
        "--route",
        "both",
        "--schedule",
        "10,15,20,30,40,50,70,100,140,200",
        "--out",
        "both.csv",
    ]);
    sb.ok(&[
        "fit", "--in", "both.csv", "--route", "kernel", "--out", "fit.json",
    ]);
    let f: Value = serde_json::from_slice(&std::fs::read(sb.path("fit.json")).unwrap()).unwrap();
    assert_eq!(f["route"], "kernel");
    assert_eq!(f["n_points"], 10);
}

#[test]
fn jost_table_has_residuals() {
    let sb = Sandbox::new();
    let p = sb.file("defect.json", DEFECT);
    sb.ok(&[
        "jost",
        "--profile",
        s(&p),
        "--branch",
        "plus",
        "--grid",
        "32",
        "--delta",
        "0.05",
        "--out",
        "j.csv",
    ]);
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(sb.path("j.csv"))
        .unwrap();
    let last = r.headers().unwrap().len() - 1;
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 32 * 5);
    assert!(rows.iter().all(|x| x[last].parse::<f64>().unwrap() < 1e-10));
    assert!(rows.iter().all(|x| x[1].parse::<f64>().unwrap() == 0.05));
}

#[test]
fn bad_grid_is_a_usage_error() {
    let sb = Sandbox::new();
    let p = sb.file("free.json", FREE);
    let out = sb.run(&[
        "jost",
        "--profile",
        s(&p),
        "--grid",
        "100",
        "--out",
        "j.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!sb.path("j.csv").exists());
}
