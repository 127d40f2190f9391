use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nodalflow_cli::Manifest;
use nodalflow_core::dump::read_binary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nodalflow"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

// A cheap 1D case: coarse grid, few starts.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("small.json");
    let body = format!(
        r#"{{ "eps": 0.5, "dim": 1, "n": 128, "coupling": false,
            "nonlinearity": {{ "p": 4.5 }},
            "V": {{ "family": "gaussian-well", "low": 1.0, "high": 2.0, "width": 2.0 }},
            "K": {{ "family": "constant", "value": 1.0 }},
            "domain": {{ "radius": 4.0 }},
            "seed": 3, "k": 1, "search": {{ "budget": 8 }} {extra} }}"#
    );
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn shipped_examples_validate() {
    for name in ["reduced-1d.json", "reduced-1d-sweep.json", "coupled-3d.json"] {
        let o = run(&["validate", "--config", example(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", text(&o));
    }
}

#[test]
fn beta_out_of_range_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "beta": 3.0"#);
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("β range"), "{}", text(&o));
}

#[test]
fn missing_field_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, r#"{ "eps": 0.5, "n": 64, "coupling": false }"#).unwrap();
    let o = run(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("dim"), "{}", text(&o));
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let o = run(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn k_zero_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--k", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m.solutions.is_empty());
    assert_eq!(m.k, 0);
}

#[test]
fn sweep_rejects_empty_and_unsorted_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();
    let o = run(&["sweep", "--config", c, "--eps", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = run(&["sweep", "--config", c, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = run(&["sweep", "--config", c, "--eps", "0.25,0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn solve_is_reproducible_and_manifest_paths_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    let sa = std::fs::read(a.join("summary.csv")).unwrap();
    let sb = std::fs::read(b.join("summary.csv")).unwrap();
    assert_eq!(sa, sb);
    assert!(String::from_utf8(sa).unwrap().starts_with(nodalflow_cli::SUMMARY_HEADER));

    let ma: Manifest = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let mb: Manifest = serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.solutions.len(), 1);
    for e in &ma.solutions {
        assert!(e.report.exists() && e.history.exists());
        let dump = read_binary(&e.field).unwrap();
        assert_eq!(dump.eps, 0.5);
        assert_eq!(dump.field.values().len(), 128);
    }
}

#[test]
fn singleton_sweep_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let s = dir.path().join("s");
    let w = dir.path().join("w");
    let c = cfg.to_str().unwrap();
    assert_eq!(run(&["solve", "--config", c, "--out", s.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["sweep", "--config", c, "--eps", "0.5", "--out", w.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(std::fs::read(s.join("summary.csv")).unwrap(), std::fs::read(w.join("summary.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = dir.path().join("a");
    let c = cfg.to_str().unwrap();
    let o = run(&["solve", "--config", c, "--seed", "11", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.seed, 11);
}
