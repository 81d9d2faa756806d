use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sbd(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.ini");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sbd"))
        .current_dir(dir)
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Data rows of a CSV artifact, after checking its provenance line.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# config_hash=") && first.contains(" seed="), "{first}");
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const SMALL: &str = "[model]\nhalf_side = 2\n\n[simulation]\nlambda_fraction = 0.5\nhorizon = 60\nwarmup = 10\nsnapshot_count = 3\nseed = 7\n";

#[test]
fn simulate_writes_artifacts_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let first = sbd(dir.path(), SMALL, &["--out", "a", "simulate"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = sbd(dir.path(), SMALL, &["--out", "b", "simulate"]);
    assert!(second.status.success());

    for name in ["metrics.json", "trajectory.csv", "events.csv", "snapshots/snapshot_0002.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 7);
    assert_eq!(metrics["config_hash"].as_str().unwrap().len(), 64);
    assert!(metrics["beta_hat"].as_f64().unwrap() > 0.0);
    table(&dir.path().join("a/trajectory.csv"));

    let reseeded = sbd(dir.path(), SMALL, &["--out", "c", "--seed", "8", "simulate"]);
    assert!(reseeded.status.success());
    assert_ne!(fs::read(dir.path().join("a/events.csv")).unwrap(), fs::read(dir.path().join("c/events.csv")).unwrap());
}

#[test]
fn power_law_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = sbd(dir.path(), "[model]\npathloss = power_law\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no stationary regime"), "{err}");
    assert!(!dir.path().join("out/metrics.json").exists());
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    for bad in ["[model]\nhalfside = 5\n", "[extra]\n", "[model]\nnoise = -1\n", "[simulation]\nhorizon = ten\n"] {
        let out = sbd(dir.path(), bad, &["simulate"]);
        assert_eq!(out.status.code(), Some(2), "{bad:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn heuristic_sweep_flags_supercritical_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = "[heuristics]\nlambda_fractions = 0.2, 0.5, 0.9, 1.1, 1.5\ntol = 1e-9\n";
    let out = sbd(dir.path(), cfg, &["--out", "h", "heuristics"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&dir.path().join("h/sweep.csv"));
    assert_eq!(rows.len(), 5);
    let (status, defect) = (column(&header, "status_f"), column(&header, "defect_f"));
    for (row, expect) in rows.iter().zip(["converged", "converged", "converged", "diverged", "diverged"]) {
        assert_eq!(row[status], expect);
        if expect == "converged" {
            assert!(row[defect].parse::<f64>().unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn stats_on_uniform_snapshots_match_complete_randomness() {
    let dir = TempDir::new().unwrap();
    let snaps = dir.path().join("snaps");
    fs::create_dir(&snaps).unwrap();
    // Independent uniform receivers from a small LCG, 20 files of 400 points.
    let mut state: u64 = 12345;
    let mut uniform = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for k in 0..20 {
        let mut text = String::from("link_id,rx_x,rx_y,tx_x,tx_y,residual_bits,birth_time\n");
        for id in 0..400 {
            let (x, y) = (10.0 * uniform() - 5.0, 10.0 * uniform() - 5.0);
            text.push_str(&format!("{id},{x},{y},{x},{y},1,0\n"));
        }
        fs::write(snaps.join(format!("s_{k:02}.csv")), text).unwrap();
    }
    let cfg = "[simulation]\nlambda = 0.5\n\n[stats]\nradii = 0.25, 0.5, 1\nprobes = 20\n";
    let out = sbd(dir.path(), cfg, &["--out", "st", "stats", "--snapshots", "snaps/*.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = table(&dir.path().join("st/ripley.csv"));
    let (r, k) = (column(&header, "r"), column(&header, "k_hat"));
    for row in &rows {
        let r: f64 = row[r].parse().unwrap();
        let k: f64 = row[k].parse().unwrap();
        assert!((k / (PI * r * r) - 1.0).abs() < 0.1, "K({r}) = {k}");
    }
    for name in ["laplace.csv", "shot_noise.csv", "rate_conservation.csv"] {
        assert!(!table(&dir.path().join("st").join(name)).1.is_empty());
    }
}

#[test]
fn stats_rejects_degenerate_snapshots() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("one.csv"), "link_id,rx_x,rx_y,tx_x,tx_y,residual_bits,birth_time\n0,0,0,0,0,1,0\n")
        .unwrap();
    let out = sbd(dir.path(), "", &["stats", "--snapshots", "one.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn chain_runs_and_dominates() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nhalf_side = 1\n\n[chain]\nepsilon = 0.5\nhorizon = 50\ndominance_events = 2000\n";
    let out = sbd(dir.path(), cfg, &["--out", "ch", "chain"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("ch/dominance.json")).unwrap()).unwrap();
    assert_eq!(report["violations"], 0);
    assert_eq!(report["events"], 2000);
    let (header, rows) = table(&dir.path().join("ch/fluid.csv"));
    assert_eq!(header.len(), 1 + 16);
    let last: Vec<f64> = rows.last().unwrap()[1..].iter().map(|v| v.parse().unwrap()).collect();
    assert!(last.iter().all(|&x| x == 0.0), "fluid limit should drain below the bound");
    table(&dir.path().join("ch/chain.csv"));
}

#[test]
fn figure_three_writes_one_table_per_intensity() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nhalf_side = 2\n\n[simulation]\nhorizon = 100\nwarmup = 20\n";
    let out = sbd(dir.path(), cfg, &["--out", "f", "figures", "fig3", "--scale", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["0.985", "0.697", "0.141"] {
        let (_, rows) = table(&dir.path().join(format!("f/fig3_{f}.csv")));
        assert_eq!(rows.len(), 40);
    }
}
