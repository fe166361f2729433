use std::path::{Path, PathBuf};
use std::process::Command;

use polariton_core::eigen::sym_eigen;
use polariton_core::grid::{make_grid, AxisSpec};
use polariton_core::model::{axis_hamiltonian, bare_potential, PotentialSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_polariton-rdmft"));
    c.env_remove("POLARITON_RDMFT_CACHE");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
[system]
kind = "he"

[cavity]
omega = 0.5535
g_over_omega = 0.3

[grid]
Lx = 8.0
dx = 0.25
Lq = 8.0
dq = 0.25

[solver]
method = "rdmft"
ES = 10
"#;

fn status(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[system\nkind = 'he'");
    let out = dir.path().join("out");
    assert_eq!(status(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out)), 2);
    assert!(!out.exists());
    let missing = dir.path().join("absent.toml");
    assert_eq!(status(bin().args(["run", "--config"]).arg(&missing).arg("--out").arg(&out)), 2);
    let no_method = write(dir.path(), "nm.toml", &SMALL.replace("method = \"rdmft\"", ""));
    assert_eq!(status(bin().args(["run", "--config"]).arg(&no_method).arg("--out").arg(&out)), 2);
    assert!(!out.exists());
}

#[test]
fn empty_scan_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scan.toml", &format!("{SMALL}\n[series]\nvariable = \"g_over_omega\"\nvalues = []\n"));
    assert_eq!(status(bin().args(["scan", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o"))), 2);
    let wrong = write(dir.path(), "wrong.toml", &format!("{SMALL}\n[series]\nvariable = \"ES\"\nvalues = [4]\n"));
    assert_eq!(status(bin().args(["scan", "--config"]).arg(&wrong).arg("--out").arg(dir.path().join("o"))), 2);
}

#[test]
fn ip_levels_are_sums_of_uncoupled_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ip.toml",
        r#"
[system]
kind = "he"
[cavity]
omega = 0.5535
lambda = 0.0
[grid]
Lx = 12.0
dx = 0.2
Lq = 12.0
dq = 0.2
[solver]
method = "ip"
M = 7
"#,
    );
    let out = dir.path().join("o");
    assert_eq!(status(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out)), 0);
    let levels: Vec<f64> = read_csv(&out.join("ip_levels.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(levels.len(), 7);

    let grid = make_grid(&[AxisSpec::new(12.0, 0.2)]).unwrap();
    let he = PotentialSpec::helium();
    let (e, _) = sym_eigen(&axis_hamiltonian(grid.axis(0), |x| bare_potential(x, &he)));
    let (p, _) = sym_eigen(&axis_hamiltonian(grid.axis(0), |q| 0.5 * 0.5535 * 0.5535 * q * q));
    let mut sums: Vec<f64> = e.iter().take(8).flat_map(|a| p.iter().take(8).map(move |b| a + b)).collect();
    sums.sort_by(f64::total_cmp);
    for (got, want) in levels.iter().zip(&sums) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn series_outputs_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &format!("{SMALL}\n[series]\nvariable = \"ES\"\nvalues = [4, 8, 12]\n"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(status(bin().args(["--profile", "desk", "--jobs", "1", "series", "--config"]).arg(&cfg).arg("--out").arg(&a)), 0);
    assert_eq!(status(bin().args(["--profile", "desk", "--jobs", "3", "series", "--config"]).arg(&cfg).arg("--out").arg(&b)), 0);
    let mut compared = 0;
    for entry in walk(&a) {
        let rel = entry.strip_prefix(&a).unwrap();
        if rel.ends_with("series_timing.csv") {
            continue;
        }
        assert_eq!(std::fs::read(&entry).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{}", rel.display());
        compared += 1;
    }
    assert!(compared > 10);
    let rows = read_csv(&a.join("series.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0][2].is_empty(), "first row has no ΔE");
    // 17 significant digits.
    assert_eq!(rows[1][1].split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn single_element_series_has_no_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &format!("{SMALL}\n[series]\nvariable = \"Lx\"\nvalues = [8.0]\n"));
    let out = dir.path().join("o");
    assert_eq!(status(bin().args(["--profile", "desk", "series", "--config"]).arg(&cfg).arg("--out").arg(&out)), 0);
    let rows = read_csv(&out.join("series.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][2].is_empty() && rows[0][3].is_empty());
}

#[test]
fn run_writes_artifacts_and_checkpoint_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.toml", SMALL);
    let out = dir.path().join("o");
    assert_eq!(status(bin().args(["--profile", "desk", "run", "--config"]).arg(&cfg).arg("--out").arg(&out)), 0);
    for f in ["energy_report.json", "rho_x.csv", "rho_q.csv", "rho_xq.csv", "natural_orbitals.csv", "checkpoint.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("energy_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    let e = report["total"].as_f64().unwrap();
    let occ: f64 = read_csv(&out.join("natural_orbitals.csv")).iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((occ - 2.0).abs() < 1e-8);

    let inspected = bin().arg("inspect").arg(out.join("checkpoint.bin")).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&inspected.stdout).unwrap();
    assert_eq!(v["kind"], "one_rdm");
    assert!((v["electron_count"].as_f64().unwrap() - 2.0).abs() < 1e-8);

    let restart = write(
        dir.path(),
        "restart.toml",
        &SMALL.replace("ES = 10", &format!("ES = 10\ncheckpoint = {:?}", out.join("checkpoint.bin").to_str().unwrap())),
    );
    let out2 = dir.path().join("o2");
    assert_eq!(status(bin().args(["--profile", "desk", "run", "--config"]).arg(&restart).arg("--out").arg(&out2)), 0);
    let again: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out2.join("energy_report.json")).unwrap()).unwrap();
    assert!((again["total"].as_f64().unwrap() - e).abs() < 1e-7);
    assert!(again["outer_iterations"].as_u64().unwrap() <= 3);

    let other = write(dir.path(), "other.toml", &std::fs::read_to_string(&restart).unwrap().replace("0.3", "0.4"));
    assert_eq!(status(bin().args(["--profile", "desk", "run", "--config"]).arg(&other).arg("--out").arg(dir.path().join("o3"))), 2);
}

#[test]
fn unconverged_run_exits_3_and_flags_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.toml", &SMALL.replace("ES = 10", "ES = 10\nmax_outer = 1\nenergy_tol = 1e-14"));
    let out = dir.path().join("o");
    assert_eq!(status(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out)), 3);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("energy_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
}

#[test]
fn memory_limit_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "x.toml", &SMALL.replace("method = \"rdmft\"\nES = 10", "method = \"exact\""));
    assert_eq!(status(bin().args(["--max-memory", "0.01", "run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o"))), 4);
    assert!(!dir.path().join("o").join("energy_report.json").exists());
}

#[test]
fn cache_reuses_basis_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write(dir.path(), "r.toml", SMALL);
    let run = |out: &str| {
        let mut c = bin();
        c.env("POLARITON_RDMFT_CACHE", &cache).args(["--profile", "desk", "run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(out));
        status(&mut c)
    };
    assert_eq!(run("a"), 0);
    let entries: Vec<_> = std::fs::read_dir(&cache).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
    assert_eq!(run("b"), 0);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 2);
    for f in ["rho_x.csv", "natural_orbitals.csv", "energy_report.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn warm_scan_matches_cold_scan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "scan.toml",
        &format!("{}\n[series]\nvariable = \"g_over_omega\"\nvalues = [0.1, 0.3, 0.5]\n", SMALL.replace("rdmft", "hf")),
    );
    let warm = dir.path().join("w");
    let cold = dir.path().join("c");
    assert_eq!(status(bin().args(["--profile", "desk", "scan", "--config"]).arg(&cfg).arg("--out").arg(&warm)), 0);
    assert_eq!(status(bin().args(["--profile", "desk", "scan", "--no-warm-start", "--config"]).arg(&cfg).arg("--out").arg(&cold)), 0);
    let w = read_csv(&warm.join("scan.csv"));
    let c = read_csv(&cold.join("scan.csv"));
    assert_eq!(w.len(), 3);
    for (a, b) in w.iter().zip(&c) {
        let (ea, eb): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((ea - eb).abs() < 1e-6, "{ea} {eb}");
        let nph: f64 = a[2].parse().unwrap();
        assert!(nph > 0.0);
        let drho: f64 = a[8].parse().unwrap();
        assert!(drho > 0.0);
    }
}
