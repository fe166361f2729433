//! CSV and JSON emission. Every file is written to a temporary name and
//! renamed into place.

use std::path::Path;

use polariton_core::grid::Field;
use polariton_core::solver;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::run::{RunError, RunOutcome};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn temp_for(path: &Path) -> std::path::PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    path.with_file_name(format!(".{name}.partial"))
}

fn commit(tmp: &Path, path: &Path) -> Result<(), RunError> {
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
    let tmp = temp_for(path);
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| RunError::Output(e.to_string()))?;
        w.write_record(header).map_err(|e| RunError::Output(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| RunError::Output(e.to_string()))?;
        }
        w.flush()?;
    }
    commit(&tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let tmp = temp_for(path);
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Output(e.to_string()))?;
    std::fs::write(&tmp, text + "\n")?;
    commit(&tmp, path)
}

fn field_rows(f: &Field) -> Vec<Vec<String>> {
    let ax = f.grid().axis(0);
    f.values()
        .iter()
        .enumerate()
        .map(|(i, v)| vec![num(ax.point(i)), num(*v)])
        .collect()
}

/// Writes everything a single run produces into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, out: &RunOutcome) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    if cfg.wants(Format::Json) {
        write_json(&dir.join("energy_report.json"), &out.summary)?;
    }
    if cfg.wants(Format::Csv) {
        let d = &out.densities;
        write_csv(&dir.join("rho_x.csv"), &["x", "rho"], &field_rows(&d.rho_x))?;
        if !d.rho_q.is_empty() {
            let rows: Vec<Vec<String>> = d
                .rho_q
                .iter()
                .enumerate()
                .flat_map(|(a, f)| {
                    field_rows(f).into_iter().map(move |mut r| {
                        r.insert(0, (a + 1).to_string());
                        r
                    })
                })
                .collect();
            write_csv(&dir.join("rho_q.csv"), &["mode", "q", "rho"], &rows)?;
        }
        if d.rho.grid().ndim() == 2 {
            let g = d.rho.grid();
            let rows: Vec<Vec<String>> = d
                .rho
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = g.coordinates(i);
                    vec![num(c[0]), num(c[1]), num(*v)]
                })
                .collect();
            write_csv(&dir.join("rho_xq.csv"), &["x", "q", "rho"], &rows)?;
        }
        let rows: Vec<Vec<String>> = out
            .orbitals
            .iter()
            .enumerate()
            .map(|(i, o)| vec![(i + 1).to_string(), num(o.occupation), o.x_nodes.to_string()])
            .collect();
        write_csv(&dir.join("natural_orbitals.csv"), &["index", "occupation", "x_nodes"], &rows)?;
        if let Some(first) = out.orbital_densities.first() {
            let ax = first.grid().axis(0);
            let mut header = vec!["x".to_string()];
            header.extend((1..=out.orbital_densities.len()).map(|i| format!("rho_{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = (0..ax.len())
                .map(|i| {
                    let mut r = vec![num(ax.point(i))];
                    r.extend(out.orbital_densities.iter().map(|f| num(f.values()[i])));
                    r
                })
                .collect();
            write_csv(&dir.join("orbital_densities_x.csv"), &header, &rows)?;
        }
        if !out.levels.is_empty() {
            let rows: Vec<Vec<String>> = out
                .levels
                .iter()
                .enumerate()
                .map(|(i, (e, nodes))| vec![(i + 1).to_string(), num(*e), nodes.to_string()])
                .collect();
            write_csv(&dir.join("ip_levels.csv"), &["index", "eigenvalue", "x_nodes"], &rows)?;
        }
    }
    if let Some((rdm, settings)) = &out.checkpoint {
        let path = dir.join("checkpoint.bin");
        let tmp = temp_for(&path);
        solver::save_checkpoint(&tmp, rdm, &out.summary.model_hash, settings)?;
        commit(&tmp, &path)?;
    }
    Ok(())
}
