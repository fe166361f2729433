//! Convergence series: one run per value of a single variable.

use std::path::Path;
use std::time::Instant;

use polariton_core::grid::Field;
use polariton_core::observables::DensityBundle;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, Method, RunConfig, Variable};
use crate::output::{num, opt, write_csv, write_json, write_run};
use crate::run::{execute, obtain_basis, Context, RunError, RunOutcome};

/// Linear interpolation of a 1D field, zero outside its box.
fn sample(f: &Field, x: f64) -> f64 {
    let ax = f.grid().axis(0);
    let h = ax.spacing();
    let t = (x - ax.point(0)) / h;
    if t < -1e-9 || t > (ax.len() - 1) as f64 + 1e-9 {
        return 0.0;
    }
    let i = (t.floor().max(0.0) as usize).min(ax.len() - 1);
    let frac = t - i as f64;
    let v = f.values();
    if i + 1 >= ax.len() || frac.abs() < 1e-9 {
        return v[i];
    }
    v[i] * (1.0 - frac) + v[i + 1] * frac
}

/// `max |a − b|` over the points of both fields; grids may differ.
pub fn max_deviation(a: &Field, b: &Field) -> f64 {
    let one_way = |p: &Field, r: &Field| {
        let ax = p.grid().axis(0);
        p.values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - sample(r, ax.point(i))).abs())
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Largest deviation of the electronic and photonic marginals.
pub fn density_deviation(a: &DensityBundle, b: &DensityBundle) -> f64 {
    let mut d = max_deviation(&a.rho_x, &b.rho_x);
    for (qa, qb) in a.rho_q.iter().zip(&b.rho_q) {
        d = d.max(max_deviation(qa, qb));
    }
    d
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesRow {
    pub value: f64,
    pub energy: Option<f64>,
    pub delta_e: Option<f64>,
    pub delta_rho: Option<f64>,
    pub delta_e_ref: Option<f64>,
    pub delta_rho_ref: Option<f64>,
    pub converged: bool,
    pub threshold_met: bool,
    pub error: Option<String>,
    /// Reported in `series_timing.csv` only, so the other outputs stay
    /// reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub variable: String,
    pub reference: Option<f64>,
    pub energy_tol: f64,
    pub density_tol: f64,
    /// First value whose ΔE and Δρ against the previous row are both
    /// below threshold.
    pub first_converged_value: Option<f64>,
    pub rows: Vec<SeriesRow>,
}

impl SeriesReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged && r.error.is_none())
    }
}

fn row_dir(out: &Path, index: usize, variable: Variable, value: f64) -> std::path::PathBuf {
    out.join("rows").join(format!("{:03}-{}={}", index, variable.name(), value))
}

pub fn run_series(cfg: &RunConfig, ctx: &Context, out: &Path, jobs: usize) -> Result<SeriesReport, RunError> {
    let spec = cfg.series.clone().expect("series section checked by caller");
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let variable = spec.variable;
    let reference = spec.reference.or(if variable == Variable::Es { values.last().copied() } else { None });
    let energy_tol = spec.energy_tol.unwrap_or(cfg.scf(ctx.profile).energy_tol);
    let density_tol = spec.density_tol.unwrap_or(1e-5);
    let configs: Vec<RunConfig> = values.iter().map(|&v| cfg.with_value(variable, v)).collect::<Result<_, _>>()?;

    // ES rows share the IP set of the largest basis, truncated per row.
    let shared = if variable == Variable::Es && cfg.method() != Method::Exact {
        let last = configs.last().expect("non-empty");
        let m = last.basis_size().expect("validated");
        Some(obtain_basis(ctx, &last.model()?, &last.grid()?, m, None)?)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Output(e.to_string()))?;
    let results: Vec<(Result<RunOutcome, RunError>, f64)> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let t = Instant::now();
                let r = execute(c, ctx, shared.as_ref(), None).and_then(|o| {
                    write_run(&row_dir(out, i, variable, values[i]), c, &o)?;
                    Ok(o)
                });
                (r, t.elapsed().as_secs_f64())
            })
            .collect()
    });

    let ref_index = reference.and_then(|r| values.iter().position(|&v| v == r));
    let mut rows = Vec::with_capacity(values.len());
    let mut first_converged_value = None;
    let mut previous: Option<&RunOutcome> = None;
    for (i, (res, wall)) in results.iter().enumerate() {
        let (energy, delta_e, delta_rho, delta_e_ref, delta_rho_ref, converged, error) = match res {
            Ok(o) => {
                let e = o.summary.total;
                let (de, dr) = previous
                    .map(|p| ((e - p.summary.total).abs(), density_deviation(&o.densities, &p.densities)))
                    .unzip();
                let (der, drr) = ref_index
                    .and_then(|k| results[k].0.as_ref().ok())
                    .map(|r| ((e - r.summary.total).abs(), density_deviation(&o.densities, &r.densities)))
                    .unzip();
                previous = Some(o);
                (Some(e), de, dr, der, drr, o.summary.converged, None)
            }
            Err(err) => {
                log::warn!("series row {} = {} failed: {err}", variable.name(), values[i]);
                (None, None, None, None, None, false, Some(err.to_string()))
            }
        };
        let threshold_met = matches!((delta_e, delta_rho), (Some(de), Some(dr)) if de < energy_tol && dr < density_tol);
        if threshold_met && first_converged_value.is_none() {
            first_converged_value = Some(values[i]);
        }
        rows.push(SeriesRow {
            value: values[i],
            energy,
            delta_e,
            delta_rho,
            delta_e_ref,
            delta_rho_ref,
            converged,
            threshold_met,
            error,
            wall_time: *wall,
        });
    }
    let report = SeriesReport {
        variable: variable.name().to_string(),
        reference,
        energy_tol,
        density_tol,
        first_converged_value,
        rows,
    };
    write_series(out, cfg, &report)?;
    Ok(report)
}

/// `series.csv` holds only deterministic columns; wall times go to
/// `series_timing.csv`.
fn write_series(out: &Path, cfg: &RunConfig, report: &SeriesReport) -> Result<(), RunError> {
    std::fs::create_dir_all(out)?;
    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.value),
                    opt(r.energy),
                    opt(r.delta_e),
                    opt(r.delta_rho),
                    opt(r.delta_e_ref),
                    opt(r.delta_rho_ref),
                    r.converged.to_string(),
                    r.threshold_met.to_string(),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        write_csv(
            &out.join("series.csv"),
            &["value", "energy", "delta_e", "delta_rho", "delta_e_ref", "delta_rho_ref", "converged", "threshold_met", "error"],
            &rows,
        )?;
        let timing: Vec<Vec<String>> = report.rows.iter().map(|r| vec![num(r.value), format!("{:.3}", r.wall_time)]).collect();
        write_csv(&out.join("series_timing.csv"), &["value", "wall_time_s"], &timing)?;
    }
    if cfg.wants(Format::Json) {
        write_json(&out.join("series.json"), report)?;
    }
    Ok(())
}
