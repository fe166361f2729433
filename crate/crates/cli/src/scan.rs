//! Sweeps over bond length or coupling with optional warm starts.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, Format, RunConfig, Variable};
use crate::output::{num, opt, write_csv, write_json, write_run};
use crate::run::{execute, Context, RunError, RunOutcome, WarmState};
use crate::series::max_deviation;

/// Occupations listed per row.
const REPORTED_OCCUPATIONS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub energy: Option<f64>,
    pub n_ph: Vec<f64>,
    pub occupations: Vec<f64>,
    /// `max_x |ρ(x) − ρ_{λ=0}(x)|`.
    pub delta_rho_ref: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub variable: String,
    pub warm_start: bool,
    pub rows: Vec<ScanRow>,
}

impl ScanReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged && r.error.is_none())
    }
}

pub fn run_scan(cfg: &RunConfig, ctx: &Context, out: &Path, jobs: usize, warm_start: bool) -> Result<ScanReport, RunError> {
    let Some(spec) = cfg.series.clone() else {
        return Err(ConfigError::Invalid("scan needs a [series] section".into()).into());
    };
    if !matches!(spec.variable, Variable::D | Variable::GOverOmega) {
        return Err(ConfigError::Invalid("scan variable must be d or g_over_omega".into()).into());
    }
    let values = spec.values.clone();
    let variable = spec.variable;
    let configs: Vec<RunConfig> = values.iter().map(|&v| cfg.with_value(variable, v)).collect::<Result<_, _>>()?;
    let dir = |i: usize| out.join("rows").join(format!("{:03}-{}={}", i, variable.name(), values[i]));

    let run_row = |i: usize, warm: Option<&WarmState>| {
        execute(&configs[i], ctx, None, warm).and_then(|o| {
            write_run(&dir(i), &configs[i], &o)?;
            Ok(o)
        })
    };
    let results: Vec<Result<RunOutcome, RunError>> = if warm_start {
        let mut warm: Option<WarmState> = None;
        let mut acc = Vec::with_capacity(values.len());
        for i in 0..values.len() {
            let r = run_row(i, warm.as_ref());
            if let Ok(o) = &r {
                warm = o.warm.clone();
            }
            acc.push(r);
        }
        acc
    } else {
        pool(jobs)?.install(|| (0..values.len()).into_par_iter().map(|i| run_row(i, None)).collect())
    };

    // λ=0 references: one for a coupling sweep, one per bond length otherwise.
    let coupled = cfg.cavity.is_some();
    let references: Vec<Option<Result<RunOutcome, RunError>>> = match variable {
        Variable::GOverOmega => {
            let zero = values.iter().position(|&v| v == 0.0);
            let shared = match zero {
                Some(_) => None,
                None => Some(execute(&cfg.with_value(variable, 0.0)?, ctx, None, None)),
            };
            (0..values.len())
                .map(|_| match (&shared, zero) {
                    (Some(r), _) => Some(clone_result(r)),
                    (None, Some(k)) => Some(clone_result(&results[k])),
                    _ => None,
                })
                .collect()
        }
        _ if coupled => pool(jobs)?.install(|| {
            configs
                .par_iter()
                .map(|c| Some(execute(&c.uncoupled(), ctx, None, None)))
                .collect()
        }),
        _ => values.iter().map(|_| None).collect(),
    };

    let rows = results
        .iter()
        .zip(&references)
        .zip(&values)
        .map(|((r, reference), &value)| match r {
            Ok(o) => {
                let delta = match reference {
                    Some(Ok(z)) => Some(max_deviation(&o.densities.rho_x, &z.densities.rho_x)),
                    Some(Err(_)) => None,
                    None => Some(0.0),
                };
                let mut occ = o.occupations();
                occ.truncate(REPORTED_OCCUPATIONS);
                ScanRow {
                    value,
                    energy: Some(o.summary.total),
                    n_ph: o.summary.mode_occupation.clone(),
                    occupations: occ,
                    delta_rho_ref: delta,
                    converged: o.summary.converged,
                    error: None,
                }
            }
            Err(e) => ScanRow {
                value,
                energy: None,
                n_ph: Vec::new(),
                occupations: Vec::new(),
                delta_rho_ref: None,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let report = ScanReport {
        variable: variable.name().to_string(),
        warm_start,
        rows,
    };
    write_scan(out, cfg, &report)?;
    Ok(report)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Output(e.to_string()))
}

fn clone_result(r: &Result<RunOutcome, RunError>) -> Result<RunOutcome, RunError> {
    match r {
        Ok(o) => Ok(o.clone()),
        Err(e) => Err(RunError::Output(e.to_string())),
    }
}

fn write_scan(out: &Path, cfg: &RunConfig, report: &ScanReport) -> Result<(), RunError> {
    std::fs::create_dir_all(out)?;
    if cfg.wants(Format::Csv) {
        let modes = cfg.cavity.as_ref().map_or(0, |c| c.modes);
        let mut header = vec!["value".to_string(), "energy".to_string()];
        header.extend((1..=modes).map(|a| format!("n_ph_{a}")));
        header.extend((1..=REPORTED_OCCUPATIONS).map(|i| format!("n_{i}")));
        header.extend(["delta_rho_ref", "converged", "error"].map(String::from));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![num(r.value), opt(r.energy)];
                row.extend((0..modes).map(|a| opt(r.n_ph.get(a).copied())));
                row.extend((0..REPORTED_OCCUPATIONS).map(|i| opt(r.occupations.get(i).copied())));
                row.push(opt(r.delta_rho_ref));
                row.push(r.converged.to_string());
                row.push(r.error.clone().unwrap_or_default());
                row
            })
            .collect();
        write_csv(&out.join("scan.csv"), &header, &rows)?;
    }
    if cfg.wants(Format::Json) {
        write_json(&out.join("scan.json"), report)?;
    }
    Ok(())
}
