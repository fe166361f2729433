//! Single-configuration execution.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use polariton_core::container::Container;
use polariton_core::exact::{self, ExactError, ExactOptions};
use polariton_core::grid::{Field, UniformGrid};
use polariton_core::model::ModelSpec;
use polariton_core::observables::{mode_energy_from_matrix, mode_occupation, natural_orbital_report, DensityBundle, OrbitalSummary};
use polariton_core::solver::{self, Functional, OneRdm, ScfSettings, SolverError};
use polariton_core::spbasis::{self, BasisError, IntegralTable, OrbitalSet};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Method, Profile, RunConfig};

pub const CACHE_ENV: &str = "POLARITON_RDMFT_CACHE";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Basis(BasisError),
    #[error(transparent)]
    Exact(ExactError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Output(String),
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::CheckpointMismatch => ConfigError::Invalid("checkpoint belongs to a different model or basis".into()).into(),
            SolverError::Model(m) => ConfigError::Invalid(m.to_string()).into(),
            e => RunError::Solver(e),
        }
    }
}

impl From<BasisError> for RunError {
    fn from(e: BasisError) -> Self {
        match e {
            BasisError::Model(m) => ConfigError::Invalid(m.to_string()).into(),
            e => RunError::Basis(e),
        }
    }
}

impl From<ExactError> for RunError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::MemoryBudgetExceeded { required, cap } => {
                RunError::Resource(format!("exact solver needs {required} bytes, limit is {cap}"))
            }
            ExactError::Model(m) => ConfigError::Invalid(m.to_string()).into(),
            ExactError::ElectronCount(_) | ExactError::GridShape { .. } => ConfigError::Invalid(e.to_string()).into(),
            e => RunError::Exact(e),
        }
    }
}

impl RunError {
    /// 2 for input errors, 4 for resource limits, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Resource(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Context {
    pub profile: Profile,
    pub max_memory: usize,
    pub cache: Option<PathBuf>,
}

impl Context {
    pub fn new(profile: Profile, max_memory_gib: f64) -> Self {
        Self {
            profile,
            max_memory: (max_memory_gib * (1u64 << 30) as f64) as usize,
            cache: std::env::var_os(CACHE_ENV).map(PathBuf::from),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub method: Method,
    pub converged: bool,
    /// Electronic energy plus nuclear repulsion.
    pub total: f64,
    pub electronic: f64,
    pub nuclear_repulsion: f64,
    pub one_body: Option<f64>,
    pub kinetic: Option<f64>,
    pub hartree: Option<f64>,
    pub exchange_correlation: Option<f64>,
    pub photon_mode_energy: Vec<f64>,
    pub mode_occupation: Vec<f64>,
    pub mu: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub hermiticity: Option<f64>,
    pub electron_count: f64,
    pub basis_size: Option<usize>,
    pub model_hash: String,
}

/// State carried between scan rows.
#[derive(Debug, Clone)]
pub struct WarmState {
    pub basis: OrbitalSet,
    pub rdm: OneRdm,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: EnergySummary,
    pub densities: DensityBundle,
    pub orbitals: Vec<OrbitalSummary>,
    /// x-marginals of the reported natural orbitals.
    pub orbital_densities: Vec<Field>,
    /// IP energies and x-node counts (ip method only).
    pub levels: Vec<(f64, usize)>,
    pub checkpoint: Option<(OneRdm, ScfSettings)>,
    pub warm: Option<WarmState>,
}

impl RunOutcome {
    pub fn occupations(&self) -> Vec<f64> {
        self.orbitals.iter().map(|o| o.occupation).collect()
    }
}

/// Runs one configuration. `basis` may hold a larger IP set for the same
/// model and grid; it is truncated to the configured size.
pub fn execute(cfg: &RunConfig, ctx: &Context, basis: Option<&OrbitalSet>, warm: Option<&WarmState>) -> Result<RunOutcome, RunError> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    match cfg.method() {
        Method::Exact => run_exact(cfg, ctx, &model, &grid),
        Method::Ip => {
            let m = cfg.basis_size().expect("validated");
            let basis = obtain_basis(ctx, &model, &grid, m, basis)?;
            Ok(ip_outcome(&model, &basis))
        }
        Method::Hf | Method::Rdmft => run_basis(cfg, ctx, &model, &grid, basis, warm),
    }
}

fn photon_parts(model: &ModelSpec, energy_of: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let energies: Vec<f64> = (0..model.n_modes()).map(energy_of).collect();
    let occ = energies
        .iter()
        .zip(&model.modes)
        .map(|(&e, m)| mode_occupation(e, m.omega, model.n_electrons))
        .collect();
    (energies, occ)
}

fn run_exact(cfg: &RunConfig, ctx: &Context, model: &ModelSpec, grid: &UniformGrid) -> Result<RunOutcome, RunError> {
    let n = grid.len();
    let dim = n * n;
    // Potential plus the smallest Krylov block the solver accepts.
    let floor = dim * 8 * 11;
    if floor > ctx.max_memory {
        return Err(RunError::Resource(format!("exact solver needs at least {floor} bytes, limit is {}", ctx.max_memory)));
    }
    let opts = ExactOptions {
        memory_cap: ctx.max_memory - dim * 8,
        ..Default::default()
    };
    let spectrum = exact::exact_ground_state(model, grid, &opts)?;
    let state = &spectrum.states[0];
    let k = cfg.solver.orbitals.unwrap_or(8);
    let nos = exact::dressed_1rdm(state, k)?;
    let densities = exact::densities(state);
    let (pe, po) = photon_parts(model, |a| exact::photon_mode_energy(state, model, a));
    let repulsion = model.potential.nuclear_repulsion();
    let summary = EnergySummary {
        method: Method::Exact,
        converged: true,
        total: spectrum.energies[0] + repulsion,
        electronic: spectrum.energies[0],
        nuclear_repulsion: repulsion,
        one_body: None,
        kinetic: None,
        hartree: None,
        exchange_correlation: None,
        photon_mode_energy: pe,
        mode_occupation: po,
        mu: None,
        outer_iterations: None,
        hermiticity: None,
        electron_count: nos.trace,
        basis_size: None,
        model_hash: model.hash(),
    };
    Ok(RunOutcome {
        summary,
        densities,
        orbitals: natural_orbital_report(grid, &nos.occupations, &nos.orbitals),
        orbital_densities: orbital_marginals(grid, &nos.orbitals),
        levels: Vec::new(),
        checkpoint: None,
        warm: None,
    })
}

fn orbital_marginals(grid: &UniformGrid, orbitals: &DMatrix<f64>) -> Vec<Field> {
    orbitals
        .column_iter()
        .map(|c| {
            let sq = c.iter().map(|v| v * v).collect();
            polariton_core::observables::marginal(&Field::new(grid.clone(), sq).expect("grid length"), 0)
        })
        .collect()
}

fn ip_outcome(model: &ModelSpec, basis: &OrbitalSet) -> RunOutcome {
    let grid = basis.grid();
    let levels: Vec<(f64, usize)> = basis
        .eigenvalues()
        .iter()
        .zip(basis.orbitals().column_iter())
        .map(|(&e, c)| (e, spbasis::x_node_count(grid, c.as_slice(), 1e-6)))
        .collect();
    let rdm = OneRdm::aufbau(basis.len(), model.n_electrons);
    let occupied: f64 = rdm.occupations.iter().zip(basis.eigenvalues()).map(|(n, e)| n * e).sum();
    let densities = rdm.density(basis);
    let repulsion = model.potential.nuclear_repulsion();
    let summary = EnergySummary {
        method: Method::Ip,
        converged: true,
        total: occupied + repulsion,
        electronic: occupied,
        nuclear_repulsion: repulsion,
        one_body: Some(occupied),
        kinetic: None,
        hartree: None,
        exchange_correlation: None,
        photon_mode_energy: Vec::new(),
        mode_occupation: Vec::new(),
        mu: None,
        outer_iterations: None,
        hermiticity: None,
        electron_count: rdm.n_electrons(),
        basis_size: Some(basis.len()),
        model_hash: model.hash(),
    };
    RunOutcome {
        summary,
        densities,
        orbitals: natural_orbital_report(grid, &rdm.occupations, basis.orbitals()),
        orbital_densities: orbital_marginals(grid, basis.orbitals()),
        levels,
        checkpoint: None,
        warm: None,
    }
}

fn run_basis(
    cfg: &RunConfig,
    ctx: &Context,
    model: &ModelSpec,
    grid: &UniformGrid,
    prebuilt: Option<&OrbitalSet>,
    warm: Option<&WarmState>,
) -> Result<RunOutcome, RunError> {
    let m = cfg.basis_size().expect("validated");
    let basis = obtain_basis(ctx, model, grid, m, prebuilt)?;
    let table = obtain_table(ctx, model, &basis)?;
    let functional = match cfg.method() {
        Method::Hf => Functional::HartreeFock,
        _ => Functional::Muller,
    };
    let settings = cfg.scf(ctx.profile);
    let initial = match (&cfg.solver.checkpoint, warm) {
        (Some(path), _) => Some(solver::load_checkpoint(path, &model.hash(), m)?),
        (None, Some(w)) => transfer(w, &basis),
        (None, None) => None,
    };
    let out = solver::solve(&basis, &table, functional, initial, &settings)?;
    let d = out.rdm.matrix();
    let (pe, po) = photon_parts(model, |a| mode_energy_from_matrix(&table, &d, a));
    let repulsion = model.potential.nuclear_repulsion();
    let summary = EnergySummary {
        method: cfg.method(),
        converged: out.converged,
        total: out.energy.total + repulsion,
        electronic: out.energy.total,
        nuclear_repulsion: repulsion,
        one_body: Some(out.energy.one_body),
        kinetic: Some(out.energy.kinetic),
        hartree: Some(out.energy.hartree),
        exchange_correlation: Some(out.energy.exchange_correlation),
        photon_mode_energy: pe,
        mode_occupation: po,
        mu: out.mu,
        outer_iterations: Some(out.outer_iterations),
        hermiticity: Some(out.hermiticity),
        electron_count: out.rdm.n_electrons(),
        basis_size: Some(m),
        model_hash: model.hash(),
    };
    let orbitals_on_grid = out.rdm.orbitals_on_grid(&basis);
    Ok(RunOutcome {
        summary,
        densities: out.rdm.density(&basis),
        orbitals: natural_orbital_report(grid, &out.rdm.occupations, &orbitals_on_grid),
        orbital_densities: orbital_marginals(grid, &orbitals_on_grid),
        levels: Vec::new(),
        checkpoint: Some((out.rdm.clone(), settings)),
        warm: Some(WarmState { basis, rdm: out.rdm }),
    })
}

/// Projects the previous natural orbitals onto the new basis and
/// reorthonormalizes them; `None` if the grids differ.
fn transfer(w: &WarmState, basis: &OrbitalSet) -> Option<OneRdm> {
    if w.basis.grid() != basis.grid() || w.rdm.len() != basis.len() {
        return None;
    }
    let dv = basis.grid().volume_element();
    let overlap = basis.orbitals().transpose() * w.basis.orbitals() * dv;
    let c = overlap * &w.rdm.coefficients;
    let s = c.transpose() * &c;
    let (vals, vecs) = polariton_core::eigen::sym_eigen(&s);
    if vals.iter().any(|&v| v < 1e-8) {
        return None;
    }
    let inv_sqrt = &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| v.powf(-0.5)))) * vecs.transpose();
    Some(OneRdm {
        occupations: w.rdm.occupations.clone(),
        coefficients: c * inv_sqrt,
    })
}

/// Rough peak bytes for building an `m`-function basis and its table.
pub fn basis_memory(grid: &UniformGrid, m: usize) -> usize {
    let n = grid.len();
    let nx = grid.axis(0).len();
    let eigen = if grid.ndim() == 1 || n <= 1500 {
        3 * n * n
    } else {
        let block = m + (m / 4).max(8);
        12 * n * block
    };
    8 * (eigen + m * m * nx + nx * nx + 4 * n * m)
}

fn cache_key(model: &ModelSpec, grid: &UniformGrid, m: usize) -> String {
    let mut h = Sha256::new();
    h.update(model.hash().as_bytes());
    h.update(serde_json::to_vec(grid).expect("grid serializes"));
    h.update(m.to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

fn cache_path(ctx: &Context, what: &str, model: &ModelSpec, grid: &UniformGrid, m: usize) -> Option<PathBuf> {
    ctx.cache.as_ref().map(|dir| dir.join(format!("{what}-{}.bin", cache_key(model, grid, m))))
}

fn store(path: &Path, c: &Container) {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let ok = path.parent().map(std::fs::create_dir_all).transpose().is_ok() && c.write(&tmp).is_ok() && std::fs::rename(&tmp, path).is_ok();
    if !ok {
        let _ = std::fs::remove_file(&tmp);
        log::warn!("could not write cache entry {}", path.display());
    }
}

pub fn obtain_basis(ctx: &Context, model: &ModelSpec, grid: &UniformGrid, m: usize, prebuilt: Option<&OrbitalSet>) -> Result<OrbitalSet, RunError> {
    if let Some(b) = prebuilt {
        if b.grid() == grid && b.len() >= m {
            return Ok(b.truncated(m)?);
        }
    }
    let need = basis_memory(grid, m);
    if need > ctx.max_memory {
        return Err(RunError::Resource(format!("basis of {m} functions needs about {need} bytes, limit is {}", ctx.max_memory)));
    }
    let path = cache_path(ctx, "basis", model, grid, m);
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        match Container::read(p).map_err(BasisError::from).and_then(|c| {
            if c.model_hash != model.hash() {
                return Err(BasisError::Mismatch);
            }
            OrbitalSet::from_container(&c)
        }) {
            Ok(b) if b.grid() == grid && b.len() == m => return Ok(b),
            Ok(_) | Err(_) => log::warn!("ignoring stale cache entry {}", p.display()),
        }
    }
    let basis = spbasis::ip_solve(model, grid, m)?;
    if let Some(p) = path {
        store(&p, &basis.to_container(&model.hash()));
    }
    Ok(basis)
}

fn obtain_table(ctx: &Context, model: &ModelSpec, basis: &OrbitalSet) -> Result<IntegralTable, RunError> {
    let path = cache_path(ctx, "table", model, basis.grid(), basis.len());
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        match Container::read(p).map_err(BasisError::from).and_then(|c| IntegralTable::from_container(&c)) {
            Ok(t) if t.model_hash == model.hash() && t.len() == basis.len() => return Ok(t),
            _ => log::warn!("ignoring stale cache entry {}", p.display()),
        }
    }
    let table = spbasis::build_integrals(basis, model)?;
    if let Some(p) = path {
        store(&p, &table.to_container());
    }
    Ok(table)
}
