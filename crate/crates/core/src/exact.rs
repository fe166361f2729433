//! Exact two-electron reference: Lanczos on the spatially symmetric
//! two-particle sector of the bare or dressed Hamiltonian.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eigen::{self, lanczos, sym_eigen, EigenError, LanczosOptions};
use crate::grid::{add_second_derivative, dot, Axis, Field, UniformGrid};
use crate::model::{ModelError, ModelSpec};
use crate::observables::DensityBundle;

pub const DEFAULT_MEMORY_CAP: usize = 2 << 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("the exact solver handles two electrons, model has {0}")]
    ElectronCount(usize),
    #[error("grid with {axes} axes does not fit a model with {modes} modes")]
    GridShape { axes: usize, modes: usize },
    #[error("Lanczos vectors need {required} bytes, cap is {cap}")]
    MemoryBudgetExceeded { required: usize, cap: usize },
    #[error("resonance needs a model without modes")]
    NotBare,
    #[error("bond scan needs a two-centre potential")]
    NotMolecular,
}

#[derive(Debug, Clone)]
pub struct ExactOptions {
    pub n_states: usize,
    pub max_basis: usize,
    pub max_matvecs: usize,
    pub residual_tol: f64,
    pub energy_tol: f64,
    /// Byte cap for the stored Lanczos vectors.
    pub memory_cap: usize,
    pub seed: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            n_states: 1,
            max_basis: 40,
            max_matvecs: 50_000,
            residual_tol: 1e-6,
            energy_tol: 1e-9,
            memory_cap: DEFAULT_MEMORY_CAP,
            seed: 7,
        }
    }
}

/// Symmetric two-particle amplitude `Ψ(z1, z2)`, stored as a row-major
/// `n × n` matrix over single-particle grid points, normalized on the grid.
#[derive(Debug, Clone)]
pub struct TwoBodyState {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub states: Vec<TwoBodyState>,
}

/// Dense two-body Hamiltonian pieces on a particle grid.
pub struct TwoBodyHamiltonian {
    grid: UniformGrid,
    dims: Vec<usize>,
    potential: Vec<f64>,
}

impl TwoBodyHamiltonian {
    pub fn new(model: &ModelSpec, grid: &UniformGrid) -> Result<Self, ExactError> {
        model.validate()?;
        if model.n_electrons != 2 {
            return Err(ExactError::ElectronCount(model.n_electrons));
        }
        let grid = particle_grid(model, grid)?;
        let n = grid.len();
        let coords: Vec<Vec<f64>> = (0..n).map(|i| grid.coordinates(i)).collect();
        let one: Vec<f64> = coords
            .iter()
            .map(|c| model.dressed_potential_unchecked(c[0], &c[1..]))
            .collect();
        let mut potential = vec![0.0; n * n];
        for i in 0..n {
            let (ci, row) = (&coords[i], &mut potential[i * n..(i + 1) * n]);
            for (j, slot) in row.iter_mut().enumerate() {
                let cj = &coords[j];
                *slot = one[i] + one[j] + model.dressed_interaction_unchecked(ci[0], &ci[1..], cj[0], &cj[1..]);
            }
        }
        let mut dims = grid.dims();
        dims.extend(grid.dims());
        Ok(Self { grid, dims, potential })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn apply(&self, psi: &[f64], out: &mut [f64]) {
        for ((o, &v), &p) in out.iter_mut().zip(&self.potential).zip(psi) {
            *o = v * p;
        }
        let axes: Vec<&Axis> = self.grid.axes().iter().chain(self.grid.axes()).collect();
        for (a, axis) in axes.iter().enumerate() {
            let h = axis.spacing();
            add_second_derivative(psi, &self.dims, a, -0.5 / (h * h), out);
        }
    }

    /// Energy expectation of an arbitrary (grid-normalized or not) amplitude.
    pub fn expectation(&self, psi: &[f64]) -> f64 {
        let mut h = vec![0.0; psi.len()];
        self.apply(psi, &mut h);
        dot(psi, &h) / dot(psi, psi)
    }
}

/// Accepts either the single-particle grid or the doubled product grid.
fn particle_grid(model: &ModelSpec, grid: &UniformGrid) -> Result<UniformGrid, ExactError> {
    let per = 1 + model.n_modes();
    if grid.ndim() == per {
        return Ok(grid.clone());
    }
    if grid.ndim() == 2 * per && grid.axes()[..per] == grid.axes()[per..] {
        return Ok(UniformGrid::from_axes(grid.axes()[..per].to_vec()));
    }
    Err(ExactError::GridShape {
        axes: grid.ndim(),
        modes: model.n_modes(),
    })
}

/// `Ψ ← (Ψ + Ψᵀ)/2` in place.
pub fn symmetrize(psi: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (psi[i * n + j] + psi[j * n + i]);
            psi[i * n + j] = avg;
            psi[j * n + i] = avg;
        }
    }
}

/// Lowest `n_states` symmetric-sector eigenpairs.
pub fn exact_ground_state(
    model: &ModelSpec,
    grid: &UniformGrid,
    opts: &ExactOptions,
) -> Result<Spectrum, ExactError> {
    let ham = TwoBodyHamiltonian::new(model, grid)?;
    let n = ham.grid.len();
    let dim = ham.dim();
    let bytes = dim * std::mem::size_of::<f64>();
    let min_basis = opts.n_states + 8;
    let fits = opts.memory_cap / bytes.max(1);
    if fits < min_basis + 1 {
        return Err(ExactError::MemoryBudgetExceeded {
            required: (min_basis + 1) * bytes,
            cap: opts.memory_cap,
        });
    }
    let max_basis = opts.max_basis.max(min_basis).min(fits - 1);

    let start = start_vector(&ham.grid, opts.seed);
    let lopts = LanczosOptions {
        n_states: opts.n_states,
        max_basis,
        max_matvecs: opts.max_matvecs,
        residual_tol: opts.residual_tol,
        energy_tol: opts.energy_tol,
    };
    let res = lanczos(|x, y| ham.apply(x, y), |v| symmetrize(v, n), start, &lopts)?;
    log::info!(
        "exact: {} states after {} matvecs, E0 = {:.10}",
        res.values.len(),
        res.matvecs,
        res.values[0]
    );
    let dz = ham.grid.volume_element();
    let states = res
        .vectors
        .into_iter()
        .zip(&res.values)
        .map(|(mut v, &energy)| {
            fix_sign(&mut v);
            let scale = 1.0 / (eigen::norm(&v) * dz);
            v.iter_mut().for_each(|x| *x *= scale);
            TwoBodyState {
                grid: ham.grid.clone(),
                values: v,
                energy,
            }
        })
        .collect();
    Ok(Spectrum {
        energies: res.values,
        states,
    })
}

/// Gaussian envelope with seeded noise so every symmetry sector is present.
fn start_vector(grid: &UniformGrid, seed: u64) -> Vec<f64> {
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envelope: Vec<f64> = (0..n)
        .map(|i| {
            let r2: f64 = grid.coordinates(i).iter().map(|c| c * c).sum();
            (-0.25 * r2).exp()
        })
        .collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = envelope[i] * envelope[j] * (1.0 + rng.random_range(-0.5..0.5));
        }
    }
    v
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .cloned()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Lowest symmetric excitation energy `E1 − E0` of a model without modes.
pub fn resonance_frequency(
    model: &ModelSpec,
    grid: &UniformGrid,
    opts: &ExactOptions,
) -> Result<f64, ExactError> {
    if model.n_modes() != 0 {
        return Err(ExactError::NotBare);
    }
    let opts = ExactOptions {
        n_states: 2,
        ..opts.clone()
    };
    let spectrum = exact_ground_state(model, grid, &opts)?;
    Ok(spectrum.energies[1] - spectrum.energies[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondPoint {
    pub bond_length: f64,
    pub electronic: f64,
    /// Electronic energy plus the nuclear repulsion.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct BondScan {
    pub points: Vec<BondPoint>,
    /// Vertex of the parabola through the three lowest total energies.
    pub argmin: Option<f64>,
}

pub fn bond_scan(
    template: &ModelSpec,
    grid: &UniformGrid,
    bond_lengths: &[f64],
    opts: &ExactOptions,
) -> Result<BondScan, ExactError> {
    use crate::model::PotentialKind;
    if !matches!(template.potential.kind, PotentialKind::SoftHydrogenMolecule { .. }) {
        return Err(ExactError::NotMolecular);
    }
    let mut points = Vec::with_capacity(bond_lengths.len());
    for &d in bond_lengths {
        let mut model = template.clone();
        model.potential.kind = PotentialKind::SoftHydrogenMolecule { half_distance: 0.5 * d };
        let spectrum = exact_ground_state(&model, grid, opts)?;
        let electronic = spectrum.energies[0];
        points.push(BondPoint {
            bond_length: d,
            electronic,
            total: electronic + model.potential.nuclear_repulsion(),
        });
    }
    let argmin = parabola_vertex(&points);
    Ok(BondScan { points, argmin })
}

fn parabola_vertex(points: &[BondPoint]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].total.total_cmp(&points[b].total));
    let p: Vec<(f64, f64)> = idx[..3]
        .iter()
        .map(|&i| (points[i].bond_length, points[i].total))
        .collect();
    let (x0, y0) = p[0];
    let (x1, y1) = p[1];
    let (x2, y2) = p[2];
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    if denom == 0.0 {
        return None;
    }
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a <= 0.0 {
        return None;
    }
    Some(-b / (2.0 * a))
}

/// Natural orbitals and occupations of the spin-summed one-body matrix
/// `γ(z, z') = 2 ∫ Ψ(z, z2) Ψ(z', z2) dz2`.
#[derive(Debug, Clone)]
pub struct NaturalOrbitals {
    pub grid: UniformGrid,
    /// Descending.
    pub occupations: Vec<f64>,
    /// Grid-normalized orbitals as columns.
    pub orbitals: DMatrix<f64>,
    /// `∫ γ(z, z) dz`.
    pub trace: f64,
}

/// Largest grid size diagonalized densely in [`dressed_1rdm`].
const DENSE_RDM_LIMIT: usize = 3000;

pub fn dressed_1rdm(state: &TwoBodyState, n_orbitals: usize) -> Result<NaturalOrbitals, ExactError> {
    rdm_with(state, n_orbitals, state.grid.len() <= DENSE_RDM_LIMIT)
}

fn rdm_with(state: &TwoBodyState, n_orbitals: usize, dense: bool) -> Result<NaturalOrbitals, ExactError> {
    let n = state.grid.len();
    let dz = state.grid.volume_element();
    let k = n_orbitals.min(n);
    // Ψ̂ = Ψ dz is symmetric; occupations are 2 s² for its eigenvalues s.
    let (occ, vecs) = if dense {
        let psi = DMatrix::from_row_slice(n, n, &state.values) * dz;
        let (vals, vecs) = sym_eigen(&psi);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
        let occ: Vec<f64> = order[..k].iter().map(|&i| 2.0 * vals[i] * vals[i]).collect();
        (occ, vecs.select_columns(&order[..k]))
    } else {
        let psi = &state.values;
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut tmp = vec![0.0; n];
            for i in 0..n {
                tmp[i] = dz * dot(&psi[i * n..(i + 1) * n], x);
            }
            for i in 0..n {
                y[i] = -dz * dot(&psi[i * n..(i + 1) * n], &tmp);
            }
        };
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 17) as f64).collect();
        let res = lanczos(
            apply,
            |_| {},
            start,
            &LanczosOptions {
                n_states: k,
                max_basis: (3 * k).max(30),
                residual_tol: 1e-10,
                energy_tol: 1e-12,
                ..Default::default()
            },
        )?;
        let occ: Vec<f64> = res.values.iter().map(|v| -2.0 * v).collect();
        let mut m = DMatrix::zeros(n, k);
        for (c, v) in res.vectors.iter().enumerate() {
            m.column_mut(c).copy_from_slice(v);
        }
        (occ, m)
    };
    let mut orbitals = vecs / dz.sqrt();
    for mut col in orbitals.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
    let trace = 2.0 * dz * dz * dot(&state.values, &state.values);
    Ok(NaturalOrbitals {
        grid: state.grid.clone(),
        occupations: occ,
        orbitals,
        trace,
    })
}

/// `ρ(z) = 2 ∫ |Ψ(z, z2)|² dz2` and its marginals.
pub fn densities(state: &TwoBodyState) -> DensityBundle {
    let n = state.grid.len();
    let dz = state.grid.volume_element();
    let rho: Vec<f64> = (0..n)
        .map(|i| {
            let row = &state.values[i * n..(i + 1) * n];
            2.0 * dz * dot(row, row)
        })
        .collect();
    DensityBundle::from_joint(Field::new(state.grid.clone(), rho).expect("grid sizes agree"))
}

/// `2 ⟨Ψ| -½∂²_q + ½ω²q² |Ψ⟩` for mode `mode` acting on one particle.
pub fn photon_mode_energy(state: &TwoBodyState, model: &ModelSpec, mode: usize) -> f64 {
    let n = state.grid.len();
    let dz = state.grid.volume_element();
    let omega = model.modes[mode].omega;
    let axis = 1 + mode;
    let h = state.grid.axis(axis).spacing();
    let mut dims = state.grid.dims();
    dims.extend(state.grid.dims());
    let mut out = vec![0.0; n * n];
    add_second_derivative(&state.values, &dims, axis, -0.5 / (h * h), &mut out);
    for i in 0..n {
        let q = state.grid.coordinates(i)[axis];
        let pot = 0.5 * omega * omega * q * q;
        for j in 0..n {
            out[i * n + j] += pot * state.values[i * n + j];
        }
    }
    2.0 * dz * dz * dot(&state.values, &out)
}
