//! Independent-particle orbitals of the dressed one-body operator and the
//! integral tables the basis-set solvers run on.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::container::{Container, ContainerError};
use crate::eigen::{self, lobpcg, mode_product, sym_eigen, EigenError, LobpcgOptions};
use crate::grid::{Field, UniformGrid};
use crate::model::{axis_hamiltonian, bare_potential, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("basis of {requested} orbitals cannot hold {electrons} electrons")]
    TooFewOrbitals { requested: usize, electrons: usize },
    #[error("basis has {have} orbitals, {want} requested")]
    Truncation { have: usize, want: usize },
    #[error("basis does not belong to this model or grid")]
    Mismatch,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Orthonormal orbitals on a single-particle grid with their IP energies.
#[derive(Debug, Clone)]
pub struct OrbitalSet {
    grid: UniformGrid,
    /// Grid-normalized orbitals as columns.
    orbitals: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    n_occupied: usize,
}

impl OrbitalSet {
    pub fn new(grid: UniformGrid, orbitals: DMatrix<f64>, eigenvalues: Vec<f64>, n_occupied: usize) -> Self {
        assert_eq!(orbitals.nrows(), grid.len());
        assert_eq!(orbitals.ncols(), eigenvalues.len());
        Self {
            grid,
            orbitals,
            eigenvalues,
            n_occupied,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn orbitals(&self) -> &DMatrix<f64> {
        &self.orbitals
    }

    pub fn orbital(&self, i: usize) -> Field {
        Field::new(self.grid.clone(), self.orbitals.column(i).iter().cloned().collect())
            .expect("orbital length matches grid")
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Doubly occupied orbitals in the closed-shell reference (`GS`).
    pub fn n_occupied(&self) -> usize {
        self.n_occupied
    }

    /// Orbitals beyond the occupied ones (`ES`).
    pub fn n_virtual(&self) -> usize {
        self.len() - self.n_occupied
    }

    /// The lowest `m` orbitals.
    pub fn truncated(&self, m: usize) -> Result<Self, BasisError> {
        if m > self.len() {
            return Err(BasisError::Truncation { have: self.len(), want: m });
        }
        Ok(Self {
            grid: self.grid.clone(),
            orbitals: self.orbitals.columns(0, m).into_owned(),
            eigenvalues: self.eigenvalues[..m].to_vec(),
            n_occupied: self.n_occupied.min(m),
        })
    }

    /// Largest deviation of the overlap matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let s = self.orbitals.transpose() * &self.orbitals * self.grid.volume_element();
        (s - DMatrix::identity(self.len(), self.len())).amax()
    }

    pub fn to_container(&self, model_hash: &str) -> Container {
        let mut c = Container::new("orbital_set", model_hash, &self.grid);
        c.meta.insert("n_occupied".into(), self.n_occupied.into());
        c.push("eigenvalues", vec![self.len()], self.eigenvalues.clone());
        c.push_matrix("orbitals", &self.orbitals);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, BasisError> {
        let grid = c.grid()?;
        let n_occupied = c
            .meta
            .get("n_occupied")
            .and_then(|v| v.as_u64())
            .ok_or(ContainerError::Missing("n_occupied".into()))? as usize;
        let eigenvalues = c.block("eigenvalues")?.1.to_vec();
        let orbitals = c.matrix("orbitals")?;
        if orbitals.nrows() != grid.len() || orbitals.ncols() != eigenvalues.len() {
            return Err(BasisError::Mismatch);
        }
        Ok(Self::new(grid, orbitals, eigenvalues, n_occupied))
    }
}

/// Number of sign changes along x of the orbital's cut through the
/// q-point carrying its largest amplitude, ignoring samples below `floor`
/// relative to the cut's maximum.
pub fn x_node_count(grid: &UniformGrid, values: &[f64], floor: f64) -> usize {
    let nx = grid.axis(0).len();
    let inner = values.len() / nx;
    let (imax, _) = values
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let offset = imax % inner;
    let cut: Vec<f64> = (0..nx).map(|ix| values[ix * inner + offset]).collect();
    let top = cut.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0f64;
    let mut nodes = 0;
    for &v in &cut {
        if v.abs() <= floor * top {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            nodes += 1;
        }
        last = v;
    }
    nodes
}

/// Grids at or below this size are diagonalized densely.
const DENSE_LIMIT: usize = 1500;

/// Lowest `m` eigenpairs of the dressed one-body operator.
pub fn ip_solve(model: &ModelSpec, grid: &UniformGrid, m: usize) -> Result<OrbitalSet, BasisError> {
    ip_solve_with(model, grid, m, 1e-8)
}

pub fn ip_solve_with(
    model: &ModelSpec,
    grid: &UniformGrid,
    m: usize,
    residual_tol: f64,
) -> Result<OrbitalSet, BasisError> {
    let op = model.one_body_operator(grid)?;
    let n_occupied = model.n_electrons / 2;
    if m < n_occupied {
        return Err(BasisError::TooFewOrbitals {
            requested: m,
            electrons: model.n_electrons,
        });
    }
    let n = grid.len();
    if m > n {
        return Err(EigenError::TooManyStates { requested: m, dim: n }.into());
    }
    let (values, vectors) = if grid.ndim() == 1 || n <= DENSE_LIMIT {
        let mut dense = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            dense.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        let (vals, vecs) = sym_eigen(&dense);
        (vals[..m].to_vec(), vecs.columns(0, m).into_owned())
    } else {
        iterative_ip(model, grid, &op, m, residual_tol)?
    };

    let dz = grid.volume_element();
    let mut orbitals = vectors / dz.sqrt();
    for mut col in orbitals.column_iter_mut() {
        crate::exact::fix_sign(col.as_mut_slice());
    }
    let nodes: Vec<usize> = orbitals
        .column_iter()
        .map(|c| x_node_count(grid, c.as_slice(), 1e-6))
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        if (values[a] - values[b]).abs() < 1e-9 {
            nodes[a].cmp(&nodes[b])
        } else {
            values[a].total_cmp(&values[b])
        }
    });
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let orbitals = orbitals.select_columns(&order);
    Ok(OrbitalSet::new(grid.clone(), orbitals, eigenvalues, n_occupied))
}

/// Separable part of the one-body operator: per-axis 1D Hamiltonians.
fn separable_axes(model: &ModelSpec, grid: &UniformGrid) -> Vec<(Vec<f64>, DMatrix<f64>)> {
    let mut out = Vec::with_capacity(grid.ndim());
    let x_pot = |x: f64| {
        bare_potential(x, &model.potential)
            + model.modes.iter().map(|m| 0.5 * (m.lambda * x).powi(2)).sum::<f64>()
    };
    out.push(sym_eigen(&axis_hamiltonian(grid.axis(0), x_pot)));
    for (a, mode) in model.modes.iter().enumerate() {
        let w2 = mode.omega * mode.omega;
        out.push(sym_eigen(&axis_hamiltonian(grid.axis(a + 1), |q| 0.5 * w2 * q * q)));
    }
    out
}

fn iterative_ip(
    model: &ModelSpec,
    grid: &UniformGrid,
    op: &crate::model::OneBodyOperator,
    m: usize,
    residual_tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>), BasisError> {
    let n = grid.len();
    let dims = grid.dims();
    let axes = separable_axes(model, grid);
    let block = (m + (m / 4).max(8)).min(n);

    // Separable product energies, lowest first, seed the block.
    let mut sums: Vec<(f64, usize)> = (0..n)
        .map(|flat| {
            let idx = grid.unravel(flat);
            (idx.iter().enumerate().map(|(a, &i)| axes[a].0[i]).sum(), flat)
        })
        .collect();
    sums.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lowest = sums[0].0;
    let mut x0 = DMatrix::zeros(n, block);
    for (c, &(_, flat)) in sums.iter().take(block).enumerate() {
        let idx = grid.unravel(flat);
        let mut v = vec![1.0];
        for (a, &i) in idx.iter().enumerate() {
            let col = axes[a].1.column(i);
            v = v.iter().flat_map(|&p| col.iter().map(move |&c| p * c)).collect();
        }
        x0.column_mut(c).copy_from_slice(&v);
    }

    let apply = |x: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (src, mut dst) in x.column_iter().zip(out.column_iter_mut()) {
            op.apply(src.as_slice(), dst.as_mut_slice());
        }
        out
    };
    let sigma = lowest - 1.0;
    let mut inv = vec![0.0; n];
    for &(e, flat) in &sums {
        inv[flat] = 1.0 / (e - sigma);
    }
    let transposed: Vec<DMatrix<f64>> = axes.iter().map(|(_, u)| u.transpose()).collect();
    let precondition = |r: &DMatrix<f64>, _shifts: &[f64]| {
        let mut out = DMatrix::zeros(r.nrows(), r.ncols());
        for (src, mut dst) in r.column_iter().zip(out.column_iter_mut()) {
            let mut v = src.as_slice().to_vec();
            for (a, t) in transposed.iter().enumerate() {
                v = mode_product(&v, &dims, a, t);
            }
            for (x, s) in v.iter_mut().zip(&inv) {
                *x *= s;
            }
            for (a, (_, u)) in axes.iter().enumerate() {
                v = mode_product(&v, &dims, a, u);
            }
            dst.copy_from_slice(&v);
        }
        out
    };
    let res = lobpcg(
        apply,
        precondition,
        x0,
        &LobpcgOptions {
            n_wanted: m,
            residual_tol,
            max_iterations: 500,
        },
    )?;
    log::info!("ip basis: {m} orbitals after {} LOBPCG iterations", res.iterations);
    Ok((res.values, res.vectors))
}

/// One-body matrices and pair densities for a basis.
#[derive(Debug, Clone)]
pub struct IntegralTable {
    /// `⟨i| -½Δ + v' |j⟩`.
    pub h: DMatrix<f64>,
    /// Kinetic part of `h`.
    pub kinetic: DMatrix<f64>,
    /// `⟨i| x |j⟩`.
    pub x: DMatrix<f64>,
    /// `⟨i| q_a |j⟩` per mode.
    pub q: Vec<DMatrix<f64>>,
    /// `⟨i| -½∂²_{q_a} + ½ω_a² q_a² |j⟩` per mode.
    pub mode_energy: Vec<DMatrix<f64>>,
    /// Column `x` holds the `M × M` matrix `ρ_ab(x) = ∫ dq φ_a φ_b`,
    /// stored column-major.
    pub pair: DMatrix<f64>,
    /// `w(x, x') dx dx'` on the x axis.
    pub kernel: DMatrix<f64>,
    /// `-(ω_a/√N) λ_a` per mode.
    pub cross: Vec<f64>,
    /// `λ_a²` per mode.
    pub lambda_sq: Vec<f64>,
    pub omegas: Vec<f64>,
    pub n_electrons: usize,
    pub model_hash: String,
}

impl IntegralTable {
    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    pub fn nx(&self) -> usize {
        self.kernel.nrows()
    }

    /// Pair-density matrix at x-point `ix`.
    pub fn pair_at(&self, ix: usize) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_column_slice(m, m, self.pair.column(ix).as_slice())
    }

    /// `⟨ij|w|kl⟩ = ∬ ρ_ik(x) w(x,x') ρ_jl(x') dx dx'`.
    pub fn coulomb(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let m = self.len();
        let a = self.pair.row(i + k * m);
        let b = self.pair.row(j + l * m);
        (a * &self.kernel * b.transpose())[(0, 0)]
    }

    /// Full dressed two-body element `⟨ij|w'|kl⟩`.
    pub fn dressed(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let mut w = self.coulomb(i, j, k, l);
        for a in 0..self.q.len() {
            let (x, q) = (&self.x, &self.q[a]);
            w += self.cross[a] * (q[(i, k)] * x[(j, l)] + x[(i, k)] * q[(j, l)])
                + self.lambda_sq[a] * x[(i, k)] * x[(j, l)];
        }
        w
    }

    /// Coulomb elements as an `M² × M²` matrix over pair indices
    /// `(i + k M, j + l M)`.
    pub fn coulomb_matrix(&self) -> DMatrix<f64> {
        &self.pair * &self.kernel * self.pair.transpose()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new_without_grid("integral_table", &self.model_hash);
        c.meta.insert("n_electrons".into(), self.n_electrons.into());
        c.push_matrix("h", &self.h);
        c.push_matrix("kinetic", &self.kinetic);
        c.push_matrix("x", &self.x);
        for (a, q) in self.q.iter().enumerate() {
            c.push_matrix(&format!("q{a}"), q);
            c.push_matrix(&format!("mode_energy{a}"), &self.mode_energy[a]);
        }
        c.push_matrix("pair", &self.pair);
        c.push_matrix("kernel", &self.kernel);
        c.push("cross", vec![self.cross.len()], self.cross.clone());
        c.push("lambda_sq", vec![self.lambda_sq.len()], self.lambda_sq.clone());
        c.push("omegas", vec![self.omegas.len()], self.omegas.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, BasisError> {
        let n_electrons = c
            .meta
            .get("n_electrons")
            .and_then(|v| v.as_u64())
            .ok_or(ContainerError::Missing("n_electrons".into()))? as usize;
        let cross = c.block("cross")?.1.to_vec();
        let modes = cross.len();
        let mut q = Vec::with_capacity(modes);
        let mut mode_energy = Vec::with_capacity(modes);
        for a in 0..modes {
            q.push(c.matrix(&format!("q{a}"))?);
            mode_energy.push(c.matrix(&format!("mode_energy{a}"))?);
        }
        Ok(Self {
            h: c.matrix("h")?,
            kinetic: c.matrix("kinetic")?,
            x: c.matrix("x")?,
            q,
            mode_energy,
            pair: c.matrix("pair")?,
            kernel: c.matrix("kernel")?,
            cross,
            lambda_sq: c.block("lambda_sq")?.1.to_vec(),
            omegas: c.block("omegas")?.1.to_vec(),
            n_electrons,
            model_hash: c.model_hash.clone(),
        })
    }
}

/// Matrix `⟨i| A |j⟩` for an operator applied to each orbital.
fn one_body_matrix(basis: &OrbitalSet, mut apply: impl FnMut(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let phi = basis.orbitals();
    let dz = basis.grid().volume_element();
    let m = basis.len();
    let mut applied = DMatrix::zeros(phi.nrows(), m);
    for j in 0..m {
        let v = apply(phi.column(j).as_slice());
        applied.column_mut(j).copy_from_slice(&v);
    }
    let out = phi.transpose() * applied * dz;
    0.5 * (&out + out.transpose())
}

pub fn build_integrals(basis: &OrbitalSet, model: &ModelSpec) -> Result<IntegralTable, BasisError> {
    let grid = basis.grid();
    let op = model.one_body_operator(grid)?;
    let m = basis.len();
    let dims = grid.dims();
    let nx = dims[0];
    let inner: usize = dims[1..].iter().product();
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.coordinates(i)).collect();

    let h = one_body_matrix(basis, |f| op.apply_vec(f));
    let kinetic = one_body_matrix(basis, |f| {
        let mut out = vec![0.0; f.len()];
        for (a, axis) in grid.axes().iter().enumerate() {
            let s = axis.spacing();
            crate::grid::add_second_derivative(f, &dims, a, -0.5 / (s * s), &mut out);
        }
        out
    });
    let x = one_body_matrix(basis, |f| f.iter().zip(&coords).map(|(v, c)| v * c[0]).collect());
    let mut q = Vec::with_capacity(model.n_modes());
    let mut mode_energy = Vec::with_capacity(model.n_modes());
    for (a, mode) in model.modes.iter().enumerate() {
        let axis = a + 1;
        q.push(one_body_matrix(basis, |f| {
            f.iter().zip(&coords).map(|(v, c)| v * c[axis]).collect()
        }));
        let s = grid.axis(axis).spacing();
        let w2 = mode.omega * mode.omega;
        mode_energy.push(one_body_matrix(basis, |f| {
            let mut out: Vec<f64> = f
                .iter()
                .zip(&coords)
                .map(|(v, c)| 0.5 * w2 * c[axis] * c[axis] * v)
                .collect();
            crate::grid::add_second_derivative(f, &dims, axis, -0.5 / (s * s), &mut out);
            out
        }));
    }

    // ρ_ab(x) = Σ_q φ_a φ_b dq, one M×M block per x point.
    let dq: f64 = grid.axes()[1..].iter().map(|a| a.spacing()).product();
    let phi = basis.orbitals();
    let mut pair = DMatrix::zeros(m * m, nx);
    for ix in 0..nx {
        let rows = phi.rows(ix * inner, inner);
        let block = rows.transpose() * rows * dq;
        pair.column_mut(ix).copy_from_slice(block.as_slice());
    }
    let xaxis = grid.axis(0);
    let dx = xaxis.spacing();
    let kernel = DMatrix::from_fn(nx, nx, |i, j| {
        model.electron_interaction(xaxis.point(i), xaxis.point(j)) * dx * dx
    });

    Ok(IntegralTable {
        h,
        kinetic,
        x,
        q,
        mode_energy,
        pair,
        kernel,
        cross: (0..model.n_modes()).map(|a| model.cross_weight(a)).collect(),
        lambda_sq: model.modes.iter().map(|m| m.lambda * m.lambda).collect(),
        omegas: model.modes.iter().map(|m| m.omega).collect(),
        n_electrons: model.n_electrons,
        model_hash: model.hash(),
    })
}

/// Orthonormal basis from arbitrary grid functions (columns), for tests and
/// warm starts.
pub fn orthonormal_set(grid: &UniformGrid, functions: &DMatrix<f64>, n_occupied: usize) -> OrbitalSet {
    let dz = grid.volume_element();
    let q = eigen::orthonormalize(functions, None) / dz.sqrt();
    let m = q.ncols();
    OrbitalSet::new(grid.clone(), q, vec![0.0; m], n_occupied)
}
