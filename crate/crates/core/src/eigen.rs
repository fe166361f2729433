//! Iterative symmetric eigensolvers and small dense helpers.
//!
//! Vectors are plain coefficient slices in the Euclidean inner product; the
//! callers handle grid volume factors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::grid::dot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("no convergence after {iterations} iterations (largest residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("requested {requested} eigenpairs of a {dim}-dimensional problem")]
    TooManyStates { requested: usize, dim: usize },
}

/// Eigenpairs of a symmetric matrix, ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    pub n_states: usize,
    /// Largest Krylov basis kept in memory before a thick restart.
    pub max_basis: usize,
    pub max_matvecs: usize,
    pub residual_tol: f64,
    pub energy_tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            n_states: 1,
            max_basis: 40,
            max_matvecs: 20_000,
            residual_tol: 1e-6,
            energy_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

/// Thick-restart Lanczos with full reorthogonalization for the lowest
/// eigenpairs of a symmetric operator.
///
/// `project` is applied to the start vector and to every new Krylov vector;
/// it must be an orthogonal projector commuting with the operator (e.g. the
/// exchange symmetrizer).
pub fn lanczos<A, P>(
    mut apply: A,
    mut project: P,
    start: Vec<f64>,
    opts: &LanczosOptions,
) -> Result<LanczosResult, EigenError>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = start.len();
    let max_basis = opts.max_basis.min(n).max(opts.n_states + 2).min(n.max(1));
    if opts.n_states > n {
        return Err(EigenError::TooManyStates {
            requested: opts.n_states,
            dim: n,
        });
    }
    let keep = (max_basis / 2).max(opts.n_states + 1).min(max_basis.saturating_sub(1)).max(1);

    let mut v0 = start;
    project(&mut v0);
    let nrm = norm(&v0);
    assert!(nrm > 0.0, "Lanczos start vector vanishes after projection");
    v0.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut t = DMatrix::<f64>::zeros(max_basis, max_basis);
    let mut done = 0usize;
    let mut matvecs = 0usize;
    let mut previous: Option<Vec<f64>> = None;
    let mut w = vec![0.0; n];

    loop {
        let j = done;
        apply(&basis[j], &mut w);
        matvecs += 1;
        project(&mut w);
        let mut h = vec![0.0; j + 1];
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate().take(j + 1) {
                let c = dot(v, &w);
                h[i] += c;
                axpy(-c, v, &mut w);
            }
        }
        for (i, &hi) in h.iter().enumerate() {
            t[(i, j)] = hi;
            t[(j, i)] = hi;
        }
        let beta = norm(&w);
        done = j + 1;
        let scale = t[(j, j)].abs().max(1.0);
        let exhausted = beta <= 1e-12 * scale || done >= n;
        if done < max_basis && !exhausted && matvecs < opts.max_matvecs {
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(std::mem::replace(&mut w, vec![0.0; n]));
            continue;
        }

        let (theta, y) = sym_eigen(&t.view((0, 0), (done, done)).into_owned());
        let wanted = opts.n_states.min(done);
        let residuals: Vec<f64> = (0..wanted).map(|k| (beta * y[(done - 1, k)]).abs()).collect();
        let energy_ok = previous.as_ref().is_some_and(|p| {
            p.iter()
                .zip(&theta[..wanted])
                .all(|(a, b)| (a - b).abs() < opts.energy_tol)
        });
        let converged = exhausted
            || (energy_ok && residuals.iter().all(|&r| r < opts.residual_tol));
        log::debug!(
            "lanczos: {matvecs} matvecs, lowest {:.12}, residual {:.3e}",
            theta[0],
            residuals.iter().cloned().fold(0.0, f64::max)
        );
        if converged || matvecs >= opts.max_matvecs {
            if !converged {
                return Err(EigenError::NoConvergence {
                    iterations: matvecs,
                    residual: residuals.iter().cloned().fold(0.0, f64::max),
                });
            }
            let vectors = (0..wanted)
                .map(|k| combine(&basis[..done], y.column(k).as_slice()))
                .collect();
            return Ok(LanczosResult {
                values: theta[..wanted].to_vec(),
                vectors,
                residuals,
                matvecs,
            });
        }
        previous = Some(theta[..wanted].to_vec());

        let kk = keep.min(done - 1).max(wanted);
        let mut new_basis: Vec<Vec<f64>> = (0..kk)
            .map(|k| combine(&basis[..done], y.column(k).as_slice()))
            .collect();
        w.iter_mut().for_each(|x| *x /= beta);
        new_basis.push(std::mem::replace(&mut w, vec![0.0; n]));
        basis = new_basis;
        t.fill(0.0);
        for k in 0..kk {
            t[(k, k)] = theta[k];
            let c = beta * y[(done - 1, k)];
            t[(k, kk)] = c;
            t[(kk, k)] = c;
        }
        done = kk;
    }
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (v, &c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut out);
    }
    out
}

#[derive(Debug, Clone)]
pub struct LobpcgOptions {
    /// Eigenpairs whose residuals decide convergence.
    pub n_wanted: usize,
    pub residual_tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LobpcgResult {
    pub values: Vec<f64>,
    /// Columns are orthonormal eigenvectors (Euclidean).
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Block preconditioned conjugate gradient eigensolver (LOBPCG) for the
/// lowest eigenpairs. The block size is the column count of `x0`; columns
/// beyond `n_wanted` act as guard vectors.
pub fn lobpcg<A, T>(
    mut apply: A,
    mut precondition: T,
    x0: DMatrix<f64>,
    opts: &LobpcgOptions,
) -> Result<LobpcgResult, EigenError>
where
    A: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
    T: FnMut(&DMatrix<f64>, &[f64]) -> DMatrix<f64>,
{
    let n = x0.nrows();
    let k = x0.ncols();
    if opts.n_wanted > k || k > n {
        return Err(EigenError::TooManyStates {
            requested: k.max(opts.n_wanted),
            dim: n,
        });
    }
    let x = orthonormalize(&x0, None);
    let ax = apply(&x);
    let (mut values, mut x, mut ax) = rayleigh_ritz(&x, &ax, k);
    let mut p: Option<DMatrix<f64>> = None;
    let mut residuals = vec![f64::INFINITY; k];

    for iteration in 0..opts.max_iterations {
        let mut r = &ax - &x * DMatrix::from_diagonal(&DVector::from_column_slice(&values));
        for c in 0..k {
            residuals[c] = r.column(c).norm();
        }
        let worst = residuals[..opts.n_wanted].iter().cloned().fold(0.0, f64::max);
        log::trace!("lobpcg {iteration}: worst wanted residual {worst:.3e}");
        if worst < opts.residual_tol {
            return Ok(LobpcgResult {
                values: values[..opts.n_wanted].to_vec(),
                vectors: x.columns(0, opts.n_wanted).into_owned(),
                residuals: residuals[..opts.n_wanted].to_vec(),
                iterations: iteration,
            });
        }
        let active: Vec<usize> = (0..k).filter(|&c| residuals[c] >= opts.residual_tol * 0.1).collect();
        r = r.select_columns(&active);
        let shifts: Vec<f64> = active.iter().map(|&c| values[c]).collect();
        let w = precondition(&r, &shifts);
        let mut extra = w;
        if let Some(p) = &p {
            let pa = p.select_columns(&active);
            extra = concat_columns(&extra, &pa);
        }
        let z = orthonormalize(&extra, Some(&x));
        if z.ncols() == 0 {
            break;
        }
        let az = apply(&z);
        let basis = concat_columns(&x, &z);
        let abasis = concat_columns(&ax, &az);
        let g = basis.transpose() * &abasis;
        let (theta, y) = sym_eigen(&g);
        let yk = y.columns(0, k).into_owned();
        let new_x = &basis * &yk;
        let new_ax = &abasis * &yk;
        let yz = yk.rows(k, z.ncols()).into_owned();
        p = Some(&z * yz);
        x = new_x;
        ax = new_ax;
        values = theta[..k].to_vec();
    }
    Err(EigenError::NoConvergence {
        iterations: opts.max_iterations,
        residual: residuals[..opts.n_wanted].iter().cloned().fold(0.0, f64::max),
    })
}

fn rayleigh_ritz(
    x: &DMatrix<f64>,
    ax: &DMatrix<f64>,
    k: usize,
) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let g = x.transpose() * ax;
    let (theta, y) = sym_eigen(&g);
    let yk = y.columns(0, k.min(theta.len())).into_owned();
    (theta[..yk.ncols()].to_vec(), x * &yk, ax * &yk)
}

pub(crate) fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Orthonormal basis of the span of `m`'s columns, optionally after
/// projecting out the (orthonormal) columns of `against`. Uses two passes
/// of Gram-eigenvalue orthogonalization and drops dependent directions.
pub fn orthonormalize(m: &DMatrix<f64>, against: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let mut z = m.clone();
    for _ in 0..2 {
        if let Some(q) = against {
            let c = q.transpose() * &z;
            z -= q * c;
        }
        if z.ncols() == 0 {
            return z;
        }
        let norms: Vec<f64> = z.column_iter().map(|c| c.norm()).collect();
        let keep: Vec<usize> = (0..z.ncols()).filter(|&c| norms[c] > 1e-300).collect();
        z = z.select_columns(&keep);
        for (c, mut col) in z.column_iter_mut().enumerate() {
            col /= norms[keep[c]];
        }
        let gram = z.transpose() * &z;
        let (vals, vecs) = sym_eigen(&gram);
        let top = vals.last().cloned().unwrap_or(0.0);
        let good: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-12 * top.max(1e-300)).collect();
        let mut scaled = vecs.select_columns(&good);
        for (c, mut col) in scaled.column_iter_mut().enumerate() {
            col /= vals[good[c]].sqrt();
        }
        z = &z * scaled;
    }
    z
}

/// Applies `mat` along axis `axis` of a row-major tensor with shape `dims`:
/// `out[.., i, ..] = Σ_j mat[i, j] f[.., j, ..]`.
pub fn mode_product(f: &[f64], dims: &[usize], axis: usize, mat: &DMatrix<f64>) -> Vec<f64> {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let rows = mat.nrows();
    let mut out = vec![0.0; outer * rows * inner];
    if inner == 1 {
        let c = DMatrix::from_column_slice(n, outer, f);
        let r = mat * c;
        out.copy_from_slice(r.as_slice());
        return out;
    }
    let mt = mat.transpose();
    for o in 0..outer {
        let block = DMatrix::from_column_slice(inner, n, &f[o * n * inner..(o + 1) * n * inner]);
        let r = block * &mt;
        out[o * rows * inner..(o + 1) * rows * inner].copy_from_slice(r.as_slice());
    }
    out
}
