//! Basis-set Hartree-Fock and Müller-functional minimization for the
//! dressed one-body reduced density matrix.
//!
//! Natural orbitals are `φ̃_i = Σ_a C_ai φ_a` over an IP basis. The energy is
//! `Σ n_i h̃_ii + ½ Σ n_i n_j J_ij − ½ Σ √(n_i n_j) K_ij` with `J_ij = ⟨ij|ij⟩`
//! and `K_ij = ⟨ij|ji⟩` taken over the dressed interaction. Hartree-Fock is
//! the same expression with the occupations pinned to 0 or 2.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{Container, ContainerError};
use crate::grid::{Field, UniformGrid};
use crate::model::{axis_hamiltonian, ModelError, ModelSpec};
use crate::observables::{density_difference, DensityBundle};
use crate::spbasis::{BasisError, IntegralTable, OrbitalSet};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("occupations violate 0 ≤ n ≤ 2 or Σn = N: {0}")]
    NotRepresentable(String),
    #[error("no chemical potential brackets N = {target} (reached {low}..{high})")]
    MuBracketFailure { target: f64, low: f64, high: f64 },
    #[error("checkpoint belongs to a different model or basis")]
    CheckpointMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    HartreeFock,
    Muller,
}

/// Spin-summed one-body matrix in natural-orbital form.
#[derive(Debug, Clone, PartialEq)]
pub struct OneRdm {
    /// In `[0, 2]`, summing to N.
    pub occupations: Vec<f64>,
    /// Orthogonal; column `i` expands natural orbital `i` in the IP basis.
    pub coefficients: DMatrix<f64>,
}

impl OneRdm {
    /// Closed-shell determinant on the first N/2 basis orbitals.
    pub fn aufbau(m: usize, n_electrons: usize) -> Self {
        let occupations = (0..m).map(|i| if i < n_electrons / 2 { 2.0 } else { 0.0 }).collect();
        Self {
            occupations,
            coefficients: DMatrix::identity(m, m),
        }
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn n_electrons(&self) -> f64 {
        self.occupations.iter().sum()
    }

    /// `γ_ab = Σ_i C_ai n_i C_bi`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = DVector::from_column_slice(&self.occupations);
        let scaled = &self.coefficients * DMatrix::from_diagonal(&n);
        scaled * self.coefficients.transpose()
    }

    pub fn check(&self, n_electrons: usize, tol: f64) -> Result<(), SolverError> {
        if let Some(n) = self.occupations.iter().find(|&&n| !(-tol..=2.0 + tol).contains(&n)) {
            return Err(SolverError::NotRepresentable(format!("occupation {n}")));
        }
        let sum = self.n_electrons();
        if (sum - n_electrons as f64).abs() > tol {
            return Err(SolverError::NotRepresentable(format!("Σn = {sum}")));
        }
        let m = self.len();
        let defect = (self.coefficients.transpose() * &self.coefficients - DMatrix::identity(m, m)).amax();
        if defect > tol.max(1e-10) {
            return Err(SolverError::NotRepresentable(format!("orbital overlap defect {defect}")));
        }
        Ok(())
    }

    /// Natural orbitals on the basis grid, grid-normalized columns.
    pub fn orbitals_on_grid(&self, basis: &OrbitalSet) -> DMatrix<f64> {
        basis.orbitals() * &self.coefficients
    }

    pub fn density(&self, basis: &OrbitalSet) -> DensityBundle {
        crate::observables::density_from_matrix(basis, &self.matrix())
    }

    /// Occupations sorted descending with the matching coefficient columns.
    pub fn sorted(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.occupations[b].total_cmp(&self.occupations[a]));
        Self {
            occupations: order.iter().map(|&i| self.occupations[i]).collect(),
            coefficients: self.coefficients.select_columns(&order),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScfSettings {
    pub energy_tol: f64,
    pub density_tol: f64,
    /// Bound on `max |Λ − Λᵀ|`.
    pub hermiticity_tol: f64,
    pub mu_tol: f64,
    /// Fraction of each occupation update that is applied.
    pub mixing: f64,
    pub max_outer: usize,
    pub max_orbital_steps: usize,
    pub lbfgs_memory: usize,
}

impl ScfSettings {
    pub fn paper() -> Self {
        Self {
            energy_tol: 1e-9,
            density_tol: 1e-8,
            hermiticity_tol: 1e-6,
            mu_tol: 1e-8,
            mixing: 1.0,
            max_outer: 200,
            max_orbital_steps: 400,
            lbfgs_memory: 20,
        }
    }

    pub fn desk() -> Self {
        Self {
            energy_tol: 1e-8,
            density_tol: 1e-6,
            hermiticity_tol: 1e-5,
            mu_tol: 1e-8,
            ..Self::paper()
        }
    }
}

impl Default for ScfSettings {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `Σ n_i h̃_ii`, kinetic plus dressed external.
    pub one_body: f64,
    pub kinetic: f64,
    pub hartree: f64,
    pub exchange_correlation: f64,
}

/// Integrals rotated into the natural-orbital basis.
struct Rotated {
    h: DMatrix<f64>,
    kinetic: DMatrix<f64>,
    x: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
    /// `P̃(x)` blocks, one column per x point.
    pair: DMatrix<f64>,
    /// `Ũ = P̃ W`.
    potential: DMatrix<f64>,
    /// Coulomb plus dipole, `⟨ij|ij⟩` and `⟨ij|ji⟩`.
    j: DMatrix<f64>,
    k: DMatrix<f64>,
}

fn rotate(table: &IntegralTable, c: &DMatrix<f64>) -> Rotated {
    let m = table.len();
    let nx = table.nx();
    let ct = c.transpose();
    let sandwich = |a: &DMatrix<f64>| &ct * a * c;
    let mut pair = DMatrix::zeros(m * m, nx);
    for ix in 0..nx {
        let block = sandwich(&table.pair_at(ix));
        pair.column_mut(ix).copy_from_slice(block.as_slice());
    }
    let potential = &pair * &table.kernel;
    let diag_rows = |a: &DMatrix<f64>| DMatrix::from_fn(m, nx, |i, x| a[(i + i * m, x)]);
    let mut j = diag_rows(&pair) * diag_rows(&potential).transpose();
    let kv = pair.component_mul(&potential).column_sum();
    let mut k = DMatrix::from_column_slice(m, m, kv.as_slice());
    let x = sandwich(&table.x);
    let q: Vec<DMatrix<f64>> = table.q.iter().map(&sandwich).collect();
    for (a, qa) in q.iter().enumerate() {
        let (cw, l2) = (table.cross[a], table.lambda_sq[a]);
        for i in 0..m {
            for jj in 0..m {
                j[(i, jj)] += cw * (qa[(i, i)] * x[(jj, jj)] + x[(i, i)] * qa[(jj, jj)]) + l2 * x[(i, i)] * x[(jj, jj)];
                k[(i, jj)] += 2.0 * cw * qa[(i, jj)] * x[(i, jj)] + l2 * x[(i, jj)] * x[(i, jj)];
            }
        }
    }
    let j = 0.5 * (&j + j.transpose());
    let k = 0.5 * (&k + k.transpose());
    Rotated {
        h: sandwich(&table.h),
        kinetic: sandwich(&table.kinetic),
        x,
        q,
        pair,
        potential,
        j,
        k,
    }
}

fn sqrt_occ(n: &[f64]) -> Vec<f64> {
    n.iter().map(|&v| v.max(0.0).sqrt()).collect()
}

fn energy_parts(r: &Rotated, n: &[f64]) -> EnergyReport {
    let nv = DVector::from_column_slice(n);
    let sv = DVector::from_vec(sqrt_occ(n));
    let one_body: f64 = (0..n.len()).map(|i| n[i] * r.h[(i, i)]).sum();
    let kinetic: f64 = (0..n.len()).map(|i| n[i] * r.kinetic[(i, i)]).sum();
    let hartree = 0.5 * nv.dot(&(&r.j * &nv));
    let exchange_correlation = -0.5 * sv.dot(&(&r.k * &sv));
    EnergyReport {
        total: one_body + hartree + exchange_correlation,
        one_body,
        kinetic,
        hartree,
        exchange_correlation,
    }
}

/// Energy of a one-body matrix in the basis of `table`.
pub fn energy(table: &IntegralTable, rdm: &OneRdm) -> EnergyReport {
    energy_parts(&rotate(table, &rdm.coefficients), &rdm.occupations)
}

/// `∂E/∂n_i` at fixed orbitals; requires every `n_i > 0`.
pub fn occupation_gradient(table: &IntegralTable, rdm: &OneRdm) -> Vec<f64> {
    let r = rotate(table, &rdm.coefficients);
    let n = &rdm.occupations;
    let s = sqrt_occ(n);
    (0..n.len())
        .map(|i| {
            let hartree: f64 = (0..n.len()).map(|j| r.j[(i, j)] * n[j]).sum();
            let xc: f64 = (0..n.len()).map(|j| r.k[(i, j)] * s[j]).sum();
            r.h[(i, i)] + hartree - 0.5 * xc / s[i]
        })
        .collect()
}


/// The operators behind `Λ_ki = n_i A_ki − √n_i B_ki`: `A` collects the
/// one-body and Hartree parts, `B` the exchange-like part.
fn operators(table: &IntegralTable, r: &Rotated, n: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = n.len();
    let nx = table.nx();
    let s = sqrt_occ(n);
    let mut v = DVector::zeros(nx);
    for (j, &nj) in n.iter().enumerate() {
        v += r.potential.row(j + j * m).transpose() * nj;
    }
    let vh = &r.pair * v;
    let mut a = &r.h + DMatrix::from_column_slice(m, m, vh.as_slice());
    // Exchange: Σ_x P̃(x) diag(√n) Ũ(x).
    let sd = DMatrix::from_diagonal(&DVector::from_column_slice(&s));
    let mut b = DMatrix::zeros(m, m);
    for ix in 0..nx {
        let p = DMatrix::from_column_slice(m, m, r.pair.column(ix).as_slice());
        let u = DMatrix::from_column_slice(m, m, r.potential.column(ix).as_slice());
        b.gemm(1.0, &p, &(&sd * u), 1.0);
    }
    for (qa, (&cw, &l2)) in r.q.iter().zip(table.cross.iter().zip(&table.lambda_sq)) {
        let mean_x: f64 = (0..m).map(|j| n[j] * r.x[(j, j)]).sum();
        let mean_q: f64 = (0..m).map(|j| n[j] * qa[(j, j)]).sum();
        a += (qa * mean_x + &r.x * mean_q) * cw + &r.x * (l2 * mean_x);
        let xs = &r.x * &sd;
        let qs = qa * &sd;
        b += (&qs * &r.x + &xs * qa) * cw + &xs * &r.x * l2;
    }
    (a, b)
}

fn lagrangian(a: &DMatrix<f64>, b: &DMatrix<f64>, n: &[f64]) -> DMatrix<f64> {
    let s = sqrt_occ(n);
    DMatrix::from_fn(n.len(), n.len(), |k, i| n[i] * a[(k, i)] - s[i] * b[(k, i)])
}

fn hermiticity(lambda: &DMatrix<f64>) -> f64 {
    (lambda - lambda.transpose()).amax()
}

/// Orthogonal Cayley transform of the antisymmetric matrix whose strict
/// lower triangle, column by column, is `kappa`.
fn cayley(kappa: &[f64], m: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(m, m);
    let mut idx = 0;
    for i in 0..m {
        for r in (i + 1)..m {
            k[(r, i)] = kappa[idx];
            k[(i, r)] = -kappa[idx];
            idx += 1;
        }
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let lhs = &eye - &k * 0.5;
    let rhs = &eye + &k * 0.5;
    lhs.lu().solve(&rhs).expect("Cayley denominator is invertible")
}

/// `∂E/∂κ_ki` for `C → C(1 + κ)`, same ordering as [`cayley`].
fn rotation_gradient(lambda: &DMatrix<f64>) -> Vec<f64> {
    let m = lambda.nrows();
    let mut g = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for k in (i + 1)..m {
            g.push(2.0 * (lambda[(k, i)] - lambda[(i, k)]));
        }
    }
    g
}

/// Diagonal model Hessian of the rotations, floored away from zero.
fn rotation_preconditioner(a: &DMatrix<f64>, b: &DMatrix<f64>, n: &[f64]) -> Vec<f64> {
    let m = n.len();
    let s = sqrt_occ(n);
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for k in (i + 1)..m {
            let h = 2.0 * ((n[i] - n[k]) * (a[(k, k)] - a[(i, i)]) - (s[i] - s[k]) * (b[(k, k)] - b[(i, i)]));
            out.push(h.abs().max(0.05));
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS two-loop recursion with a diagonal initial Hessian.
fn lbfgs_direction(g: &[f64], history: &[(Vec<f64>, Vec<f64>)], diag: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    let mut r: Vec<f64> = q.iter().zip(diag).map(|(qi, d)| qi / d).collect();
    for ((s, y), (a, rho)) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - beta) * si);
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalPhase {
    pub energy: f64,
    pub hermiticity: f64,
    pub steps: usize,
}

/// Rotates the natural orbitals at fixed occupations until the Lagrangian
/// is symmetric to `tol` or `max_steps` line searches have been taken.
pub fn optimize_orbitals(
    table: &IntegralTable,
    rdm: &mut OneRdm,
    tol: f64,
    max_steps: usize,
    memory: usize,
) -> OrbitalPhase {
    let m = rdm.len();
    let n = rdm.occupations.clone();
    let mut r = rotate(table, &rdm.coefficients);
    let mut e = energy_parts(&r, &n).total;
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut herm = f64::INFINITY;
    let mut steps = 0;
    while steps < max_steps {
        let (a, b) = operators(table, &r, &n);
        let lambda = lagrangian(&a, &b, &n);
        herm = hermiticity(&lambda);
        if herm < tol || m < 2 {
            break;
        }
        let g = rotation_gradient(&lambda);
        if let Some((s, g_old)) = previous.take() {
            let y: Vec<f64> = g.iter().zip(&g_old).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                history.push((s, y));
                if history.len() > memory {
                    history.remove(0);
                }
            }
        }
        let diag = rotation_preconditioner(&a, &b, &n);
        let mut d = lbfgs_direction(&g, &history, &diag);
        if dot(&g, &d) >= 0.0 {
            history.clear();
            d = g.iter().zip(&diag).map(|(gi, h)| -gi / h).collect();
        }
        let largest = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if largest > 0.5 {
            d.iter_mut().for_each(|v| *v *= 0.5 / largest);
        }
        let slope = dot(&g, &d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let step: Vec<f64> = d.iter().map(|v| v * t).collect();
            let c = &rdm.coefficients * cayley(&step, m);
            let trial = rotate(table, &c);
            let e_trial = energy_parts(&trial, &n).total;
            if e_trial <= e + 1e-4 * t * slope {
                accepted = Some((step, c, trial, e_trial));
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        match accepted {
            Some((step, c, trial, e_trial)) => {
                rdm.coefficients = c;
                r = trial;
                e = e_trial;
                previous = Some((step, g));
            }
            None if history.is_empty() => break,
            None => history.clear(),
        }
    }
    // Keep the columns orthonormal to rounding.
    let c = &rdm.coefficients;
    let s = c.transpose() * c;
    if (&s - DMatrix::identity(m, m)).amax() > 1e-12 {
        let (vals, vecs) = crate::eigen::sym_eigen(&s);
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(m, vals.iter().map(|v| 1.0 / v.sqrt())));
        rdm.coefficients = c * (&vecs * inv_sqrt * vecs.transpose());
    }
    OrbitalPhase {
        energy: e,
        hermiticity: herm,
        steps,
    }
}

/// Below this magnitude an angle counts as sitting on the `n = 0` cusp.
const PINNED: f64 = 1e-9;

/// Quasi-Newton minimization with backtracking; stops when the gradient
/// falls below `gtol` or no further decrease is possible. Coordinates at
/// zero with zero gradient are held there (the objective's cusp).
fn bfgs(mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, gtol: f64, max_iter: usize) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < gtol {
            break;
        }
        let gv = DVector::from_column_slice(&g);
        let pinned: Vec<bool> = (0..n).map(|i| x[i] == 0.0 && g[i] == 0.0).collect();
        let mut d = -(&h * &gv);
        for i in (0..n).filter(|&i| pinned[i]) {
            d[i] = 0.0;
        }
        if d.dot(&gv) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -gv.clone();
        }
        let largest = d.amax();
        if largest > 0.5 {
            d *= 0.5 / largest;
        }
        let slope = d.dot(&gv);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x
                .iter()
                .zip(d.iter())
                .map(|(a, b)| a + t * b)
                .map(|v| if v.abs() < PINNED { 0.0 } else { v })
                .collect();
            let (ft, gt) = f(&trial);
            if ft <= fx + 1e-4 * t * slope {
                next = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn, gn)) = next else { break };
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let stalled = fx - fxn <= 1e-16 * fx.abs();
        x = xn;
        fx = fxn;
        g = gn;
        if stalled && t < 1e-6 {
            break;
        }
    }
    x
}

/// Occupation-only problem at fixed orbitals.
struct OccupationProblem<'a> {
    h: Vec<f64>,
    j: &'a DMatrix<f64>,
    k: &'a DMatrix<f64>,
}

impl OccupationProblem<'_> {
    fn energy(&self, n: &[f64]) -> f64 {
        let s = sqrt_occ(n);
        let nv = DVector::from_column_slice(n);
        let sv = DVector::from_vec(s);
        dot(&self.h, n) + 0.5 * nv.dot(&(self.j * &nv)) - 0.5 * sv.dot(&(self.k * &sv))
    }

    /// Minimizes `E − μ Σn` over angles with `n = 2 sin²α`.
    fn minimize(&self, mu: f64, alpha0: Vec<f64>) -> Vec<f64> {
        let m = self.h.len();
        let f = |alpha: &[f64]| {
            let n: Vec<f64> = alpha.iter().map(|a| 2.0 * a.sin().powi(2)).collect();
            let s = sqrt_occ(&n);
            let nv = DVector::from_column_slice(&n);
            let sv = DVector::from_column_slice(&s);
            let jn = self.j * &nv;
            let ks = self.k * &sv;
            let value = dot(&self.h, &n) + 0.5 * nv.dot(&jn) - 0.5 * sv.dot(&ks) - mu * n.iter().sum::<f64>();
            let grad = (0..m)
                .map(|i| {
                    let a = alpha[i];
                    if a == 0.0 {
                        // One-sided slope of the √n cusp; zero when n = 0 is
                        // a minimum along this coordinate.
                        return (-std::f64::consts::SQRT_2 * ks[i]).min(0.0);
                    }
                    (self.h[i] + jn[i] - mu) * 2.0 * (2.0 * a).sin()
                        - std::f64::consts::SQRT_2 * a.sin().signum() * a.cos() * ks[i]
                })
                .collect();
            (value, grad)
        };
        bfgs(f, alpha0, 1e-12, 2000)
    }
}

fn angles(n: &[f64], margin: f64) -> Vec<f64> {
    n.iter().map(|&v| (v.clamp(1e-10, 2.0 - margin) / 2.0).sqrt().asin()).collect()
}

fn occupations_of(alpha: &[f64]) -> Vec<f64> {
    alpha.iter().map(|a| 2.0 * a.sin().powi(2)).collect()
}

/// Spreads `N − Σn` over the fractional occupations in proportion to
/// `n(2 − n)`, which keeps every occupation inside `[0, 2]`.
fn polish_sum(n: &mut [f64], target: f64) {
    let weights: Vec<f64> = n.iter().map(|v| v * (2.0 - v)).collect();
    let total: f64 = weights.iter().sum();
    let delta = target - n.iter().sum::<f64>();
    if total <= 0.0 || delta.abs() > 0.25 * total {
        return;
    }
    for (v, w) in n.iter_mut().zip(&weights) {
        *v = (*v + delta * w / total).clamp(0.0, 2.0);
    }
}

/// Result of an occupation update.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationPhase {
    pub occupations: Vec<f64>,
    pub mu: f64,
    pub energy: f64,
}

/// Minimizes the Müller energy over occupations at fixed orbitals, with the
/// chemical potential fixed by bisection on the electron count.
pub fn optimize_occupations(
    table: &IntegralTable,
    rdm: &OneRdm,
    mu_guess: f64,
    mu_tol: f64,
) -> Result<OccupationPhase, SolverError> {
    let r = rotate(table, &rdm.coefficients);
    occupations_in(&r, &rdm.occupations, table.n_electrons as f64, mu_guess, mu_tol)
}

fn occupations_in(r: &Rotated, n0: &[f64], target: f64, mu_guess: f64, mu_tol: f64) -> Result<OccupationPhase, SolverError> {
    let m = n0.len();
    let problem = OccupationProblem {
        h: (0..m).map(|i| r.h[(i, i)]).collect(),
        j: &r.j,
        k: &r.k,
    };
    let mut alpha = angles(n0, 1e-10);
    // α = π/2 (n = 2) is stationary for every μ, so warm starts are pulled
    // slightly inside the box before each minimization.
    let count = |mu: f64, alpha: &mut Vec<f64>| {
        let start = angles(&occupations_of(alpha), 1e-6);
        *alpha = problem.minimize(mu, start);
        occupations_of(alpha).iter().sum::<f64>()
    };

    let mut lo = mu_guess;
    let mut hi = mu_guess;
    let first = count(mu_guess, &mut alpha);
    let mut alpha_lo = alpha.clone();
    let mut alpha_hi = alpha.clone();
    let mut step = 0.1;
    if first < target {
        loop {
            lo = hi;
            alpha_lo = alpha_hi.clone();
            hi += step;
            step *= 2.0;
            if count(hi, &mut alpha_hi) >= target {
                break;
            }
            if step > 1e6 {
                return Err(SolverError::MuBracketFailure { target, low: lo, high: hi });
            }
        }
    } else {
        loop {
            hi = lo;
            alpha_hi = alpha_lo.clone();
            lo -= step;
            step *= 2.0;
            if count(lo, &mut alpha_lo) <= target {
                break;
            }
            if step > 1e6 {
                return Err(SolverError::MuBracketFailure { target, low: lo, high: hi });
            }
        }
    }
    let mut best = alpha_hi.clone();
    let mut mu = hi;
    while hi - lo > mu_tol {
        mu = 0.5 * (lo + hi);
        let mut a = if occupations_of(&alpha_lo).iter().sum::<f64>() > 0.0 { alpha_lo.clone() } else { alpha_hi.clone() };
        let nsum = count(mu, &mut a);
        best = a.clone();
        if (nsum - target).abs() < 1e-13 {
            break;
        }
        if nsum < target {
            lo = mu;
            alpha_lo = a;
        } else {
            hi = mu;
            alpha_hi = a;
        }
    }
    let mut n = occupations_of(&best);
    polish_sum(&mut n, target);
    let energy = problem.energy(&n);
    Ok(OccupationPhase { occupations: n, mu, energy })
}

/// Per-iterate bookkeeping, recorded after every outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub energy: f64,
    pub electron_sum: f64,
    pub min_occupation: f64,
    pub max_occupation: f64,
    pub hermiticity: f64,
    pub density_change: f64,
}

#[derive(Debug, Clone)]
pub struct ScfOutcome {
    pub functional: Functional,
    pub rdm: OneRdm,
    pub energy: EnergyReport,
    pub mu: Option<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub hermiticity: f64,
    pub history: Vec<IterateRecord>,
}

fn joint_density(basis: &OrbitalSet, rdm: &OneRdm) -> Field {
    crate::observables::density_from_matrix(basis, &rdm.matrix()).rho
}

/// Moves `amount` electrons from the highest occupied orbital into the next
/// three, so the Müller iteration does not start on the HF stationary point.
pub fn muller_start(hf: &OneRdm, n_electrons: usize, amount: f64) -> OneRdm {
    let mut out = hf.clone();
    let homo = n_electrons / 2 - 1;
    let targets: Vec<usize> = ((homo + 1)..out.len()).take(3).collect();
    if targets.is_empty() {
        return out;
    }
    out.occupations[homo] -= amount;
    for &t in &targets {
        out.occupations[t] += amount / targets.len() as f64;
    }
    out
}

/// Self-consistent minimization; HF keeps the occupations pinned.
pub fn solve(
    basis: &OrbitalSet,
    table: &IntegralTable,
    functional: Functional,
    initial: Option<OneRdm>,
    settings: &ScfSettings,
) -> Result<ScfOutcome, SolverError> {
    let n_electrons = table.n_electrons;
    let m = table.len();
    if m < n_electrons / 2 {
        return Err(BasisError::TooFewOrbitals { requested: m, electrons: n_electrons }.into());
    }
    let mut rdm = match (initial, functional) {
        (Some(rdm), _) => {
            if rdm.len() != m {
                return Err(SolverError::CheckpointMismatch);
            }
            rdm
        }
        (None, Functional::HartreeFock) => OneRdm::aufbau(m, n_electrons),
        (None, Functional::Muller) => {
            let hf = solve(basis, table, Functional::HartreeFock, None, settings)?;
            muller_start(&hf.rdm, n_electrons, 1e-2)
        }
    };
    rdm.check(n_electrons, 1e-8)?;

    let mut history = Vec::new();
    let mut rho = joint_density(basis, &rdm);
    let mut e_old = energy(table, &rdm).total;
    let mut mu = None;
    let mut converged = false;
    let mut herm = f64::INFINITY;
    let mut outer = 0;
    while outer < settings.max_outer {
        outer += 1;
        let phase = optimize_orbitals(table, &mut rdm, settings.hermiticity_tol, settings.max_orbital_steps, settings.lbfgs_memory);
        herm = phase.hermiticity;
        let mut e_new = phase.energy;
        if functional == Functional::Muller {
            let r = rotate(table, &rdm.coefficients);
            let before = energy_parts(&r, &rdm.occupations).total;
            let occ = occupations_in(&r, &rdm.occupations, n_electrons as f64, mu.unwrap_or(0.0), settings.mu_tol)?;
            let mixed: Vec<f64> = rdm
                .occupations
                .iter()
                .zip(&occ.occupations)
                .map(|(o, n)| o + settings.mixing * (n - o))
                .collect();
            let e_mixed = energy_parts(&r, &mixed).total;
            if e_mixed <= before + 1e-12 * before.abs() {
                rdm.occupations = mixed;
                e_new = e_mixed;
            } else {
                e_new = before;
            }
            mu = Some(occ.mu);
            let (a, b) = operators(table, &r, &rdm.occupations);
            herm = hermiticity(&lagrangian(&a, &b, &rdm.occupations));
        }
        rdm.check(n_electrons, 1e-8)?;
        let rho_new = joint_density(basis, &rdm);
        let drho = density_difference(&rho_new, &rho).expect("same basis grid");
        rho = rho_new;
        history.push(IterateRecord {
            energy: e_new,
            electron_sum: rdm.n_electrons(),
            min_occupation: rdm.occupations.iter().cloned().fold(f64::INFINITY, f64::min),
            max_occupation: rdm.occupations.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            hermiticity: herm,
            density_change: drho,
        });
        log::debug!("scf {outer}: E = {e_new:.12} |ΔE| = {:.2e} Δρ = {drho:.2e} herm = {herm:.2e}", (e_new - e_old).abs());
        let de = (e_new - e_old).abs();
        e_old = e_new;
        if de < settings.energy_tol && drho < settings.density_tol && herm < settings.hermiticity_tol {
            converged = true;
            break;
        }
    }
    let energy = energy(table, &rdm);
    Ok(ScfOutcome {
        functional,
        rdm: rdm.sorted(),
        energy,
        mu,
        converged,
        outer_iterations: outer,
        hermiticity: herm,
        history,
    })
}

/// Writes occupations and coefficients with the model hash and the
/// settings that produced them.
pub fn save_checkpoint(path: &Path, rdm: &OneRdm, model_hash: &str, settings: &ScfSettings) -> Result<(), SolverError> {
    let mut c = Container::new_without_grid("one_rdm", model_hash);
    c.meta.insert("settings".into(), serde_json::to_value(settings).expect("settings serialize"));
    c.push("occupations", vec![rdm.len()], rdm.occupations.clone());
    c.push_matrix("coefficients", &rdm.coefficients);
    c.write(path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, model_hash: &str, m: usize) -> Result<OneRdm, SolverError> {
    let c = Container::read(path)?;
    if c.kind != "one_rdm" || c.model_hash != model_hash {
        return Err(SolverError::CheckpointMismatch);
    }
    let occupations = c.block("occupations")?.1.to_vec();
    let coefficients = c.matrix("coefficients")?;
    if occupations.len() != m || coefficients.shape() != (m, m) {
        return Err(SolverError::CheckpointMismatch);
    }
    Ok(OneRdm { occupations, coefficients })
}

/// Restricted Hartree-Fock directly on a 1D grid, by damped density
/// iteration on the dense Fock matrix. Independent of the basis machinery.
#[derive(Debug, Clone)]
pub struct GridHartreeFock {
    pub energy: f64,
    pub density: Field,
}

pub fn grid_hartree_fock(model: &ModelSpec, grid: &UniformGrid, tol: f64) -> Result<GridHartreeFock, SolverError> {
    model.validate()?;
    if grid.ndim() != 1 || model.n_modes() != 0 {
        return Err(ModelError::ArityMismatch { expected: 1, actual: grid.ndim() }.into());
    }
    let axis = grid.axis(0);
    let n = axis.len();
    let h = axis.spacing();
    let xs = axis.points();
    let core = axis_hamiltonian(axis, |x| crate::model::bare_potential(x, &model.potential));
    let w = DMatrix::from_fn(n, n, |i, j| model.electron_interaction(xs[i], xs[j]));
    let occ = model.n_electrons / 2;
    let mut fock = core.clone();
    let mut p_old = DMatrix::<f64>::zeros(n, n);
    let mut e_old = f64::INFINITY;
    for it in 0..500 {
        let (_, vecs) = crate::eigen::sym_eigen(&fock);
        let c = vecs.columns(0, occ) / h.sqrt();
        // Spin-summed density matrix P(x, x') = 2 Σ φ(x) φ(x').
        let p_new = 2.0 * &c * c.transpose();
        let p = if it == 0 { p_new } else { 0.5 * (&p_new + &p_old) };
        let rho: DVector<f64> = p.diagonal();
        let vh = &w * &rho * h;
        let mut g = DMatrix::from_diagonal(&vh);
        // Exchange K(x, x') = −½ P(x, x') w(x, x') h.
        g -= p.component_mul(&w) * (0.5 * h);
        fock = &core + &g;
        let e = 0.5 * ((p.component_mul(&(&core + &fock))).sum() * h);
        let done = (e - e_old).abs() < tol && (&p - &p_old).amax() < tol.sqrt();
        e_old = e;
        p_old = p;
        if done {
            break;
        }
    }
    let density = Field::new(grid.clone(), p_old.diagonal().as_slice().to_vec()).expect("grid length");
    Ok(GridHartreeFock { energy: e_old, density })
}
