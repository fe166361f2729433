//! Densities, natural-orbital summaries and photon-mode observables.

use nalgebra::DMatrix;

use crate::grid::{Axis, Field, GridError, UniformGrid};
use crate::spbasis::{x_node_count, IntegralTable, OrbitalSet};

/// Joint density on the single-particle grid with its electronic and
/// per-mode marginals.
#[derive(Debug, Clone)]
pub struct DensityBundle {
    pub rho: Field,
    pub rho_x: Field,
    pub rho_q: Vec<Field>,
}

impl DensityBundle {
    pub fn from_joint(rho: Field) -> Self {
        let ndim = rho.grid().ndim();
        let rho_x = marginal(&rho, 0);
        let rho_q = (1..ndim).map(|a| marginal(&rho, a)).collect();
        Self { rho, rho_x, rho_q }
    }
}

/// Integrates out every axis except `keep`.
pub fn marginal(f: &Field, keep: usize) -> Field {
    let grid = f.grid();
    let dims = grid.dims();
    let strides = grid.strides();
    let weight: f64 = grid
        .axes()
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != keep)
        .map(|(_, ax)| ax.spacing())
        .product();
    let mut out = vec![0.0; dims[keep]];
    for (flat, v) in f.values().iter().enumerate() {
        out[(flat / strides[keep]) % dims[keep]] += v * weight;
    }
    let axis: Axis = *grid.axis(keep);
    Field::new(UniformGrid::from_axes(vec![axis]), out).expect("marginal length")
}

/// `∫ |a − b|`.
pub fn density_difference(a: &Field, b: &Field) -> Result<f64, GridError> {
    if a.grid() != b.grid() {
        return Err(GridError::GridMismatch);
    }
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum * a.grid().volume_element())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalSummary {
    pub occupation: f64,
    pub x_nodes: usize,
}

/// Occupation and electronic node count for each orbital column.
pub fn natural_orbital_report(grid: &UniformGrid, occupations: &[f64], orbitals: &DMatrix<f64>) -> Vec<OrbitalSummary> {
    occupations
        .iter()
        .zip(orbitals.column_iter())
        .map(|(&occupation, c)| OrbitalSummary {
            occupation,
            x_nodes: x_node_count(grid, c.as_slice(), 1e-6),
        })
        .collect()
}

/// Density `Σ_ab D_ab φ_a φ_b` of a basis-set one-body matrix `D`.
pub fn density_from_matrix(basis: &OrbitalSet, d: &DMatrix<f64>) -> DensityBundle {
    let phi = basis.orbitals();
    let pd = phi * d;
    let values = pd
        .row_iter()
        .zip(phi.row_iter())
        .map(|(a, b)| a.dot(&b))
        .collect();
    DensityBundle::from_joint(Field::new(basis.grid().clone(), values).expect("basis grid"))
}

/// `Tr[D h_ph]` for mode `mode`, with `h_ph = -½∂²_q + ½ω²q²`.
pub fn mode_energy_from_matrix(table: &IntegralTable, d: &DMatrix<f64>, mode: usize) -> f64 {
    d.component_mul(&table.mode_energy[mode]).sum()
}

/// `N_ph = E_ph/ω − N/2`, with `E_ph` summed over all particles' copies of
/// the mode.
pub fn mode_occupation(energy: f64, omega: f64, n_electrons: usize) -> f64 {
    energy / omega - 0.5 * n_electrons as f64
}
