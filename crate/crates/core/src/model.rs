//! Model systems and the dressed (electron plus mode-displacement) operators.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{add_second_derivative, UniformGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown potential kind `{0}`")]
    UnknownKind(String),
    #[error("expected {expected} mode coordinates, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    SoftHelium,
    /// Two soft centres at `±half_distance`.
    SoftHydrogenMolecule { half_distance: f64 },
    SoftBeryllium,
    Harmonic { stiffness: f64 },
    /// Linear interpolation of tabulated samples; constant beyond the ends.
    Custom { x: Vec<f64>, v: Vec<f64> },
}

impl PotentialKind {
    /// Parses a kind by its configuration name. `param` is the bond
    /// half-distance for molecules and the stiffness for the oscillator.
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self, ModelError> {
        let need = |what: &str| {
            param.ok_or_else(|| ModelError::Invalid(format!("`{name}` needs a {what}")))
        };
        match name.to_ascii_lowercase().as_str() {
            "he" | "helium" | "soft_helium" => Ok(Self::SoftHelium),
            "h2" | "hydrogen_molecule" | "soft_hydrogen_molecule" => Ok(Self::SoftHydrogenMolecule {
                half_distance: need("distance d")?,
            }),
            "be" | "beryllium" | "soft_beryllium" => Ok(Self::SoftBeryllium),
            "harmonic" => Ok(Self::Harmonic {
                stiffness: need("stiffness k")?,
            }),
            _ => Err(ModelError::UnknownKind(name.to_string())),
        }
    }

    /// Softening used when none is given.
    pub fn default_softening(&self) -> f64 {
        match self {
            Self::SoftBeryllium => 0.5,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub softening: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind) -> Self {
        let softening = kind.default_softening();
        Self { kind, softening }
    }

    pub fn helium() -> Self {
        Self::new(PotentialKind::SoftHelium)
    }

    /// Centres at `±bond_length/2`.
    pub fn hydrogen_bond(bond_length: f64) -> Self {
        Self::hydrogen_molecule(0.5 * bond_length)
    }

    pub fn hydrogen_molecule(half_distance: f64) -> Self {
        Self::new(PotentialKind::SoftHydrogenMolecule { half_distance })
    }

    pub fn beryllium() -> Self {
        Self::new(PotentialKind::SoftBeryllium)
    }

    pub fn harmonic(stiffness: f64) -> Self {
        Self::new(PotentialKind::Harmonic { stiffness })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.softening > 0.0) {
            return Err(ModelError::Invalid("potential softening must be positive".into()));
        }
        match &self.kind {
            PotentialKind::SoftHydrogenMolecule { half_distance } if !(*half_distance >= 0.0) => {
                Err(ModelError::Invalid("bond distance must be non-negative".into()))
            }
            PotentialKind::Custom { x, v } => {
                if x.len() != v.len() || x.len() < 2 {
                    return Err(ModelError::Invalid(
                        "tabulated potential needs at least two (x, v) pairs".into(),
                    ));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ModelError::Invalid("tabulated x must increase strictly".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Soft-Coulomb repulsion between the nuclei of a molecular potential;
    /// zero for single-centre kinds.
    pub fn nuclear_repulsion(&self) -> f64 {
        match self.kind {
            PotentialKind::SoftHydrogenMolecule { half_distance } => {
                soft_coulomb(-half_distance, half_distance, self.softening)
            }
            _ => 0.0,
        }
    }
}

/// External potential `v(x)`.
pub fn bare_potential(x: f64, spec: &PotentialSpec) -> f64 {
    let eps = spec.softening;
    match &spec.kind {
        PotentialKind::SoftHelium => -2.0 / (x * x + eps * eps).sqrt(),
        PotentialKind::SoftHydrogenMolecule { half_distance: d } => {
            -soft_coulomb(x, *d, eps) - soft_coulomb(x, -*d, eps)
        }
        PotentialKind::SoftBeryllium => -4.0 / (x * x + eps * eps).sqrt(),
        PotentialKind::Harmonic { stiffness } => 0.5 * stiffness * x * x,
        PotentialKind::Custom { x: xs, v } => interpolate(xs, v, x),
    }
}

fn interpolate(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return vs[0];
    }
    if x >= xs[xs.len() - 1] {
        return vs[vs.len() - 1];
    }
    let hi = xs.partition_point(|&p| p <= x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    vs[lo] + t * (vs[hi] - vs[lo])
}

pub fn soft_coulomb(x: f64, x2: f64, softening: f64) -> f64 {
    let d = x - x2;
    1.0 / (d * d + softening * softening).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonMode {
    pub omega: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub g: f64,
    pub g_over_omega: f64,
}

impl PhotonMode {
    pub fn new(omega: f64, lambda: f64) -> Self {
        Self { omega, lambda }
    }

    /// Mode with coupling given as `g/ω`.
    pub fn from_g_over_omega(omega: f64, g_over_omega: f64) -> Self {
        Self {
            omega,
            lambda: lambda_for(g_over_omega, omega),
        }
    }

    pub fn coupling(&self) -> Coupling {
        effective_coupling(self)
    }
}

/// `g = |λ| sqrt(ω/2)`.
pub fn effective_coupling(mode: &PhotonMode) -> Coupling {
    let g = mode.lambda.abs() * (0.5 * mode.omega).sqrt();
    Coupling {
        g,
        g_over_omega: g / mode.omega,
    }
}

pub fn lambda_for(g_over_omega: f64, omega: f64) -> f64 {
    g_over_omega * omega / (0.5 * omega).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub potential: PotentialSpec,
    pub interaction_softening: f64,
    pub n_electrons: usize,
    pub modes: Vec<PhotonMode>,
    pub interaction_enabled: bool,
}

impl ModelSpec {
    /// Interacting electrons with no cavity.
    pub fn bare(potential: PotentialSpec, n_electrons: usize) -> Self {
        Self {
            potential,
            interaction_softening: 1.0,
            n_electrons,
            modes: Vec::new(),
            interaction_enabled: true,
        }
    }

    pub fn with_mode(mut self, mode: PhotonMode) -> Self {
        self.modes.push(mode);
        self
    }

    pub fn without_interaction(mut self) -> Self {
        self.interaction_enabled = false;
        self
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.potential.validate()?;
        if self.n_electrons < 2 || !self.n_electrons.is_multiple_of(2) {
            return Err(ModelError::Invalid(format!(
                "closed-shell models need an even electron count >= 2, got {}",
                self.n_electrons
            )));
        }
        if !(self.interaction_softening > 0.0) {
            return Err(ModelError::Invalid("interaction softening must be positive".into()));
        }
        for mode in &self.modes {
            if !(mode.omega > 0.0) || !(mode.lambda >= 0.0) || !mode.lambda.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "mode needs omega > 0 and lambda >= 0, got omega={} lambda={}",
                    mode.omega, mode.lambda
                )));
            }
        }
        Ok(())
    }

    /// `ω/√N`, the prefactor of the bilinear coupling terms.
    fn coupling_prefactor(&self, mode: &PhotonMode) -> f64 {
        mode.omega / (self.n_electrons as f64).sqrt()
    }

    fn check_arity(&self, q: &[f64]) -> Result<(), ModelError> {
        if q.len() != self.modes.len() {
            return Err(ModelError::ArityMismatch {
                expected: self.modes.len(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// One-body potential of a dressed particle at `(x, q)`.
    pub fn dressed_potential(&self, x: f64, q: &[f64]) -> Result<f64, ModelError> {
        self.check_arity(q)?;
        Ok(self.dressed_potential_unchecked(x, q))
    }

    pub(crate) fn dressed_potential_unchecked(&self, x: f64, q: &[f64]) -> f64 {
        let mut v = bare_potential(x, &self.potential);
        for (mode, &qa) in self.modes.iter().zip(q) {
            let lx = mode.lambda * x;
            v += 0.5 * mode.omega * mode.omega * qa * qa - self.coupling_prefactor(mode) * qa * lx
                + 0.5 * lx * lx;
        }
        v
    }

    /// Two-body kernel between dressed particles at `(x, q)` and `(x2, q2)`.
    pub fn dressed_interaction(
        &self,
        x: f64,
        q: &[f64],
        x2: f64,
        q2: &[f64],
    ) -> Result<f64, ModelError> {
        self.check_arity(q)?;
        self.check_arity(q2)?;
        Ok(self.dressed_interaction_unchecked(x, q, x2, q2))
    }

    pub(crate) fn dressed_interaction_unchecked(&self, x: f64, q: &[f64], x2: f64, q2: &[f64]) -> f64 {
        let mut w = if self.interaction_enabled {
            soft_coulomb(x, x2, self.interaction_softening)
        } else {
            0.0
        };
        for ((mode, &qa), &qb) in self.modes.iter().zip(q).zip(q2) {
            let c = self.coupling_prefactor(mode);
            w += -c * mode.lambda * (qa * x2 + qb * x) + mode.lambda * mode.lambda * (x * x2);
        }
        w
    }

    /// Electronic interaction only (the part that does not involve modes).
    pub fn electron_interaction(&self, x: f64, x2: f64) -> f64 {
        if self.interaction_enabled {
            soft_coulomb(x, x2, self.interaction_softening)
        } else {
            0.0
        }
    }

    /// `-(ω/√N) λ` for mode `a`: the weight of the `q x'` cross terms.
    pub fn cross_weight(&self, a: usize) -> f64 {
        let mode = &self.modes[a];
        -self.coupling_prefactor(mode) * mode.lambda
    }

    /// Same model with every coupling switched off.
    pub fn uncoupled(&self) -> Self {
        let mut out = self.clone();
        for mode in &mut out.modes {
            mode.lambda = 0.0;
        }
        out
    }

    /// Same model with all modes removed.
    pub fn electronic(&self) -> Self {
        let mut out = self.clone();
        out.modes.clear();
        out
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Matrix-free dressed one-body operator on a grid with axes
    /// `(x, q_1, ..., q_M)`.
    pub fn one_body_operator(&self, grid: &UniformGrid) -> Result<OneBodyOperator, ModelError> {
        self.validate()?;
        if grid.ndim() != 1 + self.modes.len() {
            return Err(ModelError::ArityMismatch {
                expected: 1 + self.modes.len(),
                actual: grid.ndim().saturating_sub(1),
            });
        }
        let potential = grid
            .sample(|c| self.dressed_potential_unchecked(c[0], &c[1..]))
            .into_values();
        Ok(OneBodyOperator {
            grid: grid.clone(),
            potential,
        })
    }
}

/// `f ↦ -½Δf + v'f` on a single-particle grid.
#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    grid: UniformGrid,
    potential: Vec<f64>,
}

impl OneBodyOperator {
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        for ((o, &v), &x) in out.iter_mut().zip(&self.potential).zip(f) {
            *o = v * x;
        }
        let dims = self.grid.dims();
        for (a, axis) in self.grid.axes().iter().enumerate() {
            let h = axis.spacing();
            add_second_derivative(f, &dims, a, -0.5 / (h * h), out);
        }
    }

    pub fn apply_vec(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply(f, &mut out);
        out
    }

    /// Diagonal of the discretized operator.
    pub fn diagonal(&self) -> Vec<f64> {
        let kinetic: f64 = self
            .grid
            .axes()
            .iter()
            .map(|a| 0.5 * 2.5 / (a.spacing() * a.spacing()))
            .sum();
        self.potential.iter().map(|v| v + kinetic).collect()
    }
}

/// Kinetic plus potential matrix of a single 1D axis, dense.
pub fn axis_hamiltonian(axis: &crate::grid::Axis, potential: impl Fn(f64) -> f64) -> nalgebra::DMatrix<f64> {
    let n = axis.len();
    let h2 = axis.spacing() * axis.spacing();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 0.5 * 2.5 / h2 + potential(axis.point(i));
        if i + 1 < n {
            m[(i, i + 1)] = -0.5 * (4.0 / 3.0) / h2;
            m[(i + 1, i)] = m[(i, i + 1)];
        }
        if i + 2 < n {
            m[(i, i + 2)] = 0.5 / 12.0 / h2;
            m[(i + 2, i)] = m[(i, i + 2)];
        }
    }
    m
}
