//! TOML run configuration.

use std::path::{Path, PathBuf};

use polariton_core::grid::{make_grid, AxisSpec, UniformGrid};
use polariton_core::model::{ModelSpec, PhotonMode, PotentialKind, PotentialSpec};
use polariton_core::solver::ScfSettings;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Thresholds as published.
    Paper,
    /// Relaxed thresholds for quick runs.
    Desk,
}

impl Profile {
    pub fn scf(self) -> ScfSettings {
        match self {
            Profile::Paper => ScfSettings::paper(),
            Profile::Desk => ScfSettings::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Ip,
    Hf,
    Rdmft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "Lx", alias = "lx", alias = "L_x")]
    Lx,
    #[serde(rename = "dx")]
    Dx,
    #[serde(rename = "Lq", alias = "lq", alias = "L_q")]
    Lq,
    #[serde(rename = "dq")]
    Dq,
    #[serde(rename = "ES", alias = "es")]
    Es,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "g_over_omega")]
    GOverOmega,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Lx => "Lx",
            Variable::Dx => "dx",
            Variable::Lq => "Lq",
            Variable::Dq => "dq",
            Variable::Es => "ES",
            Variable::D => "d",
            Variable::GOverOmega => "g_over_omega",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// `he`, `h2`, `be` or `harmonic`.
    pub kind: String,
    /// H₂ bond length; the nuclei sit at ±d/2.
    #[serde(alias = "d")]
    pub bond_length: Option<f64>,
    pub stiffness: Option<f64>,
    #[serde(alias = "N")]
    pub n_electrons: Option<usize>,
    pub softening: Option<f64>,
    pub interaction_softening: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub omega: f64,
    pub lambda: Option<f64>,
    pub g_over_omega: Option<f64>,
    #[serde(default = "one")]
    pub modes: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(alias = "Lx", alias = "L_x")]
    pub lx: f64,
    pub dx: f64,
    #[serde(alias = "Lq", alias = "L_q")]
    pub lq: Option<f64>,
    pub dq: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Option<Method>,
    /// Basis size.
    #[serde(alias = "M")]
    pub m: Option<usize>,
    /// Extra states beyond the N/2 occupied ones; `M = N/2 + ES`.
    #[serde(alias = "ES")]
    pub es: Option<usize>,
    pub energy_tol: Option<f64>,
    pub density_tol: Option<f64>,
    pub hermiticity_tol: Option<f64>,
    pub mu_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_orbital_steps: Option<usize>,
    /// Restart file read before the run.
    pub checkpoint: Option<PathBuf>,
    /// Natural orbitals reported by the exact solver.
    pub orbitals: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub variable: Variable,
    pub values: Vec<f64>,
    /// Element every row is also compared against.
    pub reference: Option<f64>,
    pub energy_tol: Option<f64>,
    pub density_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: all_formats(),
        }
    }
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub energy_tol: Option<f64>,
    pub density_tol: Option<f64>,
    /// Bound on |E_HF(grid) − E_HF(basis)| and on the λ=0 energy identity.
    pub consistency_tol: Option<f64>,
    /// Extra states added for the basis-convergence comparisons.
    pub es_step: Option<usize>,
    /// Box growth used by the length checks.
    pub box_step: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub cavity: Option<CavitySection>,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub series: Option<SeriesSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn method(&self) -> Method {
        self.solver.method.expect("validated")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let Some(method) = self.solver.method else {
            return invalid("[solver] needs a method (exact, ip, hf or rdmft)");
        };
        if let Some(c) = &self.cavity {
            if !(c.omega > 0.0) {
                return invalid("cavity omega must be positive");
            }
            match (c.lambda, c.g_over_omega) {
                (Some(_), Some(_)) => return invalid("give either lambda or g_over_omega, not both"),
                (None, None) => return invalid("cavity needs lambda or g_over_omega"),
                _ => {}
            }
            if c.modes == 0 {
                return invalid("cavity modes must be at least 1");
            }
            if self.grid.lq.is_none() || self.grid.dq.is_none() {
                return invalid("a cavity needs Lq and dq in [grid]");
            }
        }
        if self.solver.m.is_some() && self.solver.es.is_some() {
            return invalid("give either M or ES, not both");
        }
        if method != Method::Exact && self.solver.m.is_none() && self.solver.es.is_none() {
            return invalid("basis methods need M or ES");
        }
        let model = self.model()?;
        if method == Method::Exact && model.n_electrons != 2 {
            return invalid("the exact solver handles two electrons");
        }
        if let Some(m) = self.basis_size() {
            if m < model.n_electrons / 2 {
                return invalid(format!("M = {m} cannot hold {} electrons", model.n_electrons));
            }
        }
        self.grid()?;
        if let Some(s) = &self.series {
            if s.values.is_empty() {
                return invalid("[series] values is empty");
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return invalid("[series] values must be finite");
            }
            let present = match s.variable {
                Variable::Lx | Variable::Dx => true,
                Variable::Lq | Variable::Dq | Variable::GOverOmega => self.cavity.is_some(),
                Variable::Es => method != Method::Exact,
                Variable::D => self.system.bond_length.is_some(),
            };
            if !present {
                return invalid(format!("series variable {} does not exist in this config", s.variable.name()));
            }
            if let Some(r) = s.reference {
                if !s.values.contains(&r) {
                    return invalid("series reference must be one of the values");
                }
            }
            for &v in &s.values {
                self.with_value(s.variable, v)?;
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        let sys = &self.system;
        let kind = match sys.kind.to_ascii_lowercase().as_str() {
            "h2" | "hydrogen_molecule" => {
                let Some(d) = sys.bond_length else {
                    return invalid("h2 needs bond_length");
                };
                PotentialKind::SoftHydrogenMolecule { half_distance: 0.5 * d }
            }
            other => PotentialKind::from_name(other, sys.stiffness).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        };
        let n = match (sys.n_electrons, &kind) {
            (Some(n), _) => n,
            (None, PotentialKind::SoftHelium | PotentialKind::SoftHydrogenMolecule { .. }) => 2,
            (None, PotentialKind::SoftBeryllium) => 4,
            (None, _) => return invalid("n_electrons is required for this potential"),
        };
        let mut potential = PotentialSpec::new(kind);
        if let Some(eps) = sys.softening {
            potential.softening = eps;
        }
        let mut model = ModelSpec::bare(potential, n);
        if let Some(eps) = sys.interaction_softening {
            model.interaction_softening = eps;
        }
        if let Some(c) = &self.cavity {
            let mode = match (c.lambda, c.g_over_omega) {
                (Some(l), _) => PhotonMode::new(c.omega, l),
                (_, Some(g)) => PhotonMode::from_g_over_omega(c.omega, g),
                _ => unreachable!("validated"),
            };
            for _ in 0..c.modes {
                model = model.with_mode(mode);
            }
        }
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(model)
    }

    pub fn grid(&self) -> Result<UniformGrid, ConfigError> {
        let g = &self.grid;
        let mut axes = vec![AxisSpec::new(g.lx, g.dx)];
        if let Some(c) = &self.cavity {
            let q = AxisSpec::new(g.lq.expect("validated"), g.dq.expect("validated"));
            axes.extend(std::iter::repeat_n(q, c.modes));
        }
        make_grid(&axes).map_err(|e| ConfigError::Invalid(format!("grid: {e}")))
    }

    /// `M`, from either key.
    pub fn basis_size(&self) -> Option<usize> {
        let occupied = self.system_electrons() / 2;
        self.solver.m.or(self.solver.es.map(|es| occupied + es))
    }

    fn system_electrons(&self) -> usize {
        self.model().map(|m| m.n_electrons).unwrap_or(2)
    }

    pub fn scf(&self, profile: Profile) -> ScfSettings {
        let mut s = profile.scf();
        let o = &self.solver;
        if let Some(v) = o.energy_tol {
            s.energy_tol = v;
        }
        if let Some(v) = o.density_tol {
            s.density_tol = v;
        }
        if let Some(v) = o.hermiticity_tol {
            s.hermiticity_tol = v;
        }
        if let Some(v) = o.mu_tol {
            s.mu_tol = v;
        }
        if let Some(v) = o.max_outer {
            s.max_outer = v;
        }
        if let Some(v) = o.max_orbital_steps {
            s.max_orbital_steps = v;
        }
        s
    }

    /// Copy with one series variable set to `value`.
    pub fn with_value(&self, variable: Variable, value: f64) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        out.series = None;
        match variable {
            Variable::Lx => out.grid.lx = value,
            Variable::Dx => out.grid.dx = value,
            Variable::Lq => out.grid.lq = Some(value),
            Variable::Dq => out.grid.dq = Some(value),
            Variable::Es => {
                if value < 0.0 || value.fract() != 0.0 {
                    return invalid(format!("ES = {value} is not a count"));
                }
                out.solver.m = None;
                out.solver.es = Some(value as usize);
            }
            Variable::D => out.system.bond_length = Some(value),
            Variable::GOverOmega => {
                let Some(c) = out.cavity.as_mut() else {
                    return invalid("g_over_omega needs a cavity");
                };
                c.lambda = None;
                c.g_over_omega = Some(value);
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Copy with every coupling switched off.
    pub fn uncoupled(&self) -> Self {
        let mut out = self.clone();
        if let Some(c) = out.cavity.as_mut() {
            c.lambda = Some(0.0);
            c.g_over_omega = None;
        }
        out
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HE: &str = r#"
[system]
kind = "he"

[cavity]
omega = 0.5535
g_over_omega = 0.1

[grid]
Lx = 8.0
dx = 0.25
Lq = 8.0
dq = 0.25

[solver]
method = "rdmft"
ES = 10
"#;

    #[test]
    fn parses_the_reference_layout() {
        let cfg = RunConfig::parse(HE).unwrap();
        assert_eq!(cfg.method(), Method::Rdmft);
        assert_eq!(cfg.basis_size(), Some(11));
        let model = cfg.model().unwrap();
        assert_eq!(model.n_electrons, 2);
        assert!((model.modes[0].coupling().g_over_omega - 0.1).abs() < 1e-14);
        assert_eq!(cfg.grid().unwrap().ndim(), 2);
    }

    #[test]
    fn rejects_inconsistent_input() {
        assert!(matches!(RunConfig::parse("[system"), Err(ConfigError::Parse(_))));
        let both = HE.replace("g_over_omega = 0.1", "g_over_omega = 0.1\nlambda = 0.2");
        assert!(matches!(RunConfig::parse(&both), Err(ConfigError::Invalid(_))));
        let no_method = HE.replace("method = \"rdmft\"", "");
        assert!(RunConfig::parse(&no_method).is_err());
        let bad_series = format!("{HE}\n[series]\nvariable = \"d\"\nvalues = [1.0]\n");
        assert!(RunConfig::parse(&bad_series).is_err());
        let empty = format!("{HE}\n[series]\nvariable = \"ES\"\nvalues = []\n");
        assert!(RunConfig::parse(&empty).is_err());
        let unknown = HE.replace("[solver]", "[solver]\nbogus = 1");
        assert!(RunConfig::parse(&unknown).is_err());
    }

    #[test]
    fn series_values_apply() {
        let cfg = RunConfig::parse(&format!("{HE}\n[series]\nvariable = \"g_over_omega\"\nvalues = [0.0, 0.5]\n")).unwrap();
        let row = cfg.with_value(Variable::GOverOmega, 0.5).unwrap();
        assert!((row.model().unwrap().modes[0].coupling().g_over_omega - 0.5).abs() < 1e-14);
        let es = cfg.with_value(Variable::Es, 20.0).unwrap();
        assert_eq!(es.basis_size(), Some(21));
        assert!(cfg.with_value(Variable::Es, 2.5).is_err());
        assert_eq!(cfg.uncoupled().model().unwrap().modes[0].lambda, 0.0);
    }
}
