//! TOML scenario configuration.

use std::path::Path;

use biasfield_core::bias::{build_bias_state, BiasConfig, BiasTemperature, BiasState};
use biasfield_core::fields::{Field, Grid, IncrementalAction, Partitions, Profile, SidePartition};
use biasfield_core::material::MaterialModel;
use biasfield_core::solver::{InitialConditions, Model, Scenario, ThermalScheme};
use biasfield_core::tensor::Tensor;
use biasfield_core::theorems::ElectricSurfaceSign;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

/// Material moduli as flat row-major arrays. Coupling moduli default to
/// zero, `a_heat` to 1 and `kappa` to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub dim: usize,
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default = "one")]
    pub theta_ref: f64,
    pub c2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3: Option<Vec<f64>>,
    #[serde(default)]
    pub e_piezo: Vec<f64>,
    #[serde(default)]
    pub chi_diel: Vec<f64>,
    #[serde(default)]
    pub lam_thermo: Vec<f64>,
    #[serde(default)]
    pub p_pyro: Vec<f64>,
    #[serde(default = "one")]
    pub a_heat: f64,
    #[serde(default)]
    pub kappa: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn tensor(name: &str, dim: usize, rank: usize, v: &[f64]) -> Result<Tensor, ConfigError> {
    if v.is_empty() {
        return Ok(Tensor::zeros(dim, rank));
    }
    Tensor::from_vec(dim, rank, v.to_vec()).ok_or_else(|| {
        invalid(format!(
            "material.{name} needs {} entries for dim {dim}, got {}",
            dim.pow(rank as u32),
            v.len()
        ))
    })
}

impl MaterialSection {
    pub fn build(&self) -> Result<MaterialModel, ConfigError> {
        let d = self.dim;
        if !(1..=2).contains(&d) {
            return Err(invalid(format!("material.dim must be 1 or 2, got {d}")));
        }
        let m = MaterialModel {
            rho0: self.rho0,
            eps0: self.eps0,
            theta_ref: self.theta_ref,
            c2: tensor("c2", d, 4, &self.c2)?,
            c3: self.c3.as_deref().map(|v| tensor("c3", d, 6, v)).transpose()?,
            e_piezo: tensor("e_piezo", d, 3, &self.e_piezo)?,
            chi_diel: tensor("chi_diel", d, 2, &self.chi_diel)?,
            lam_thermo: tensor("lam_thermo", d, 2, &self.lam_thermo)?,
            p_pyro: tensor("p_pyro", d, 1, &self.p_pyro)?,
            a_heat: self.a_heat,
            kappa_cond: if self.kappa.is_empty() {
                Tensor::identity(d)
            } else {
                tensor("kappa", d, 2, &self.kappa)?
            },
        };
        m.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(m)
    }
}

/// Static bias; omitted entries fall back to the natural state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<BiasTemperature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

/// Initial value `amplitude · profile(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialProfile {
    pub amplitude: Vec<f64>,
    pub profile: Profile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<InitialProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<InitialProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<InitialProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one_usize")]
    pub save_stride: usize,
    #[serde(default)]
    pub thermal_scheme: ThermalScheme,
    #[serde(default)]
    pub strict_stability: bool,
}

fn one_usize() -> usize {
    1
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 1.0,
            save_stride: 1,
            thermal_scheme: ThermalScheme::default(),
            strict_stability: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSection {
    /// Laplace parameters for reciprocity.
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    /// Number of dyadic refinements in convergence studies.
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub electric_sign: ElectricSurfaceSign,
    /// Random samples for pointwise checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Amplitude of the random interior perturbation in uniqueness runs.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_p() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_levels() -> usize {
    3
}
fn default_samples() -> usize {
    50
}
fn default_perturbation() -> f64 {
    0.1
}

impl Default for VerificationSection {
    fn default() -> Self {
        Self {
            p: default_p(),
            levels: default_levels(),
            electric_sign: ElectricSurfaceSign::default(),
            samples: default_samples(),
            seed: 0,
            perturbation: default_perturbation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub material: MaterialSection,
    #[serde(default)]
    pub bias: BiasSection,
    pub grid: GridSection,
    /// Boundary partitions; every side essential when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Partitions>,
    #[serde(default)]
    pub action: IncrementalAction,
    /// Second loading, used by reciprocity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_b: Option<IncrementalAction>,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub verification: VerificationSection,
}

/// Line number (1-based) of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
    let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_str(&text)
}

/// Setup built from a validated config.
pub struct Built {
    pub material: MaterialModel,
    pub bias: BiasState,
    pub grid: Grid,
    pub model: Model,
}

impl Config {
    /// Canonical TOML form; parsing it yields an identical config.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn partitions(&self) -> Partitions {
        self.partitions
            .clone()
            .unwrap_or_else(|| Partitions::uniform(SidePartition::all_essential(self.material.dim)))
    }

    pub fn bias_config(&self, m: &MaterialModel) -> BiasConfig {
        let nat = BiasConfig::natural(m);
        BiasConfig {
            f0: self.bias.f0.clone().unwrap_or(nat.f0),
            w0: self.bias.w0.clone().unwrap_or(nat.w0),
            theta0: self.bias.theta0.clone().unwrap_or(nat.theta0),
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = &self.grid;
        let d = self.material.dim;
        if g.lo.len() != d || g.hi.len() != d || g.n.len() != d {
            return Err(invalid(format!("grid.lo, grid.hi and grid.n need {d} entries")));
        }
        if g.lo.iter().zip(&g.hi).any(|(a, b)| !(b > a)) {
            return Err(invalid("grid.hi must exceed grid.lo on every axis"));
        }
        Grid::new(g.lo.clone(), g.hi.clone(), g.n.clone()).map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Built, ConfigError> {
        let m = self.material.build()?;
        let grid = self.grid()?;
        let parts = self.partitions();
        parts
            .validate(grid.dim())
            .map_err(|e| invalid(format!("{e} (essential and natural sides must be disjoint and cover the boundary)")))?;
        let it = &self.integrator;
        if !(it.dt > 0.0) || !it.dt.is_finite() {
            return Err(invalid(format!("integrator.dt must be positive, got {}", it.dt)));
        }
        if !(it.t_final > 0.0) {
            return Err(invalid(format!("integrator.t_final must be positive, got {}", it.t_final)));
        }
        if it.save_stride == 0 {
            return Err(invalid("integrator.save_stride must be at least 1"));
        }
        for (name, a) in std::iter::once(("action", &self.action)).chain(self.action_b.iter().map(|a| ("action_b", a))) {
            a.validate(&grid, &parts).map_err(|e| invalid(format!("{name}: {e}")))?;
        }
        let v = &self.verification;
        if v.p.is_empty() || v.p.iter().any(|p| !(*p > 0.0)) {
            return Err(invalid("verification.p must be a non-empty list of positive values"));
        }
        if v.levels == 0 || v.samples == 0 {
            return Err(invalid("verification.levels and verification.samples must be at least 1"));
        }
        for (name, ip, nc) in [
            ("u", &self.initial.u, grid.dim()),
            ("v", &self.initial.v, grid.dim()),
            ("theta", &self.initial.theta, 1),
        ] {
            if let Some(ip) = ip {
                if ip.amplitude.len() != nc {
                    return Err(invalid(format!("initial.{name}.amplitude needs {nc} entries")));
                }
            }
        }
        let bias = build_bias_state(&m, &self.bias_config(&m), grid.lo(), grid.hi())
            .map_err(|e| invalid(format!("bias: {e}")))?;
        let model = Model::from_bias(&m, &bias, grid.clone(), parts).map_err(|e| invalid(e.to_string()))?;
        Ok(Built {
            material: m,
            bias,
            grid,
            model,
        })
    }

    pub fn initial_conditions(&self, grid: &Grid) -> InitialConditions {
        let field = |ip: &Option<InitialProfile>, nc: usize| match ip {
            Some(ip) => Field::from_fn(grid, nc, |x| {
                let s = ip.profile.eval(grid, x);
                ip.amplitude.iter().map(|a| a * s).collect()
            }),
            None => Field::zeros(grid, nc),
        };
        InitialConditions {
            u: field(&self.initial.u, grid.dim()),
            v: field(&self.initial.v, grid.dim()),
            theta: field(&self.initial.theta, 1),
        }
    }

    /// Scenario for `model` with the given action and time step.
    pub fn scenario(&self, model: Model, action: &IncrementalAction, dt: f64) -> Scenario {
        let initial = self.initial_conditions(&model.grid);
        let it = &self.integrator;
        let mut sc = Scenario::new(model, action.clone(), dt, it.t_final);
        sc.initial = initial;
        sc.save_stride = it.save_stride;
        sc.thermal_scheme = it.thermal_scheme;
        sc.strict_stability = it.strict_stability;
        sc.metadata.insert("seed".into(), self.verification.seed.to_string());
        sc
    }

    /// Same config on a grid refined `level` times (spacing halved each time).
    pub fn refined_grid(&self, level: usize) -> Result<Grid, ConfigError> {
        let g = &self.grid;
        let n = g.n.iter().map(|&n| (n - 1) * (1 << level) + 1).collect();
        Grid::new(g.lo.clone(), g.hi.clone(), n).map_err(|e| invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[material]
dim = 1
c2 = [2.0]

[grid]
lo = [0.0]
hi = [1.0]
n = [11]
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_str(MINIMAL).unwrap();
        assert_eq!(c.bias, BiasSection::default());
        assert!(c.action.is_empty());
        assert_eq!(c.integrator, IntegratorSection::default());
        let b = c.build().unwrap();
        assert!(b.bias.is_natural(&b.material));
        assert_eq!(c.partitions(), Partitions::uniform(SidePartition::all_essential(1)));
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let text = format!("{MINIMAL}\n[integrator]\ndt = 0.1\nt_final = 1.0\nbogus = 3\n");
        match parse_str(&text) {
            Err(ConfigError::Parse { line, msg }) => {
                assert!(msg.contains("bogus"), "{msg}");
                assert_eq!(line, text.lines().position(|l| l.starts_with("bogus")).unwrap() + 1);
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{MINIMAL}\n[[action.boundary]]\nside = \"right\"\nkind = \"traction\"\namplitude = [1.0]\nprofile = {{ type = \"uniform\" }}\nsignal = {{ type = \"constant\" }}\nextra = 1\n");
        assert!(matches!(parse_str(&text), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn overlapping_partitions_rejected() {
        let text = format!(
            "{MINIMAL}\n[partitions]\nmechanical = {{ essential = [\"left\"], natural = [\"left\", \"right\"] }}\nelectric = {{ essential = [\"left\", \"right\"], natural = [] }}\nthermal = {{ essential = [\"left\", \"right\"], natural = [] }}\n"
        );
        match parse_str(&text) {
            Err(ConfigError::Validation(msg)) => assert!(msg.contains("disjoint"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_rejected() {
        let dt = format!("{MINIMAL}\n[integrator]\ndt = 0.0\nt_final = 1.0\n");
        assert!(matches!(parse_str(&dt), Err(ConfigError::Validation(m)) if m.contains("dt")));
        let sig = format!("{MINIMAL}\n[[action.body_force]]\namplitude = [1.0]\nprofile = {{ type = \"uniform\" }}\nsignal = {{ type = \"square\" }}\n");
        assert!(matches!(parse_str(&sig), Err(ConfigError::Parse { .. })));
        let c2 = MINIMAL.replace("c2 = [2.0]", "c2 = [2.0, 1.0]");
        assert!(matches!(parse_str(&c2), Err(ConfigError::Validation(m)) if m.contains("c2")));
    }

    #[test]
    fn canonical_round_trip() {
        let text = r#"
[material]
dim = 1
c2 = [2.0]
e_piezo = [0.3]
chi_diel = [1.0]
lam_thermo = [0.2]
p_pyro = [0.05]
a_heat = 1.5
kappa = [0.5]

[bias]
f0 = [[1.05]]
w0 = [0.1]
theta0 = { affine = { center = 1.0, gradient = [0.3] } }

[grid]
lo = [0.0]
hi = [1.0]
n = [21]

[partitions]
mechanical = { essential = ["left"], natural = ["right"] }
electric = { essential = ["left"], natural = ["right"] }
thermal = { essential = ["left"], natural = ["right"] }

[[action.boundary]]
side = "right"
kind = "traction"
amplitude = [0.5]
profile = { type = "uniform" }
signal = { type = "gaussian_pulse", center = 0.8, width = 0.15 }

[[action_b.boundary]]
side = "right"
kind = "heat_flux"
amplitude = [0.4]
profile = { type = "uniform" }
signal = { type = "sine", freq = 1.0, phase = 0.0 }

[initial.theta]
amplitude = [0.1]
profile = { type = "sine_mode", modes = [1] }

[integrator]
dt = 0.01
t_final = 2.0
thermal_scheme = "backward_euler"

[verification]
p = [1.0, 2.0]
electric_sign = "symmetric"
seed = 42
"#;
        let c = parse_str(text).unwrap();
        let canon = c.to_canonical();
        let again = parse_str(&canon).unwrap();
        assert_eq!(c, again);
        assert_eq!(canon, again.to_canonical());
    }
}
