//! Run configuration: a single JSON document with unit-suffixed keys.
//! Unknown keys are rejected. Omitted keys take the many-body defaults
//! (periodic 3x3 triangular lattice, J = 1 meV, in-plane DMI of 0.8 meV,
//! B = (0, 0, 1) T, kappa = 0.5, conservative rk4 with h = 0.02 ps).

use std::path::{Path, PathBuf};

use qllg::spin::{self, DmiMode, Geometry, HamiltonianSpec, InitialStateSpec, LatticeSpec, PhysicalConstants};
use qllg::{preset_tableau, IntegratorConfig, QllgError};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub hamiltonian: HamiltonianConfig,
    pub constants: ConstantsConfig,
    pub dynamics: DynamicsConfig,
    pub initial_state: InitialStateConfig,
    pub observables: ObservablesConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Triangular,
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub geometry: GeometryName,
    pub rows: usize,
    pub cols: usize,
    pub periodic: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { geometry: GeometryName::Triangular, rows: 3, cols: 3, periodic: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmiModeName {
    InplanePerp,
    ZAligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianConfig {
    #[serde(rename = "J_meV")]
    pub j_mev: f64,
    #[serde(rename = "D_meV")]
    pub d_mev: f64,
    pub dmi_mode: DmiModeName,
    pub dmi_sign: f64,
    #[serde(rename = "B_tesla")]
    pub b_tesla: [f64; 3],
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { j_mev: 1.0, d_mev: 0.8, dmi_mode: DmiModeName::InplanePerp, dmi_sign: 1.0, b_tesla: [0.0, 0.0, 1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    #[serde(rename = "hbar_meV_ps")]
    pub hbar_mev_ps: f64,
    #[serde(rename = "mu_B_meV_per_tesla")]
    pub mu_b_mev_per_tesla: f64,
    pub g: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = PhysicalConstants::default();
        Self { hbar_mev_ps: c.hbar, mu_b_mev_per_tesla: c.mu_b, g: c.g }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub kappa: f64,
    pub h_ps: f64,
    pub t_final_ps: f64,
    pub method: String,
    pub conservative: bool,
    pub sample_stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { kappa: 0.5, h_ps: 0.02, t_final_ps: 1.0, method: "rk4".into(), conservative: true, sample_stride: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateConfig {
    /// Weights of I/2^n, AF1, AF2, GHZ and W.
    pub p: Vec<f64>,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        Self { p: vec![0.0, 1.0, 0.0, 0.0, 0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    /// 1-based site pairs.
    pub concurrence_pairs: Vec<(usize, usize)>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self { concurrence_pairs: vec![(1, 2)] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output base path without extension.
    pub path: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("qllg_run"), format: OutputFormat::Csv }
    }
}

/// Everything a run needs, validated and converted to library types.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub hamiltonian: HamiltonianSpec,
    pub kappa: f64,
    pub integrator: IntegratorConfig,
    pub initial_state: InitialStateSpec,
    pub concurrence_pairs: Vec<(usize, usize)>,
}

impl Resolved {
    pub fn sites(&self) -> usize {
        self.hamiltonian.lattice.sites()
    }
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), message: message.into() }
}

fn finite(key: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, format!("must be finite, got {x}")))
    }
}

impl RunConfig {
    /// Parses a config document. A run sidecar is accepted too, in which case
    /// its `resolved_config` entry is used.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        if let Some(inner) = value.as_object_mut().and_then(|o| o.remove("resolved_config")) {
            value = inner;
        }
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<document>".to_string() } else { path };
            invalid(&key, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let l = &self.lattice;
        let lattice = match l.geometry {
            GeometryName::Pair => LatticeSpec::pair(),
            GeometryName::Triangular => {
                LatticeSpec { geometry: Geometry::Triangular, rows: l.rows, cols: l.cols, periodic: l.periodic }
            }
        };
        lattice.validate().map_err(|e| invalid("lattice", e.to_string()))?;

        let c = &self.constants;
        let constants = PhysicalConstants {
            hbar: finite("constants.hbar_meV_ps", c.hbar_mev_ps)?,
            mu_b: finite("constants.mu_B_meV_per_tesla", c.mu_b_mev_per_tesla)?,
            g: finite("constants.g", c.g)?,
        };
        if constants.hbar <= 0.0 {
            return Err(invalid("constants.hbar_meV_ps", format!("must be positive, got {}", constants.hbar)));
        }

        let h = &self.hamiltonian;
        if !(h.d_mev.is_finite() && h.d_mev >= 0.0) {
            return Err(invalid("hamiltonian.D_meV", format!("must be finite and non-negative, got {}", h.d_mev)));
        }
        if h.dmi_sign != 1.0 && h.dmi_sign != -1.0 {
            return Err(invalid("hamiltonian.dmi_sign", format!("must be 1 or -1, got {}", h.dmi_sign)));
        }
        for b in h.b_tesla {
            finite("hamiltonian.B_tesla", b)?;
        }
        let hamiltonian = HamiltonianSpec {
            exchange: finite("hamiltonian.J_meV", h.j_mev)?,
            dmi_magnitude: h.d_mev,
            dmi_mode: match h.dmi_mode {
                DmiModeName::InplanePerp => DmiMode::InplanePerp,
                DmiModeName::ZAligned => DmiMode::ZAligned,
            },
            dmi_sign: h.dmi_sign,
            field: h.b_tesla,
            lattice,
            constants,
        };
        hamiltonian.validate().map_err(|e| invalid("hamiltonian", e.to_string()))?;

        let d = &self.dynamics;
        if !(d.kappa.is_finite() && d.kappa >= 0.0) {
            return Err(invalid("dynamics.kappa", format!("must be finite and non-negative, got {}", d.kappa)));
        }
        let tableau = preset_tableau(&d.method).map_err(|e| invalid("dynamics.method", e.to_string()))?;
        let mut integrator = IntegratorConfig::new(tableau, d.conservative, d.h_ps, d.t_final_ps);
        integrator.sample_stride = d.sample_stride;
        integrator.validate().map_err(|e| {
            let key = match &e {
                QllgError::InvalidConfig(m) if m.contains("sample_stride") => "dynamics.sample_stride",
                QllgError::InvalidConfig(m) if m.contains("t_final") && !m.contains("step size") => {
                    "dynamics.t_final_ps"
                }
                _ => "dynamics.h_ps",
            };
            invalid(key, e.to_string())
        })?;

        let p: [f64; 5] =
            self.initial_state.p.as_slice().try_into().map_err(|_| {
                invalid("initial_state.p", format!("needs 5 entries, got {}", self.initial_state.p.len()))
            })?;
        let initial_state = InitialStateSpec { p };
        initial_state.validate().map_err(|e| invalid("initial_state.p", e.to_string()))?;

        let n = lattice.sites();
        for &(k, l) in &self.observables.concurrence_pairs {
            if !(1 <= k && k < l && l <= n) {
                return Err(invalid(
                    "observables.concurrence_pairs",
                    format!("pair ({k}, {l}) needs 1 <= k < l <= {n}"),
                ));
            }
        }

        Ok(Resolved {
            hamiltonian,
            kappa: d.kappa,
            integrator,
            initial_state,
            concurrence_pairs: self.observables.concurrence_pairs.clone(),
        })
    }
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Exchange,
    Dmi,
    FieldMagnitude,
    Kappa,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "J_meV" => Ok(Self::Exchange),
            "D_meV" => Ok(Self::Dmi),
            "B_magnitude" => Ok(Self::FieldMagnitude),
            "kappa" => Ok(Self::Kappa),
            other => Err(invalid("--param", format!("unknown sweep parameter `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Exchange => "J_meV",
            Self::Dmi => "D_meV",
            Self::FieldMagnitude => "B_magnitude",
            Self::Kappa => "kappa",
        }
    }

    /// A copy of `base` with this parameter set to `value`. A field magnitude
    /// keeps the configured direction, or uses z when the field is zero.
    pub fn apply(self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Self::Exchange => cfg.hamiltonian.j_mev = value,
            Self::Dmi => cfg.hamiltonian.d_mev = value,
            Self::Kappa => cfg.dynamics.kappa = value,
            Self::FieldMagnitude => {
                let b = cfg.hamiltonian.b_tesla;
                let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                cfg.hamiltonian.b_tesla = if norm > 0.0 { b.map(|x| x / norm * value) } else { [0.0, 0.0, value] };
            }
        }
        cfg
    }
}

/// Initial state as a density matrix for the resolved lattice.
pub fn initial_density(resolved: &Resolved) -> Result<qllg::CMat, CliError> {
    spin::build_initial_state(&resolved.initial_state, resolved.sites())
        .map_err(|e| invalid("initial_state.p", e.to_string()))
}
