//! Experiment configuration files (TOML).
//!
//! Every field except `model` is optional; omitted values take the model's
//! defaults. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use zocbf::models::rollover::{HeadingLaw, RolloverScenario};
use zocbf::{ClassKappa, Curvature, FilterBackend, InputBox, ZocbfParams};

/// A configuration problem, located by a dotted field path or by position
/// in the file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    DoubleIntegratorH1,
    DoubleIntegratorH2,
    Rollover,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::DoubleIntegratorH1 => "double_integrator_h1",
            ModelId::DoubleIntegratorH2 => "double_integrator_h2",
            ModelId::Rollover => "rollover",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSetting {
    #[default]
    FullHessian,
    HalfHessian,
}

impl From<CurvatureSetting> for Curvature {
    fn from(c: CurvatureSetting) -> Self {
        match c {
            CurvatureSetting::FullHessian => Curvature::FullHessian,
            CurvatureSetting::HalfHessian => Curvature::HalfHessian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingSetting {
    AlongOverAcross,
    Bearing,
}

impl From<HeadingSetting> for HeadingLaw {
    fn from(h: HeadingSetting) -> Self {
        match h {
            HeadingSetting::AlongOverAcross => HeadingLaw::AlongOverAcross,
            HeadingSetting::Bearing => HeadingLaw::Bearing,
        }
    }
}

/// Backend names as accepted by [`FilterBackend::from_str`].
pub mod backend_name {
    use super::*;

    pub fn serialize<S: Serializer>(b: &Option<FilterBackend>, s: S) -> Result<S::Ok, S::Error> {
        match b {
            Some(b) => s.serialize_str(&b.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<FilterBackend>, D::Error> {
        let name = String::deserialize(d)?;
        FilterBackend::from_str(&name)
            .map(Some)
            .map_err(|e| serde::de::Error::custom(format!("backend `{name}`: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZocbfSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<CurvatureSetting>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Input held before `t = 0`; defaults to the first nominal input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_init: Option<Vec<f64>>,
    /// Constant nominal input; the rollover model tracks its waypoints when
    /// this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    /// Deviation from the nominal above which a step counts as an
    /// intervention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Position limit (`h1`) or squared-position bound (`h2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_law: Option<HeadingSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File stem for `<name>.csv` and `<name>.json`; defaults to the model id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    #[serde(
        default,
        with = "backend_name",
        skip_serializing_if = "Option::is_none"
    )]
    pub backend: Option<FilterBackend>,
    #[serde(default)]
    pub zocbf: ZocbfSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<BoxSection>,
    #[serde(default)]
    pub model_params: ModelParams,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Fills in model defaults and validates every field.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        Resolved::new(self)
    }
}

/// Model-specific settings after defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSettings {
    DoubleIntegrator { squared: bool, limit: f64 },
    Rollover(RolloverScenario),
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub model: ModelId,
    pub settings: ModelSettings,
    pub backend: FilterBackend,
    pub params: ZocbfParams,
    pub x0: Vec<f64>,
    pub u_init: Option<Vec<f64>>,
    pub nominal: Option<Vec<f64>>,
    pub steps: usize,
    pub substeps: usize,
    pub intervention_tol: f64,
    pub input_box: InputBox,
    pub out_dir: PathBuf,
    pub name: String,
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::field(field, "must be finite and > 0"))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::field(field, "must be finite and >= 0"))
    }
}

fn finite_vec(field: &str, v: &[f64], len: usize) -> Result<Vec<f64>, ConfigError> {
    if v.len() != len {
        return Err(ConfigError::field(
            field,
            format!("expected {len} values, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::field(field, "values must be finite"));
    }
    Ok(v.to_vec())
}

impl Resolved {
    fn new(cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        let p = &cfg.model_params;
        let rollover_only = [
            ("amplitude", p.amplitude.is_some()),
            ("freq_x", p.freq_x.is_some()),
            ("freq_y", p.freq_y.is_some()),
            ("gravity", p.gravity.is_some()),
            ("track_width", p.track_width.is_some()),
            ("cg_height", p.cg_height.is_some()),
            ("k_v", p.k_v.is_some()),
            ("k_omega", p.k_omega.is_some()),
            ("heading_law", p.heading_law.is_some()),
            ("waypoints", p.waypoints.is_some()),
            ("switch_radius", p.switch_radius.is_some()),
        ];

        let (settings, state_dim, input_dim, default_box, defaults) = match cfg.model {
            ModelId::DoubleIntegratorH1 | ModelId::DoubleIntegratorH2 => {
                if let Some((name, _)) = rollover_only.iter().find(|(_, set)| *set) {
                    return Err(ConfigError::field(
                        format!("model_params.{name}"),
                        format!("not used by model {}", cfg.model),
                    ));
                }
                let limit = positive("model_params.limit", p.limit.unwrap_or(10.0))?;
                let settings = ModelSettings::DoubleIntegrator {
                    squared: cfg.model == ModelId::DoubleIntegratorH2,
                    limit,
                };
                // Period, δ, γ_c, x0, steps.
                let defaults = (0.1, 0.01, 1.0, vec![0.0, 2.0], 100);
                (settings, 2, 1, (vec![-10.0], vec![10.0]), defaults)
            }
            ModelId::Rollover => {
                if p.limit.is_some() {
                    return Err(ConfigError::field(
                        "model_params.limit",
                        "not used by model rollover",
                    ));
                }
                let mut s = RolloverScenario::default();
                if let Some(v) = p.amplitude {
                    s.terrain.amplitude = nonnegative("model_params.amplitude", v)?;
                }
                if let Some(v) = p.freq_x {
                    s.terrain.freq_x = nonnegative("model_params.freq_x", v)?;
                }
                if let Some(v) = p.freq_y {
                    s.terrain.freq_y = nonnegative("model_params.freq_y", v)?;
                }
                if let Some(v) = p.gravity {
                    s.zmp.gravity = positive("model_params.gravity", v)?;
                }
                if let Some(v) = p.track_width {
                    s.zmp.track_width = positive("model_params.track_width", v)?;
                }
                if let Some(v) = p.cg_height {
                    s.zmp.cg_height = positive("model_params.cg_height", v)?;
                }
                if let Some(v) = p.k_v {
                    s.gains.k_v = nonnegative("model_params.k_v", v)?;
                }
                if let Some(v) = p.k_omega {
                    s.gains.k_omega = nonnegative("model_params.k_omega", v)?;
                }
                if let Some(law) = p.heading_law {
                    s.gains.law = law.into();
                }
                if let Some(w) = &p.waypoints {
                    if w.is_empty() {
                        return Err(ConfigError::field(
                            "model_params.waypoints",
                            "must not be empty",
                        ));
                    }
                    if w.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(ConfigError::field(
                            "model_params.waypoints",
                            "values must be finite",
                        ));
                    }
                    s.waypoints = w.iter().map(|[x, y]| (*x, *y)).collect();
                }
                if let Some(v) = p.switch_radius {
                    s.switch_radius = nonnegative("model_params.switch_radius", v)?;
                }
                let defaults = (s.period, s.delta, s.gamma_c, s.x0.to_vec(), s.steps);
                let bx = (s.input_lower.to_vec(), s.input_upper.to_vec());
                (ModelSettings::Rollover(s), 3, 2, bx, defaults)
            }
        };

        let z = &cfg.zocbf;
        let period = positive("zocbf.period", z.period.unwrap_or(defaults.0))?;
        let delta = nonnegative("zocbf.delta", z.delta.unwrap_or(defaults.1))?;
        let gamma_c = z.gamma_c.unwrap_or(defaults.2);
        let gamma = ClassKappa::linear(gamma_c)
            .map_err(|_| ConfigError::field("zocbf.gamma_c", "must lie in (0, 1]"))?;
        let mismatch = nonnegative("zocbf.mismatch", z.mismatch.unwrap_or(0.0))?;
        let params = ZocbfParams::new(period, delta, gamma)
            .and_then(|p| p.with_mismatch(mismatch))
            .map_err(|e| ConfigError::field("zocbf", e.to_string()))?
            .with_curvature(z.curvature.unwrap_or_default().into());

        let backend = cfg.backend.unwrap_or(FilterBackend::LinearizedLinear);
        backend
            .validate()
            .map_err(|e| ConfigError::field("backend", e.to_string()))?;

        let r = &cfg.run;
        let x0 = finite_vec("run.x0", r.x0.as_deref().unwrap_or(&defaults.3), state_dim)?;
        let u_init = r
            .u_init
            .as_deref()
            .map(|u| finite_vec("run.u_init", u, input_dim))
            .transpose()?;
        let nominal = r
            .nominal
            .as_deref()
            .map(|u| finite_vec("run.nominal", u, input_dim))
            .transpose()?;
        let nominal = match (cfg.model, nominal) {
            (ModelId::Rollover, n) => n,
            (_, n) => Some(n.unwrap_or_else(|| vec![0.0])),
        };
        let steps = r.steps.unwrap_or(defaults.4);
        if steps == 0 {
            return Err(ConfigError::field("run.steps", "must be >= 1"));
        }
        let substeps = r.substeps.unwrap_or(zocbf::integrators::DEFAULT_SUBSTEPS);
        if substeps == 0 {
            return Err(ConfigError::field("run.substeps", "must be >= 1"));
        }
        let intervention_tol =
            nonnegative("run.intervention_tol", r.intervention_tol.unwrap_or(1e-6))?;

        let (lower, upper) = match &cfg.input_box {
            Some(b) => (
                finite_vec("input_box.lower", &b.lower, input_dim)?,
                finite_vec("input_box.upper", &b.upper, input_dim)?,
            ),
            None => default_box,
        };
        let input_box = InputBox::from_slices(&lower, &upper)
            .map_err(|_| ConfigError::field("input_box", "lower must not exceed upper"))?;

        if let FilterBackend::Sampling { .. } = backend {
            if input_dim > zocbf::solvers::MAX_SAMPLING_DIM {
                return Err(ConfigError::field(
                    "backend",
                    "sampling supports at most 3 inputs",
                ));
            }
        }

        let name = cfg
            .output
            .name
            .clone()
            .unwrap_or_else(|| cfg.model.to_string());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(ConfigError::field(
                "output.name",
                "must be a plain, nonempty file stem",
            ));
        }
        Ok(Self {
            model: cfg.model,
            settings,
            backend,
            params,
            x0,
            u_init,
            nominal,
            steps,
            substeps,
            intervention_tol,
            input_box,
            out_dir: cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from(".")),
            name,
        })
    }
}
