//! Flat JSON experiment configuration.
//!
//! A config is one JSON object whose `name` selects the experiment. The
//! shared keys `name`, `seed` and `output_dir` are stripped before the rest
//! is parsed against the experiment's own schema.

use std::path::PathBuf;

use collapse_core::gke::NewtonConfig;
use collapse_core::integrate::StepConfig;
use collapse_core::models::semiflat::BasePotential;
use collapse_core::geometry::ddbar;
use collapse_core::models::testbed::{sample_terms, DensitySpec, TrigTerm, Wave};
use collapse_core::HermitianField;
use collapse_core::models::{FiberFlowSpec, FiberMode, GkeTestbedSpec, ProductModelSpec, SemiFlatSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(String),
    #[error("invalid config at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    ProductOde,
    FiberFlow,
    GkeElliptic,
    GkeParabolic,
    SemiflatIdentities,
    CurvatureBound,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::ProductOde,
        ExperimentName::FiberFlow,
        ExperimentName::GkeElliptic,
        ExperimentName::GkeParabolic,
        ExperimentName::SemiflatIdentities,
        ExperimentName::CurvatureBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::ProductOde => "product-ode",
            ExperimentName::FiberFlow => "fiber-flow",
            ExperimentName::GkeElliptic => "gke-elliptic",
            ExperimentName::GkeParabolic => "gke-parabolic",
            ExperimentName::SemiflatIdentities => "semiflat-identities",
            ExperimentName::CurvatureBound => "curvature-bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentName::ProductOde => "hyperbolic base times flat torus; flow against closed forms",
            ExperimentName::FiberFlow => "reduced fiber PDE with a fiber-dependent initial potential",
            ExperimentName::GkeElliptic => "Newton-Krylov solve of the generalized Kähler-Einstein equation",
            ExperimentName::GkeParabolic => "parabolic approach to the generalized Kähler-Einstein metric",
            ExperimentName::SemiflatIdentities => "semi-flat scaling, rescaling, fiberwise F and Weil-Petersson identity",
            ExperimentName::CurvatureBound => "sup of the curvature norm along product and fiber-flow runs",
        }
    }

    pub fn claims(self) -> &'static str {
        match self {
            ExperimentName::ProductOde => "metric equivalence with the reference family; diameter rate e^{-t/2}",
            ExperimentName::FiberFlow => "potential and volume bounds; bounded oscillation e^t(phi - Phi); diameter rate",
            ExperimentName::GkeElliptic => "unique smooth solution of (omega + i ddbar u)^m = F e^u omega^m",
            ExperimentName::GkeParabolic => "comparison ODE dA/dt <= C e^{-t} - A; potential convergence",
            ExperimentName::SemiflatIdentities => "psi(z, l xi) = l^2 psi; e^{-t} lambda_t^* omega_SF = omega_SF; Ric = -omega + omega_WP",
            ExperimentName::CurvatureBound => "uniformly bounded curvature (Type III)",
        }
    }
}

/// Time-step policy of the flow integrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicy {
    #[default]
    Adaptive,
    /// Constant steps of size `dt`; no error control.
    Fixed,
}

fn step_config(policy: DtPolicy, dt: f64, tol: f64) -> StepConfig {
    match policy {
        DtPolicy::Adaptive => StepConfig {
            tol,
            dt_init: dt,
            ..StepConfig::default()
        },
        DtPolicy::Fixed => StepConfig {
            tol: f64::MAX,
            dt_init: dt,
            dt_max: dt,
            ..StepConfig::default()
        },
    }
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $value:expr;)*) => {
        $(fn $name() -> $ty { $value })*
    };
}

defaults! {
    d_one: usize = 1;
    d_horizon: f64 = 10.0;
    d_dt: f64 = 0.01;
    d_product_tol: f64 = 1e-12;
    d_flow_tol: f64 = 1e-8;
    d_parabolic_tol: f64 = 1e-11;
    d_product_sample_dt: f64 = 0.05;
    d_fiber_sample_dt: f64 = 0.02;
    d_diameter_dt: f64 = 0.5;
    d_q_constant: f64 = 1.0;
    d_fiber_res: usize = 16;
    d_closed_form_tol: f64 = 1e-8;
    d_ratio_tol: f64 = 1e-10;
    d_slope_tol: f64 = 0.01;
    d_curvature_rel_tol: f64 = 0.01;
    d_mode_rel_tol: f64 = 0.02;
    d_mode_floor: f64 = 1e-9;
    d_growth_factor: f64 = 3.0;
    d_late_log_slope: f64 = 0.01;
    d_order_floor: f64 = 1e-14;
    d_gke_res: usize = 64;
    d_manufactured_scale: f64 = 4.0;
    d_solution_tol: f64 = 1e-7;
    d_max_newton: usize = 10;
    d_min_order: f64 = 1.8;
    d_order_threshold: f64 = 1e-2;
    d_uniqueness_factor: f64 = 10.0;
    d_probe_shift: f64 = 0.3;
    d_par_res: usize = 16;
    d_rho_scale: f64 = 0.5;
    d_initial_shift: f64 = 0.1;
    d_par_sample_dt: f64 = 0.1;
    d_inequality_slack: f64 = 1e-8;
    d_max_decay_slope: f64 = -0.5;
    d_static_slope_tol: f64 = 0.02;
    d_max_principle_tol: f64 = 1e-8;
    d_times: Vec<f64> = vec![0.0, 1.0, 5.0];
    d_lambdas: Vec<f64> = vec![-2.0, 0.5];
    d_sample_points: usize = 64;
    d_identity_tol: f64 = 1e-12;
    d_fiber_variation_tol: f64 = 1e-10;
    d_wp_tol: f64 = 1e-6;
    d_control_min: f64 = 1e-2;
    d_wp_res: usize = 32;
    d_wp_newton: NewtonConfig = NewtonConfig { tol: 1e-12, ..NewtonConfig::default() };
    d_curv_sample_dt: f64 = 0.1;
    d_curvature_max: f64 = 1e3;
}

fn d_manufactured_density() -> DensitySpec {
    DensitySpec::Manufactured {
        solution: vec![TrigTerm::new(0.1, Wave::Sin, 1, Wave::Cos, 1)],
    }
}

fn d_rho_potential() -> Vec<TrigTerm> {
    vec![TrigTerm::new(0.02, Wave::Cos, 1, Wave::Cos, 1)]
}

fn d_fiber_modes() -> Vec<FiberMode> {
    vec![FiberMode {
        kx: 1,
        ky: 0,
        amplitude: 0.1,
    }]
}

fn d_wp_base_potential() -> Vec<TrigTerm> {
    GkeTestbedSpec::modulus_default(32).base_potential
}

fn d_wp_log_profile() -> Vec<TrigTerm> {
    match GkeTestbedSpec::modulus_default(32).density {
        DensitySpec::Modulus { log_profile } => log_profile,
        _ => Vec::new(),
    }
}

fn d_tau0() -> [f64; 2] {
    SemiFlatSpec::default().tau0
}
fn d_tau_slope() -> [f64; 2] {
    SemiFlatSpec::default().tau_slope
}
fn d_base_origin() -> [f64; 2] {
    SemiFlatSpec::default().base_origin
}
fn d_base_extent() -> [f64; 2] {
    SemiFlatSpec::default().base_extent
}

fn d_curv_product() -> ProductModelSpec {
    ProductModelSpec {
        a0: 3.0,
        b0: 0.5,
        base_dim: 1,
        fiber_dim: 1,
    }
}

fn d_curv_fiber() -> FiberFlowSpec {
    FiberFlowSpec {
        a0: 2.0,
        b0: 1.0,
        resolution: 16,
        modes: d_fiber_modes(),
        horizon: 10.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductAcceptance {
    #[serde(default = "d_closed_form_tol")]
    pub closed_form_tol: f64,
    #[serde(default = "d_ratio_tol")]
    pub ratio_tol: f64,
    #[serde(default = "d_slope_tol")]
    pub diameter_slope_tol: f64,
    #[serde(default = "d_curvature_rel_tol")]
    pub curvature_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductOdeConfig {
    pub a0: f64,
    pub b0: f64,
    #[serde(default = "d_one")]
    pub base_dim: usize,
    #[serde(default = "d_one")]
    pub fiber_dim: usize,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_product_tol")]
    pub tol: f64,
    #[serde(default = "d_product_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "d_diameter_dt")]
    pub diameter_dt: f64,
    #[serde(default = "d_fiber_res")]
    pub diameter_resolution: usize,
    #[serde(default = "empty")]
    pub acceptance: ProductAcceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberAcceptance {
    #[serde(default = "d_slope_tol")]
    pub diameter_slope_tol: f64,
    #[serde(default = "d_mode_rel_tol")]
    pub mode_slope_rel_tol: f64,
    /// Mode samples below this fraction of the initial amplitude are not fitted.
    #[serde(default = "d_mode_floor")]
    pub mode_floor: f64,
    /// Allowed growth of `sup |d phi/dt|` and `sup |v|` over their initial values.
    #[serde(default = "d_growth_factor")]
    pub growth_factor: f64,
    /// Largest admissible log-slope of the monitors over the final half of the run.
    #[serde(default = "d_late_log_slope")]
    pub max_late_log_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFlowConfig {
    pub a0: f64,
    pub b0: f64,
    #[serde(default = "d_fiber_res")]
    pub resolution: usize,
    #[serde(default = "d_fiber_modes")]
    pub modes: Vec<FiberMode>,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_flow_tol")]
    pub tol: f64,
    #[serde(default = "d_fiber_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "d_diameter_dt")]
    pub diameter_dt: f64,
    #[serde(default = "d_q_constant")]
    pub q_constant: f64,
    #[serde(default = "empty")]
    pub acceptance: FiberAcceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticAcceptance {
    /// Bound on `sup |u - u_exact|` when the exact solution is known.
    #[serde(default = "d_solution_tol")]
    pub solution_tol: f64,
    #[serde(default = "d_max_newton")]
    pub max_iterations: usize,
    /// Smallest admissible `log r_{k+1} / log r_k` once `r_k <= order_threshold`.
    #[serde(default = "d_min_order")]
    pub min_order: f64,
    #[serde(default = "d_order_threshold")]
    pub order_threshold: f64,
    /// Residuals below this are roundoff and excluded from order estimates.
    #[serde(default = "d_order_floor")]
    pub order_floor: f64,
    /// Two initializations must agree within this multiple of the Newton tolerance.
    #[serde(default = "d_uniqueness_factor")]
    pub uniqueness_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkeEllipticConfig {
    #[serde(default = "d_gke_res")]
    pub resolution: usize,
    #[serde(default = "d_manufactured_scale")]
    pub base_scale: f64,
    #[serde(default)]
    pub base_potential: Vec<TrigTerm>,
    #[serde(default = "d_manufactured_density")]
    pub density: DensitySpec,
    #[serde(default)]
    pub newton: NewtonConfig,
    /// Constant added to the second initialization of the uniqueness probe.
    #[serde(default = "d_probe_shift")]
    pub probe_shift: f64,
    #[serde(default = "empty")]
    pub acceptance: EllipticAcceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingMode {
    Static,
    #[default]
    Transient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicAcceptance {
    /// Slack allowed in the discrete comparison inequality.
    #[serde(default = "d_inequality_slack")]
    pub inequality_slack: f64,
    /// Fitted slope of `sup |u_t - u_infinity|` must not exceed this.
    #[serde(default = "d_max_decay_slope")]
    pub max_decay_slope: f64,
    /// Static mode: relative tolerance on the slope `-1`.
    #[serde(default = "d_static_slope_tol")]
    pub static_slope_tol: f64,
    #[serde(default = "d_max_principle_tol")]
    pub max_principle_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkeParabolicConfig {
    #[serde(default = "d_par_res")]
    pub resolution: usize,
    #[serde(default = "d_manufactured_scale")]
    pub base_scale: f64,
    #[serde(default)]
    pub base_potential: Vec<TrigTerm>,
    #[serde(default = "d_manufactured_density")]
    pub density: DensitySpec,
    #[serde(default)]
    pub forcing: ForcingMode,
    /// `rho = rho_scale * flat + i ddbar rho_potential`.
    #[serde(default = "d_rho_scale")]
    pub rho_scale: f64,
    #[serde(default = "d_rho_potential")]
    pub rho_potential: Vec<TrigTerm>,
    /// `u_0 = u_infinity + initial_shift`.
    #[serde(default = "d_initial_shift")]
    pub initial_shift: f64,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_par_sample_dt")]
    pub sample_dt: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_parabolic_tol")]
    pub tol: f64,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default = "empty")]
    pub acceptance: ParabolicAcceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiflatAcceptance {
    #[serde(default = "d_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "d_fiber_variation_tol")]
    pub fiber_variation_tol: f64,
    #[serde(default = "d_wp_tol")]
    pub wp_tol: f64,
    /// Negative controls must exceed this residual.
    #[serde(default = "d_control_min")]
    pub control_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiflatConfig {
    #[serde(default = "d_tau0")]
    pub tau0: [f64; 2],
    #[serde(default = "d_tau_slope")]
    pub tau_slope: [f64; 2],
    #[serde(default = "d_base_origin")]
    pub base_origin: [f64; 2],
    #[serde(default = "d_base_extent")]
    pub base_extent: [f64; 2],
    #[serde(default = "d_fiber_res")]
    pub base_resolution: usize,
    #[serde(default = "d_fiber_res")]
    pub fiber_resolution: usize,
    /// Rescaling times; each also contributes the factor `e^{t/2}` to the scaling check.
    #[serde(default = "d_times")]
    pub times: Vec<f64>,
    #[serde(default = "d_lambdas")]
    pub lambdas: Vec<f64>,
    /// Random `(z, xi)` points for the scaling check.
    #[serde(default = "d_sample_points")]
    pub sample_points: usize,
    #[serde(default)]
    pub base_potential: BasePotential,
    #[serde(default = "d_wp_res")]
    pub wp_resolution: usize,
    #[serde(default = "d_wp_base_potential")]
    pub wp_base_potential: Vec<TrigTerm>,
    #[serde(default = "d_wp_log_profile")]
    pub wp_log_profile: Vec<TrigTerm>,
    #[serde(default = "d_wp_newton")]
    pub wp_newton: NewtonConfig,
    #[serde(default = "empty")]
    pub acceptance: SemiflatAcceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureAcceptance {
    #[serde(default = "d_curvature_rel_tol")]
    pub rel_tol: f64,
    /// Finite ceiling for `sup ||Rm||`.
    #[serde(default = "d_curvature_max")]
    pub curvature_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    #[serde(default = "d_curv_product")]
    pub product: ProductModelSpec,
    /// The fiber model's own `horizon` is replaced by the top-level one.
    #[serde(default = "d_curv_fiber")]
    pub fiber: FiberFlowSpec,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_curv_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "d_flow_tol")]
    pub tol: f64,
    #[serde(default = "empty")]
    pub acceptance: CurvatureAcceptance,
}

/// Deserializes an acceptance block from `{}` so every threshold takes its default.
fn empty<T: DeserializeOwned>() -> T {
    serde_json::from_value(Value::Object(Default::default())).expect("all acceptance fields have defaults")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    ProductOde(ProductOdeConfig),
    FiberFlow(FiberFlowConfig),
    GkeElliptic(GkeEllipticConfig),
    GkeParabolic(GkeParabolicConfig),
    SemiflatIdentities(SemiflatConfig),
    CurvatureBound(CurvatureConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub payload: Payload,
}

impl ExperimentConfig {
    /// The normalized config with every default filled, as JSON.
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(&self.payload).expect("configs serialize");
        if let Value::Object(map) = &mut v {
            map.insert("name".into(), Value::String(self.name.as_str().into()));
            map.insert("seed".into(), Value::from(self.seed));
            if let Some(dir) = &self.output_dir {
                map.insert("output_dir".into(), Value::String(dir.display().to_string()));
            }
        }
        v
    }
}

fn parse_payload<T: DeserializeOwned>(value: Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::schema(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::schema(path, format!("must be strictly positive, got {v}")))
    }
}

fn core(prefix: &str, e: collapse_core::Error) -> ConfigError {
    match e {
        collapse_core::Error::InvalidParameter { name, reason } => {
            ConfigError::schema(format!("{prefix}{name}"), reason)
        }
        other => ConfigError::schema(prefix.trim_end_matches('.'), other.to_string()),
    }
}

/// Parses and validates a config document.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ConfigError::schema("", "config must be a JSON object"));
    };
    let name = match map.remove("name") {
        Some(Value::String(s)) => ExperimentName::parse(&s).ok_or_else(|| {
            let known: Vec<_> = ExperimentName::ALL.iter().map(|n| n.as_str()).collect();
            ConfigError::schema("name", format!("unknown experiment `{s}`, expected one of {}", known.join(", ")))
        })?,
        Some(_) => return Err(ConfigError::schema("name", "must be a string")),
        None => return Err(ConfigError::schema("name", "missing field `name`")),
    };
    let seed = match map.remove("seed") {
        None => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| ConfigError::schema("seed", "must be a non-negative integer"))?,
    };
    let output_dir = match map.remove("output_dir") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(ConfigError::schema("output_dir", "must be a string")),
    };
    let rest = Value::Object(map);
    let payload = match name {
        ExperimentName::ProductOde => {
            let c: ProductOdeConfig = parse_payload(rest)?;
            c.product_spec().validate().map_err(|e| core("", e))?;
            check_flow_common(c.horizon, c.dt, c.tol, c.sample_dt)?;
            positive("diameter_dt", c.diameter_dt)?;
            collapse_core::GridSpec::unit(1, c.diameter_resolution)
                .map_err(|e| ConfigError::schema("diameter_resolution", e.to_string()))?;
            Payload::ProductOde(c)
        }
        ExperimentName::FiberFlow => {
            let c: FiberFlowConfig = parse_payload(rest)?;
            c.fiber_spec().validate().map_err(|e| core("", e))?;
            check_flow_common(c.horizon, c.dt, c.tol, c.sample_dt)?;
            positive("diameter_dt", c.diameter_dt)?;
            Payload::FiberFlow(c)
        }
        ExperimentName::GkeElliptic => {
            let c: GkeEllipticConfig = parse_payload(rest)?;
            c.testbed().validate().map_err(|e| core("", e))?;
            check_newton("newton", &c.newton)?;
            Payload::GkeElliptic(c)
        }
        ExperimentName::GkeParabolic => {
            let c: GkeParabolicConfig = parse_payload(rest)?;
            c.testbed().validate().map_err(|e| core("", e))?;
            check_flow_common(c.horizon, c.dt, c.tol, c.sample_dt)?;
            check_newton("newton", &c.newton)?;
            if c.forcing == ForcingMode::Transient {
                if !(c.rho_scale.is_finite() && c.rho_scale >= 0.0) {
                    return Err(ConfigError::schema("rho_scale", "must be non-negative"));
                }
                let rho = c.rho().map_err(|e| core("", e))?;
                if rho.min_eigenvalue() < 0.0 {
                    return Err(ConfigError::schema("rho_potential", "rho must be non-negative"));
                }
            }
            Payload::GkeParabolic(c)
        }
        ExperimentName::SemiflatIdentities => {
            let c: SemiflatConfig = parse_payload(rest)?;
            c.semiflat_spec().validate().map_err(|e| core("", e))?;
            c.wp_testbed().validate().map_err(|e| core("wp_", e))?;
            check_newton("wp_newton", &c.wp_newton)?;
            if c.sample_points == 0 {
                return Err(ConfigError::schema("sample_points", "must be at least 1"));
            }
            if let Some(t) = c.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                return Err(ConfigError::schema("times", format!("times must be non-negative, got {t}")));
            }
            Payload::SemiflatIdentities(c)
        }
        ExperimentName::CurvatureBound => {
            let c: CurvatureConfig = parse_payload(rest)?;
            c.product.validate().map_err(|e| core("product.", e))?;
            c.fiber_spec().validate().map_err(|e| core("fiber.", e))?;
            check_flow_common(c.horizon, c.sample_dt, c.tol, c.sample_dt)?;
            Payload::CurvatureBound(c)
        }
    };
    Ok(ExperimentConfig {
        name,
        seed,
        output_dir,
        payload,
    })
}

fn check_flow_common(horizon: f64, dt: f64, tol: f64, sample_dt: f64) -> Result<(), ConfigError> {
    positive("horizon", horizon)?;
    positive("dt", dt)?;
    positive("tol", tol)?;
    positive("sample_dt", sample_dt)?;
    if sample_dt > horizon {
        return Err(ConfigError::schema("sample_dt", "must not exceed the horizon"));
    }
    Ok(())
}

fn check_newton(prefix: &str, n: &NewtonConfig) -> Result<(), ConfigError> {
    positive(&format!("{prefix}.tol"), n.tol)?;
    positive(&format!("{prefix}.krylov_rtol"), n.krylov_rtol)?;
    if n.max_iter == 0 {
        return Err(ConfigError::schema(format!("{prefix}.max_iter"), "must be at least 1"));
    }
    Ok(())
}

impl ProductOdeConfig {
    pub fn product_spec(&self) -> ProductModelSpec {
        ProductModelSpec {
            a0: self.a0,
            b0: self.b0,
            base_dim: self.base_dim,
            fiber_dim: self.fiber_dim,
        }
    }

    pub fn step(&self) -> StepConfig {
        StepConfig {
            dt_max: 0.05,
            ..step_config(self.dt_policy, self.dt, self.tol)
        }
    }
}

impl FiberFlowConfig {
    pub fn fiber_spec(&self) -> FiberFlowSpec {
        FiberFlowSpec {
            a0: self.a0,
            b0: self.b0,
            resolution: self.resolution,
            modes: self.modes.clone(),
            horizon: self.horizon,
        }
    }

    pub fn step(&self) -> StepConfig {
        step_config(self.dt_policy, self.dt, self.tol)
    }
}

impl GkeEllipticConfig {
    pub fn testbed(&self) -> GkeTestbedSpec {
        GkeTestbedSpec {
            resolution: self.resolution,
            base_scale: self.base_scale,
            base_potential: self.base_potential.clone(),
            density: self.density.clone(),
        }
    }
}

impl GkeParabolicConfig {
    pub fn testbed(&self) -> GkeTestbedSpec {
        GkeTestbedSpec {
            resolution: self.resolution,
            base_scale: self.base_scale,
            base_potential: self.base_potential.clone(),
            density: self.density.clone(),
        }
    }

    pub fn step(&self) -> StepConfig {
        step_config(self.dt_policy, self.dt, self.tol)
    }

    /// `rho_scale * flat + i ddbar rho_potential` on the testbed grid.
    pub fn rho(&self) -> collapse_core::Result<HermitianField> {
        let grid = self.testbed().grid()?;
        let eta = sample_terms(&grid, &self.rho_potential)?;
        HermitianField::flat(&grid, self.rho_scale).add(&ddbar(&eta))
    }
}

impl SemiflatConfig {
    pub fn semiflat_spec(&self) -> SemiFlatSpec {
        SemiFlatSpec {
            tau0: self.tau0,
            tau_slope: self.tau_slope,
            base_origin: self.base_origin,
            base_extent: self.base_extent,
            base_resolution: self.base_resolution,
            fiber_resolution: self.fiber_resolution,
        }
    }

    pub fn wp_testbed(&self) -> GkeTestbedSpec {
        GkeTestbedSpec {
            resolution: self.wp_resolution,
            base_scale: 1.0,
            base_potential: self.wp_base_potential.clone(),
            density: DensitySpec::Modulus {
                log_profile: self.wp_log_profile.clone(),
            },
        }
    }
}

impl CurvatureConfig {
    pub fn fiber_spec(&self) -> FiberFlowSpec {
        FiberFlowSpec {
            horizon: self.horizon,
            ..self.fiber.clone()
        }
    }
}
