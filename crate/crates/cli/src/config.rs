//! Run configuration: one JSON document per run, optionally patched by scalar
//! flag overrides, then checked against the per-command parameter schema.

use std::path::{Path, PathBuf};

use noncanon::model::{build_mode_set_with, Measure, ModeSet, VacuumProfile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "noncanon-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Combinatorics,
    Excitations,
    Amplitude,
    ThermoLimit,
    Propagator,
    Radiation,
    RenormSweep,
}

impl CommandName {
    pub const ALL: [CommandName; 7] = [
        CommandName::Combinatorics,
        CommandName::Excitations,
        CommandName::Amplitude,
        CommandName::ThermoLimit,
        CommandName::Propagator,
        CommandName::Radiation,
        CommandName::RenormSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Combinatorics => "combinatorics",
            CommandName::Excitations => "excitations",
            CommandName::Amplitude => "amplitude",
            CommandName::ThermoLimit => "thermo-limit",
            CommandName::Propagator => "propagator",
            CommandName::Radiation => "radiation",
            CommandName::RenormSweep => "renorm-sweep",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<CommandName>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    params: Map<String, Value>,
}

/// Values supplied on the command line. They win over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<CommandName>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// `(dotted.key, raw value)` pairs.
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: Params,
    /// The document with overrides applied, echoed verbatim into the manifest.
    pub echo: Value,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Params {
    Combinatorics(CombinatoricsParams),
    Excitations(ExcitationsParams),
    Amplitude(AmplitudeParams),
    ThermoLimit(ThermoParams),
    Propagator(PropagatorParams),
    Radiation(RadiationParams),
    RenormSweep(RenormParams),
}

/// Reads and checks a configuration. Without a path the document is empty
/// and every parameter takes its default.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let raw = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config("--config", format!("{}: {e}", p.display())))?;
            parse_document(&text)?
        }
        None => RawConfig::default(),
    };
    resolve(raw, overrides)
}

/// Same as [`load`] for an in-memory document.
pub fn load_str(text: &str, overrides: &Overrides) -> Result<RunConfig, CliError> {
    resolve(parse_document(text)?, overrides)
}

fn parse_document(text: &str) -> Result<RawConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        CliError::config(key_from(&key, &inner.to_string(), ""), inner)
    })?;
    de.end().map_err(|e| CliError::config("<document>", e))?;
    Ok(raw)
}

/// Picks the most specific key for a deserialization error: the unknown or
/// missing field named in the message, else the error path.
fn key_from(path: &str, message: &str, prefix: &str) -> String {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    let base = if path == "." || path.is_empty() { None } else { Some(join(path)) };
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = message.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return match &base {
                    Some(b) if b == name || b.ends_with(&format!(".{name}")) => b.clone(),
                    Some(b) => format!("{b}.{name}"),
                    None => join(name),
                };
            }
        }
    }
    base.unwrap_or_else(|| if prefix.is_empty() { "<document>".into() } else { prefix.into() })
}

fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let command = match (overrides.command, raw.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::config(
                "command",
                format!("document names `{}` but `{}` was invoked", b.as_str(), a.as_str()),
            ))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::config("command", "missing field `command`")),
    };
    let seed = overrides.seed.or(raw.seed).unwrap_or(0);
    let output_dir = overrides.output_dir.clone().or(raw.output_dir).unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into());
    let mut params = raw.params;
    let defaults = default_params(command);
    for (key, value) in &overrides.params {
        set_scalar(&mut params, &defaults, key, value)?;
    }
    let echo = serde_json::json!({
        "command": command,
        "seed": seed,
        "output_dir": output_dir,
        "params": Value::Object(params.clone()),
    });
    let params = match command {
        CommandName::Combinatorics => Params::Combinatorics(typed(params)?),
        CommandName::Excitations => Params::Excitations(typed(params)?),
        CommandName::Amplitude => Params::Amplitude(typed(params)?),
        CommandName::ThermoLimit => Params::ThermoLimit(typed(params)?),
        CommandName::Propagator => Params::Propagator(typed(params)?),
        CommandName::Radiation => Params::Radiation(typed(params)?),
        CommandName::RenormSweep => Params::RenormSweep(typed(params)?),
    };
    params.check()?;
    Ok(RunConfig { command, seed, output_dir, params, echo })
}

fn typed<T: DeserializeOwned>(params: Map<String, Value>) -> Result<T, CliError> {
    serde_path_to_error::deserialize(Value::Object(params)).map_err(|e| {
        let key = key_from(&e.path().to_string(), &e.inner().to_string(), "params");
        CliError::config(key, e.into_inner())
    })
}

/// Parses a flag value as a JSON scalar, falling back to a bare string.
pub fn parse_scalar(key: &str, raw: &str) -> Result<Value, CliError> {
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Array(_) | Value::Object(_)) => {
            Err(CliError::config(format!("params.{key}"), "flags only override scalar fields; use the config file"))
        }
        Ok(v) => Ok(v),
        Err(_) => Ok(Value::String(raw.to_string())),
    }
}

fn default_params(command: CommandName) -> Value {
    let value = match command {
        CommandName::Combinatorics => serde_json::to_value(CombinatoricsParams::default()),
        CommandName::Excitations => serde_json::to_value(ExcitationsParams::default()),
        CommandName::Amplitude => serde_json::to_value(AmplitudeParams::default()),
        CommandName::ThermoLimit => serde_json::to_value(ThermoParams::default()),
        CommandName::Propagator => serde_json::to_value(PropagatorParams::default()),
        CommandName::Radiation => serde_json::to_value(RadiationParams::default()),
        CommandName::RenormSweep => serde_json::to_value(RenormParams::default()),
    };
    value.expect("defaults serialize")
}

/// Sets `key` (dotted for nested objects) to a scalar. A nested object the
/// document omits starts from its default, so `--profile.cutoff 4` works
/// without spelling out the whole profile.
fn set_scalar(params: &mut Map<String, Value>, defaults: &Value, key: &str, raw: &str) -> Result<(), CliError> {
    let value = parse_scalar(key, raw)?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("params.{key}"), "empty key segment"));
    }
    let mut map = params;
    let mut fallback = Some(defaults);
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        fallback = fallback.and_then(|d| d.get(part));
        let seed = fallback.filter(|d| d.is_object()).cloned();
        let slot = map.entry(part.to_string()).or_insert_with(|| seed.unwrap_or_else(|| Value::Object(Map::new())));
        map = match slot {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::config(
                    format!("params.{}", parts[..=i].join(".")),
                    "is a scalar and has no sub-keys",
                ))
            }
        };
    }
    let last = parts[parts.len() - 1];
    if let Some(Value::Array(_) | Value::Object(_)) = map.get(last) {
        return Err(CliError::config(format!("params.{key}"), "is not a scalar field; set it in the config file"));
    }
    map.insert(last.to_string(), value);
    Ok(())
}

fn ensure(ok: bool, key: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(format!("params.{key}"), message))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Frequency grid shared by the commands that need a mode set. Explicit
/// `omegas`/`weights` take precedence over the profile grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeGrid {
    pub modes: usize,
    pub profile: VacuumProfile,
    pub measure: Measure,
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for ModeGrid {
    fn default() -> Self {
        Self {
            modes: 8,
            profile: VacuumProfile::FlatCutoff { cutoff: 3.0 },
            measure: Measure::Radial,
            omega_min: 0.5,
            omega_max: 2.5,
            omegas: None,
            weights: None,
        }
    }
}

impl ModeGrid {
    pub fn count(&self) -> usize {
        self.omegas.as_ref().map_or(self.modes, Vec::len)
    }

    fn check(&self) -> Result<(), CliError> {
        match (&self.omegas, &self.weights) {
            (Some(o), Some(w)) => {
                ensure(!o.is_empty(), "omegas", "must not be empty")?;
                ensure(o.len() == w.len(), "weights", "must have one entry per frequency")
            }
            (Some(_), None) => ensure(false, "weights", "required when `omegas` is given"),
            (None, Some(_)) => ensure(false, "omegas", "required when `weights` is given"),
            (None, None) => {
                ensure(self.modes >= 1, "modes", "need at least one mode")?;
                ensure(
                    self.omega_min > 0.0 && self.omega_max > self.omega_min && self.omega_max.is_finite(),
                    "omega_min",
                    "need 0 < omega_min < omega_max",
                )?;
                self.profile.validate().map_err(|e| CliError::config("params.profile", e))
            }
        }
    }

    pub fn build(&self) -> Result<ModeSet, CliError> {
        let set = match (&self.omegas, &self.weights) {
            (Some(o), Some(w)) => ModeSet::new(o, w),
            _ => build_mode_set_with(&self.profile, self.measure, self.omega_min, self.omega_max, self.modes),
        };
        set.map_err(|e| CliError::config(if self.omegas.is_some() { "params.omegas" } else { "params.profile" }, e))
    }
}

macro_rules! grid_accessor {
    ($t:ty) => {
        impl $t {
            pub fn grid(&self) -> ModeGrid {
                ModeGrid {
                    modes: self.modes,
                    profile: self.profile,
                    measure: self.measure,
                    omega_min: self.omega_min,
                    omega_max: self.omega_max,
                    omegas: self.omegas.clone(),
                    weights: self.weights.clone(),
                }
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinatoricsParams {
    #[serde(rename = "N")]
    pub n: u64,
    pub m: u32,
}

impl Default for CombinatoricsParams {
    fn default() -> Self {
        Self { n: 10, m: 3 }
    }
}

/// Single-oscillator coherent amplitudes, identical for both helicities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSpec {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `α(k) = scale · ω_k^exponent`.
    PowerLaw { scale: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationsParams {
    #[serde(rename = "N")]
    pub n: Vec<u64>,
    pub m_max: usize,
    pub alpha: AlphaSpec,
    pub boundary_m: usize,
    pub modes: usize,
    pub profile: VacuumProfile,
    pub measure: Measure,
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for ExcitationsParams {
    fn default() -> Self {
        let g = ModeGrid::default();
        Self {
            n: vec![1, 2, 4, 8, 16, 32],
            m_max: 12,
            alpha: AlphaSpec::Constant { re: 0.5, im: 0.0 },
            boundary_m: 2,
            modes: g.modes,
            profile: g.profile,
            measure: g.measure,
            omega_min: g.omega_min,
            omega_max: g.omega_max,
            omegas: None,
            weights: None,
        }
    }
}
grid_accessor!(ExcitationsParams);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeMethod {
    Resolvent,
    Volterra,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeParams {
    #[serde(rename = "C")]
    pub c: f64,
    /// Atomic frequency. Mutually exclusive with `detuning`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    /// `ω₀ = ⟨ω⟩_z − detuning`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    pub method: AmplitudeMethod,
    pub t_max: f64,
    pub points: usize,
    /// Volterra step; defaults to `0.01 / rate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub modes: usize,
    pub profile: VacuumProfile,
    pub measure: Measure,
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

pub const DEFAULT_OMEGA0: f64 = 1.5;

impl Default for AmplitudeParams {
    fn default() -> Self {
        let g = ModeGrid::default();
        Self {
            c: 0.3,
            omega0: None,
            detuning: None,
            method: AmplitudeMethod::Both,
            t_max: 10.0,
            points: 101,
            h: None,
            modes: g.modes,
            profile: g.profile,
            measure: g.measure,
            omega_min: g.omega_min,
            omega_max: g.omega_max,
            omegas: None,
            weights: None,
        }
    }
}
grid_accessor!(AmplitudeParams);

impl AmplitudeParams {
    /// The atomic frequency for a concrete mode set.
    pub fn resolve_omega0(&self, modes: &ModeSet) -> f64 {
        match (self.omega0, self.detuning) {
            (Some(w), _) => w,
            (None, Some(d)) => modes.modes().iter().map(|m| m.z * m.omega).sum::<f64>() - d,
            (None, None) => DEFAULT_OMEGA0,
        }
    }
}

/// When the exact tuple sum is used instead of Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactPolicy {
    /// Exact whenever the tuple count is within the cap.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermoParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub omega0: f64,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub samples: usize,
    pub exact: ExactPolicy,
    pub t_max: f64,
    pub points: usize,
    pub modes: usize,
    pub profile: VacuumProfile,
    pub measure: Measure,
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for ThermoParams {
    fn default() -> Self {
        let g = ModeGrid::default();
        Self {
            c: 0.3,
            omega0: DEFAULT_OMEGA0,
            n: vec![1, 2, 4, 8, 16, 32],
            samples: 4000,
            exact: ExactPolicy::Auto,
            t_max: 10.0,
            points: 101,
            modes: g.modes,
            profile: g.profile,
            measure: g.measure,
            omega_min: g.omega_min,
            omega_max: g.omega_max,
            omegas: None,
            weights: None,
        }
    }
}
grid_accessor!(ThermoParams);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorParams {
    pub profile: VacuumProfile,
    pub r: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Locate the light-cone peak and its width.
    pub peak: bool,
}

impl Default for PropagatorParams {
    fn default() -> Self {
        Self { profile: VacuumProfile::FlatCutoff { cutoff: 10.0 }, r: 5.0, t_min: 0.0, t_max: 10.0, points: 201, peak: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiationParams {
    pub profile: VacuumProfile,
    pub g_plus: f64,
    pub g_minus: f64,
    /// `|j|² ∝ k^exponent`.
    pub exponent: f64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub points: usize,
}

impl Default for RadiationParams {
    fn default() -> Self {
        Self {
            profile: VacuumProfile::PowerExp { power: 2.0, scale: 1.0 },
            g_plus: 1.0,
            g_minus: 0.0,
            exponent: -2.0,
            eps_lo: 1e-6,
            eps_hi: 1e-2,
            points: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormParams {
    pub lambda1: f64,
    pub base_width: f64,
    pub spacing: f64,
    pub omega0: f64,
    pub coupling_times_z: f64,
    pub z_scale: f64,
    pub doublings: usize,
    pub threshold: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for RenormParams {
    fn default() -> Self {
        let s = noncanon::amplitude::RenormSweep::default();
        Self {
            lambda1: s.lambda1,
            base_width: s.base_width,
            spacing: s.spacing,
            omega0: s.omega0,
            coupling_times_z: s.coupling_times_z,
            z_scale: s.z_scale,
            doublings: s.doublings,
            threshold: s.threshold,
            t_max: 10.0,
            points: 201,
        }
    }
}

impl RenormParams {
    pub fn sweep(&self) -> noncanon::amplitude::RenormSweep {
        noncanon::amplitude::RenormSweep {
            lambda1: self.lambda1,
            base_width: self.base_width,
            spacing: self.spacing,
            omega0: self.omega0,
            coupling_times_z: self.coupling_times_z,
            z_scale: self.z_scale,
            doublings: self.doublings,
            threshold: self.threshold,
        }
    }
}

fn check_time_grid(t_max: f64, points: usize) -> Result<(), CliError> {
    ensure(positive(t_max), "t_max", "must be positive")?;
    ensure(points >= 2, "points", "need at least two time points")
}

impl Params {
    /// Range checks that serde cannot express. Errors name the parameter.
    pub fn check(&self) -> Result<(), CliError> {
        match self {
            Params::Combinatorics(p) => {
                ensure(p.n >= 1, "N", "need at least one oscillator")?;
                ensure(p.m >= 1, "m", "tuple length must be at least 1")
            }
            Params::Excitations(p) => {
                ensure(!p.n.is_empty() && p.n.iter().all(|&n| n >= 1), "N", "need a nonempty list of positive counts")?;
                ensure(p.m_max >= 1, "m_max", "must be at least 1")?;
                ensure(p.boundary_m >= 2 && p.boundary_m <= p.m_max, "boundary_m", "need 2 <= boundary_m <= m_max")?;
                match p.alpha {
                    AlphaSpec::Constant { re, im } => ensure(re.is_finite() && im.is_finite(), "alpha", "must be finite")?,
                    AlphaSpec::PowerLaw { scale, exponent } => {
                        ensure(scale.is_finite() && exponent.is_finite(), "alpha", "must be finite")?
                    }
                }
                p.grid().check()
            }
            Params::Amplitude(p) => {
                ensure(positive(p.c), "C", "coupling must be positive")?;
                ensure(!(p.omega0.is_some() && p.detuning.is_some()), "detuning", "give either `omega0` or `detuning`")?;
                ensure(p.omega0.is_none_or(f64::is_finite), "omega0", "must be finite")?;
                ensure(p.detuning.is_none_or(f64::is_finite), "detuning", "must be finite")?;
                ensure(p.h.is_none_or(positive), "h", "step must be positive")?;
                check_time_grid(p.t_max, p.points)?;
                p.grid().check()
            }
            Params::ThermoLimit(p) => {
                ensure(positive(p.c), "C", "coupling must be positive")?;
                ensure(p.omega0.is_finite(), "omega0", "must be finite")?;
                ensure(!p.n.is_empty() && p.n.iter().all(|&n| n >= 1), "N", "need a nonempty list of positive counts")?;
                ensure(p.samples >= 2, "samples", "need at least two samples")?;
                check_time_grid(p.t_max, p.points)?;
                p.grid().check()
            }
            Params::Propagator(p) => {
                p.profile.validate().map_err(|e| CliError::config("params.profile", e))?;
                ensure(p.r >= 0.0 && p.r.is_finite(), "r", "must be nonnegative")?;
                ensure(p.t_min.is_finite() && p.t_max > p.t_min && p.t_max.is_finite(), "t_max", "need t_min < t_max")?;
                ensure(p.points >= 2, "points", "need at least two time points")
            }
            Params::Radiation(p) => {
                p.profile.validate().map_err(|e| CliError::config("params.profile", e))?;
                ensure(p.g_plus.is_finite() && p.g_minus.is_finite(), "g_plus", "couplings must be finite")?;
                ensure(p.exponent.is_finite(), "exponent", "must be finite")?;
                ensure(positive(p.eps_lo), "eps_lo", "must be positive")?;
                ensure(p.eps_hi > p.eps_lo && p.eps_hi.is_finite(), "eps_hi", "must exceed eps_lo")?;
                ensure(p.points >= 3, "points", "need at least three cutoffs for a fit")
            }
            Params::RenormSweep(p) => {
                ensure(positive(p.lambda1), "lambda1", "must be positive")?;
                ensure(p.base_width >= 0.0 && p.base_width.is_finite(), "base_width", "must be nonnegative")?;
                ensure(positive(p.spacing), "spacing", "must be positive")?;
                ensure(p.omega0.is_finite(), "omega0", "must be finite")?;
                ensure(positive(p.coupling_times_z), "coupling_times_z", "must be positive")?;
                ensure(positive(p.z_scale), "z_scale", "must be positive")?;
                ensure(p.doublings >= 1, "doublings", "need at least one doubling")?;
                ensure(positive(p.threshold), "threshold", "must be positive")?;
                check_time_grid(p.t_max, p.points)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_overrides(command: CommandName, pairs: &[(&str, &str)]) -> Overrides {
        Overrides {
            command: Some(command),
            params: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Overrides::default()
        }
    }

    fn key_of(err: CliError) -> String {
        match err {
            CliError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_need_only_a_command() {
        let cfg = load_str("{\"command\": \"combinatorics\"}", &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert!(matches!(cfg.params, Params::Combinatorics(CombinatoricsParams { n: 10, m: 3 })));
    }

    #[test]
    fn overrides_are_typed_and_win() {
        let o = run_overrides(CommandName::Amplitude, &[("modes", "1"), ("detuning", "0"), ("profile.cutoff", "4")]);
        let cfg = load(None, &o).unwrap();
        let Params::Amplitude(p) = cfg.params else { panic!() };
        assert_eq!(p.modes, 1);
        assert_eq!(p.detuning, Some(0.0));
        assert_eq!(p.profile, VacuumProfile::FlatCutoff { cutoff: 4.0 });
        assert_eq!(cfg.echo["params"]["modes"], Value::from(1));
    }

    #[test]
    fn string_flags_fall_back_to_strings() {
        let o = run_overrides(CommandName::Amplitude, &[("method", "volterra")]);
        let Params::Amplitude(p) = load(None, &o).unwrap().params else { panic!() };
        assert_eq!(p.method, AmplitudeMethod::Volterra);
    }

    #[test]
    fn errors_name_the_key() {
        let unknown = load_str("{\"command\": \"amplitude\", \"params\": {\"Cc\": 1}}", &Overrides::default());
        assert_eq!(key_of(unknown.unwrap_err()), "params.Cc");
        let nested = load_str(
            "{\"command\": \"amplitude\", \"params\": {\"profile\": {\"family\": \"flat-cutoff\", \"cut\": 1}}}",
            &Overrides::default(),
        );
        assert!(key_of(nested.unwrap_err()).starts_with("params.profile"));
        let top = load_str("{\"command\": \"amplitude\", \"sead\": 1}", &Overrides::default());
        assert_eq!(key_of(top.unwrap_err()), "sead");
        let missing = load_str("{\"params\": {}}", &Overrides::default());
        assert_eq!(key_of(missing.unwrap_err()), "command");
        let range = load(None, &run_overrides(CommandName::Amplitude, &[("C", "-1")]));
        assert_eq!(key_of(range.unwrap_err()), "params.C");
        let both = load(None, &run_overrides(CommandName::Amplitude, &[("omega0", "1"), ("detuning", "0")]));
        assert_eq!(key_of(both.unwrap_err()), "params.detuning");
        let typ = load(None, &run_overrides(CommandName::Combinatorics, &[("N", "ten")]));
        assert_eq!(key_of(typ.unwrap_err()), "params.N");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = load_str("{\n\"command\": \"amplitude\",\n,}", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn non_scalar_overrides_are_refused() {
        let o = run_overrides(CommandName::ThermoLimit, &[("N", "[1,2]")]);
        assert_eq!(key_of(load(None, &o).unwrap_err()), "params.N");
        let doc = "{\"command\": \"thermo-limit\", \"params\": {\"N\": [1, 2]}}";
        let o = run_overrides(CommandName::ThermoLimit, &[("N", "4")]);
        assert_eq!(key_of(load_str(doc, &o).unwrap_err()), "params.N");
    }

    #[test]
    fn command_mismatch_is_a_config_error() {
        let o = Overrides { command: Some(CommandName::Radiation), ..Overrides::default() };
        assert_eq!(key_of(load_str("{\"command\": \"amplitude\"}", &o).unwrap_err()), "command");
    }

    #[test]
    fn detuning_is_measured_from_the_mean_frequency() {
        let p = AmplitudeParams { detuning: Some(0.25), omegas: Some(vec![1.0, 3.0]), weights: Some(vec![1.0, 1.0]), ..Default::default() };
        let modes = p.grid().build().unwrap();
        assert!((p.resolve_omega0(&modes) - 1.75).abs() < 1e-15);
    }
}
