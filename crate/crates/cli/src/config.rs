//! Run configuration: JSON ingestion, dotted overrides, defaults and validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nlwave_core::model::{conjugate_endpoint, ModelSpec};
use nlwave_core::pde::Scheme;
use nlwave_core::profile_macro::{default_q_domain, AsymptoticOptions};
use nlwave_core::profile_micro::{default_p_domain, DEFAULT_STEPS_PER_CAR, MIN_STEPS_PER_CAR};
use nlwave_core::{ftls, pde, EndpointPair, ModelConfig64};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_RHO_PLUS: f64 = 0.8;
pub const DEFAULT_SNAPSHOTS: [f64; 3] = [0.0, 0.4, 0.8];
pub const DEFAULT_ELLS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];
pub const DEFAULT_CARS: [usize; 2] = [25, 40];
pub const DEFAULT_PHI_MARGIN: f64 = 1e-3;
pub const DEFAULT_WINDOW: [f64; 2] = [-1.0, 1.0];
pub const DEFAULT_OUT: &str = "nlwave-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Rates,
    ProfileQ,
    ProfileP,
    FtlsSim,
    PdeSim,
    MicroMacro,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rates => "rates",
            Self::ProfileQ => "profile-q",
            Self::ProfileP => "profile-p",
            Self::FtlsSim => "ftls-sim",
            Self::PdeSim => "pde-sim",
            Self::MicroMacro => "micro-macro",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Outer-loop stopping tolerance.
    pub outer: f64,
    pub endpoint: f64,
    pub seed_deficit: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = AsymptoticOptions::<f64>::default();
        Self { outer: o.tol, endpoint: o.endpoint_tol, seed_deficit: o.seed_deficit, max_iter: o.max_iter }
    }
}

impl Tolerances {
    pub fn options(&self) -> AsymptoticOptions<f64> {
        AsymptoticOptions { tol: self.outer, max_iter: self.max_iter, endpoint_tol: self.endpoint, seed_deficit: self.seed_deficit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    /// Sine bump between 0.2 and 0.8 on `|x| < 0.3`.
    Oscillatory,
    /// Cars or cells on the profile itself.
    Profile,
    /// `rho_minus` left of zero, `rho_plus` right of it (field only).
    Step,
}

/// Numerical settings. Missing entries are filled per command by [`RunConfig::resolve`];
/// entries a command does not use stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_car: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    /// Followers and leaders of the car at zero for profile platoons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cars: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_margin: Option<f64>,
    /// Comparison window for the field distance to `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ells: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> String {
    DEFAULT_OUT.into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats() }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Runs of a sweep: each entry maps dotted keys to values applied on top of
/// the sweep file, whose `command` is replaced by `command`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub command: Command,
    #[serde(default)]
    pub runs: Vec<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSpec,
    #[serde(default)]
    pub endpoints: Endpoints,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Reads, overrides, fills and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    parse_config_with(path, &[])
}

pub fn parse_config_with(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e)))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    from_value(value)
}

/// Deserialises, fills defaults and validates.
pub fn from_value(value: Value) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Validation(e.to_string()))?;
    cfg.resolve()
}

/// Applies `key=value` with a dotted key. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn apply_override(root: &mut Value, arg: &str) -> Result<(), CliError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{}` is not of the form key=value", arg)))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key, value)
}

pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("bad override key `{}`", key)));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Validation(format!("`{}` in `{}` must be an array index", part, key)))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Validation(format!("index {} out of range in `{}` (length {})", idx, key, len)))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Validation(format!("`{}` in `{}` is not an object", part, key))),
        };
    }
    Ok(())
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {}", field, msg))
}

fn check_positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {}", x)))
    }
}

fn check_domain(field: &str, d: [f64; 2]) -> Result<(), CliError> {
    if d[0].is_finite() && d[1].is_finite() && d[0] < d[1] {
        Ok(())
    } else {
        Err(invalid(field, format!("needs lo < hi, got [{}, {}]", d[0], d[1])))
    }
}

impl RunConfig {
    /// Model after the checks that name their field.
    pub fn model_config(&self) -> Result<ModelConfig64, CliError> {
        let m = &self.model;
        if !(m.ell > 0.0 && m.ell.is_finite()) {
            return Err(invalid("model.ell", "ell must be positive"));
        }
        if !(m.kernel.h > 0.0 && m.kernel.h.is_finite()) {
            return Err(invalid("model.kernel.h", "h must be positive"));
        }
        if m.sigma < 0.0 {
            return Err(invalid("model.sigma", "frame speed must be non-negative"));
        }
        let vmax = m.velocity.build::<f64>().map_err(|e| invalid("model.velocity", e))?.v(0.0);
        if m.sigma >= vmax {
            return Err(invalid("model.sigma", format!("frame speed {} exceeds max velocity {}", m.sigma, vmax)));
        }
        m.build().map_err(|e| invalid("model", e))
    }

    pub fn endpoint_pair(&self, cfg: &ModelConfig64) -> Result<EndpointPair<f64>, CliError> {
        let rp = self.endpoints.rho_plus.ok_or_else(|| invalid("endpoints.rho_plus", "missing"))?;
        let rm = self.endpoints.rho_minus.ok_or_else(|| invalid("endpoints.rho_minus", "missing"))?;
        EndpointPair::new(rm, rp, cfg).map_err(|e| invalid("endpoints", e))
    }

    /// Fills per-command defaults and validates the result.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let cmd = self.command;
        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "must not be empty"));
        }
        if cmd == Command::Sweep {
            if self.sweep.is_none() {
                return Err(invalid("sweep", "a sweep needs `sweep.command` and `sweep.runs`"));
            }
            if self.sweep.as_ref().map(|s| s.command) == Some(Command::Sweep) {
                return Err(invalid("sweep.command", "sweeps do not nest"));
            }
            // runs are resolved one by one
            return Ok(self);
        }
        if self.sweep.is_some() {
            return Err(invalid("sweep", format!("only allowed with the sweep command, not {}", cmd.name())));
        }
        let model = self.model_config()?;
        let h = model.h();

        let rp = self.endpoints.rho_plus.unwrap_or(DEFAULT_RHO_PLUS);
        let rm = match self.endpoints.rho_minus {
            Some(r) => r,
            None => conjugate_endpoint(&model.velocity, rp, model.sigma).map_err(|e| invalid("endpoints.rho_plus", e))?,
        };
        self.endpoints = Endpoints { rho_minus: Some(rm), rho_plus: Some(rp) };
        let pair = self.endpoint_pair(&model)?;

        let n = &mut self.numerics;
        let numerical = |e: nlwave_core::Error| CliError::from(e);
        match cmd {
            Command::Rates => {}
            Command::ProfileQ => {
                n.dx.get_or_insert(h / 64.0);
                if n.domain.is_none() {
                    let d = default_q_domain(&model, &pair).map_err(numerical)?;
                    n.domain = Some([d.0, d.1]);
                }
                n.tolerances.get_or_insert_with(Tolerances::default);
            }
            Command::ProfileP => {
                n.steps_per_car.get_or_insert(DEFAULT_STEPS_PER_CAR);
                if n.domain.is_none() {
                    let d = default_p_domain(&model, &pair).map_err(numerical)?;
                    n.domain = Some([d.0, d.1]);
                }
                n.tolerances.get_or_insert_with(Tolerances::default);
            }
            Command::FtlsSim => {
                n.dt.get_or_insert(ftls::default_dt(&model));
                n.snapshot_times.get_or_insert_with(|| DEFAULT_SNAPSHOTS.to_vec());
                n.initial.get_or_insert(InitialData::Oscillatory);
                n.cars.get_or_insert(DEFAULT_CARS);
                n.phi_margin.get_or_insert(DEFAULT_PHI_MARGIN);
                n.steps_per_car.get_or_insert(DEFAULT_STEPS_PER_CAR);
                if n.domain.is_none() {
                    // the reference profile also has to cover the platoon
                    let d = default_p_domain(&model, &pair).map_err(numerical)?;
                    n.domain = Some([2.0 * d.0, 2.0 * d.1]);
                }
                n.tolerances.get_or_insert_with(Tolerances::default);
            }
            Command::PdeSim => {
                let dx = *n.dx.get_or_insert(h / 64.0);
                n.dt.get_or_insert(pde::default_dt(dx));
                let d = pde::default_domain::<f64>();
                n.domain.get_or_insert([d.0, d.1]);
                n.snapshot_times.get_or_insert_with(|| DEFAULT_SNAPSHOTS.to_vec());
                n.scheme.get_or_insert(Scheme::default());
                n.initial.get_or_insert(InitialData::Oscillatory);
                n.window.get_or_insert(DEFAULT_WINDOW);
                n.tolerances.get_or_insert_with(Tolerances::default);
            }
            Command::MicroMacro => {
                let ells = n.ells.get_or_insert_with(|| DEFAULT_ELLS.to_vec()).clone();
                if let Some(&min) = ells.iter().min_by(|a, b| a.total_cmp(b)) {
                    n.dx.get_or_insert(min / 8.0);
                }
                if n.domain.is_none() {
                    let d = default_q_domain(&model, &pair).map_err(numerical)?;
                    n.domain = Some([d.0, d.1]);
                }
            }
            Command::Sweep => unreachable!(),
        }
        self.validate_numerics(h)?;
        Ok(self)
    }

    fn validate_numerics(&self, h: f64) -> Result<(), CliError> {
        let n = &self.numerics;
        if let Some(dx) = n.dx {
            check_positive("numerics.dx", dx)?;
            if self.command == Command::ProfileQ && dx > h / 16.0 {
                return Err(invalid("numerics.dx", format!("dx = {} exceeds h / 16 = {}", dx, h / 16.0)));
            }
        }
        if let Some(dt) = n.dt {
            check_positive("numerics.dt", dt)?;
        }
        if let Some(d) = n.domain {
            check_domain("numerics.domain", d)?;
            if matches!(self.command, Command::ProfileQ | Command::ProfileP | Command::FtlsSim | Command::MicroMacro)
                && !(d[0] < 0.0 && d[1] > 0.0)
            {
                return Err(invalid("numerics.domain", "must contain the anchor x = 0"));
            }
        }
        if let Some(w) = n.window {
            check_domain("numerics.window", w)?;
            if let Some(d) = n.domain {
                if w[0] < d[0] || w[1] > d[1] {
                    return Err(invalid("numerics.window", "must lie inside numerics.domain"));
                }
            }
        }
        if let Some(t) = &n.tolerances {
            check_positive("numerics.tolerances.outer", t.outer)?;
            check_positive("numerics.tolerances.endpoint", t.endpoint)?;
            check_positive("numerics.tolerances.seed_deficit", t.seed_deficit)?;
            if t.max_iter == 0 {
                return Err(invalid("numerics.tolerances.max_iter", "must be at least 1"));
            }
        }
        if let Some(ts) = &n.snapshot_times {
            if ts.is_empty() {
                return Err(invalid("numerics.snapshot_times", "must not be empty"));
            }
            if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(invalid("numerics.snapshot_times", "times must be finite and non-negative"));
            }
            if ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("numerics.snapshot_times", "must be sorted"));
            }
        }
        if let Some(s) = n.steps_per_car {
            if s < MIN_STEPS_PER_CAR {
                return Err(invalid("numerics.steps_per_car", format!("must be at least {}", MIN_STEPS_PER_CAR)));
            }
        }
        if let Some(m) = n.phi_margin {
            if !(0.0..0.5).contains(&m) {
                return Err(invalid("numerics.phi_margin", format!("must lie in [0, 0.5), got {}", m)));
            }
        }
        if let Some(ells) = &n.ells {
            if ells.is_empty() {
                return Err(invalid("numerics.ells", "must not be empty"));
            }
            for &e in ells {
                check_positive("numerics.ells", e)?;
            }
            if ells.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(invalid("numerics.ells", "must be strictly decreasing"));
            }
        }
        if self.command == Command::FtlsSim && n.initial == Some(InitialData::Step) {
            return Err(invalid("numerics.initial", "step data are available for pde-sim only"));
        }
        Ok(())
    }
}
