//! `key = value` run configuration with dotted section keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use freecongest::diagnostics::BOOTSTRAP_C0;
use freecongest::perturbation::{Family, Perturbation};
use freecongest::PhysicalParams;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    SteadyWave,
    ConvergenceOrder,
    StabilitySweep,
    CoercivitySuite,
    TraceSuite,
    BootstrapCheck,
    AppendixLemmas,
}

pub const PRESETS: [Preset; 7] = [
    Preset::SteadyWave,
    Preset::ConvergenceOrder,
    Preset::StabilitySweep,
    Preset::CoercivitySuite,
    Preset::TraceSuite,
    Preset::BootstrapCheck,
    Preset::AppendixLemmas,
];

pub fn presets() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name()).collect()
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::SteadyWave => "steady_wave",
            Preset::ConvergenceOrder => "convergence_order",
            Preset::StabilitySweep => "stability_sweep",
            Preset::CoercivitySuite => "coercivity_suite",
            Preset::TraceSuite => "trace_suite",
            Preset::BootstrapCheck => "bootstrap_check",
            Preset::AppendixLemmas => "appendix_lemmas",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PRESETS.iter().copied().find(|p| p.name() == s)
    }

    /// Default values of every key for this preset.
    pub fn defaults(&self) -> Vec<(&'static str, String)> {
        let mut d: Vec<(&'static str, String)> = vec![
            ("preset", self.name().into()),
            ("output.dir", format!("output/{}", self.name())),
            ("params.mu", "1".into()),
            ("params.v_plus", "2".into()),
            ("params.u_minus", "1".into()),
            ("params.u_plus", "0".into()),
            ("perturbation.family", "none".into()),
            ("perturbation.amplitude", "0".into()),
            ("perturbation.width", "1".into()),
            ("perturbation.center", "5".into()),
            ("perturbation.amplitudes", "1e-4, 1e-3, 1e-2".into()),
            ("perturbation.energy_fraction", BOOTSTRAP_C0.to_string()),
            ("tolerances.newton_tol", "1e-10".into()),
            ("tolerances.picard_tol", "1e-8".into()),
            ("tolerances.delta", "0.05".into()),
            ("tolerances.drift", "5e-4".into()),
            ("solver.max_iter", "30".into()),
            ("time.window", "none".into()),
            ("sampling.seed", "0".into()),
            ("sampling.count", "100".into()),
        ];
        let mut set = |k: &'static str, v: &str| {
            let slot = d.iter_mut().find(|e| e.0 == k).map(|e| &mut e.1);
            match slot {
                Some(s) => *s = v.into(),
                None => d.push((k, v.into())),
            }
        };
        let (r, n, t, dt, stride) = match self {
            Preset::SteadyWave => ("50", "2049", "1", "1e-3", "100"),
            Preset::ConvergenceOrder => ("50", "513", "1", "1.6e-2", "1000"),
            Preset::StabilitySweep => ("50", "1025", "5", "4e-3", "125"),
            Preset::CoercivitySuite => ("20", "4096", "1", "1e-3", "1"),
            Preset::TraceSuite => ("50", "2049", "4", "1e-3", "200"),
            Preset::BootstrapCheck => ("50", "1025", "20", "4e-3", "250"),
            Preset::AppendixLemmas => ("20", "801", "4", "2e-2", "1"),
        };
        set("grid.r", r);
        set("grid.n", n);
        set("time.t_final", t);
        set("time.dt", dt);
        set("time.stride", stride);
        match self {
            Preset::StabilitySweep => {
                set("perturbation.family", "gaussian_bump");
            }
            Preset::CoercivitySuite => set("sampling.seed", "6"),
            Preset::TraceSuite => {
                set("perturbation.family", "w0_tilt");
                set("perturbation.amplitude", "0.01");
            }
            Preset::BootstrapCheck => {
                set("perturbation.family", "gaussian_bump");
                set("perturbation.amplitude", "0.01");
            }
            Preset::AppendixLemmas => set("sampling.seed", "9"),
            _ => {}
        }
        d
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const REQUIRED: [&str; 4] = ["params.mu", "params.v_plus", "params.u_minus", "params.u_plus"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ConfigError {
    /// The key the error is about, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } | ConfigError::DuplicateKey { key, .. } => Some(key),
            ConfigError::Missing(f) => Some(f),
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::UnknownPreset(_) => Some("preset"),
            ConfigError::Syntax { .. } => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::DuplicateKey { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn known_keys() -> Vec<&'static str> {
    Preset::SteadyWave.defaults().into_iter().map(|e| e.0).collect()
}

/// Raw key-value pairs with the line each came from (0 for overrides).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let known = known_keys();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, message: "empty key".into() });
            }
            if !known.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.into() });
            }
            if entries.insert(key.to_string(), (value.to_string(), line)).is_some() {
                return Err(ConfigError::DuplicateKey { line, key: key.into() });
            }
        }
        Ok(Self { entries })
    }

    /// Applies a `key=value` override; later overrides win.
    pub fn set_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            message: format!("override `{spec}` is not `key=value`"),
        })?;
        let key = key.trim();
        if !known_keys().contains(&key) {
            return Err(ConfigError::UnknownKey { line: 0, key: key.into() });
        }
        self.entries.insert(key.into(), (value.trim().into(), 0));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.0.as_str())
    }

    fn insert_default(&mut self, key: &str, value: String) {
        self.entries.entry(key.into()).or_insert((value, 0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub params: PhysicalParams,
    pub r: f64,
    pub n: usize,
    pub t_final: f64,
    pub dt: f64,
    pub stride: usize,
    pub window: Option<f64>,
    pub perturbation: Perturbation,
    pub amplitudes: Vec<f64>,
    pub energy_fraction: f64,
    pub newton_tol: f64,
    pub picard_tol: f64,
    pub delta: f64,
    pub drift_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub count: usize,
    pub out_dir: PathBuf,
}

fn value<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T, ConfigError> {
    let v = raw.get(key).ok_or_else(|| ConfigError::Missing(key.into()))?;
    v.parse().map_err(|_| ConfigError::Invalid { field: key.into(), message: format!("cannot parse `{v}`") })
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

fn positive(raw: &RawConfig, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = value(raw, key)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    /// Resolves a configuration. Physical parameters are required when a
    /// config file was given; every other key falls back to the preset.
    pub fn resolve(
        file: Option<RawConfig>,
        preset_flag: Option<&str>,
        overrides: &[String],
        out_dir: Option<PathBuf>,
    ) -> Result<Self, ConfigError> {
        let from_file = file.is_some();
        let mut raw = file.unwrap_or_default();
        for o in overrides {
            raw.set_override(o)?;
        }
        let name = preset_flag
            .map(str::to_string)
            .or_else(|| raw.get("preset").map(str::to_string))
            .ok_or_else(|| ConfigError::Missing("preset".into()))?;
        let preset = Preset::parse(&name).ok_or(ConfigError::UnknownPreset(name))?;
        if from_file {
            if let Some(k) = REQUIRED.iter().find(|k| raw.get(k).is_none()) {
                return Err(ConfigError::Missing(k.to_string()));
            }
        }
        for (k, v) in preset.defaults() {
            raw.insert_default(k, v);
        }
        if let Some(dir) = out_dir {
            raw.entries.insert("output.dir".into(), (dir.to_string_lossy().into_owned(), 0));
        }
        Self::from_raw(preset, &raw)
    }

    fn from_raw(preset: Preset, raw: &RawConfig) -> Result<Self, ConfigError> {
        let params = PhysicalParams::new(
            value(raw, "params.mu")?,
            value(raw, "params.v_plus")?,
            value(raw, "params.u_minus")?,
            value(raw, "params.u_plus")?,
        )
        .map_err(|e| invalid("params", e.to_string()))?;
        let n: usize = value(raw, "grid.n")?;
        if n < 16 {
            return Err(invalid("grid.n", format!("need at least 16 nodes, got {n}")));
        }
        let stride: usize = value(raw, "time.stride")?;
        if stride == 0 {
            return Err(invalid("time.stride", "must be at least 1"));
        }
        let window = match raw.get("time.window") {
            None | Some("none") => None,
            Some(_) => Some(positive(raw, "time.window")?),
        };
        let family_name: String = value(raw, "perturbation.family")?;
        let family = Family::parse(&family_name)
            .ok_or_else(|| invalid("perturbation.family", format!("unknown family `{family_name}`")))?;
        let amplitude: f64 = value(raw, "perturbation.amplitude")?;
        if !(amplitude >= 0.0) {
            return Err(invalid("perturbation.amplitude", format!("must be nonnegative, got {amplitude}")));
        }
        let amplitudes = raw
            .get("perturbation.amplitudes")
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<f64>() {
                Ok(a) if a >= 0.0 => Ok(a),
                _ => Err(invalid("perturbation.amplitudes", format!("bad amplitude `{s}`"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let perturbation = Perturbation {
            family,
            amplitude,
            width: positive(raw, "perturbation.width")?,
            center: positive(raw, "perturbation.center")?,
        };
        Ok(Self {
            preset,
            params,
            r: positive(raw, "grid.r")?,
            n,
            t_final: positive(raw, "time.t_final")?,
            dt: positive(raw, "time.dt")?,
            stride,
            window,
            perturbation,
            amplitudes,
            energy_fraction: positive(raw, "perturbation.energy_fraction")?,
            newton_tol: positive(raw, "tolerances.newton_tol")?,
            picard_tol: positive(raw, "tolerances.picard_tol")?,
            delta: positive(raw, "tolerances.delta")?,
            drift_tol: positive(raw, "tolerances.drift")?,
            max_iter: value(raw, "solver.max_iter")?,
            seed: value(raw, "sampling.seed")?,
            count: value(raw, "sampling.count")?,
            out_dir: PathBuf::from(value::<String>(raw, "output.dir")?),
        })
    }

    /// Renders the configuration back to config-file text.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let amps: Vec<String> = self.amplitudes.iter().map(|a| a.to_string()).collect();
        let lines = [
            ("preset", self.preset.name().to_string()),
            ("output.dir", self.out_dir.to_string_lossy().into_owned()),
            ("params.mu", p.mu().to_string()),
            ("params.v_plus", p.v_plus().to_string()),
            ("params.u_minus", p.u_minus().to_string()),
            ("params.u_plus", p.u_plus().to_string()),
            ("grid.r", self.r.to_string()),
            ("grid.n", self.n.to_string()),
            ("time.t_final", self.t_final.to_string()),
            ("time.dt", self.dt.to_string()),
            ("time.stride", self.stride.to_string()),
            ("time.window", self.window.map_or("none".into(), |w| w.to_string())),
            ("perturbation.family", self.perturbation.family.name().to_string()),
            ("perturbation.amplitude", self.perturbation.amplitude.to_string()),
            ("perturbation.width", self.perturbation.width.to_string()),
            ("perturbation.center", self.perturbation.center.to_string()),
            ("perturbation.amplitudes", amps.join(", ")),
            ("perturbation.energy_fraction", self.energy_fraction.to_string()),
            ("tolerances.newton_tol", self.newton_tol.to_string()),
            ("tolerances.picard_tol", self.picard_tol.to_string()),
            ("tolerances.delta", self.delta.to_string()),
            ("tolerances.drift", self.drift_tol.to_string()),
            ("solver.max_iter", self.max_iter.to_string()),
            ("sampling.seed", self.seed.to_string()),
            ("sampling.count", self.count.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
