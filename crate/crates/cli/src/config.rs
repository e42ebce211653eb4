//! Strict JSON run configuration.
//!
//! Every section is optional and falls back to the library defaults. Unknown
//! keys are rejected so that typos surface instead of silently running with
//! defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simreal_core::acquisition::AcquisitionConfig;
use simreal_core::gait_sim::{CommandSequence, GainBounds, GaitProblem, PenaltyConfig, PlantConfig, Push};
use simreal_core::gp::{HyperBounds, HyperFitOptions, NoiseConfig};
use simreal_core::optimizer::benchmark::BenchmarkConfig;
use simreal_core::optimizer::{BoConfig, Budget, Objective, DEFAULT_PUSH_LADDER};
use simreal_core::Fidelity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigErrorKind {
    MissingFile,
    Malformed,
    Schema,
    OutOfRange,
}

impl ConfigErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ConfigErrorKind::MissingFile => "E101",
            ConfigErrorKind::Malformed => "E102",
            ConfigErrorKind::Schema => "E103",
            ConfigErrorKind::OutOfRange => "E104",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    /// Dotted key path of the offending value; empty for the whole document.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ConfigErrorKind::MissingFile => "cannot read config",
            ConfigErrorKind::Malformed => "malformed config",
            ConfigErrorKind::Schema => "schema violation",
            ConfigErrorKind::OutOfRange => "value out of range",
        };
        if self.path.is_empty() {
            write!(f, "{} {what}: {}", self.kind.code(), self.message)
        } else {
            write!(f, "{} {what} at `{}`: {}", self.kind.code(), self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub noise: NoiseConfig,
    pub hyper_bounds: HyperBounds,
    pub hyper_fit: HyperFitOptions,
}

impl Default for GpSection {
    fn default() -> Self {
        GpSection { noise: NoiseConfig::default(), hyper_bounds: HyperBounds::default(), hyper_fit: HyperFitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub initial_design: usize,
    pub stall_window: usize,
    pub stall_tolerance: f64,
    pub max_skips: usize,
    pub objective: Objective,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let bo = BoConfig::default();
        OptimizerSection {
            initial_design: bo.initial_design,
            stall_window: bo.stall_window,
            stall_tolerance: bo.stall_tolerance,
            max_skips: bo.max_skips,
            objective: Objective::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushSection {
    pub ladder: Vec<f64>,
    pub fidelity: Fidelity,
}

impl Default for PushSection {
    fn default() -> Self {
        PushSection { ladder: DEFAULT_PUSH_LADDER.to_vec(), fidelity: Fidelity::Real }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bounds: GainBounds,
    pub plant: PlantConfig,
    pub sequence: CommandSequence,
    pub penalty: PenaltyConfig,
    /// Pushes applied during every optimisation rollout.
    pub pushes: Vec<Push>,
    pub gp: GpSection,
    pub acquisition: AcquisitionConfig,
    pub budgets: Budget,
    pub optimizer: OptimizerSection,
    pub benchmark: BenchmarkConfig,
    pub push_test: PushSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("runs"),
            bounds: GainBounds::default(),
            plant: PlantConfig::default(),
            sequence: CommandSequence::default(),
            penalty: PenaltyConfig::default(),
            pushes: Vec::new(),
            gp: GpSection::default(),
            acquisition: AcquisitionConfig::default(),
            budgets: Budget::default(),
            optimizer: OptimizerSection::default(),
            benchmark: BenchmarkConfig::default(),
            push_test: PushSection::default(),
        }
    }
}

impl RunConfig {
    pub fn problem(&self) -> GaitProblem {
        GaitProblem {
            plant: self.plant.clone(),
            sequence: self.sequence.clone(),
            penalty: self.penalty,
            bounds: self.bounds,
            pushes: self.pushes.clone(),
        }
    }

    pub fn bo(&self) -> BoConfig {
        BoConfig {
            initial_design: self.optimizer.initial_design,
            budget: Budget::new(self.budgets.max_real, self.budgets.max_total),
            acquisition: self.acquisition.clone(),
            noise: self.gp.noise,
            hyper_bounds: self.gp.hyper_bounds,
            hyper_fit: self.gp.hyper_fit.clone(),
            stall_window: self.optimizer.stall_window,
            stall_tolerance: self.optimizer.stall_tolerance,
            max_skips: self.optimizer.max_skips,
        }
    }

    /// SHA-256 of the configuration with the seed and output directory
    /// removed, so runs of one study share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
            obj.remove("output_dir");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.optimizer.initial_design == 0 {
            return Err(out_of_range("optimizer.initial_design", "initial_design must be >= 1"));
        }
        if !(self.optimizer.stall_tolerance.is_finite() && self.optimizer.stall_tolerance >= 0.0) {
            return Err(out_of_range("optimizer.stall_tolerance", "stall_tolerance must be >= 0"));
        }
        let checks: [(&str, simreal_core::Result<()>); 8] = [
            ("bounds", self.bounds.validate()),
            ("plant", self.plant.validate()),
            ("sequence", self.sequence.validate()),
            ("penalty", self.penalty.validate()),
            ("gp.noise", self.gp.noise.validate()),
            ("gp.hyper_bounds", self.gp.hyper_bounds.validate()),
            ("acquisition", self.acquisition.validate()),
            ("budgets", self.bo().validate().and(Ok(()))),
        ];
        for (section, result) in checks {
            match result {
                Err(simreal_core::Error::InvalidArgument(m)) => return Err(self.range_error(section, &m)),
                Err(e) => return Err(self.range_error(section, &e.to_string())),
                Ok(()) => {}
            }
        }
        for (i, p) in self.pushes.iter().enumerate() {
            if !(p.distance.is_finite() && (0.0..1.5).contains(&p.distance)) {
                return Err(out_of_range(format!("pushes[{i}].distance"), "push distance must be in [0, 1.5)"));
            }
            if !p.time.is_finite() || p.time < 0.0 {
                return Err(out_of_range(format!("pushes[{i}].time"), "push time must be >= 0"));
            }
        }
        for (i, d) in self.push_test.ladder.iter().enumerate() {
            if !(d.is_finite() && (0.0..1.5).contains(d)) {
                return Err(out_of_range(format!("push_test.ladder[{i}]"), "push distance must be in [0, 1.5)"));
            }
        }
        if self.push_test.ladder.is_empty() {
            return Err(out_of_range("push_test.ladder", "ladder must not be empty"));
        }
        let b = &self.benchmark;
        if b.oracle_resolution < 2 {
            return Err(out_of_range("benchmark.oracle_resolution", "oracle_resolution must be >= 2"));
        }
        if b.scoring_episodes == 0 {
            return Err(out_of_range("benchmark.scoring_episodes", "scoring_episodes must be >= 1"));
        }
        if b.improvement_episodes == 0 {
            return Err(out_of_range("benchmark.improvement_episodes", "improvement_episodes must be >= 1"));
        }
        if !(b.oracle_tolerance.is_finite() && b.oracle_tolerance >= 0.0) {
            return Err(out_of_range("benchmark.oracle_tolerance", "oracle_tolerance must be >= 0"));
        }
        Ok(())
    }

    /// Library validation messages lead with the offending field name; use it
    /// to extend the path when it names a key of the section.
    fn range_error(&self, section: &str, message: &str) -> ConfigError {
        let value = serde_json::to_value(self).expect("config serialises");
        let node = section.split('.').try_fold(&value, |v, k| v.get(k));
        let field = message.split_whitespace().next().unwrap_or("");
        let path = match node {
            Some(n) if n.get(field).is_some() => format!("{section}.{field}"),
            _ => section.to_string(),
        };
        out_of_range(path, message)
    }
}

fn out_of_range(path: impl Into<String>, message: &str) -> ConfigError {
    ConfigError { kind: ConfigErrorKind::OutOfRange, path: path.into(), message: message.to_string() }
}

/// Parse and validate a configuration document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let kind = match inner.classify() {
            serde_json::error::Category::Data => ConfigErrorKind::Schema,
            _ => ConfigErrorKind::Malformed,
        };
        let path = if path == "." || kind == ConfigErrorKind::Malformed { String::new() } else { path };
        ConfigError { kind, path, message: inner.to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        kind: ConfigErrorKind::MissingFile,
        path: String::new(),
        message: format!("{}: {e}", path.display()),
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.acquisition.sim_repeats, 4);
        assert_eq!((cfg.budgets.max_real, cfg.budgets.max_total), (15, 161));
    }

    #[test]
    fn simulation_only_budget_is_valid() {
        let cfg = parse_config_str(r#"{"budgets": {"max_real": 0}}"#).unwrap();
        assert_eq!(cfg.budgets.max_real, 0);
        assert_eq!(cfg.budgets.max_total, 161);
    }

    #[test]
    fn errors_carry_kind_and_path() {
        let e = parse_config_str(r#"{"plant": {"dt": -0.01}}"#).unwrap_err();
        assert_eq!((e.kind, e.path.as_str()), (ConfigErrorKind::OutOfRange, "plant.dt"));
        assert!(e.to_string().contains("plant.dt"));

        let e = parse_config_str(r#"{"plant": {"dtt": 0.01}}"#).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::Schema);
        assert_eq!(e.path, "plant.dtt");

        let e = parse_config_str(r#"{"budgets": {"max_real": "many"}}"#).unwrap_err();
        assert_eq!((e.kind, e.path.as_str()), (ConfigErrorKind::Schema, "budgets.max_real"));

        let e = parse_config_str(r#"{"plant": {"dt": 0.01"#).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::Malformed);

        let e = parse_config_str(r#"{"budgets": {"max_real": 20, "max_total": 10}}"#).unwrap_err();
        assert_eq!((e.kind, e.path.as_str()), (ConfigErrorKind::OutOfRange, "budgets.max_real"));

        let e = parse_config_str(r#"{"acquisition": {"cost_real": 0}}"#).unwrap_err();
        assert_eq!(e.path, "acquisition.cost_real");

        let e = parse_config_str(r#"{"push_test": {"ladder": [0.2, 1.7]}}"#).unwrap_err();
        assert_eq!(e.path, "push_test.ladder[1]");

        let e = parse_config(Path::new("/nonexistent/config.json")).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::MissingFile);
        let codes: std::collections::HashSet<_> = [
            ConfigErrorKind::MissingFile,
            ConfigErrorKind::Malformed,
            ConfigErrorKind::Schema,
            ConfigErrorKind::OutOfRange,
        ]
        .iter()
        .map(|k| k.code())
        .collect();
        assert_eq!(codes.len(), 4);
    }

    #[test]
    fn sequences_and_pushes_parse() {
        let cfg = parse_config_str(
            r#"{"sequence": [["halt", 1.0], ["forward", 2.5]], "pushes": [{"time": 1.5, "distance": 0.8}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.sequence.duration(), 3.5);
        assert_eq!(cfg.pushes[0].direction, 1.0);
        assert!(parse_config_str(r#"{"sequence": [["halt", 0.0]]}"#).is_err());
        assert!(parse_config_str(r#"{"sequence": [["jump", 1.0]]}"#).is_err());
    }

    #[test]
    fn fingerprint_ignores_seed_and_output() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 99, output_dir: PathBuf::from("elsewhere"), ..RunConfig::default() };
        let c = RunConfig { budgets: Budget::new(3, 50), ..RunConfig::default() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
