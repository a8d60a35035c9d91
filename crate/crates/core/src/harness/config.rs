//! Line-based run configuration.
//!
//! ```text
//! # comments run to end of line
//! scenario = monolith
//! alpha    = 0.02
//! users    = 100,500,1000
//! ```
//!
//! Keys may appear at most once; unknown keys are rejected. Every key except
//! `scenario` has a default.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::domain::{validate_params, LatencyModelParams, UserCount, DEFAULT_DIMENSION};
use crate::topology::Scenario;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn parse_err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunScenario {
    Deployment(Scenario),
    AnalyticSweep,
}

impl RunScenario {
    pub fn as_str(self) -> &'static str {
        match self {
            RunScenario::Deployment(s) => s.as_str(),
            RunScenario::AnalyticSweep => "analytic_sweep",
        }
    }

    pub fn deployment(self) -> Option<Scenario> {
        match self {
            RunScenario::Deployment(s) => Some(s),
            RunScenario::AnalyticSweep => None,
        }
    }
}

impl fmt::Display for RunScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "analytic_sweep" {
            return Ok(RunScenario::AnalyticSweep);
        }
        s.parse::<Scenario>()
            .map(RunScenario::Deployment)
            .map_err(|_| {
                format!("unknown scenario `{s}` (expected monolith, microservice, three_layer or analytic_sweep)")
            })
    }
}

pub const DEFAULT_USERS: [u64; 6] = [100, 500, 1000, 2000, 5000, 10_000];
pub const DEFAULT_TRIALS: u32 = 50;
pub const DEFAULT_SHARDS: u32 = 10;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: RunScenario,
    pub params: LatencyModelParams,
    pub user_counts: Vec<UserCount>,
    pub trials: u32,
    pub shards: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Relative mean delta allowed by `compare`.
    pub tolerance: f64,
    pub zero_noise: bool,
    pub gateway_ms: f64,
    pub sidecar_ms: f64,
    pub dimension: usize,
}

impl RunConfig {
    pub fn with_scenario(scenario: RunScenario) -> Self {
        Self {
            scenario,
            params: LatencyModelParams::default(),
            user_counts: DEFAULT_USERS
                .iter()
                .map(|&n| UserCount::new(n).expect("defaults are positive"))
                .collect(),
            trials: DEFAULT_TRIALS,
            shards: DEFAULT_SHARDS,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            tolerance: DEFAULT_TOLERANCE,
            zero_noise: false,
            gateway_ms: 0.0,
            sidecar_ms: 0.0,
            dimension: DEFAULT_DIMENSION,
        }
    }

    /// Model parameters with `zero_noise` applied.
    pub fn effective_params(&self) -> LatencyModelParams {
        if self.zero_noise {
            self.params.without_noise()
        } else {
            self.params
        }
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Validation(m));
        if let Err(e) = validate_params(self.params) {
            return invalid(e.to_string());
        }
        if self.user_counts.is_empty() {
            return invalid("users must list at least one user count".into());
        }
        if self.user_counts.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("users must be strictly increasing".into());
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.shards == 0 {
            return invalid("shards must be at least 1".into());
        }
        if self.dimension == 0 {
            return invalid("dimension must be at least 1".into());
        }
        for (name, v) in [
            ("tolerance", self.tolerance),
            ("gateway_ms", self.gateway_ms),
            ("sidecar_ms", self.sidecar_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(self)
    }

    /// Renders every key, defaults included, in the config file format.
    /// Parsing the output yields an identical config.
    pub fn to_config_text(&self) -> String {
        let p = &self.params;
        let users: Vec<String> = self.user_counts.iter().map(|n| n.to_string()).collect();
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("scenario", &self.scenario);
        line("t_comp", &p.t_comp);
        line("alpha", &p.alpha);
        line("t_local", &p.t_local);
        line("sigma_mono", &p.sigma_mono);
        line("sigma_micro", &p.sigma_micro);
        line("users", &users.join(","));
        line("trials", &self.trials);
        line("shards", &self.shards);
        line("seed", &self.seed);
        line("out", &self.out_dir.display());
        line("tolerance", &self.tolerance);
        line("zero_noise", &self.zero_noise);
        line("gateway_ms", &self.gateway_ms);
        line("sidecar_ms", &self.sidecar_ms);
        line("dimension", &self.dimension);
        s
    }
}

pub const KEYS: [&str; 16] = [
    "scenario",
    "t_comp",
    "alpha",
    "t_local",
    "sigma_mono",
    "sigma_micro",
    "users",
    "trials",
    "shards",
    "seed",
    "out",
    "tolerance",
    "zero_noise",
    "gateway_ms",
    "sidecar_ms",
    "dimension",
];

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("`{key}` expects a number, got `{value}`")))
}

fn real(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = number(line, key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("`{key}` must be finite")))
    }
}

fn boolean(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(
            line,
            format!("`{key}` expects true or false, got `{value}`"),
        )),
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(parse_err(line, "empty key"));
        }
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(parse_err(line, format!("unknown key `{key}`")));
        };
        if let Some(first) = seen.insert(known, line) {
            return Err(parse_err(
                line,
                format!("duplicate key `{key}` (first set on line {first})"),
            ));
        }
        if value.is_empty() {
            return Err(parse_err(line, format!("`{key}` has no value")));
        }
        entries.push((line, known, value));
    }

    let mut scenario = None;
    let mut cfg = RunConfig::with_scenario(RunScenario::AnalyticSweep);
    for (line, key, value) in entries {
        match key {
            "scenario" => {
                scenario = Some(
                    value
                        .parse::<RunScenario>()
                        .map_err(|r| parse_err(line, r))?,
                )
            }
            "t_comp" => cfg.params.t_comp = real(line, key, value)?,
            "alpha" => cfg.params.alpha = real(line, key, value)?,
            "t_local" => cfg.params.t_local = real(line, key, value)?,
            "sigma_mono" => cfg.params.sigma_mono = real(line, key, value)?,
            "sigma_micro" => cfg.params.sigma_micro = real(line, key, value)?,
            "users" => {
                cfg.user_counts = value
                    .split(',')
                    .map(|item| {
                        let n: u64 = number(line, key, item.trim())?;
                        UserCount::new(n).map_err(|e| parse_err(line, e.to_string()))
                    })
                    .collect::<Result<_, _>>()?
            }
            "trials" => cfg.trials = number(line, key, value)?,
            "shards" => cfg.shards = number(line, key, value)?,
            "seed" => cfg.seed = number(line, key, value)?,
            "out" => cfg.out_dir = PathBuf::from(value),
            "tolerance" => cfg.tolerance = real(line, key, value)?,
            "zero_noise" => cfg.zero_noise = boolean(line, key, value)?,
            "gateway_ms" => cfg.gateway_ms = real(line, key, value)?,
            "sidecar_ms" => cfg.sidecar_ms = real(line, key, value)?,
            "dimension" => cfg.dimension = number(line, key, value)?,
            _ => unreachable!("key list is exhaustive"),
        }
    }
    cfg.scenario =
        scenario.ok_or_else(|| ConfigError::Validation("`scenario` is required".into()))?;
    cfg.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config("scenario = monolith\n").unwrap();
        assert_eq!(cfg.scenario, RunScenario::Deployment(Scenario::Monolith));
        assert_eq!(
            cfg.params,
            LatencyModelParams::new(5.0, 0.02, 2.0, 3.0, 1.0).unwrap()
        );
        assert_eq!(cfg.trials, 50);
        let users: Vec<u64> = cfg.user_counts.iter().map(|n| n.get()).collect();
        assert_eq!(users, vec![100, 500, 1000, 2000, 5000, 10_000]);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.shards, 10);
    }

    #[test]
    fn negative_alpha_is_validation_error() {
        let err = parse_config("scenario = monolith\nalpha = -1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)), "{err:?}");
    }

    #[test]
    fn duplicate_key_reports_line() {
        let err = parse_config("scenario = monolith\n# note\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn comments_lists_and_whitespace() {
        let text = "  # header\nscenario=three_layer   # inline\nusers = 10 , 20,30\nzero_noise = true\n\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.user_counts.len(), 3);
        assert!(cfg.zero_noise);
        assert!(cfg.effective_params().is_noiseless());
    }

    #[test]
    fn rejects_malformed_lines() {
        for (text, line) in [
            ("scenario = monolith\nbogus = 1\n", 2),
            ("scenario = monolith\nalpha\n", 2),
            ("scenario = nope\n", 1),
            ("scenario = monolith\ntrials = many\n", 2),
            ("scenario = monolith\nusers = 1,,2\n", 2),
            ("scenario = monolith\nusers = 0,5\n", 2),
            ("scenario = monolith\nzero_noise = yes\n", 2),
            ("scenario = monolith\nalpha = inf\n", 2),
            ("scenario = monolith\n = 3\n", 2),
            ("scenario = monolith\nseed =\n", 2),
        ] {
            match parse_config(text) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} -> {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_invalid_values() {
        for text in [
            "t_comp = 1\n",
            "scenario = monolith\nusers = 5,5\n",
            "scenario = monolith\ntrials = 0\n",
            "scenario = monolith\nshards = 0\n",
            "scenario = monolith\nsigma_micro = 4\n",
            "scenario = monolith\ntolerance = -0.1\n",
        ] {
            assert!(
                matches!(parse_config(text), Err(ConfigError::Validation(_))),
                "{text:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn rendered_config_reparses(
            t_comp in 0.0f64..100.0,
            alpha in 0.0f64..1.0,
            sigma_mono in 0.5f64..10.0,
            frac in 0.0f64..0.99,
            first in 1u64..1000,
            steps in prop::collection::vec(1u64..5000, 0..6),
            trials in 1u32..10_000,
            seed in any::<u64>(),
            zero_noise in any::<bool>(),
        ) {
            let mut cfg = RunConfig::with_scenario(RunScenario::Deployment(Scenario::ThreeLayer));
            cfg.params = LatencyModelParams::new(t_comp, alpha, 2.0, sigma_mono, sigma_mono * frac).unwrap();
            let mut n = first;
            cfg.user_counts = std::iter::once(first)
                .chain(steps.iter().map(|s| { n += s; n }))
                .map(|n| UserCount::new(n).unwrap())
                .collect();
            cfg.trials = trials;
            cfg.seed = seed;
            cfg.zero_noise = zero_noise;
            prop_assert_eq!(parse_config(&cfg.to_config_text()).unwrap(), cfg);
        }
    }
}
