//! Settings resolution: built-in defaults, then the `key = value` config
//! file, then command-line flags.

use cabsim::cache::PolicyKind;
use cabsim::sim::{AdvertiserKind, Scenario};
use cabsim::workload::WorkloadSource;
use cabsim::Configuration;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Empty(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Empty(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Empty(msg) => write!(f, "{msg}"),
        }
    }
}

const KEYS: &[&str] = &[
    "policy",
    "cache",
    "budget",
    "miss-penalty",
    "alpha",
    "umin",
    "imin-bpe",
    "imax-bpe",
    "adv",
    "workload",
    "seed",
    "out",
    "jobs",
];

/// Fully resolved settings for one command invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub policy: PolicyKind,
    pub cache: u64,
    pub budget: u64,
    pub miss_penalty: u64,
    pub alpha: u64,
    pub umin: u64,
    pub imin_bpe: f64,
    pub imax_bpe: f64,
    pub adv: AdvertiserKind,
    pub workload: WorkloadSource,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

impl Settings {
    pub fn resolve(args: &crate::CommonArgs) -> Result<Settings, CliError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = &args.config {
            for (key, value) in parse_config_file(path)? {
                kv.insert(key, value);
            }
        }
        for (key, value) in args.overrides() {
            kv.insert(key.to_string(), value);
        }

        let lookup = |key: &str| kv.get(key).map(String::as_str);
        let parse_num = |key: &str| -> Result<Option<u64>, CliError> {
            lookup(key)
                .map(|v| {
                    v.parse::<u64>()
                        .map_err(|_| CliError::Config(format!("{key}: expected an integer, got `{v}`")))
                })
                .transpose()
        };
        let parse_float = |key: &str| -> Result<Option<f64>, CliError> {
            lookup(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| CliError::Config(format!("{key}: expected a number, got `{v}`")))
                })
                .transpose()
        };

        let policy = match lookup("policy") {
            None | Some("lru") => PolicyKind::Lru,
            Some("hyperbolic") => PolicyKind::Hyperbolic,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "policy: expected lru or hyperbolic, got `{other}`"
                )))
            }
        };
        let adv = match lookup("adv") {
            None => AdvertiserKind::Cab,
            Some(spec) => parse_adv(spec)?,
        };
        let workload = match lookup("workload") {
            Some(spec) => WorkloadSource::parse(spec)
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => return Err(CliError::Config("workload is required".to_string())),
        };

        let settings = Settings {
            policy,
            cache: parse_num("cache")?.unwrap_or(16384),
            budget: parse_num("budget")?.unwrap_or(20),
            miss_penalty: parse_num("miss-penalty")?.unwrap_or(3),
            alpha: parse_num("alpha")?.unwrap_or(10),
            umin: parse_num("umin")?.unwrap_or(10),
            imin_bpe: parse_float("imin-bpe")?.unwrap_or(2.5),
            imax_bpe: parse_float("imax-bpe")?.unwrap_or(15.0),
            adv,
            workload,
            seed: parse_num("seed")?.unwrap_or(0),
            out: lookup("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
            jobs: parse_num("jobs")?.map(|v| v as usize),
        };
        if settings.imin_bpe <= 0.0 || settings.imax_bpe < settings.imin_bpe {
            return Err(CliError::Config(
                "indicator bounds must satisfy 0 < imin-bpe <= imax-bpe".to_string(),
            ));
        }
        Ok(settings)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario {
            capacity: self.cache,
            policy: self.policy,
            workload: self.workload.clone(),
            budget: self.budget,
            miss_penalty: self.miss_penalty,
            alpha: self.alpha,
            min_interval: self.umin,
            min_bits: ((self.imin_bpe * self.cache as f64) as u64).max(1),
            max_bits: ((self.imax_bpe * self.cache as f64) as u64).max(1),
            seed: self.seed,
        })
    }

    /// The scenario and advertiser with one sweep value applied.
    pub fn apply_sweep(
        &self,
        dim: SweepDim,
        value: f64,
    ) -> Result<(Scenario, AdvertiserKind), CliError> {
        let integral = |name: &str| -> Result<u64, CliError> {
            if value.fract() != 0.0 || value < 1.0 {
                Err(CliError::Config(format!(
                    "{name} sweep values must be positive integers, got {value}"
                )))
            } else {
                Ok(value as u64)
            }
        };
        let mut tweaked = self.clone();
        match dim {
            SweepDim::Budget => tweaked.budget = integral("budget")?,
            SweepDim::Cache => tweaked.cache = integral("cache")?,
            SweepDim::Bpe => {
                let Some(cfg) = self.static_config() else {
                    return Err(CliError::Config(
                        "bpe sweeps require --adv static:SIZE,INTERVAL".to_string(),
                    ));
                };
                if value <= 0.0 {
                    return Err(CliError::Config("bpe values must be positive".to_string()));
                }
                tweaked.adv = AdvertiserKind::Static(Configuration {
                    indicator_bits: ((value * self.cache as f64) as u64).max(1),
                    update_interval: cfg.update_interval,
                });
            }
            SweepDim::Interval => {
                let Some(cfg) = self.static_config() else {
                    return Err(CliError::Config(
                        "interval sweeps require --adv static:SIZE,INTERVAL".to_string(),
                    ));
                };
                tweaked.adv = AdvertiserKind::Static(Configuration {
                    indicator_bits: cfg.indicator_bits,
                    update_interval: integral("interval")?,
                });
            }
        }
        let scenario = tweaked.scenario()?;
        Ok((scenario, tweaked.adv))
    }

    fn static_config(&self) -> Option<Configuration> {
        match &self.adv {
            AdvertiserKind::Static(cfg) => Some(*cfg),
            _ => None,
        }
    }
}

fn parse_adv(spec: &str) -> Result<AdvertiserKind, CliError> {
    match spec {
        "cab" => Ok(AdvertiserKind::Cab),
        "cf" => Ok(AdvertiserKind::CacheFirst),
        other => {
            let bad = || {
                CliError::Config(format!(
                    "adv: expected cab, cf, or static:SIZE,INTERVAL, got `{other}`"
                ))
            };
            let rest = other.strip_prefix("static:").ok_or_else(bad)?;
            let (size, interval) = rest.split_once(',').ok_or_else(bad)?;
            let indicator_bits: u64 = size.trim().parse().map_err(|_| bad())?;
            let update_interval: u64 = interval.trim().parse().map_err(|_| bad())?;
            if indicator_bits == 0 || update_interval == 0 {
                return Err(bad());
            }
            Ok(AdvertiserKind::Static(Configuration {
                indicator_bits,
                update_interval,
            }))
        }
    }
}

/// Flat `key = value` file: one pair per line, `#` comments, blank lines
/// ignored, unknown keys rejected.
fn parse_config_file(path: &std::path::Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                i + 1
            )));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDim {
    Budget,
    Cache,
    Bpe,
    Interval,
}

impl FromStr for SweepDim {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "budget" => Ok(SweepDim::Budget),
            "cache" => Ok(SweepDim::Cache),
            "bpe" => Ok(SweepDim::Bpe),
            "interval" => Ok(SweepDim::Interval),
            other => Err(CliError::Config(format!(
                "dim: expected budget, cache, bpe, or interval, got `{other}`"
            ))),
        }
    }
}

pub fn parse_values(values: &str) -> Result<Vec<f64>, CliError> {
    values
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("values: `{v}` is not a number")))
        })
        .collect()
}
