//! Flat `key = value` run configuration. Absent keys take defaults, `#`
//! starts a comment, and unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::contracts::ContractParams;
use crate::ledger::{DEFAULT_BATCH_SIZE, DEFAULT_FRESHNESS_WINDOW, MIN_VALIDATORS};
use crate::model::{Optimizer, TrainConfig, DEFAULT_THRESHOLD};
use crate::storage::{StorageParams, DEFAULT_BAN_THRESHOLD, DEFAULT_BAN_WINDOW};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("cannot read config: {0}")]
    Io(String),
}

fn invalid(key: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub validator_count: usize,
    pub n_users: usize,
    pub n_resources: usize,
    pub seed: u64,
    pub start_time: u64,
    pub freshness_window: u64,
    pub ban_threshold: usize,
    pub ban_window: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub threshold: f64,
    pub optimizer: Optimizer,
    pub chain_file: PathBuf,
    pub weights_file: PathBuf,
    pub log_file: PathBuf,
    pub rules_file: Option<PathBuf>,
    pub rbac_policy: Option<PathBuf>,
    pub abac_policy: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let train = TrainConfig::default();
        Config {
            validator_count: MIN_VALIDATORS,
            n_users: 100,
            n_resources: 50,
            seed: 42,
            start_time: 1_700_000_000,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
            ban_threshold: DEFAULT_BAN_THRESHOLD,
            ban_window: DEFAULT_BAN_WINDOW,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            hidden1: train.hidden.0,
            hidden2: train.hidden.1,
            threshold: DEFAULT_THRESHOLD,
            optimizer: train.optimizer,
            chain_file: "chain.jsonl".into(),
            weights_file: "model.bin".into(),
            log_file: "malicious.jsonl".into(),
            rules_file: None,
            rbac_policy: None,
            abac_policy: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| invalid(key, e))
}

fn positive<T: PartialOrd + Default + fmt::Display>(key: &str, v: T) -> Result<T, ConfigError> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

impl Config {
    pub const KEYS: [&'static str; 21] = [
        "validator_count",
        "n_users",
        "n_resources",
        "seed",
        "start_time",
        "freshness_window",
        "ban_threshold",
        "ban_window",
        "batch_size",
        "learning_rate",
        "epochs",
        "hidden1",
        "hidden2",
        "threshold",
        "optimizer",
        "chain_file",
        "weights_file",
        "log_file",
        "rules_file",
        "rbac_policy",
        "abac_policy",
    ];

    /// Set one key from its text form, validating the value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "validator_count" => {
                let v: usize = parse_num(key, value)?;
                if v < MIN_VALIDATORS {
                    return Err(invalid(key, format!("must exceed 2, got {v}")));
                }
                self.validator_count = v;
            }
            "n_users" => self.n_users = positive(key, parse_num(key, value)?)?,
            "n_resources" => self.n_resources = positive(key, parse_num(key, value)?)?,
            "seed" => self.seed = parse_num(key, value)?,
            "start_time" => self.start_time = parse_num(key, value)?,
            "freshness_window" => self.freshness_window = positive(key, parse_num(key, value)?)?,
            "ban_threshold" => self.ban_threshold = positive(key, parse_num(key, value)?)?,
            "ban_window" => self.ban_window = positive(key, parse_num(key, value)?)?,
            "batch_size" => self.batch_size = positive(key, parse_num(key, value)?)?,
            "learning_rate" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(key, format!("must be a positive number, got {v}")));
                }
                self.learning_rate = v;
            }
            "epochs" => self.epochs = positive(key, parse_num(key, value)?)?,
            "hidden1" => self.hidden1 = positive(key, parse_num(key, value)?)?,
            "hidden2" => self.hidden2 = positive(key, parse_num(key, value)?)?,
            "threshold" => {
                let v: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(key, format!("must lie in [0, 1], got {v}")));
                }
                self.threshold = v;
            }
            "optimizer" => {
                self.optimizer = match value.to_ascii_lowercase().as_str() {
                    "sgd" | "gd" => Optimizer::Sgd,
                    "adam" => Optimizer::Adam,
                    other => return Err(invalid(key, format!("unknown optimizer `{other}`"))),
                }
            }
            "chain_file" => self.chain_file = non_empty_path(key, value)?,
            "weights_file" => self.weights_file = non_empty_path(key, value)?,
            "log_file" => self.log_file = non_empty_path(key, value)?,
            "rules_file" => self.rules_file = Some(non_empty_path(key, value)?),
            "rbac_policy" => self.rbac_policy = Some(non_empty_path(key, value)?),
            "abac_policy" => self.abac_policy = Some(non_empty_path(key, value)?),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            config.set(key.trim(), value)?;
        }
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            hidden: (self.hidden1, self.hidden2),
            threshold: self.threshold,
            optimizer: self.optimizer,
        }
    }

    pub fn contract_params(&self) -> ContractParams {
        ContractParams {
            threshold: self.threshold,
            freshness_window: self.freshness_window,
        }
    }

    pub fn storage_params(&self) -> StorageParams {
        StorageParams {
            link_lifetime: self.freshness_window,
            ban_threshold: self.ban_threshold,
            ban_window: self.ban_window,
        }
    }

    /// `key = value` lines that parse back to this config.
    pub fn to_text(&self) -> String {
        let optimizer = match self.optimizer {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        };
        let mut out = format!(
            "validator_count = {}\nn_users = {}\nn_resources = {}\nseed = {}\nstart_time = {}\n\
             freshness_window = {}\nban_threshold = {}\nban_window = {}\nbatch_size = {}\n\
             learning_rate = {}\nepochs = {}\nhidden1 = {}\nhidden2 = {}\nthreshold = {}\n\
             optimizer = {}\nchain_file = {}\nweights_file = {}\nlog_file = {}\n",
            self.validator_count,
            self.n_users,
            self.n_resources,
            self.seed,
            self.start_time,
            self.freshness_window,
            self.ban_threshold,
            self.ban_window,
            self.batch_size,
            self.learning_rate,
            self.epochs,
            self.hidden1,
            self.hidden2,
            self.threshold,
            optimizer,
            self.chain_file.display(),
            self.weights_file.display(),
            self.log_file.display(),
        );
        for (key, path) in [
            ("rules_file", &self.rules_file),
            ("rbac_policy", &self.rbac_policy),
            ("abac_policy", &self.abac_policy),
        ] {
            if let Some(p) = path {
                out.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        out
    }
}

fn non_empty_path(key: &str, value: &str) -> Result<PathBuf, ConfigError> {
    if value.is_empty() {
        Err(invalid(key, "empty path"))
    } else {
        Ok(PathBuf::from(value))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
    Config::parse(&text)
}
