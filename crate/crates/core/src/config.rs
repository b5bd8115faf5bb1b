//! Run configuration shared by every pipeline stage, and the manifest that
//! makes a run reproducible.
//!
//! Files are TOML. Every key is optional; missing keys take the defaults
//! below. Unknown keys are rejected so typos do not silently fall back to
//! defaults. Dotted `key=value` overrides apply on top of a loaded file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arena::BotSpec;
use crate::neural::NetworkConfig;
use crate::rl::PpoConfig;
use crate::sl::{SlConfig, SyntheticConfig};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("unknown config key {0:?}; see configs/default.toml for every key")]
    UnknownKey(String),
    #[error("override {0:?} must look like section.key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlRunConfig {
    /// PPO iterations; each plays `ppo.games_per_iteration` games.
    pub iterations: u64,
    /// Iterations between checkpoints in the run directory.
    pub checkpoint_every: u64,
    /// Every n-th self-play game is stored as a record; 0 stores none.
    pub record_every: u64,
    /// Supervised checkpoint that seeds the pool; required by `train-rl`.
    pub sl_checkpoint: Option<PathBuf>,
}

impl Default for RlRunConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            checkpoint_every: 10,
            record_every: 16,
            sl_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub a: BotSpec,
    pub b: BotSpec,
    /// Even, so each side plays white equally often.
    pub games: usize,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            a: BotSpec::random(),
            b: BotSpec::random(),
            games: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceOptions {
    pub bind: String,
    pub data_dir: PathBuf,
    pub max_games: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: "service-data".into(),
            max_games: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// When set, replaces every section's seed.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Single-threaded, fixed-order reductions. The pipeline has no other
    /// mode; the key documents the guarantee and must stay true.
    pub deterministic: bool,
    pub network: NetworkConfig,
    pub data: SyntheticConfig,
    pub sl: SlConfig,
    pub ppo: PpoConfig,
    pub rl: RlRunConfig,
    pub arena: ArenaConfig,
    pub service: ServiceOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: "runs/default".into(),
            deterministic: true,
            network: NetworkConfig::default(),
            data: SyntheticConfig::default(),
            sl: SlConfig::default(),
            ppo: PpoConfig::default(),
            rl: RlRunConfig::default(),
            arena: ArenaConfig::default(),
            service: ServiceOptions::default(),
        }
    }
}

/// Keys present in `given` but absent from `canonical`, as dotted paths.
fn unknown_keys(given: &Value, canonical: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(g), Value::Object(c)) = (given, canonical) else {
        return;
    };
    for (k, v) in g {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match c.get(k) {
            // Absent optional values serialize as null; any nested table
            // under them is taken on trust.
            Some(Value::Null) => {}
            Some(cv) => unknown_keys(v, cv, &path, out),
            None => out.push(path),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let given: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let given = serde_json::to_value(given).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_value(given)
    }

    fn from_value(given: Value) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_value(given.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let canonical = serde_json::to_value(&config).expect("config serializes");
        let mut unknown = Vec::new();
        unknown_keys(&given, &canonical, "", &mut unknown);
        match unknown.into_iter().next() {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(config),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Applies `section.key=value`. The value is read as a TOML literal and
    /// falls back to a plain string, so `sl.epochs=3` and
    /// `arena.a=greedy` both work.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.into()))?;
        let key = key.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).map_err(|e| ConfigError::Parse(e.to_string()))?,
            Err(_) => Value::String(raw.to_string()),
        };
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
            if !obj.contains_key(*part) {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*part).expect("checked above");
        }
        *self = Self::from_value(tree)?;
        Ok(())
    }

    /// Pushes the global seed into every section.
    pub fn resolve(&mut self) {
        if let Some(s) = self.seed {
            self.network.seed = s;
            self.data.seed = s;
            self.sl.seed = s;
            self.ppo.seed = s;
            self.arena.seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !self.deterministic {
            return invalid("deterministic = false is not supported; every stage is single-threaded".into());
        }
        if let Err(e) = self.network.validate() {
            return invalid(format!("network: {e}"));
        }
        if let Err(e) = self.sl.validate() {
            return invalid(format!("sl: {e}"));
        }
        if let Err(e) = self.ppo.validate() {
            return invalid(format!("ppo: {e}"));
        }
        if self.data.games == 0 || self.data.bots.is_empty() {
            return invalid("data: games and bots must be non-empty".into());
        }
        if self.arena.games < 2 || self.arena.games % 2 != 0 {
            return invalid(format!("arena.games must be even and at least 2, got {}", self.arena.games));
        }
        if self.rl.iterations == 0 {
            return invalid("rl.iterations must be positive".into());
        }
        if self.service.max_games == 0 {
            return invalid("service.max_games must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        [
            ("network", self.network.seed),
            ("data", self.data.seed),
            ("sl", self.sl.seed),
            ("ppo", self.ppo.seed),
            ("arena", self.arena.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub code_version: String,
    /// Informational; excluded from any reproducibility comparison.
    pub created_at: String,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config.hash(),
            seeds: config.seeds(),
            code_version: CODE_VERSION.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
        }
    }
}

/// Creates `dir` and writes `config.toml` and `manifest.json` into it.
pub fn write_run_dir(dir: &Path, config: &RunConfig, command: &str) -> Result<Manifest, ConfigError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    let manifest = Manifest::new(command, config);
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(manifest)
}
