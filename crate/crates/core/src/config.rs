//! Run configuration: global defaults, per-dataset profiles and JSON overlays.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distance::MetricKind;
use crate::ensemble::DEFAULT_TEMPERATURES;
use crate::error::ConfigError;
use crate::table::{FormatKind, DEFAULT_PRECISION};

pub const ENV_DATA_DIR: &str = "TT_DATA_DIR";

/// Tuned defaults for one archive dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetProfile {
    pub code: &'static str,
    /// Archive name, also the file stem of its `.ts` files.
    pub name: &'static str,
    pub metric: MetricKind,
    pub k: usize,
    pub format: FormatKind,
}

const fn profile(code: &'static str, name: &'static str, metric: MetricKind, k: usize, format: FormatKind) -> DatasetProfile {
    DatasetProfile { code, name, metric, k, format }
}

pub const PROFILES: [DatasetProfile; 10] = [
    profile("AWR", "ArticularyWordRecognition", MetricKind::Man, 3, FormatKind::DfLoader),
    profile("AF", "AtrialFibrillation", MetricKind::Dtw, 6, FormatKind::Markdown),
    profile("BL", "Blink", MetricKind::Sed, 4, FormatKind::Markdown),
    profile("CR", "Cricket", MetricKind::Man, 1, FormatKind::DfLoader),
    profile("ER", "ERing", MetricKind::Man, 2, FormatKind::DfLoader),
    profile("FM", "FingerMovements", MetricKind::Man, 5, FormatKind::DfLoader),
    profile("RS", "RacketSports", MetricKind::Man, 2, FormatKind::Json),
    profile("SRS2", "SelfRegulationSCP2", MetricKind::Sed, 1, FormatKind::DfLoader),
    profile("SWJ", "StandWalkJump", MetricKind::Sed, 1, FormatKind::DfLoader),
    profile("UWG", "UWaveGestureLibrary", MetricKind::Man, 2, FormatKind::Html),
];

/// Looks a profile up by short code or archive name, case-insensitively.
/// "CK" is accepted as an alias of Cricket.
pub fn find_profile(name: &str) -> Option<&'static DatasetProfile> {
    let key = if name.eq_ignore_ascii_case("CK") { "CR" } else { name };
    PROFILES.iter().find(|p| p.code.eq_ignore_ascii_case(key) || p.name.eq_ignore_ascii_case(key))
}

/// Number of clusters used for negative selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCount {
    /// One cluster per class.
    Classes,
    Fixed(usize),
}

impl ClusterCount {
    pub fn resolve(self, n_classes: usize) -> usize {
        match self {
            ClusterCount::Classes => n_classes,
            ClusterCount::Fixed(k) => k,
        }
    }
}

impl Serialize for ClusterCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Classes => s.serialize_str("classes"),
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Named(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(ClusterCount::Fixed(k)),
            Raw::Named(s) if s == "classes" => Ok(ClusterCount::Classes),
            Raw::Named(s) => s
                .parse()
                .map(ClusterCount::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("k_clusters must be an integer or \"classes\", got {s:?}"))),
        }
    }
}

impl FromStr for ClusterCount {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "classes" {
            return Ok(ClusterCount::Classes);
        }
        s.parse().map(ClusterCount::Fixed).map_err(|_| ConfigError::Invalid(format!("k_clusters must be an integer or \"classes\", got {s:?}")))
    }
}

/// Which completion backend answers prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock,
    /// Remote chat-completion service, optionally pinned to a model.
    Http { model: Option<String> },
}

impl FromStr for BackendSpec {
    type Err = ConfigError;

    /// `mock`, `http` or `http:<model>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "mock" => Ok(BackendSpec::Mock),
            None if s == "http" => Ok(BackendSpec::Http { model: None }),
            Some(("http", model)) if !model.is_empty() => Ok(BackendSpec::Http { model: Some(model.to_string()) }),
            _ => Err(ConfigError::Invalid(format!("unknown backend {s:?} (expected mock, http or http:<model>)"))),
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Mock => f.write_str("mock"),
            BackendSpec::Http { model: None } => f.write_str("http"),
            BackendSpec::Http { model: Some(m) } => write!(f, "http:{m}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegativesConfig {
    pub count: usize,
    pub k_clusters: ClusterCount,
    /// Falls back to the run seed.
    pub seed: Option<u64>,
    /// Cluster raw values instead of z-normalized ones.
    pub raw_space: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub temperatures: Vec<f64>,
    /// Multi-model mode; empty means the single `backend`.
    pub backends: Vec<BackendSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub metric: MetricKind,
    pub dtw_window: Option<usize>,
    pub k: usize,
    pub format: FormatKind,
    pub precision: usize,
    pub backend: BackendSpec,
    pub model: String,
    pub magic_words: bool,
    pub seed: u64,
    pub parallelism: usize,
    pub out: PathBuf,
    pub resume: bool,
    /// Per-channel z-normalization of all series before retrieval.
    pub normalize: bool,
    pub allow_missing_card: bool,
    pub dump_prompts: bool,
    pub negatives: NegativesConfig,
    pub ensemble: EnsembleConfig,
    pub llm: LlmConfig,
}

impl RunConfig {
    /// Global defaults, used for datasets without a profile.
    pub fn defaults(dataset: &str) -> Self {
        Self {
            dataset: dataset.to_string(),
            data_dir: PathBuf::from("datasets"),
            metric: MetricKind::Ed,
            dtw_window: None,
            k: 1,
            format: FormatKind::Markdown,
            precision: DEFAULT_PRECISION,
            backend: BackendSpec::Mock,
            model: String::new(),
            magic_words: false,
            seed: 0,
            parallelism: 4,
            out: PathBuf::from("runs"),
            resume: false,
            normalize: false,
            allow_missing_card: false,
            dump_prompts: false,
            negatives: NegativesConfig { count: 0, k_clusters: ClusterCount::Classes, seed: None, raw_space: false },
            ensemble: EnsembleConfig { temperatures: DEFAULT_TEMPERATURES.to_vec(), backends: Vec::new() },
            llm: LlmConfig { endpoint: None, api_key: None, max_tokens: crate::backend::DEFAULT_MAX_TOKENS, timeout_secs: 120, max_in_flight: 4 },
        }
    }

    /// Global defaults overlaid with the dataset's profile, if it has one.
    pub fn for_dataset(dataset: &str) -> Self {
        let mut cfg = Self::defaults(dataset);
        if let Some(p) = find_profile(dataset) {
            cfg.dataset = p.name.to_string();
            cfg.metric = p.metric;
            cfg.k = p.k;
            cfg.format = p.format;
        }
        cfg
    }

    /// Defaults, then profile, then each overlay in order (later wins).
    pub fn resolve(overlays: &[&ConfigOverlay]) -> Result<Self, ConfigError> {
        let dataset = overlays
            .iter()
            .rev()
            .find_map(|o| o.dataset.clone())
            .ok_or_else(|| ConfigError::Invalid("no dataset given".into()))?;
        let mut cfg = Self::for_dataset(&dataset);
        for o in overlays {
            cfg.apply(o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverlay) {
        macro_rules! set {
            ($($field:ident).+ <- $value:expr) => {
                if let Some(v) = $value.clone() {
                    self.$($field).+ = v;
                }
            };
        }
        if let Some(d) = &o.dataset {
            self.dataset = find_profile(d).map_or_else(|| d.clone(), |p| p.name.to_string());
        }
        set!(data_dir <- o.data_dir);
        set!(metric <- o.metric);
        if o.dtw_window.is_some() {
            self.dtw_window = o.dtw_window;
        }
        set!(k <- o.k);
        set!(format <- o.format);
        set!(precision <- o.precision);
        set!(backend <- o.backend);
        set!(model <- o.model);
        set!(magic_words <- o.magic_words);
        set!(seed <- o.seed);
        set!(parallelism <- o.parallelism);
        set!(out <- o.out);
        set!(resume <- o.resume);
        set!(normalize <- o.normalize);
        set!(allow_missing_card <- o.allow_missing_card);
        set!(dump_prompts <- o.dump_prompts);
        if let Some(n) = &o.negatives {
            set!(negatives.count <- n.count);
            set!(negatives.k_clusters <- n.k_clusters);
            if n.seed.is_some() {
                self.negatives.seed = n.seed;
            }
            set!(negatives.raw_space <- n.raw_space);
        }
        if let Some(e) = &o.ensemble {
            set!(ensemble.temperatures <- e.temperatures);
            set!(ensemble.backends <- e.backends);
        }
        if let Some(l) = &o.llm {
            if l.endpoint.is_some() {
                self.llm.endpoint = l.endpoint.clone();
            }
            if l.api_key.is_some() {
                self.llm.api_key = l.api_key.clone();
            }
            set!(llm.max_tokens <- l.max_tokens);
            set!(llm.timeout_secs <- l.timeout_secs);
            set!(llm.max_in_flight <- l.max_in_flight);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.precision == 0 {
            return bad("precision must be positive".into());
        }
        if self.ensemble.temperatures.is_empty() {
            return bad("ensemble.temperatures must not be empty".into());
        }
        if let Some(t) = self.ensemble.temperatures.iter().find(|t| !(0.0..=2.0).contains(*t)) {
            return bad(format!("temperature {t} outside [0, 2]"));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive".into());
        }
        if self.llm.max_tokens == 0 || self.llm.max_in_flight == 0 || self.llm.timeout_secs == 0 {
            return bad("llm.max_tokens, llm.timeout_secs and llm.max_in_flight must be positive".into());
        }
        if self.negatives.k_clusters == ClusterCount::Fixed(0) {
            return bad("negatives.k_clusters must be positive".into());
        }
        if self.dtw_window.is_some() && self.metric != MetricKind::Dtw {
            return bad(format!("dtw_window given but metric is {}", self.metric));
        }
        Ok(())
    }

    pub fn negatives_seed(&self) -> u64 {
        self.negatives.seed.unwrap_or(self.seed)
    }

    /// Backends that answer each prompt, in path order.
    pub fn backend_list(&self) -> Vec<BackendSpec> {
        if self.ensemble.backends.is_empty() {
            vec![self.backend.clone()]
        } else {
            self.ensemble.backends.clone()
        }
    }

    /// Short hash of every setting that can change predictions.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            for key in ["data_dir", "out", "resume", "parallelism", "dump_prompts"] {
                obj.remove(key);
            }
            if let Some(llm) = obj.get_mut("llm").and_then(|l| l.as_object_mut()) {
                llm.remove("max_in_flight");
                llm.remove("timeout_secs");
            }
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..6])
    }

    /// `<out>/<dataset>/<config-hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.dataset).join(self.hash())
    }

    /// Directory holding the dataset's files: `<data_dir>/<dataset>` when it
    /// exists, else `data_dir` itself.
    pub fn dataset_dir(&self) -> PathBuf {
        let nested = self.data_dir.join(&self.dataset);
        if nested.is_dir() {
            nested
        } else {
            self.data_dir.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativesOverlay {
    pub count: Option<usize>,
    pub k_clusters: Option<ClusterCount>,
    pub seed: Option<u64>,
    pub raw_space: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleOverlay {
    pub temperatures: Option<Vec<f64>>,
    pub backends: Option<Vec<BackendSpec>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmOverlay {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
}

/// A partial configuration: one JSON config file, the environment, or the
/// command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub dataset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub metric: Option<MetricKind>,
    pub dtw_window: Option<usize>,
    pub k: Option<usize>,
    pub format: Option<FormatKind>,
    pub precision: Option<usize>,
    pub backend: Option<BackendSpec>,
    pub model: Option<String>,
    pub magic_words: Option<bool>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: Option<bool>,
    pub normalize: Option<bool>,
    pub allow_missing_card: Option<bool>,
    pub dump_prompts: Option<bool>,
    pub negatives: Option<NegativesOverlay>,
    pub ensemble: Option<EnsembleOverlay>,
    pub llm: Option<LlmOverlay>,
}

/// Every key accepted in a config file, nested keys dotted.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "metric",
    "dtw_window",
    "k",
    "format",
    "precision",
    "backend",
    "model",
    "magic_words",
    "seed",
    "parallelism",
    "out",
    "resume",
    "normalize",
    "allow_missing_card",
    "dump_prompts",
    "negatives.count",
    "negatives.k_clusters",
    "negatives.seed",
    "negatives.raw_space",
    "ensemble.temperatures",
    "ensemble.backends",
    "llm.endpoint",
    "llm.api_key",
    "llm.max_tokens",
    "llm.timeout_secs",
    "llm.max_in_flight",
];

impl ConfigOverlay {
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: path.to_path_buf(), msg: e.to_string() })?;
        Self::from_json_str(&text).map_err(|e| ConfigError::File { path: path.to_path_buf(), msg: e.to_string() })
    }

    /// Values from `TT_API_URL`, `TT_API_KEY`, `TT_MODEL` and `TT_DATA_DIR`.
    pub fn from_env() -> Self {
        Self::from_env_with(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    pub fn from_env_with(get: impl Fn(&str) -> Option<String>) -> Self {
        use crate::backend::{ENV_API_KEY, ENV_API_URL, ENV_MODEL};
        let endpoint = get(ENV_API_URL);
        let api_key = get(ENV_API_KEY);
        let llm = (endpoint.is_some() || api_key.is_some()).then(|| LlmOverlay { endpoint, api_key, ..Default::default() });
        Self { model: get(ENV_MODEL), data_dir: get(ENV_DATA_DIR).map(PathBuf::from), llm, ..Default::default() }
    }
}
