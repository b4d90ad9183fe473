//! Experiment driver: classifies a test split, persists one JSON line per
//! sample, resumes interrupted runs and writes the summary report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{CallLog, CompletionBackend, HttpBackend, HttpConfig, MockBackend};
use crate::cards::builtin_card;
use crate::config::{find_profile, BackendSpec, RunConfig};
use crate::dataset::{dataset_paths, load_dataset_with, Dataset, TimeSeriesSample};
use crate::distance::MetricKind;
use crate::error::{BackendError, ConfigError, Error, Result};
use crate::metrics::{accuracy, consistency_breakdown, macro_f1, per_class_scores, ClassScore, ConsistencyTable};
use crate::pipeline::Pipeline;
use crate::retrieval::NeighborHit;

pub const RECORD_SCHEMA: u32 = 1;
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CALLS_FILE: &str = "calls.jsonl";
pub const PROMPTS_DIR: &str = "prompts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub temperature: f64,
    pub backend: String,
    /// `null` when unparsed.
    pub extracted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u64,
}

/// One classified test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub schema: u32,
    pub id: usize,
    pub true_label: String,
    /// `null` when no path yielded a label (scored as wrong).
    pub predicted: Option<String>,
    pub tie_broken: bool,
    pub tally: BTreeMap<String, usize>,
    pub paths: Vec<PathRecord>,
    pub neighbors: Vec<NeighborHit>,
    pub negatives: Vec<NeighborHit>,
    pub nn_label: String,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock data; excluded from [`SampleRecord::canonical_json`].
    pub timing: Timing,
}

impl SampleRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted.as_ref() == Some(&self.true_label)
    }

    /// A record carrying only the fields the metrics read.
    pub fn bare(id: usize, true_label: &str, predicted: Option<&str>, nn_label: &str) -> Self {
        Self {
            schema: RECORD_SCHEMA,
            id,
            true_label: true_label.into(),
            predicted: predicted.map(Into::into),
            tie_broken: false,
            tally: BTreeMap::new(),
            paths: Vec::new(),
            neighbors: Vec::new(),
            negatives: Vec::new(),
            nn_label: nn_label.into(),
            prompt_hash: String::new(),
            error: None,
            timing: Timing::default(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// The JSON line with timing zeroed, for determinism comparisons.
    pub fn canonical_json(&self) -> String {
        Self { timing: Timing::default(), ..self.clone() }.to_line()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    #[serde(flatten)]
    pub table: ConsistencyTable,
    pub agree_accuracy: Option<f64>,
    pub disagree_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema: u32,
    pub dataset: String,
    pub config_hash: String,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
    pub consistency: ConsistencyReport,
    pub unparsed: usize,
    pub tie_broken: usize,
    pub config: RunConfig,
    pub notes: Vec<String>,
}

fn method_notes(config: &RunConfig) -> Vec<String> {
    let mut notes = vec!["unparsed predictions are scored as incorrect".to_string()];
    let metric = match config.metric {
        MetricKind::Ed => "euclidean distance over all time steps and channels".to_string(),
        MetricKind::Sed => "euclidean distance with each channel scaled by its training standard deviation".to_string(),
        MetricKind::Man => "manhattan distance over all time steps and channels".to_string(),
        MetricKind::Dtw => format!(
            "dependent DTW: one warping path for all channels, euclidean per-step cost, raw accumulated cost without root or length normalization, {}",
            config.dtw_window.map_or("unconstrained".to_string(), |w| format!("Sakoe-Chiba window {w}"))
        ),
    };
    notes.push(format!("metric: {metric}"));
    notes.push(if config.normalize {
        "series z-normalized per channel with training statistics".to_string()
    } else {
        "no normalization applied to series".to_string()
    });
    if config.backend_list().contains(&BackendSpec::Mock) {
        notes.push("mock backend answers with the majority label of the shown neighbors (k-nearest-neighbor vote)".to_string());
    }
    notes
}

/// Scores a complete record list.
pub fn evaluate(records: &[SampleRecord], dataset: &Dataset, config: &RunConfig) -> Result<EvalReport> {
    let table = consistency_breakdown(records);
    Ok(EvalReport {
        schema: RECORD_SCHEMA,
        dataset: dataset.name.clone(),
        config_hash: config.hash(),
        n_test: records.len(),
        correct: records.iter().filter(|r| r.is_correct()).count(),
        accuracy: accuracy(records)?,
        macro_f1: macro_f1(records, &dataset.classes)?,
        per_class: per_class_scores(records, &dataset.classes),
        consistency: ConsistencyReport { table, agree_accuracy: table.agree_accuracy(), disagree_accuracy: table.disagree_accuracy() },
        unparsed: records.iter().filter(|r| r.predicted.is_none()).count(),
        tie_broken: records.iter().filter(|r| r.tie_broken).count(),
        config: config.clone(),
        notes: method_notes(config),
    })
}

/// Loads the configured dataset. A card in the dataset directory wins over
/// the built-in one.
pub fn load_run_dataset(config: &RunConfig) -> Result<Dataset> {
    let dir = config.dataset_dir();
    let (train_path, _, _) = dataset_paths(&dir, &config.dataset);
    if !train_path.exists() && find_profile(&config.dataset).is_none() {
        return Err(ConfigError::UnknownDataset(config.dataset.clone()).into());
    }
    Ok(load_dataset_with(&dir, &config.dataset, builtin_card(&config.dataset), config.allow_missing_card)?)
}

/// Instantiates the configured backends. Remote calls are logged to
/// `<run_dir>/calls.jsonl`.
pub fn make_backends(config: &RunConfig, classes: &[String], run_dir: &Path) -> Result<Vec<Arc<dyn CompletionBackend>>> {
    let mut log: Option<Arc<CallLog>> = None;
    let mut out: Vec<Arc<dyn CompletionBackend>> = Vec::new();
    for spec in config.backend_list() {
        match spec {
            BackendSpec::Mock => out.push(Arc::new(MockBackend::new(classes.to_vec()))),
            BackendSpec::Http { model } => {
                let endpoint = config.llm.endpoint.clone().ok_or_else(|| {
                    BackendError::Config(format!("http backend needs llm.endpoint or {}", crate::backend::ENV_API_URL))
                })?;
                let log = match &log {
                    Some(l) => l.clone(),
                    None => {
                        fs::create_dir_all(run_dir).map_err(|e| io_err(run_dir, e))?;
                        let path = run_dir.join(CALLS_FILE);
                        let l = Arc::new(CallLog::to_file(&path).map_err(|e| io_err(&path, e))?);
                        log = Some(l.clone());
                        l
                    }
                };
                let mut http = HttpConfig::new(endpoint, config.llm.api_key.clone(), model.unwrap_or_else(|| config.model.clone()));
                http.timeout = Duration::from_secs(config.llm.timeout_secs);
                http.max_in_flight = config.llm.max_in_flight;
                out.push(Arc::new(HttpBackend::new(http, log)?));
            }
        }
    }
    Ok(out)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Reads the complete lines of a record file. A trailing fragment left by
/// an interrupted write is dropped and truncated away.
pub fn load_records(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        ::log::warn!("dropping {} bytes of partial record from {}", text.len() - complete, path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
        f.set_len(complete as u64).map_err(|e| io_err(path, e))?;
    }
    text[..complete]
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let r: SampleRecord =
                serde_json::from_str(line).map_err(|e| Error::Records { path: path.to_path_buf(), msg: format!("line {}: {e}", n + 1) })?;
            if r.schema != RECORD_SCHEMA {
                return Err(Error::Records { path: path.to_path_buf(), msg: format!("line {}: unsupported schema {}", n + 1, r.schema) });
            }
            Ok(r)
        })
        .collect()
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<SampleRecord>,
    pub report: EvalReport,
    pub run_dir: PathBuf,
}

fn classify_one(pipeline: &Pipeline<'_>, backends: &[&dyn CompletionBackend], sample: &TimeSeriesSample, prompts_dir: Option<&Path>) -> Result<SampleRecord> {
    let started = Instant::now();
    let out = pipeline.classify(&sample.values, backends)?;
    if let Some(dir) = prompts_dir {
        let path = dir.join(format!("{}.txt", sample.id));
        fs::write(&path, &out.prompt.bundle.rendered).map_err(|e| io_err(&path, e))?;
    }
    let prompt_hash = out.prompt.bundle.hash();
    let mut record = SampleRecord {
        schema: RECORD_SCHEMA,
        id: sample.id,
        true_label: sample.label.clone(),
        predicted: None,
        tie_broken: false,
        tally: BTreeMap::new(),
        paths: Vec::new(),
        neighbors: out.prompt.neighbors,
        negatives: out.prompt.negatives,
        nn_label: out.prompt.nn_label,
        prompt_hash,
        error: None,
        timing: Timing::default(),
    };
    record.paths = out
        .paths
        .into_iter()
        .map(|path| PathRecord { temperature: path.temperature, backend: path.backend_id, extracted: path.extracted, error: path.error })
        .collect();
    match out.prediction {
        Ok(p) => {
            record.predicted = Some(p.final_label);
            record.tie_broken = p.tie_broken;
            record.tally = p.tally;
        }
        Err(e) => {
            ::log::warn!("sample {}: {e}", sample.id);
            record.error = Some(e.to_string());
        }
    }
    record.timing.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(record)
}

/// Classifies every test sample, appending records in id order to
/// `<run_dir>/records.jsonl` as they complete.
///
/// With `config.resume`, samples already on disk are kept and skipped. A
/// fatal backend error stops the run after flushing the records finished
/// before it.
pub fn run_experiment(config: &RunConfig, dataset: &Dataset, backends: &[Arc<dyn CompletionBackend>]) -> Result<RunOutput> {
    let run_dir = config.run_dir();
    fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
    let records_path = run_dir.join(RECORDS_FILE);
    let prompts_dir = config.dump_prompts.then(|| run_dir.join(PROMPTS_DIR));
    if let Some(dir) = &prompts_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }

    let mut records = if config.resume { load_records(&records_path)? } else { Vec::new() };
    let test_ids: BTreeSet<usize> = dataset.test.iter().map(|s| s.id).collect();
    if let Some(stray) = records.iter().find(|r| !test_ids.contains(&r.id)) {
        return Err(Error::Records { path: records_path, msg: format!("record id {} is not in the test split", stray.id) });
    }
    let done: BTreeSet<usize> = records.iter().map(|r| r.id).collect();
    let mut pending: Vec<&TimeSeriesSample> = dataset.test.iter().filter(|s| !done.contains(&s.id)).collect();
    pending.sort_by_key(|s| s.id);
    if config.resume {
        ::log::info!("resuming: {} records on disk, {} to go", records.len(), pending.len());
    }

    let file = if config.resume {
        OpenOptions::new().create(true).append(true).open(&records_path)
    } else {
        File::create(&records_path)
    }
    .map_err(|e| io_err(&records_path, e))?;
    let mut writer = BufWriter::new(file);

    let pipeline = Pipeline::new(config, dataset)?;
    let backend_refs: Vec<&dyn CompletionBackend> = backends.iter().map(|b| b.as_ref() as &dyn CompletionBackend).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Records { path: records_path.clone(), msg: format!("worker pool: {e}") })?;

    for chunk in pending.chunks(config.parallelism * 4) {
        let results: Vec<Result<SampleRecord>> =
            pool.install(|| chunk.par_iter().map(|s| classify_one(&pipeline, &backend_refs, s, prompts_dir.as_deref())).collect());
        for result in results {
            let record = match result {
                Ok(r) => r,
                Err(e) => {
                    writer.flush().map_err(|err| io_err(&records_path, err))?;
                    return Err(e);
                }
            };
            writeln!(writer, "{}", record.to_line()).map_err(|e| io_err(&records_path, e))?;
            records.push(record);
        }
        writer.flush().map_err(|e| io_err(&records_path, e))?;
        ::log::info!("{}/{} samples classified", records.len(), dataset.test.len());
    }

    records.sort_by_key(|r| r.id);
    let report = evaluate(&records, dataset, config)?;
    let report_path = run_dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| io_err(&report_path, e))?;
    Ok(RunOutput { records, report, run_dir })
}
