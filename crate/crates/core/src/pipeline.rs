//! Per-sample classification: retrieve, pick negatives, encode, prompt, vote.

use std::borrow::Cow;

use crate::backend::CompletionBackend;
use crate::cluster::{kmeans_fit, select_negatives, ClusterModel, ClusterSpace};
use crate::config::RunConfig;
use crate::dataset::{channel_stats, ChannelStats, Dataset, Series, TimeSeriesSample};
use crate::distance::{DistanceMetric, MetricKind};
use crate::ensemble::{majority_vote, run_multi_backend, InferencePath, PathSettings, Prediction};
use crate::error::{DistanceError, EnsembleError, Result};
use crate::prompt::{assemble_prompt, build_context, build_instruction, ContextBlock, ExampleBlock, ExampleRole, PromptBundle};
use crate::retrieval::{retrieve_neighbors, NeighborHit};
use crate::table::{serialize, series_to_table, TableFormat};

pub const KMEANS_MAX_ITERS: usize = 100;

/// Everything about a prompt that does not involve a backend.
#[derive(Debug, Clone)]
pub struct PreparedPrompt {
    pub bundle: PromptBundle,
    /// Positives shown in the prompt, nearest first.
    pub neighbors: Vec<NeighborHit>,
    pub negatives: Vec<NeighborHit>,
    /// Label of the single nearest training sample, whether or not it is shown.
    pub nn_label: String,
}

/// Outcome of one query.
#[derive(Debug, Clone)]
pub struct Classification {
    pub prompt: PreparedPrompt,
    /// Every inference path, also when voting failed.
    pub paths: Vec<InferencePath>,
    /// `Err` when no path produced a usable label.
    pub prediction: Result<Prediction, EnsembleError>,
}

/// Dataset-level state shared by every query of a run.
pub struct Pipeline<'d> {
    dataset: &'d Dataset,
    config: RunConfig,
    /// Training split as seen by retrieval, clustering and tables.
    train: Cow<'d, [TimeSeriesSample]>,
    /// Set when the run z-normalizes series.
    normalizer: Option<ChannelStats>,
    metric: DistanceMetric,
    clusters: Option<ClusterModel>,
    context: ContextBlock,
    instruction: String,
    format: TableFormat,
}

impl<'d> Pipeline<'d> {
    pub fn new(config: &RunConfig, dataset: &'d Dataset) -> Result<Self> {
        config.validate()?;
        let raw_stats = channel_stats(&dataset.train)?;
        let (train, normalizer) = if config.normalize {
            let normalized = dataset
                .train
                .iter()
                .map(|s| TimeSeriesSample { id: s.id, values: raw_stats.normalize(&s.values), label: s.label.clone() })
                .collect::<Vec<_>>();
            (Cow::Owned(normalized), Some(raw_stats.clone()))
        } else {
            (Cow::Borrowed(dataset.train.as_slice()), None)
        };
        let stats = if normalizer.is_some() { channel_stats(&train)? } else { raw_stats };

        if config.k > train.len() {
            return Err(DistanceError::KTooLarge { k: config.k, n: train.len() }.into());
        }
        let sed_stats = (config.metric == MetricKind::Sed).then(|| stats.clone());
        let metric = DistanceMetric::new(config.metric, config.dtw_window, sed_stats)?;

        let clusters = if config.negatives.count > 0 {
            let space = if config.negatives.raw_space { ClusterSpace::Raw } else { ClusterSpace::ZNormalized(stats) };
            let k = config.negatives.k_clusters.resolve(dataset.classes.len());
            Some(kmeans_fit(&train, k, config.negatives_seed(), KMEANS_MAX_ITERS, space)?)
        } else {
            None
        };

        Ok(Self {
            dataset,
            config: config.clone(),
            train,
            normalizer,
            metric,
            clusters,
            context: build_context(&dataset.card, dataset),
            instruction: build_instruction(&dataset.classes)?,
            format: TableFormat::with_precision(config.format, config.precision),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn clusters(&self) -> Option<&ClusterModel> {
        self.clusters.as_ref()
    }

    fn view<'a>(&self, series: &'a Series) -> Cow<'a, Series> {
        match &self.normalizer {
            Some(stats) => Cow::Owned(stats.normalize(series)),
            None => Cow::Borrowed(series),
        }
    }

    fn table(&self, series: &Series) -> Result<String> {
        Ok(serialize(&series_to_table(series, &self.dataset.channel_names)?, self.format))
    }

    /// Builds the prompt for a query without calling any backend.
    pub fn prepare(&self, query: &Series) -> Result<PreparedPrompt> {
        let query = self.view(query);
        let mut neighbors = retrieve_neighbors(&query, &self.train, &self.metric, self.config.k.max(1))?;
        let nn_label = neighbors[0].label.clone();
        neighbors.truncate(self.config.k);
        let negatives = match &self.clusters {
            Some(model) => select_negatives(&query, model, &self.train, self.config.negatives.count)?,
            None => Vec::new(),
        };

        let mut examples = Vec::with_capacity(neighbors.len() + negatives.len());
        for (role, hits) in [(ExampleRole::Positive, &neighbors), (ExampleRole::Negative, &negatives)] {
            for (i, hit) in hits.iter().enumerate() {
                examples.push(ExampleBlock {
                    role,
                    serialized_table: self.table(&self.train[hit.train_index].values)?,
                    label: hit.label.clone(),
                    rank: i + 1,
                    train_index: hit.train_index,
                    distance: hit.distance,
                });
            }
        }
        let bundle = assemble_prompt(self.context.clone(), examples, self.table(&query)?, self.instruction.clone(), self.config.magic_words);
        Ok(PreparedPrompt { bundle, neighbors, negatives, nn_label })
    }

    /// Prompts every backend at every temperature and votes.
    ///
    /// Fatal backend errors are returned as `Err`; any other failure to
    /// produce a label is carried in `Classification::prediction`.
    pub fn classify(&self, query: &Series, backends: &[&dyn CompletionBackend]) -> Result<Classification> {
        let prompt = self.prepare(query)?;
        let settings = PathSettings { max_tokens: self.config.llm.max_tokens, model_id: self.config.model.clone() };
        let (paths, prediction) = match run_multi_backend(&prompt.bundle, &self.config.ensemble.temperatures, backends, &self.dataset.classes, &settings) {
            Err(EnsembleError::Fatal(e)) => return Err(e.into()),
            Err(e) => (Vec::new(), Err(e)),
            Ok(paths) => {
                let prediction = majority_vote(paths.clone()).map(|mut p| {
                    p.neighbor_provenance = prompt.neighbors.clone();
                    p
                });
                (paths, prediction)
            }
        };
        Ok(Classification { prompt, paths, prediction })
    }
}

/// One-shot convenience over [`Pipeline`].
pub fn classify_sample(query: &TimeSeriesSample, dataset: &Dataset, config: &RunConfig, backend: &dyn CompletionBackend) -> Result<Classification> {
    Pipeline::new(config, dataset)?.classify(&query.values, &[backend])
}
