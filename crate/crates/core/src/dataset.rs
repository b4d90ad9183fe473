//! UEA `.ts` ingestion, dataset cards and per-channel statistics.
//!
//! Only complete, equal-length, non-timestamped archives are accepted.
//! A `?` anywhere in the data section is rejected rather than imputed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// Floor applied wherever a channel standard deviation is used as a divisor.
pub const STD_FLOOR: f64 = 1e-8;

/// A dense `t x m` matrix stored row-major (one row per time step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Series {
    /// Builds a series from rows. Every row must hold the same number of
    /// channels and there must be at least one row and one channel.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let len = rows.len();
        let channels = rows.first()?.len();
        if channels == 0 || rows.iter().any(|r| r.len() != channels) {
            return None;
        }
        Some(Self { len, channels, data: rows.concat() })
    }

    /// Builds a series from per-channel columns, the layout of a `.ts` row.
    pub fn from_columns(columns: &[Vec<f64>]) -> Option<Self> {
        let channels = columns.len();
        let len = columns.first()?.len();
        if len == 0 || columns.iter().any(|c| c.len() != len) {
            return None;
        }
        let mut data = Vec::with_capacity(len * channels);
        for i in 0..len {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Some(Self { len, channels, data })
    }

    pub fn from_row_major(len: usize, channels: usize, data: Vec<f64>) -> Option<Self> {
        (len > 0 && channels > 0 && data.len() == len * channels).then_some(Self { len, channels, data })
    }

    /// Number of time steps `t`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of channels `m`.
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.channels + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Channel-major flattening: all of channel 0 over time, then channel 1, ...
    pub fn flatten_channel_major(&self) -> Vec<f64> {
        (0..self.channels).flat_map(|j| self.rows().map(move |r| r[j])).collect()
    }
}

/// One labeled series of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSample {
    pub id: usize,
    pub values: Series,
    pub label: String,
}

/// Metadata declared by a `.ts` file header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsHeader {
    pub problem_name: String,
    pub univariate: bool,
    pub dimensions: usize,
    pub series_length: usize,
    pub class_labels: Vec<String>,
}

/// Human-authored context for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCard {
    pub task_definition: String,
    pub dataset_description: String,
    pub class_definitions: BTreeMap<String, String>,
    pub channel_descriptions: BTreeMap<String, String>,
    /// Ordered channel names; `dim_0..dim_{m-1}` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
}

impl DatasetCard {
    /// Generic stand-in text for running without a hand-written card.
    pub fn placeholder(name: &str, classes: &[String], channel_names: &[String]) -> Self {
        Self {
            task_definition: format!(
                "Classify each multivariate time series of the {name} dataset into one of its classes."
            ),
            dataset_description: format!(
                "The {name} dataset contains equal-length multivariate time series with {} channels.",
                channel_names.len()
            ),
            class_definitions: classes
                .iter()
                .map(|c| (c.clone(), format!("Samples labeled '{c}'.")))
                .collect(),
            channel_descriptions: channel_names
                .iter()
                .map(|c| (c.clone(), format!("Measurements recorded on channel '{c}'.")))
                .collect(),
            channel_names: Some(channel_names.to_vec()),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Card(format!("{}: {e}", path.display())))
    }

    /// Resolves channel names for `m` channels and checks that every class
    /// and channel has a description.
    pub fn validate(&self, classes: &[String], m: usize) -> Result<Vec<String>, DatasetError> {
        let names = match &self.channel_names {
            Some(names) if names.len() != m => {
                return Err(DatasetError::Card(format!("card lists {} channel names, data has {m} channels", names.len())))
            }
            Some(names) => names.clone(),
            None => default_channel_names(m),
        };
        if let Some(dup) = names.iter().enumerate().find_map(|(i, n)| names[..i].contains(n).then_some(n)) {
            return Err(DatasetError::Card(format!("duplicate channel name '{dup}'")));
        }
        if names.iter().any(|n| n == "time") {
            return Err(DatasetError::Card("'time' is reserved for the time column".into()));
        }
        if let Some(c) = classes.iter().find(|c| !self.class_definitions.contains_key(*c)) {
            return Err(DatasetError::Card(format!("missing class definition for '{c}'")));
        }
        if let Some(c) = names.iter().find(|c| !self.channel_descriptions.contains_key(*c)) {
            return Err(DatasetError::Card(format!("missing channel description for '{c}'")));
        }
        Ok(names)
    }
}

pub fn default_channel_names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("dim_{j}")).collect()
}

/// A loaded dataset with both splits. Immutable after loading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<TimeSeriesSample>,
    pub test: Vec<TimeSeriesSample>,
    pub classes: Vec<String>,
    pub channel_names: Vec<String>,
    pub series_length: usize,
    pub card: DatasetCard,
}

impl Dataset {
    /// Assembles a dataset from in-memory splits, enforcing the same
    /// invariants as [`load_dataset`].
    pub fn new(
        name: impl Into<String>,
        train: Vec<TimeSeriesSample>,
        test: Vec<TimeSeriesSample>,
        classes: Vec<String>,
        card: Option<DatasetCard>,
    ) -> Result<Self, DatasetError> {
        let name = name.into();
        let first = train.first().or(test.first()).ok_or(DatasetError::EmptySplit)?;
        let (t, m) = (first.values.len(), first.values.channels());
        for s in train.iter().chain(&test) {
            if s.values.len() != t || s.values.channels() != m {
                return Err(DatasetError::SplitMismatch(format!(
                    "sample {} has shape {}x{}, expected {t}x{m}",
                    s.id,
                    s.values.len(),
                    s.values.channels()
                )));
            }
            if !classes.contains(&s.label) {
                return Err(DatasetError::UnknownLabel { line: 0, label: s.label.clone() });
            }
        }
        let card = card.unwrap_or_else(|| DatasetCard::placeholder(&name, &classes, &default_channel_names(m)));
        let channel_names = card.validate(&classes, m)?;
        Ok(Self { name, train, test, classes, channel_names, series_length: t, card })
    }

    pub fn dimensions(&self) -> usize {
        self.channel_names.len()
    }
}

fn header_err(line: usize, msg: impl Into<String>) -> DatasetError {
    DatasetError::Header { line, msg: msg.into() }
}

fn parse_bool(line: usize, directive: &str, value: Option<&str>) -> Result<bool, DatasetError> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(header_err(line, format!("{directive} expects true|false"))),
    }
}

fn parse_usize(line: usize, directive: &str, value: Option<&str>) -> Result<usize, DatasetError> {
    value
        .and_then(|v| v.parse().ok())
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| header_err(line, format!("{directive} expects a positive integer")))
}

/// Parses the text of a UEA `.ts` file.
pub fn parse_ts_str(text: &str) -> Result<(Vec<TimeSeriesSample>, TsHeader), DatasetError> {
    let mut problem_name = None;
    let mut univariate = None;
    let mut dimensions = None;
    let mut series_length = None;
    let mut class_labels: Option<Vec<String>> = None;
    let mut in_data = false;
    let mut samples = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(header_err(lineno, format!("expected a directive, found '{line}'")));
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().unwrap_or_default().to_ascii_lowercase();
            let value = parts.next();
            match directive.as_str() {
                "@problemname" => {
                    problem_name = Some(value.ok_or_else(|| header_err(lineno, "@problemName expects a name"))?.to_string())
                }
                "@timestamps" => {
                    if parse_bool(lineno, "@timeStamps", value)? {
                        return Err(header_err(lineno, "timestamped series are not supported"));
                    }
                }
                "@missing" => {
                    if parse_bool(lineno, "@missing", value)? {
                        return Err(header_err(lineno, "series with missing values are not supported"));
                    }
                }
                "@univariate" => univariate = Some(parse_bool(lineno, "@univariate", value)?),
                "@dimensions" => dimensions = Some(parse_usize(lineno, "@dimensions", value)?),
                "@equallength" => {
                    if !parse_bool(lineno, "@equalLength", value)? {
                        return Err(header_err(lineno, "variable-length series are not supported"));
                    }
                }
                "@serieslength" => series_length = Some(parse_usize(lineno, "@seriesLength", value)?),
                "@classlabel" => {
                    if !parse_bool(lineno, "@classLabel", value)? {
                        return Err(header_err(lineno, "unlabeled data is not supported"));
                    }
                    let labels: Vec<String> = parts.map(str::to_string).collect();
                    if labels.is_empty() {
                        return Err(header_err(lineno, "@classLabel true expects at least one label"));
                    }
                    class_labels = Some(labels);
                }
                "@data" => {
                    if class_labels.is_none() {
                        return Err(header_err(lineno, "@data reached without @classLabel"));
                    }
                    if dimensions.is_none() && univariate == Some(true) {
                        dimensions = Some(1);
                    }
                    in_data = true;
                }
                other => return Err(header_err(lineno, format!("unknown directive '{other}'"))),
            }
            continue;
        }

        let labels = class_labels.as_ref().expect("checked at @data");
        let mut tokens: Vec<&str> = line.split(':').collect();
        if tokens.len() < 2 {
            return Err(DatasetError::DataRow { line: lineno, msg: "expected dimensions followed by a class label".into() });
        }
        let label = tokens.pop().unwrap_or_default().trim().to_string();
        let m = *dimensions.get_or_insert(tokens.len());
        if tokens.len() != m {
            return Err(DatasetError::DataRow { line: lineno, msg: format!("expected {m} dimensions, found {}", tokens.len()) });
        }
        let mut columns = Vec::with_capacity(m);
        for tok in tokens {
            let column = tok
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    if v == "?" {
                        return Err(DatasetError::MissingValue { line: lineno });
                    }
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| DatasetError::DataRow { line: lineno, msg: format!("invalid value '{v}'") })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let t = *series_length.get_or_insert(column.len());
            if column.len() != t {
                return Err(DatasetError::DataRow { line: lineno, msg: format!("expected {t} values per dimension, found {}", column.len()) });
            }
            columns.push(column);
        }
        if !labels.contains(&label) {
            return Err(DatasetError::UnknownLabel { line: lineno, label });
        }
        let values = Series::from_columns(&columns).expect("shape checked above");
        samples.push(TimeSeriesSample { id: samples.len(), values, label });
    }

    if !in_data {
        return Err(header_err(0, "missing @data section"));
    }
    let dims = dimensions.ok_or_else(|| header_err(0, "no dimensions declared and no data rows"))?;
    let header = TsHeader {
        problem_name: problem_name.ok_or_else(|| header_err(0, "missing @problemName"))?,
        univariate: univariate.unwrap_or(dims == 1),
        dimensions: dims,
        series_length: series_length.ok_or_else(|| header_err(0, "no series length declared and no data rows"))?,
        class_labels: class_labels.unwrap_or_default(),
    };
    Ok((samples, header))
}

pub fn parse_ts_file(path: &Path) -> Result<(Vec<TimeSeriesSample>, TsHeader), DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    parse_ts_str(&text)
}

/// Renders samples back into the `.ts` grammar. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_ts(header: &TsHeader, samples: &[TimeSeriesSample]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@problemName {}", header.problem_name);
    out.push_str("@timeStamps false\n@missing false\n");
    let _ = writeln!(out, "@univariate {}", header.dimensions == 1);
    let _ = writeln!(out, "@dimensions {}", header.dimensions);
    out.push_str("@equalLength true\n");
    let _ = writeln!(out, "@seriesLength {}", header.series_length);
    let _ = writeln!(out, "@classLabel true {}", header.class_labels.join(" "));
    out.push_str("@data\n");
    for s in samples {
        for j in 0..s.values.channels() {
            let col: Vec<String> = s.values.rows().map(|r| r[j].to_string()).collect();
            out.push_str(&col.join(","));
            out.push(':');
        }
        out.push_str(&s.label);
        out.push('\n');
    }
    out
}

/// Paths of the three files making up a dataset directory.
pub fn dataset_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{name}_TRAIN.ts")),
        dir.join(format!("{name}_TEST.ts")),
        dir.join(format!("{name}_card.json")),
    )
}

/// Loads `<name>_TRAIN.ts`, `<name>_TEST.ts` and `<name>_card.json` from `dir`.
///
/// With `allow_missing_card`, an absent card is replaced by placeholder text.
pub fn load_dataset(dir: &Path, name: &str, allow_missing_card: bool) -> Result<Dataset, DatasetError> {
    load_dataset_with(dir, name, None, allow_missing_card)
}

/// Like [`load_dataset`], using `fallback_card` when the directory has none.
pub fn load_dataset_with(dir: &Path, name: &str, fallback_card: Option<DatasetCard>, allow_missing_card: bool) -> Result<Dataset, DatasetError> {
    let (train_path, test_path, card_path) = dataset_paths(dir, name);
    let (train, train_header) = parse_ts_file(&train_path)?;
    let (test, test_header) = parse_ts_file(&test_path)?;

    if train_header.dimensions != test_header.dimensions {
        return Err(DatasetError::SplitMismatch(format!(
            "dimensions {} (train) vs {} (test)",
            train_header.dimensions, test_header.dimensions
        )));
    }
    if train_header.series_length != test_header.series_length {
        return Err(DatasetError::SplitMismatch(format!(
            "series length {} (train) vs {} (test)",
            train_header.series_length, test_header.series_length
        )));
    }
    let mut a = train_header.class_labels.clone();
    let mut b = test_header.class_labels.clone();
    a.sort();
    b.sort();
    if a != b {
        return Err(DatasetError::SplitMismatch(format!(
            "class labels {:?} (train) vs {:?} (test)",
            train_header.class_labels, test_header.class_labels
        )));
    }
    if train.is_empty() {
        return Err(DatasetError::EmptySplit);
    }

    let card = if card_path.exists() {
        Some(DatasetCard::from_json_file(&card_path)?)
    } else if fallback_card.is_some() {
        fallback_card
    } else if allow_missing_card {
        None
    } else {
        return Err(DatasetError::Card(format!(
            "{} not found (pass the placeholder-card option to run without one)",
            card_path.display()
        )));
    };
    Dataset::new(name, train, test, train_header.class_labels, card)
}

/// Per-channel mean and population standard deviation over a training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Standard deviation of channel `j`, floored for use as a divisor.
    pub fn divisor(&self, j: usize) -> f64 {
        self.std[j].max(STD_FLOOR)
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Per-channel z-normalization of a series.
    pub fn normalize(&self, series: &Series) -> Series {
        let m = series.channels();
        let data = series
            .as_slice()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let j = idx % m;
                (v - self.mean[j]) / self.divisor(j)
            })
            .collect();
        Series::from_row_major(series.len(), m, data).expect("same shape")
    }
}

pub fn channel_stats(train: &[TimeSeriesSample]) -> Result<ChannelStats, DatasetError> {
    let first = train.first().ok_or(DatasetError::EmptySplit)?;
    let m = first.values.channels();
    let mut sum = vec![0.0; m];
    let mut count = 0usize;
    for s in train {
        for row in s.values.rows() {
            for (acc, v) in sum.iter_mut().zip(row) {
                *acc += v;
            }
        }
        count += s.values.len();
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut sq = vec![0.0; m];
    for s in train {
        for row in s.values.rows() {
            for j in 0..m {
                let d = row[j] - mean[j];
                sq[j] += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / n).sqrt()).collect();
    Ok(ChannelStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "# comment\n@problemName Toy\n@timeStamps false\n@missing false\n@univariate false\n@dimensions 2\n@equalLength true\n@seriesLength 2\n@classLabel true label_a label_b\n@data\n1,2:3,4:label_a\n";

    fn sample(rows: &[Vec<f64>]) -> TimeSeriesSample {
        TimeSeriesSample { id: 0, values: Series::from_rows(rows).unwrap(), label: "a".into() }
    }

    #[test]
    fn parses_synthetic_two_dimension_row() {
        let (samples, header) = parse_ts_str(TOY).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].values, Series::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap());
        assert_eq!(samples[0].label, "label_a");
        assert_eq!(header.problem_name, "Toy");
        assert_eq!(header.dimensions, 2);
        assert_eq!(header.series_length, 2);
        assert_eq!(header.class_labels, vec!["label_a", "label_b"]);
    }

    #[test]
    fn rejects_missing_value_token() {
        let text = TOY.replace("1,2:3,4", "1,?:3,4");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::MissingValue { line: 11 })));
    }

    #[test]
    fn rejects_unknown_label() {
        let text = TOY.replace(":label_a", ":label_z");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::UnknownLabel { .. })));
    }

    #[test]
    fn rejects_wrong_dimension_count_and_length() {
        let text = TOY.replace("1,2:3,4:", "1,2:3,4:5,6:");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::DataRow { .. })));
        let text = TOY.replace("1,2:3,4:", "1,2,9:3,4,9:");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::DataRow { .. })));
    }

    #[test]
    fn rejects_malformed_headers() {
        let text = TOY.replace("@dimensions 2", "@dimensions two");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::Header { line: 6, .. })));
        let text = TOY.replace("@missing false", "@missing true");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::Header { .. })));
        let text = TOY.replace("@problemName Toy", "@weird thing");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::Header { .. })));
        let text = TOY.replace("@classLabel true label_a label_b\n", "");
        assert!(matches!(parse_ts_str(&text), Err(DatasetError::Header { .. })));
    }

    #[test]
    fn stats_of_constant_series_is_zero() {
        let stats = channel_stats(&[sample(&[vec![0.0], vec![0.0]])]).unwrap();
        assert_eq!(stats.mean, vec![0.0]);
        assert_eq!(stats.std, vec![0.0]);
        assert_eq!(stats.divisor(0), STD_FLOOR);
    }

    #[test]
    fn stats_use_population_convention() {
        let stats = channel_stats(&[sample(&[vec![1.0], vec![3.0]])]).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn stats_match_pooled_recomputation() {
        let a = sample(&[vec![1.0, -2.0], vec![4.0, 0.5], vec![2.5, 7.0]]);
        let b = sample(&[vec![0.0, 3.0], vec![-1.0, 1.0], vec![6.0, 2.0]]);
        let stats = channel_stats(&[a.clone(), b.clone()]).unwrap();
        for j in 0..2 {
            let pool: Vec<f64> = a.values.column(j).into_iter().chain(b.values.column(j)).collect();
            let mean = pool.iter().sum::<f64>() / pool.len() as f64;
            let var = pool.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / pool.len() as f64;
            assert!((stats.mean[j] - mean).abs() < 1e-12);
            assert!((stats.std[j] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(matches!(channel_stats(&[]), Err(DatasetError::EmptySplit)));
    }

    #[test]
    fn card_validation_requires_every_class_and_channel() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let mut card = DatasetCard::placeholder("x", &classes, &default_channel_names(2));
        assert_eq!(card.validate(&classes, 2).unwrap(), vec!["dim_0", "dim_1"]);
        card.class_definitions.remove("b");
        assert!(matches!(card.validate(&classes, 2), Err(DatasetError::Card(_))));
        let mut card = DatasetCard::placeholder("x", &classes, &default_channel_names(2));
        card.channel_descriptions.remove("dim_1");
        assert!(matches!(card.validate(&classes, 2), Err(DatasetError::Card(_))));
    }

    #[test]
    fn card_without_names_defaults_to_dim_labels() {
        let classes = vec!["a".to_string()];
        let mut card = DatasetCard::placeholder("x", &classes, &default_channel_names(3));
        card.channel_names = None;
        assert_eq!(card.validate(&classes, 3).unwrap(), default_channel_names(3));
    }

    #[test]
    fn flatten_is_channel_major() {
        let s = Series::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0]]).unwrap();
        assert_eq!(s.flatten_channel_major(), vec![1.0, 2.0, 10.0, 20.0]);
    }
}
