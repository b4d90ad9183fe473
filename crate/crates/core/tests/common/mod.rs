//! Reference implementations written independently of the library, used as
//! oracles by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use tablecls::dataset::{Series, TimeSeriesSample};
use tablecls::distance::MetricKind;

pub fn rows(s: &Series) -> Vec<Vec<f64>> {
    s.rows().map(<[f64]>::to_vec).collect()
}

fn step_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Plain recursion over all warping paths, no memoization. Local costs are
/// tabulated first so only the recursion itself is exponential.
pub fn dtw_recursive(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let cost: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| step_norm(x, y)).collect()).collect();
    fn go(cost: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let c = cost[i][j];
        match (i, j) {
            (0, 0) => c,
            (0, _) => c + go(cost, 0, j - 1),
            (_, 0) => c + go(cost, i - 1, 0),
            _ => c + go(cost, i - 1, j).min(go(cost, i, j - 1)).min(go(cost, i - 1, j - 1)),
        }
    }
    go(&cost, a.len() - 1, b.len() - 1)
}

/// Exhaustive depth-first search over warping paths from (0, 0), pruning a
/// branch once its partial cost reaches the best complete path found. Cells
/// with |i - j| > window are not visited.
pub fn dtw_enumerate(a: &[Vec<f64>], b: &[Vec<f64>], window: Option<usize>) -> f64 {
    let (n, m) = (a.len(), b.len());
    let allowed = |i: usize, j: usize| window.is_none_or(|w| i.abs_diff(j) <= w);
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| step_norm(&a[i], &b[j])).collect()).collect();
    let mut best = f64::INFINITY;
    fn dfs(cost: &[Vec<f64>], allowed: &dyn Fn(usize, usize) -> bool, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + cost[i][j];
        if acc >= *best {
            return;
        }
        let (n, m) = (cost.len(), cost[0].len());
        if i == n - 1 && j == m - 1 {
            *best = acc;
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < n && nj < m && allowed(ni, nj) {
                dfs(cost, allowed, ni, nj, acc, best);
            }
        }
    }
    if allowed(0, 0) {
        dfs(&cost, &allowed, 0, 0, 0.0, &mut best);
    }
    best
}

/// Full-matrix dynamic program.
pub fn dtw_table(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            d[i][j] = step_norm(&a[i - 1], &b[j - 1]) + d[i - 1][j].min(d[i][j - 1]).min(d[i - 1][j - 1]);
        }
    }
    d[n][m]
}

/// Per-channel population standard deviation over every time step of `train`.
pub fn pooled_std(train: &[TimeSeriesSample]) -> Vec<f64> {
    let m = train[0].values.channels();
    (0..m)
        .map(|j| {
            let vals: Vec<f64> = train.iter().flat_map(|s| s.values.column(j)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        })
        .collect()
}

/// Distance with the library's conventions, computed from scratch.
pub fn reference_distance(kind: MetricKind, a: &Series, b: &Series, std: &[f64]) -> f64 {
    let (ra, rb) = (rows(a), rows(b));
    match kind {
        MetricKind::Dtw => dtw_table(&ra, &rb),
        _ => {
            let mut total = 0.0;
            for (x, y) in ra.iter().zip(&rb) {
                for (j, (p, q)) in x.iter().zip(y).enumerate() {
                    total += match kind {
                        MetricKind::Ed => (p - q).powi(2),
                        MetricKind::Man => (p - q).abs(),
                        MetricKind::Sed => ((p - q) / std[j].max(1e-8)).powi(2),
                        MetricKind::Dtw => unreachable!(),
                    };
                }
            }
            if kind == MetricKind::Man {
                total
            } else {
                total.sqrt()
            }
        }
    }
}

/// Training indices sorted by (distance, index).
pub fn brute_force_order(dists: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).collect();
    idx.sort_by(|&x, &y| dists[x].partial_cmp(&dists[y]).unwrap().then(x.cmp(&y)));
    idx
}

/// k-nearest-neighbor majority; ties go to the tied label seen first in
/// distance order. With k = 0 the first class wins.
pub fn knn_majority(train: &[TimeSeriesSample], query: &Series, kind: MetricKind, k: usize, std: &[f64], classes: &[String]) -> String {
    if k == 0 {
        return classes[0].clone();
    }
    let dists: Vec<f64> = train.iter().map(|s| reference_distance(kind, query, &s.values, std)).collect();
    let order = brute_force_order(&dists);
    let top: Vec<&str> = order[..k].iter().map(|&i| train[i].label.as_str()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &top {
        *counts.entry(l).or_default() += 1;
    }
    let best = *counts.values().max().unwrap();
    top.iter().find(|l| counts[**l] == best).unwrap().to_string()
}

pub fn knn_accuracy(train: &[TimeSeriesSample], test: &[TimeSeriesSample], kind: MetricKind, k: usize, classes: &[String]) -> f64 {
    let std = pooled_std(train);
    let correct = test.iter().filter(|q| knn_majority(train, &q.values, kind, k, &std, classes) == q.label).count();
    correct as f64 / test.len() as f64
}

/// Vote winner by brute force: maximal count, then the label whose
/// producers include the lowest (temperature, index).
pub fn vote_oracle(votes: &[(f64, Option<&str>)]) -> Option<(String, bool)> {
    let labels: Vec<&str> = votes.iter().filter_map(|v| v.1).collect();
    if labels.is_empty() {
        return None;
    }
    let count = |l: &str| labels.iter().filter(|x| **x == l).count();
    let best = labels.iter().map(|l| count(l)).max().unwrap();
    let mut tied: Vec<&str> = labels.iter().copied().filter(|l| count(l) == best).collect();
    tied.sort();
    tied.dedup();
    let mut order: Vec<(f64, usize, &str)> = votes.iter().enumerate().filter_map(|(i, (t, l))| l.map(|l| (*t, i, l))).collect();
    order.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    let winner = order.iter().find(|(_, _, l)| tied.contains(l)).unwrap().2;
    Some((winner.to_string(), tied.len() > 1))
}

/// Directory holding real archive files, when provided.
pub fn archive_dir() -> Option<PathBuf> {
    std::env::var_os("TT_DATA_DIR").map(PathBuf::from).filter(|p| p.is_dir())
}

/// Compares `actual` with a file under `tests/golden`. Setting
/// `TT_UPDATE_GOLDEN=1` rewrites the file instead.
pub fn check_golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(rel);
    if std::env::var_os("TT_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).map_or(expected.lines().count().min(actual.lines().count()), |i| i);
        Err(format!("{} differs from output starting at line {}", path.display(), line + 1))
    }
}

/// A prompt with positive examples carrying `labels`, nearest first.
pub fn toy_bundle(labels: &[&str]) -> tablecls::prompt::PromptBundle {
    use tablecls::prompt::{assemble_prompt, ContextBlock, ExampleBlock, ExampleRole};
    let context = ContextBlock {
        task_definition: "Toy task.".into(),
        dataset_description: "Toy data.".into(),
        class_definitions: String::new(),
        channel_descriptions: String::new(),
    };
    let examples = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ExampleBlock {
            role: ExampleRole::Positive,
            serialized_table: format!("| time | x |\n| --- | --- |\n| 0 | {i} |"),
            label: l.to_string(),
            rank: i + 1,
            train_index: i,
            distance: i as f64,
        })
        .collect();
    assemble_prompt(context, examples, "| time | x |\n| --- | --- |\n| 0 | 9 |".into(), "## Instructions".into(), false)
}

/// Canonical JSON of every record line in a records file.
pub fn canonical_lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<tablecls::harness::SampleRecord>(l).unwrap().canonical_json())
        .collect()
}

/// Delegates to the mock but fails fatally on one query table, the way a
/// revoked key would stop a run partway.
pub struct FailOnQuery {
    pub inner: tablecls::backend::MockBackend,
    pub poisoned_query: String,
}

impl tablecls::backend::CompletionBackend for FailOnQuery {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(
        &self,
        request: &tablecls::backend::CompletionRequest<'_>,
    ) -> Result<tablecls::backend::Completion, tablecls::error::BackendError> {
        if request.bundle.query_table == self.poisoned_query {
            return Err(tablecls::error::BackendError::Authentication("key revoked".into()));
        }
        self.inner.complete(request)
    }
}

/// One table exercising rounding, sign, trimming and name escaping.
pub fn fixed_table() -> tablecls::table::TableDocument {
    tablecls::table::TableDocument::new(
        vec!["0".into(), "1".into(), "2".into()],
        vec!["acc x".into(), "gyro|y".into(), "<temp>".into()],
        vec![vec![1.5, -0.00001, 123.456789], vec![2.0, -3.14159, 0.0], vec![1e-5, 1000.0, -0.5]],
    )
    .unwrap()
}

fn sse(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = points.iter().zip(assignment).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                return 0.0;
            }
            let mean: Vec<f64> = (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect();
            members.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum()
        })
        .sum()
}

/// Minimum within-cluster SSE over every assignment into `k` non-empty clusters.
pub fn optimal_partition(points: &[Vec<f64>], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut assignment = vec![0usize; n];
    loop {
        let mut used = vec![false; k];
        assignment.iter().for_each(|&a| used[a] = true);
        if used.iter().all(|&u| u) {
            let v = sse(points, &assignment, k);
            if v < best.0 {
                best = (v, assignment.clone());
            }
        }
        let mut i = 0;
        while i < n {
            assignment[i] += 1;
            if assignment[i] < k {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// Whether two label vectors induce the same grouping.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// A small dataset with a profile's dimensions, classes and built-in card.
/// Values come from the seeded generator only, so renders are identical on
/// every platform.
pub fn golden_dataset(code: &str) -> tablecls::dataset::Dataset {
    use rand::SeedableRng;
    let shape = tablecls::synthetic::archive_shape(code).unwrap();
    let k = tablecls::config::find_profile(code).unwrap().k;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let n_train = (2 * shape.classes.len()).max(k + 2);
    let mut split = |n: usize| -> Vec<TimeSeriesSample> {
        (0..n)
            .map(|id| TimeSeriesSample {
                id,
                values: tablecls::synthetic::random_series(&mut rng, 8, shape.dimensions, 2.0),
                label: shape.classes[id % shape.classes.len()].clone(),
            })
            .collect()
    };
    let train = split(n_train);
    let test = split(2);
    tablecls::dataset::Dataset::new(shape.name, train, test, shape.classes.clone(), tablecls::cards::builtin_card(shape.name)).unwrap()
}
