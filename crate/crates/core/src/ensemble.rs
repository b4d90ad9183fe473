//! Multi-path inference over temperatures, label extraction and voting.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Completion, CompletionBackend, CompletionRequest, DEFAULT_MAX_TOKENS};
use crate::error::EnsembleError;
use crate::prompt::PromptBundle;
use crate::retrieval::NeighborHit;

/// Printed in place of a label when extraction failed.
pub const UNPARSED: &str = "UNPARSED";

pub const DEFAULT_TEMPERATURES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn label_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)\blabel\b[\s*_"'`]*:(.*)"#).expect("valid regex"))
}

fn strip_payload(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*' | '_' | '.' | ',' | ';' | ':' | '!' | '?' | '(' | ')' | '[' | ']' | '<' | '>'))
}

fn match_class<'a>(payload: &str, classes: &'a [String]) -> Option<&'a String> {
    let candidates = [payload.trim(), strip_payload(payload)];
    candidates
        .iter()
        .find_map(|cand| classes.iter().find(|c| !c.is_empty() && c.to_lowercase() == cand.to_lowercase()))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Keyword extraction of a class from generated text.
///
/// 1. Bottom-up, the last `label: <payload>` on a line whose payload names a
///    class (case-insensitive, surrounding punctuation and quotes ignored).
/// 2. Otherwise the last whole-token, case-insensitive mention of any class.
/// 3. Otherwise `None` (unparsed).
pub fn extract_label(text: &str, classes: &[String]) -> Option<String> {
    for line in text.lines().rev() {
        let hit = label_line_re()
            .captures_iter(line)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .find_map(|cap| match_class(cap.get(1).map_or("", |m| m.as_str()), classes));
        if let Some(class) = hit {
            return Some(class.clone());
        }
    }

    let lower = text.to_lowercase();
    let mut best: Option<(usize, usize, &String)> = None;
    for class in classes.iter().filter(|c| !c.is_empty()) {
        let needle = class.to_lowercase();
        for (pos, _) in lower.match_indices(&needle) {
            let before = lower[..pos].chars().next_back();
            let after = lower[pos + needle.len()..].chars().next();
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bl, _)) => pos > bp || (pos == bp && needle.len() > bl),
            };
            if better {
                best = Some((pos, needle.len(), class));
            }
        }
    }
    best.map(|(_, _, c)| c.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferencePath {
    pub path_index: usize,
    pub temperature: f64,
    pub backend_id: String,
    pub completion: Option<Completion>,
    pub error: Option<String>,
    /// Extracted class, `None` when unparsed or failed.
    pub extracted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub final_label: String,
    pub tally: BTreeMap<String, usize>,
    #[serde(skip)]
    pub paths: Vec<InferencePath>,
    pub tie_broken: bool,
    pub neighbor_provenance: Vec<NeighborHit>,
}

/// Sampling settings shared by every path.
#[derive(Debug, Clone)]
pub struct PathSettings {
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self { max_tokens: DEFAULT_MAX_TOKENS, model_id: String::new() }
    }
}

/// One completion per temperature on the same bundle, in the given order.
///
/// Individual failures become unparsed paths; fatal backend errors abort.
pub fn run_multi_path(
    bundle: &PromptBundle,
    temps: &[f64],
    backend: &dyn CompletionBackend,
    classes: &[String],
    settings: &PathSettings,
) -> Result<Vec<InferencePath>, EnsembleError> {
    run_multi_backend(bundle, temps, &[backend], classes, settings)
}

/// Multi-model variant: every backend runs every temperature, backend-major.
pub fn run_multi_backend(
    bundle: &PromptBundle,
    temps: &[f64],
    backends: &[&dyn CompletionBackend],
    classes: &[String],
    settings: &PathSettings,
) -> Result<Vec<InferencePath>, EnsembleError> {
    if temps.is_empty() || backends.is_empty() {
        return Err(EnsembleError::NoTemperatures);
    }
    let mut paths = Vec::with_capacity(temps.len() * backends.len());
    for backend in backends {
        for &temperature in temps {
            let request = CompletionRequest { bundle, temperature, max_tokens: settings.max_tokens, model_id: settings.model_id.clone() };
            let path_index = paths.len();
            let path = match backend.complete(&request) {
                Ok(c) => InferencePath {
                    path_index,
                    temperature,
                    backend_id: c.backend_id.clone(),
                    extracted: extract_label(&c.text, classes),
                    completion: Some(c),
                    error: None,
                },
                Err(e) if e.is_fatal() => return Err(EnsembleError::Fatal(e)),
                Err(e) => {
                    ::log::warn!("path {path_index} (temperature {temperature}) failed: {e}");
                    InferencePath { path_index, temperature, backend_id: backend.id(), completion: None, error: Some(e.to_string()), extracted: None }
                }
            };
            paths.push(path);
        }
    }
    if paths.iter().all(|p| p.completion.is_none()) {
        return Err(EnsembleError::AllPathsFailed(paths.len()));
    }
    Ok(paths)
}

/// Majority vote over parsed paths.
///
/// Ties go to the tied label produced by the lowest-temperature path, then
/// the lowest path index.
pub fn majority_vote(paths: Vec<InferencePath>) -> Result<Prediction, EnsembleError> {
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    // Lowest (temperature, path_index) among each label's producers.
    let mut first_producer: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for p in &paths {
        if let Some(label) = &p.extracted {
            *tally.entry(label.clone()).or_default() += 1;
            let key = (p.temperature, p.path_index);
            first_producer
                .entry(label)
                .and_modify(|k| {
                    if key.0.total_cmp(&k.0).then(key.1.cmp(&k.1)).is_lt() {
                        *k = key;
                    }
                })
                .or_insert(key);
        }
    }
    let top = *tally.values().max().ok_or(EnsembleError::NoParsedPaths)?;
    let tied: Vec<&String> = tally.iter().filter(|(_, &n)| n == top).map(|(l, _)| l).collect();
    let winner = tied
        .iter()
        .min_by(|a, b| {
            let ka = first_producer[a.as_str()];
            let kb = first_producer[b.as_str()];
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
        })
        .map(|l| (*l).clone())
        .expect("at least one tied label");
    Ok(Prediction { final_label: winner, tie_broken: tied.len() > 1, tally, paths, neighbor_provenance: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn path(i: usize, t: f64, label: Option<&str>) -> InferencePath {
        InferencePath { path_index: i, temperature: t, backend_id: "x".into(), completion: None, error: None, extracted: label.map(str::to_string) }
    }

    #[test]
    fn rule_one_final_line() {
        let c = classes(&["Sitting", "Standing"]);
        assert_eq!(extract_label("some reasoning about standing\nLabel: sitting", &c).as_deref(), Some("Sitting"));
    }

    #[test]
    fn rule_two_last_mention() {
        let c = classes(&["a", "b"]);
        assert_eq!(extract_label("the answer could be a or b. I choose b.", &c).as_deref(), Some("b"));
    }

    #[test]
    fn rule_three_unparsed() {
        assert_eq!(extract_label("no idea", &classes(&["a", "b"])), None);
    }

    #[test]
    fn vote_majority() {
        let p = majority_vote(vec![path(0, 0.0, Some("a")), path(1, 0.5, Some("a")), path(2, 1.0, Some("b"))]).unwrap();
        assert_eq!(p.final_label, "a");
        assert_eq!(p.tally, BTreeMap::from([("a".to_string(), 2), ("b".to_string(), 1)]));
        assert!(!p.tie_broken);
    }

    #[test]
    fn vote_tie_goes_to_lowest_temperature() {
        let p = majority_vote(vec![path(0, 0.0, Some("a")), path(1, 0.5, Some("b"))]).unwrap();
        assert_eq!(p.final_label, "a");
        assert!(p.tie_broken);
        let p = majority_vote(vec![path(0, 0.5, Some("a")), path(1, 0.0, Some("b"))]).unwrap();
        assert_eq!(p.final_label, "b");
    }

    #[test]
    fn unparsed_paths_do_not_vote() {
        let p = majority_vote(vec![path(0, 0.0, None), path(1, 0.5, Some("b")), path(2, 0.7, None)]).unwrap();
        assert_eq!(p.final_label, "b");
        assert_eq!(p.tally.values().sum::<usize>(), 1);
        assert_eq!(majority_vote(vec![path(0, 0.0, None)]), Err(EnsembleError::NoParsedPaths));
    }
}
