use std::collections::HashMap;
use std::time::Duration;

use super::{Completion, CompletionBackend, CompletionRequest};
use crate::error::BackendError;
use crate::prompt::PromptBundle;

/// Deterministic offline backend that answers with the majority label of the
/// prompt's positive examples.
///
/// Ties go to the tied label whose best-ranked example is nearest. With no
/// positive examples the first class in dataset order is returned.
#[derive(Debug, Clone)]
pub struct MockBackend {
    classes: Vec<String>,
}

impl MockBackend {
    pub fn new(classes: Vec<String>) -> Self {
        Self { classes }
    }
}

/// The mock's label for a bundle.
pub fn mock_label(bundle: &PromptBundle, classes: &[String]) -> Option<String> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for e in bundle.positives() {
        let entry = counts.entry(e.label.as_str()).or_insert((0, e.rank));
        entry.0 += 1;
        entry.1 = entry.1.min(e.rank);
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(label, _)| label.to_string())
        .or_else(|| classes.first().cloned())
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        request.validate()?;
        let label = mock_label(request.bundle, &self.classes)
            .ok_or_else(|| BackendError::Config("mock backend has no classes".into()))?;
        Ok(Completion { text: format!("Label: {label}"), backend_id: self.id(), latency: Duration::ZERO, usage: None, attempts: 1 })
    }
}
