//! Prompt assembly: domain context, labeled examples, the query table and
//! the step-by-step instruction with its output contract.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, DatasetCard};
use crate::error::PromptError;

/// Incentive sentence optionally appended to the end of the prompt.
pub const MAGIC_WORDS: &str = "If you do your best to provide me with the correct answer, I will pay you 10 billion dollars.";

const SECTION_SEP: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBlock {
    pub task_definition: String,
    pub dataset_description: String,
    /// Rendered `- class: definition` list in dataset order.
    pub class_definitions: String,
    /// Rendered `- channel: description` list in channel order.
    pub channel_descriptions: String,
}

impl ContextBlock {
    pub fn render(&self) -> String {
        format!(
            "## Task Definition\n{}\n\n## Dataset Description\n{}\n\n## Class Definitions\n{}\n\n## Channel Information\n{}",
            self.task_definition.trim(),
            self.dataset_description.trim(),
            self.class_definitions,
            self.channel_descriptions
        )
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders the four context sections. Descriptions missing from the card
/// (which load-time validation rules out) render as empty text.
pub fn build_context(card: &DatasetCard, dataset: &Dataset) -> ContextBlock {
    let list = |names: &[String], defs: &std::collections::BTreeMap<String, String>| {
        names
            .iter()
            .map(|n| format!("- {n}: {}", one_line(defs.get(n).map(String::as_str).unwrap_or_default())))
            .collect::<Vec<_>>()
            .join("\n")
    };
    ContextBlock {
        task_definition: card.task_definition.clone(),
        dataset_description: card.dataset_description.clone(),
        class_definitions: list(&dataset.classes, &card.class_definitions),
        channel_descriptions: list(&dataset.channel_names, &card.channel_descriptions),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleRole {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleBlock {
    pub role: ExampleRole,
    pub serialized_table: String,
    pub label: String,
    /// 1-based order within its role.
    pub rank: usize,
    pub train_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleProvenance {
    pub role: ExampleRole,
    pub rank: usize,
    pub train_index: usize,
    pub distance: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub context: ContextBlock,
    /// Positives by rank, then negatives by rank.
    pub examples: Vec<ExampleBlock>,
    pub query_table: String,
    pub instruction: String,
    pub magic_suffix: Option<String>,
    pub rendered: String,
    pub provenance: Vec<ExampleProvenance>,
    system_len: usize,
}

impl PromptBundle {
    /// Hex SHA-256 of the rendered prompt.
    pub fn hash(&self) -> String {
        prompt_hash(&self.rendered)
    }

    /// The context block, sent as the system message by chat backends.
    pub fn system_text(&self) -> &str {
        &self.rendered[..self.system_len]
    }

    /// Everything after the context block.
    pub fn user_text(&self) -> &str {
        &self.rendered[self.system_len + SECTION_SEP.len()..]
    }

    pub fn positives(&self) -> impl Iterator<Item = &ExampleBlock> {
        self.examples.iter().filter(|e| e.role == ExampleRole::Positive)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &ExampleBlock> {
        self.examples.iter().filter(|e| e.role == ExampleRole::Negative)
    }
}

pub fn prompt_hash(rendered: &str) -> String {
    hex::encode(Sha256::digest(rendered.as_bytes()))
}

/// The numbered-step instruction ending in the `Label: <class>` contract.
pub fn build_instruction(classes: &[String]) -> Result<String, PromptError> {
    if classes.is_empty() {
        return Err(PromptError::EmptyClasses);
    }
    let list = classes.join(", ");
    Ok(format!(
        "## Instructions\n\
         Classify the query time series into exactly one of these classes: {list}.\n\
         Work through the following steps:\n\
         1. Study the channel descriptions to understand what each column of the tables measures.\n\
         2. Compare the query table against each labeled example, channel by channel and over time.\n\
         3. Weigh agreement with the similar examples against disagreement with the contrastive examples.\n\
         4. Choose exactly one class from this list: {list}.\n\
         5. Reply with your reasoning, then end with a final line of the form \"Label: <class>\"."
    ))
}

pub fn assemble_prompt(
    context: ContextBlock,
    mut examples: Vec<ExampleBlock>,
    query_table: String,
    instruction: String,
    magic: bool,
) -> PromptBundle {
    examples.sort_by_key(|e| (e.role == ExampleRole::Negative, e.rank));

    let system = context.render();
    let mut sections = vec![system.clone()];
    let mut number = 0;
    for (role, heading) in [
        (ExampleRole::Positive, "## Labeled Neighbors\nThe following training samples are the most similar to the query, nearest first."),
        (
            ExampleRole::Negative,
            "## Contrastive Examples\nThe following training samples are dissimilar to the query and come from other regions of the data.",
        ),
    ] {
        let group: Vec<&ExampleBlock> = examples.iter().filter(|e| e.role == role).collect();
        if group.is_empty() {
            continue;
        }
        sections.push(heading.to_string());
        for e in group {
            number += 1;
            sections.push(format!("### Example {number} \u{2014} label: {}\n{}", e.label, e.serialized_table));
        }
    }
    sections.push(format!("## Query\n{query_table}"));
    sections.push(instruction.clone());
    let magic_suffix = magic.then(|| MAGIC_WORDS.to_string());
    if let Some(m) = &magic_suffix {
        sections.push(m.clone());
    }

    let provenance = examples
        .iter()
        .map(|e| ExampleProvenance { role: e.role, rank: e.rank, train_index: e.train_index, distance: e.distance, label: e.label.clone() })
        .collect();
    PromptBundle {
        system_len: system.len(),
        rendered: sections.join(SECTION_SEP),
        context,
        examples,
        query_table,
        instruction,
        magic_suffix,
        provenance,
    }
}
