//! Concern labeling: multi-label classification of posts against a
//! dataset-specific taxonomy, instruction-pair export for student-model
//! training, and frequency reports.
//!
//! Classifier backends are pluggable behind [`ConcernClassifier`] so a
//! chat model, a distilled student, the deterministic keyword fallback,
//! and scripted mocks are interchangeable per run config.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::{campaign_posts, Campaign};
use crate::gateway::{ChatBackend, CompletionRequest, LlmGateway};
use crate::ingest::{extract_hashtag_sequence, Post};
use crate::parallel::bounded_map;

/// One concern category. `name` is the hashtag-safe label used in
/// prompts and model responses ("EconomicSanctions"); `display` is the
/// human form for reports ("Economic Sanctions").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcernCategory {
    pub name: String,
    #[serde(default)]
    pub display: Option<String>,
    /// Case-folded substrings for the keyword fallback classifier.
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Marks the residual category; exactly one per taxonomy.
    #[serde(default)]
    pub none_other: bool,
}

impl ConcernCategory {
    pub fn display(&self) -> &str {
        self.display.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcernTaxonomy {
    pub event_topic: String,
    pub categories: Vec<ConcernCategory>,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy `{path}`: {reason}")]
    Read { path: String, reason: String },
    #[error("taxonomy has no categories")]
    Empty,
    #[error("duplicate category name `{0}`")]
    DuplicateName(String),
    #[error("taxonomy must designate exactly one none/other category, found {0}")]
    NoneOtherCount(usize),
}

/// Case/punctuation-insensitive label form used for matching response
/// tokens to category names.
fn fold_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl ConcernTaxonomy {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let taxonomy: ConcernTaxonomy = toml::from_str(&raw).map_err(|e| TaxonomyError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        if self.categories.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = BTreeSet::new();
        for category in &self.categories {
            if !seen.insert(fold_label(&category.name)) {
                return Err(TaxonomyError::DuplicateName(category.name.clone()));
            }
        }
        let none_other = self.categories.iter().filter(|c| c.none_other).count();
        if none_other != 1 {
            return Err(TaxonomyError::NoneOtherCount(none_other));
        }
        Ok(())
    }

    /// Name of the residual category.
    pub fn none_other(&self) -> &str {
        &self
            .categories
            .iter()
            .find(|c| c.none_other)
            .expect("validated taxonomy has a none/other category")
            .name
    }

    /// Categories listed in prompts, i.e. everything except the residual
    /// one (the template names it separately as the fallback).
    pub fn listed_categories(&self) -> impl Iterator<Item = &ConcernCategory> {
        self.categories.iter().filter(|c| !c.none_other)
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    /// Maps a response token to its canonical category name, ignoring
    /// case and punctuation ("#economic_sanctions" -> "EconomicSanctions").
    pub fn match_token(&self, token: &str) -> Option<&str> {
        let folded = fold_label(token);
        if folded.is_empty() {
            return None;
        }
        self.categories
            .iter()
            .find(|c| fold_label(&c.name) == folded)
            .map(|c| c.name.as_str())
    }
}

/// Fills the classification prompt template: event topic, the
/// '#'-prefixed category list joined by ", ", and the post text.
pub fn build_concern_prompt(taxonomy: &ConcernTaxonomy, post_text: &str) -> String {
    format!(
        "{}\n\nTweet: {}",
        instruction_text(taxonomy),
        post_text
    )
}

/// The instruction body shared by the classification prompt and the
/// exported instruction pairs.
pub fn instruction_text(taxonomy: &ConcernTaxonomy) -> String {
    let categories = taxonomy
        .listed_categories()
        .map(|c| format!("#{}", c.name))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "You are using an AI model specialized in classifying tweets into relevant {} concern (wedge issues) categories. The available concern categories are {}. Your task is to analyze the following tweet and categorize the following tweet into one or more of these concern categories. If the tweet does not align with any of these categories, label it as #{}. Please respond with only the relevant category labels.",
        taxonomy.event_topic,
        categories,
        taxonomy.none_other()
    )
}

/// Multi-label concern assignment for one post.
///
/// Invariants, enforced at construction: labels are a non-empty subset
/// of the taxonomy, and the residual category never co-occurs with a
/// real one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcernLabelSet {
    pub post_id: String,
    pub labels: BTreeSet<String>,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    /// Response tokens that matched no category and were dropped.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub unknown_tokens: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl ConcernLabelSet {
    pub fn new(
        taxonomy: &ConcernTaxonomy,
        post_id: impl Into<String>,
        mut labels: BTreeSet<String>,
        backend_id: impl Into<String>,
        raw_response: Option<String>,
        unknown_tokens: u32,
    ) -> Self {
        let none_other = taxonomy.none_other().to_owned();
        if labels.len() > 1 {
            labels.remove(&none_other);
        }
        if labels.is_empty() {
            labels.insert(none_other);
        }
        ConcernLabelSet {
            post_id: post_id.into(),
            labels,
            backend_id: backend_id.into(),
            raw_response,
            unknown_tokens,
        }
    }
}

/// Extracts '#'-prefixed tokens from a backend response and maps them to
/// taxonomy categories. Unknown tokens are dropped and counted; an empty
/// result falls back to the residual category.
pub fn parse_concern_response(
    response: &str,
    taxonomy: &ConcernTaxonomy,
    post_id: &str,
    backend_id: &str,
) -> ConcernLabelSet {
    let mut labels = BTreeSet::new();
    let mut unknown = 0u32;
    for tag in extract_hashtag_sequence(response) {
        match taxonomy.match_token(&tag.surface) {
            Some(name) => {
                labels.insert(name.to_owned());
            }
            None => unknown += 1,
        }
    }
    ConcernLabelSet::new(
        taxonomy,
        post_id,
        labels,
        backend_id,
        Some(response.to_owned()),
        unknown,
    )
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("backend failure: {0}")]
    Backend(String),
}

/// A concern classifier: anything that can multi-label a post.
pub trait ConcernClassifier: Send + Sync {
    fn id(&self) -> &str;
    fn classify(&self, post: &Post) -> Result<ConcernLabelSet, ClassifyError>;
}

/// Chat-model classifier: prompt template + response parser around a
/// [`ChatBackend`], with all calls routed through the gateway cache.
pub struct LlmClassifier {
    backend: Arc<dyn ChatBackend>,
    gateway: Arc<LlmGateway>,
    taxonomy: ConcernTaxonomy,
    model_id: String,
}

impl LlmClassifier {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        gateway: Arc<LlmGateway>,
        taxonomy: ConcernTaxonomy,
        model_id: impl Into<String>,
    ) -> Self {
        LlmClassifier {
            backend,
            gateway,
            taxonomy,
            model_id: model_id.into(),
        }
    }
}

impl ConcernClassifier for LlmClassifier {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn classify(&self, post: &Post) -> Result<ConcernLabelSet, ClassifyError> {
        let prompt = build_concern_prompt(&self.taxonomy, &post.text);
        let request = CompletionRequest::new(self.backend.id(), &self.model_id, prompt, "concern");
        let response = self
            .gateway
            .complete(self.backend.as_ref(), &request)
            .map_err(|e| ClassifyError::Backend(e.to_string()))?;
        Ok(parse_concern_response(
            &response.text,
            &self.taxonomy,
            &post.post_id,
            self.backend.id(),
        ))
    }
}

/// Deterministic offline fallback: a category applies iff one of its
/// keywords occurs (case-folded) in the post text.
pub struct KeywordClassifier {
    taxonomy: ConcernTaxonomy,
}

impl KeywordClassifier {
    pub fn new(taxonomy: ConcernTaxonomy) -> Self {
        KeywordClassifier { taxonomy }
    }
}

pub fn keyword_fallback_classify(post: &Post, taxonomy: &ConcernTaxonomy) -> ConcernLabelSet {
    let folded = post.text.to_lowercase();
    let mut labels = BTreeSet::new();
    for category in taxonomy.listed_categories() {
        if category
            .keywords
            .iter()
            .any(|kw| !kw.is_empty() && folded.contains(&kw.to_lowercase()))
        {
            labels.insert(category.name.clone());
        }
    }
    ConcernLabelSet::new(taxonomy, &post.post_id, labels, "keyword", None, 0)
}

impl ConcernClassifier for KeywordClassifier {
    fn id(&self) -> &str {
        "keyword"
    }

    fn classify(&self, post: &Post) -> Result<ConcernLabelSet, ClassifyError> {
        Ok(keyword_fallback_classify(post, &self.taxonomy))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelFailure {
    pub post_id: String,
    pub message: String,
}

/// Outcome of labeling a post stream: one result per post, input order.
pub struct LabelRun {
    pub results: Vec<Result<ConcernLabelSet, LabelFailure>>,
}

impl LabelRun {
    pub fn labeled(&self) -> impl Iterator<Item = &ConcernLabelSet> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &LabelFailure> {
        self.results.iter().filter_map(|r| r.as_ref().err())
    }
}

#[derive(Debug, Error)]
pub enum ConcernError {
    #[error("{failed} of {total} posts failed to label; aborting")]
    TooManyFailures { failed: usize, total: usize },
}

/// Labels every post, preserving input order. Individual backend
/// failures become per-post error records; if more than half the stream
/// fails the run aborts.
pub fn label_posts(
    posts: &[Post],
    classifier: &dyn ConcernClassifier,
    max_in_flight: usize,
) -> Result<LabelRun, ConcernError> {
    let results: Vec<Result<ConcernLabelSet, LabelFailure>> =
        bounded_map(posts.iter().collect(), max_in_flight, |post: &Post| {
            classifier.classify(post).map_err(|e| LabelFailure {
                post_id: post.post_id.clone(),
                message: e.to_string(),
            })
        });
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 2 > posts.len() {
        return Err(ConcernError::TooManyFailures {
            failed,
            total: posts.len(),
        });
    }
    Ok(LabelRun { results })
}

/// Uniform sample of `n` posts without replacement, reproducible by
/// seed. Sampled posts keep corpus order. `n >= len` returns everything.
pub fn sample_teacher_set(corpus: &[Post], n: usize, seed: u64) -> Vec<&Post> {
    if n >= corpus.len() {
        return corpus.iter().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    indices.sort_unstable();
    indices.into_iter().map(|i| &corpus[i]).collect()
}

/// One exported training record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

/// Reference fine-tuning hyperparameters recorded alongside exported
/// pairs for downstream trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: u32,
    pub batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub learning_rate: f64,
}

impl Default for TrainingMetadata {
    fn default() -> Self {
        TrainingMetadata {
            epochs: 3,
            batch_size: 1,
            gradient_accumulation_steps: 16,
            learning_rate: 2e-5,
        }
    }
}

/// Builds the instruction/input/output record for one labeled post.
/// Output labels are '#'-prefixed, space-joined, in taxonomy order.
pub fn instruction_pair(
    taxonomy: &ConcernTaxonomy,
    post: &Post,
    labels: &ConcernLabelSet,
) -> InstructionPair {
    let output = taxonomy
        .categories
        .iter()
        .filter(|c| labels.labels.contains(&c.name))
        .map(|c| format!("#{}", c.name))
        .collect::<Vec<_>>()
        .join(" ");
    InstructionPair {
        instruction: instruction_text(taxonomy),
        input: post.text.clone(),
        output,
    }
}

/// Writes instruction pairs as JSONL plus a `<stem>.meta.json` sidecar
/// holding the training metadata.
pub fn export_instruction_pairs(
    path: impl AsRef<Path>,
    labeled: &[(&Post, &ConcernLabelSet)],
    taxonomy: &ConcernTaxonomy,
    metadata: &TrainingMetadata,
) -> std::io::Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path)?;
    write_instruction_pairs(&mut file, labeled, taxonomy)?;
    let sidecar = path.with_extension("meta.json");
    let mut meta_file = std::fs::File::create(sidecar)?;
    serde_json::to_writer_pretty(&mut meta_file, metadata)?;
    meta_file.write_all(b"\n")?;
    Ok(())
}

pub fn write_instruction_pairs<W: Write>(
    mut w: W,
    labeled: &[(&Post, &ConcernLabelSet)],
    taxonomy: &ConcernTaxonomy,
) -> std::io::Result<()> {
    for (post, labels) in labeled {
        let pair = instruction_pair(taxonomy, post, labels);
        writeln!(w, "{}", serde_json::to_string(&pair)?)?;
    }
    Ok(())
}

/// Per-category post counts. A multi-label post increments each of its
/// categories, so counts can sum past the post total.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    pub total_posts: u64,
    pub counts: BTreeMap<String, u64>,
}

pub fn concern_frequencies<'a>(
    labels: impl IntoIterator<Item = &'a ConcernLabelSet>,
) -> FrequencyTable {
    let mut table = FrequencyTable::default();
    for set in labels {
        table.total_posts += 1;
        for label in &set.labels {
            *table.counts.entry(label.clone()).or_default() += 1;
        }
    }
    table
}

pub fn write_frequency_csv<W: Write>(table: &FrequencyTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "category,post_count")?;
    for (category, count) in &table.counts {
        writeln!(w, "{category},{count}")?;
    }
    Ok(())
}

/// Per-campaign concern frequency, as percent of the campaign's posts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignFrequencyRow {
    pub campaign_id: u32,
    pub category: String,
    pub post_count: u64,
    pub campaign_posts: u64,
    pub percent_of_posts: f64,
}

pub fn per_campaign_frequencies(
    campaigns: &[Campaign],
    posts: &[Post],
    labels_by_post: &BTreeMap<String, ConcernLabelSet>,
) -> Vec<CampaignFrequencyRow> {
    let mut rows = Vec::new();
    for campaign in campaigns {
        let member_posts = campaign_posts(campaign, posts);
        let total = member_posts.len() as u64;
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for post in &member_posts {
            if let Some(set) = labels_by_post.get(&post.post_id) {
                for label in &set.labels {
                    *counts.entry(label.as_str()).or_default() += 1;
                }
            }
        }
        for (category, count) in counts {
            rows.push(CampaignFrequencyRow {
                campaign_id: campaign.campaign_id,
                category: category.to_owned(),
                post_count: count,
                campaign_posts: total,
                percent_of_posts: if total == 0 {
                    0.0
                } else {
                    count as f64 * 100.0 / total as f64
                },
            });
        }
    }
    rows
}

pub fn write_campaign_frequency_csv<W: Write>(
    rows: &[CampaignFrequencyRow],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "campaign_id,category,post_count,campaign_posts,percent_of_posts")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{:.4}",
            row.campaign_id, row.category, row.post_count, row.campaign_posts, row.percent_of_posts
        )?;
    }
    Ok(())
}
