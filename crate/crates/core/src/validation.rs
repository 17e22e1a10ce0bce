//! Annotation-quality validation against a ground-truth campaign
//! catalogue.
//!
//! For each catalogued operation: generate ten platform-style posts from
//! the record, annotate them with the same prompts and parsers the
//! pipeline uses on real slices, then judge per-field semantic
//! equivalence between the annotation and the record. A seeded
//! mismatched-pair baseline (a derangement, so no record is judged
//! against itself) measures judge leniency.
//!
//! Because the records seed the generation, accuracies act as an upper
//! bounds on annotation quality; every report carries that caveat.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::GoalAnnotation;
use crate::gateway::{ChatBackend, CompletionRequest, LlmGateway};

/// One catalogued information operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthCampaign {
    pub record_id: String,
    pub targeted_country: String,
    pub attacking_country: String,
    pub goal_category: String,
    pub goal_description: String,
    pub event_description: String,
}

/// The five judged fields, in report order.
pub const EVAL_FIELDS: [&str; 5] = [
    "targeted_country",
    "attacking_country",
    "goal_category",
    "goal_description",
    "event_description",
];

impl GroundTruthCampaign {
    pub fn field(&self, name: &str) -> Option<&str> {
        match name {
            "targeted_country" => Some(&self.targeted_country),
            "attacking_country" => Some(&self.attacking_country),
            "goal_category" => Some(&self.goal_category),
            "goal_description" => Some(&self.goal_description),
            "event_description" => Some(&self.event_description),
            _ => None,
        }
    }
}

/// Pulls the matching field out of a goal annotation.
pub fn annotation_field<'a>(annotation: &'a GoalAnnotation, name: &str) -> Option<&'a str> {
    match name {
        "targeted_country" => Some(&annotation.targeted_country),
        "attacking_country" => Some(&annotation.attacking_country),
        "goal_category" => Some(&annotation.goal_category),
        "goal_description" => Some(&annotation.goal_description),
        "event_description" => Some(&annotation.event_description),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("cannot read ground truth `{path}`: {reason}")]
    Read { path: String, reason: String },
    #[error("no valid ground-truth records in `{path}`")]
    NoRecords { path: String },
    #[error("generation for record `{record_id}` produced {got} posts, want {want}")]
    GenerationCount {
        record_id: String,
        got: usize,
        want: usize,
    },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("judge output unparseable: {0}")]
    JudgeParse(String),
    #[error("text for `{0}` is empty")]
    EmptyText(String),
    #[error("need at least one ground-truth record")]
    EmptyCatalogue,
}

/// Result of loading a catalogue file: valid records plus per-record
/// error strings for rejected rows.
#[derive(Debug)]
pub struct GroundTruthLoad {
    pub records: Vec<GroundTruthCampaign>,
    pub errors: Vec<String>,
}

/// Loads a ground-truth catalogue from CSV with columns `record_id,
/// targeted_country, attacking_country, goal_category, goal_description,
/// event_description`. Rows with missing or empty fields are reported
/// individually; a file with zero valid records is fatal.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthLoad, ValidationError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ValidationError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (i, row) in reader.deserialize::<GroundTruthCampaign>().enumerate() {
        let line = i + 2; // header is line 1
        match row {
            Ok(record) => {
                let empty_field = EVAL_FIELDS
                    .iter()
                    .find(|f| record.field(f).is_some_and(str::is_empty));
                if record.record_id.is_empty() {
                    errors.push(format!("row {line}: missing field `record_id`"));
                } else if let Some(field) = empty_field {
                    errors.push(format!("row {line}: missing field `{field}`"));
                } else if !seen_ids.insert(record.record_id.clone()) {
                    errors.push(format!("row {line}: duplicate record_id `{}`", record.record_id));
                } else {
                    records.push(record);
                }
            }
            Err(e) => errors.push(format!("row {line}: {e}")),
        }
    }
    if records.is_empty() {
        return Err(ValidationError::NoRecords {
            path: path.display().to_string(),
        });
    }
    Ok(GroundTruthLoad { records, errors })
}

/// Number of synthetic posts generated per record.
pub const SYNTHETIC_POSTS_PER_RECORD: usize = 10;

/// Builds the generation prompt: all five record fields, verbatim, plus
/// a request for ten numbered platform-style posts.
pub fn build_generation_prompt(gt: &GroundTruthCampaign) -> String {
    format!(
        "A catalogued influence operation has these properties:\n\
         Targeted country: {}\n\
         Attacking country: {}\n\
         Goal category: {}\n\
         Goal description: {}\n\
         Event description: {}\n\n\
         Write 10 short social-media posts that this operation could have published. \
         Number them 1 through 10, one post per line.",
        gt.targeted_country,
        gt.attacking_country,
        gt.goal_category,
        gt.goal_description,
        gt.event_description
    )
}

/// Exactly ten generated post texts for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPostSet {
    pub record_id: String,
    pub posts: Vec<String>,
    pub generator_backend_id: String,
}

/// Splits a generation response into individual posts. Prefers lines
/// with leading numbering ("1.", "2)", "3:"); falls back to all
/// non-empty lines.
pub fn parse_generated_posts(raw: &str) -> Vec<String> {
    let mut numbered = Vec::new();
    let mut plain = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        plain.push(line.to_owned());
        let digits: String = line.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            continue;
        }
        let rest = &line[digits.len()..];
        if let Some(stripped) = rest
            .strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .or_else(|| rest.strip_prefix(':'))
        {
            let text = stripped.trim();
            if !text.is_empty() {
                numbered.push(text.to_owned());
            }
        }
    }
    if !numbered.is_empty() {
        numbered
    } else {
        plain
    }
}

/// Generates the ten-post set for one record. A short parse retries once
/// with a stricter prompt (a different cache key); still short → error.
pub fn generate_synthetic_posts(
    gt: &GroundTruthCampaign,
    backend: &dyn ChatBackend,
    gateway: &LlmGateway,
    model_id: &str,
) -> Result<SyntheticPostSet, ValidationError> {
    let base_prompt = build_generation_prompt(gt);
    let strict_prompt = format!("{base_prompt}\n\nReturn exactly 10 numbered posts.");
    let mut last_count = 0;
    for prompt in [base_prompt, strict_prompt] {
        let request = CompletionRequest::new(backend.id(), model_id, prompt, "generate");
        let response = gateway
            .complete(backend, &request)
            .map_err(|e| ValidationError::Backend(e.to_string()))?;
        let mut posts = parse_generated_posts(&response.text);
        if posts.len() > SYNTHETIC_POSTS_PER_RECORD {
            posts.truncate(SYNTHETIC_POSTS_PER_RECORD);
        }
        if posts.len() == SYNTHETIC_POSTS_PER_RECORD {
            return Ok(SyntheticPostSet {
                record_id: gt.record_id.clone(),
                posts,
                generator_backend_id: backend.id().to_owned(),
            });
        }
        last_count = posts.len();
    }
    Err(ValidationError::GenerationCount {
        record_id: gt.record_id.clone(),
        got: last_count,
        want: SYNTHETIC_POSTS_PER_RECORD,
    })
}

/// One per-field equivalence verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceJudgment {
    pub record_id: String,
    pub field_name: String,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub judge_backend_id: String,
    pub raw_judge_output: String,
}

/// What a judge returns for one (annotation, ground truth) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub verdict: bool,
    pub confidence: Option<f64>,
    pub raw: String,
}

/// Decides whether an annotation and a ground-truth description state
/// the same thing.
pub trait EquivalenceJudge: Send + Sync {
    fn id(&self) -> &str;
    fn judge(
        &self,
        field_name: &str,
        annotation_text: &str,
        ground_truth_text: &str,
    ) -> Result<JudgeOutcome, ValidationError>;
}

/// Judges one pair; both texts must be non-empty.
pub fn judge_equivalence(
    field_name: &str,
    annotation_text: &str,
    ground_truth_text: &str,
    record_id: &str,
    judge: &dyn EquivalenceJudge,
) -> Result<EquivalenceJudgment, ValidationError> {
    if annotation_text.trim().is_empty() {
        return Err(ValidationError::EmptyText("annotation".into()));
    }
    if ground_truth_text.trim().is_empty() {
        return Err(ValidationError::EmptyText("ground truth".into()));
    }
    let outcome = judge.judge(field_name, annotation_text, ground_truth_text)?;
    Ok(EquivalenceJudgment {
        record_id: record_id.to_owned(),
        field_name: field_name.to_owned(),
        verdict: outcome.verdict,
        confidence: outcome.confidence,
        judge_backend_id: judge.id().to_owned(),
        raw_judge_output: outcome.raw,
    })
}

/// Mock judge: equivalent iff the texts match after trimming and case
/// folding.
pub struct StringEqualityJudge;

impl EquivalenceJudge for StringEqualityJudge {
    fn id(&self) -> &str {
        "string-equality"
    }

    fn judge(
        &self,
        _field_name: &str,
        annotation_text: &str,
        ground_truth_text: &str,
    ) -> Result<JudgeOutcome, ValidationError> {
        let verdict =
            annotation_text.trim().to_lowercase() == ground_truth_text.trim().to_lowercase();
        Ok(JudgeOutcome {
            verdict,
            confidence: None,
            raw: format!("string-equality: {verdict}"),
        })
    }
}

/// Scripted judge for tests: verdict computed by the supplied closure.
pub struct FnJudge<F> {
    id: String,
    f: F,
}

impl<F> FnJudge<F>
where
    F: Fn(&str, &str, &str) -> JudgeOutcome + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnJudge { id: id.into(), f }
    }
}

impl<F> EquivalenceJudge for FnJudge<F>
where
    F: Fn(&str, &str, &str) -> JudgeOutcome + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(
        &self,
        field_name: &str,
        annotation_text: &str,
        ground_truth_text: &str,
    ) -> Result<JudgeOutcome, ValidationError> {
        Ok((self.f)(field_name, annotation_text, ground_truth_text))
    }
}

/// Scores how strongly a premise entails a hypothesis, in [0, 1].
pub trait EntailmentScorer: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, premise: &str, hypothesis: &str) -> Result<f64, ValidationError>;
}

/// Default verdict threshold for entailment judges.
pub const DEFAULT_ENTAILMENT_THRESHOLD: f64 = 0.5;

/// Entailment judge: premise is the annotation output, hypothesis is the
/// ground-truth text; verdict is `confidence >= threshold`.
pub struct EntailmentJudge<S> {
    scorer: S,
    pub threshold: f64,
}

impl<S: EntailmentScorer> EntailmentJudge<S> {
    pub fn new(scorer: S, threshold: f64) -> Self {
        EntailmentJudge { scorer, threshold }
    }
}

impl<S: EntailmentScorer> EquivalenceJudge for EntailmentJudge<S> {
    fn id(&self) -> &str {
        self.scorer.id()
    }

    fn judge(
        &self,
        _field_name: &str,
        annotation_text: &str,
        ground_truth_text: &str,
    ) -> Result<JudgeOutcome, ValidationError> {
        let confidence = self.scorer.score(annotation_text, ground_truth_text)?;
        Ok(JudgeOutcome {
            verdict: confidence >= self.threshold,
            confidence: Some(confidence),
            raw: format!("entailment_confidence={confidence}"),
        })
    }
}

/// Entailment scorer backed by an HTTP NLI service. Wire format:
/// request `{"premise": ..., "hypothesis": ...}`, response
/// `{"entailment": <float in [0,1]>}`.
pub struct HttpEntailmentScorer {
    id: String,
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpEntailmentScorer {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        HttpEntailmentScorer {
            id: id.into(),
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl EntailmentScorer for HttpEntailmentScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, premise: &str, hypothesis: &str) -> Result<f64, ValidationError> {
        if std::env::var(crate::gateway::NO_NETWORK_ENV).is_ok() {
            return Err(ValidationError::Backend(format!(
                "network disabled by {}",
                crate::gateway::NO_NETWORK_ENV
            )));
        }
        let response = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({"premise": premise, "hypothesis": hypothesis}))
            .send()
            .map_err(|e| ValidationError::Backend(e.to_string()))?;
        let payload: serde_json::Value = response
            .json()
            .map_err(|e| ValidationError::Backend(e.to_string()))?;
        payload["entailment"]
            .as_f64()
            .ok_or_else(|| ValidationError::JudgeParse("response missing `entailment`".into()))
    }
}

/// Chat judge: asks a yes/no question and parses the leading answer.
pub struct ChatJudge {
    pub backend: Arc<dyn ChatBackend>,
    pub gateway: Arc<LlmGateway>,
    pub model_id: String,
}

impl EquivalenceJudge for ChatJudge {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn judge(
        &self,
        field_name: &str,
        annotation_text: &str,
        ground_truth_text: &str,
    ) -> Result<JudgeOutcome, ValidationError> {
        let prompt = format!(
            "Statement A: {annotation_text}\n\
             Statement B: {ground_truth_text}\n\n\
             Do statements A and B say the same thing about the {fname} of an influence operation? Answer yes or no.",
            fname = field_name.replace('_', " ")
        );
        let request = CompletionRequest::new(self.backend.id(), &self.model_id, prompt, "judge");
        let response = self
            .gateway
            .complete(self.backend.as_ref(), &request)
            .map_err(|e| ValidationError::Backend(e.to_string()))?;
        let raw = response.text;
        let first_word: String = raw
            .trim()
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .flat_map(char::to_lowercase)
            .collect();
        let verdict = match first_word.as_str() {
            "yes" => true,
            "no" => false,
            _ => return Err(ValidationError::JudgeParse(raw)),
        };
        Ok(JudgeOutcome {
            verdict,
            confidence: None,
            raw,
        })
    }
}

/// Seeded derangement of `0..n` (no index maps to itself). Rejection
/// sampling on a seeded shuffle, with a rotation fallback so the
/// function is total for n >= 2.
pub fn derangement(n: usize, seed: u64) -> Option<Vec<usize>> {
    if n < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Some(perm);
        }
    }
    // Vanishingly unlikely; rotate a final shuffle into a derangement.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let rotated: Vec<usize> = (0..n).map(|i| perm[(i + 1) % n]).collect();
    let mut out = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        out[p] = rotated[i];
    }
    // out[p] = successor of p in the shuffled cycle, which is never p.
    Some(out)
}

/// Per-field accuracy row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldAccuracy {
    pub field: String,
    pub accuracy: f64,
    /// Mismatched-pair (derangement) accuracy; NaN when n < 2.
    pub baseline_accuracy: f64,
    pub n: usize,
    pub matched_true: usize,
    pub baseline_true: usize,
    /// Records with no annotation, counted as false.
    pub missing: usize,
    /// Set when accuracy and baseline are both 1.0 (judge accepted
    /// everything) -- the comparison carries no signal.
    pub degenerate: bool,
}

/// Full evaluation output.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub judge_id: String,
    pub caveat: String,
    pub rows: Vec<FieldAccuracy>,
    pub judgments: Vec<EquivalenceJudgment>,
    pub baseline_judgments: Vec<EquivalenceJudgment>,
}

/// Caveat printed verbatim at the top of every evaluation report.
pub const LEAKAGE_CAVEAT: &str = "ground truth seeds the synthetic posts, so accuracies act as an upper bounds on annotation quality";

/// Evaluates annotations against the catalogue: per-field accuracy over
/// all records (missing annotations count as false) plus the
/// derangement baseline.
pub fn evaluate_catalogue(
    gts: &[GroundTruthCampaign],
    annotations: &BTreeMap<String, GoalAnnotation>,
    judge: &dyn EquivalenceJudge,
    baseline_seed: u64,
) -> Result<EvalReport, ValidationError> {
    if gts.is_empty() {
        return Err(ValidationError::EmptyCatalogue);
    }
    let pairing = derangement(gts.len(), baseline_seed);
    let mut judgments = Vec::new();
    let mut baseline_judgments = Vec::new();
    let mut rows = Vec::new();

    for field in EVAL_FIELDS {
        let mut matched_true = 0usize;
        let mut baseline_true = 0usize;
        let mut missing = 0usize;
        for (i, gt) in gts.iter().enumerate() {
            let annotation = annotations.get(&gt.record_id);
            if annotation.is_none() {
                missing += 1;
            }
            fn nonempty(text: Option<&str>) -> &str {
                text.filter(|t| !t.trim().is_empty()).unwrap_or(UNSET)
            }
            // Matched pair.
            if let Some(annotation) = annotation {
                let text = nonempty(annotation_field(annotation, field));
                let gt_text = nonempty(gt.field(field));
                let judgment = judge_equivalence(field, text, gt_text, &gt.record_id, judge)?;
                if judgment.verdict {
                    matched_true += 1;
                }
                judgments.push(judgment);
            }
            // Mismatched-pair baseline.
            if let (Some(annotation), Some(pairing)) = (annotation, &pairing) {
                let other = &gts[pairing[i]];
                let text = nonempty(annotation_field(annotation, field));
                let gt_text = nonempty(other.field(field));
                let mut judgment =
                    judge_equivalence(field, text, gt_text, &gt.record_id, judge)?;
                judgment.record_id = format!("{}~{}", gt.record_id, other.record_id);
                if judgment.verdict {
                    baseline_true += 1;
                }
                baseline_judgments.push(judgment);
            }
        }
        let n = gts.len();
        let accuracy = matched_true as f64 / n as f64;
        let baseline_accuracy = if pairing.is_some() {
            baseline_true as f64 / n as f64
        } else {
            f64::NAN
        };
        rows.push(FieldAccuracy {
            field: field.to_owned(),
            accuracy,
            baseline_accuracy,
            n,
            matched_true,
            baseline_true,
            missing,
            degenerate: accuracy == 1.0 && baseline_accuracy == 1.0,
        });
    }

    Ok(EvalReport {
        judge_id: judge.id().to_owned(),
        caveat: LEAKAGE_CAVEAT.to_owned(),
        rows,
        judgments,
        baseline_judgments,
    })
}

const UNSET: &str = "unparsed";

/// Writes the report CSV: caveat header line, then
/// `field,judge,accuracy,baseline,n`.
pub fn write_eval_csv<W: Write>(report: &EvalReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# caveat: {}", report.caveat)?;
    writeln!(w, "field,judge,accuracy,baseline,n")?;
    for row in &report.rows {
        let baseline = if row.baseline_accuracy.is_nan() {
            String::new()
        } else {
            format!("{:.4}", row.baseline_accuracy)
        };
        writeln!(
            w,
            "{},{},{:.4},{},{}",
            row.field, report.judge_id, row.accuracy, baseline, row.n
        )?;
    }
    Ok(())
}

/// Writes the per-judgment log as JSONL (matched pairs, then baseline).
pub fn write_judgment_log<W: Write>(report: &EvalReport, mut w: W) -> std::io::Result<()> {
    for judgment in report.judgments.iter().chain(&report.baseline_judgments) {
        writeln!(w, "{}", serde_json::to_string(judgment)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendScript, ScriptedBackend};

    fn record(i: usize) -> GroundTruthCampaign {
        GroundTruthCampaign {
            record_id: format!("r{i:02}"),
            targeted_country: format!("Country{i}"),
            attacking_country: format!("Rival{i}"),
            goal_category: format!("category-{i}"),
            goal_description: format!("Push narrative {i} at home."),
            event_description: format!("Operation around event {i}."),
        }
    }

    fn annotation_from(gt: &GroundTruthCampaign) -> GoalAnnotation {
        GoalAnnotation {
            targeted_country: gt.targeted_country.clone(),
            attacking_country: gt.attacking_country.clone(),
            goal_category: gt.goal_category.clone(),
            goal_description: gt.goal_description.clone(),
            event_description: gt.event_description.clone(),
            raw_response: "scripted".into(),
        }
    }

    #[test]
    fn generation_prompt_embeds_all_fields_and_count() {
        let gt = record(3);
        let prompt = build_generation_prompt(&gt);
        for value in [
            gt.targeted_country.as_str(),
            gt.attacking_country.as_str(),
            gt.goal_category.as_str(),
            gt.goal_description.as_str(),
            gt.event_description.as_str(),
        ] {
            assert!(prompt.contains(value), "missing {value}");
        }
        assert!(prompt.contains("10"));
    }

    #[test]
    fn parses_numbered_styles() {
        let raw = "1. First post #tag\n2) Second post\n3: Third\n\n4. Fourth";
        assert_eq!(parse_generated_posts(raw).len(), 4);
        let plain = "first\nsecond\nthird";
        assert_eq!(parse_generated_posts(plain).len(), 3);
    }

    #[test]
    fn ten_numbered_lines_generate_ten_posts() {
        let text: String = (1..=10)
            .map(|i| format!("{i}. Why is #Country{i} doing this? #tag{i}"))
            .collect::<Vec<_>>()
            .join("\n");
        let backend = ScriptedBackend::new(
            "gen",
            BackendScript { rules: vec![], default_response: Some(text) },
        );
        let gateway = LlmGateway::uncached();
        let set = generate_synthetic_posts(&record(1), &backend, &gateway, "m").unwrap();
        assert_eq!(set.posts.len(), 10);
        assert!(set.posts[0].starts_with("Why is #Country1"));
    }

    #[test]
    fn seven_lines_error_after_one_retry() {
        let text: String = (1..=7).map(|i| format!("{i}. post")).collect::<Vec<_>>().join("\n");
        let backend = crate::gateway::CountingBackend::new(ScriptedBackend::new(
            "gen",
            BackendScript { rules: vec![], default_response: Some(text) },
        ));
        let gateway = LlmGateway::uncached();
        let err = generate_synthetic_posts(&record(1), &backend, &gateway, "m").unwrap_err();
        assert!(matches!(err, ValidationError::GenerationCount { got: 7, want: 10, .. }));
        assert_eq!(backend.calls(), 2, "one retry with a stricter prompt");
    }

    #[test]
    fn string_equality_judge_basics() {
        let judge = StringEqualityJudge;
        let same = judge_equivalence("goal_category", "polarize", "Polarize ", "r1", &judge).unwrap();
        assert!(same.verdict);
        let diff = judge_equivalence("goal_category", "alpha", "beta", "r1", &judge).unwrap();
        assert!(!diff.verdict);
    }

    #[test]
    fn empty_texts_are_precondition_violations() {
        let judge = StringEqualityJudge;
        assert!(judge_equivalence("f", "", "x", "r", &judge).is_err());
        assert!(judge_equivalence("f", "x", " ", "r", &judge).is_err());
    }

    #[test]
    fn entailment_threshold_boundary() {
        struct Fixed(f64);
        impl EntailmentScorer for Fixed {
            fn id(&self) -> &str {
                "fixed"
            }
            fn score(&self, _: &str, _: &str) -> Result<f64, ValidationError> {
                Ok(self.0)
            }
        }
        let below = EntailmentJudge::new(Fixed(0.49), 0.5);
        assert!(!below.judge("f", "a", "b").unwrap().verdict);
        let at = EntailmentJudge::new(Fixed(0.5), 0.5);
        assert!(at.judge("f", "a", "b").unwrap().verdict);
        // Judgment wiring keeps the confidence.
        let j = judge_equivalence("f", "a", "b", "r", &at).unwrap();
        assert_eq!(j.confidence, Some(0.5));
        assert_eq!(j.verdict, j.confidence.unwrap() >= 0.5);
    }

    #[test]
    fn chat_judge_parses_yes_no_and_rejects_noise() {
        let yes_backend = Arc::new(ScriptedBackend::new(
            "judge",
            BackendScript { rules: vec![], default_response: Some("Yes, equivalent.".into()) },
        ));
        let judge = ChatJudge {
            backend: yes_backend,
            gateway: Arc::new(LlmGateway::uncached()),
            model_id: "m".into(),
        };
        assert!(judge.judge("goal_category", "a", "b").unwrap().verdict);

        let noisy = ChatJudge {
            backend: Arc::new(ScriptedBackend::new(
                "judge",
                BackendScript { rules: vec![], default_response: Some("perhaps?".into()) },
            )),
            gateway: Arc::new(LlmGateway::uncached()),
            model_id: "m".into(),
        };
        assert!(matches!(
            noisy.judge("goal_category", "a", "b"),
            Err(ValidationError::JudgeParse(_))
        ));
    }

    #[test]
    fn derangement_never_self_pairs() {
        for n in 2..20 {
            for seed in 0..20 {
                let perm = derangement(n, seed).unwrap();
                assert_eq!(perm.len(), n);
                let mut sorted = perm.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..n).collect::<Vec<_>>(), "must be a permutation");
                assert!(perm.iter().enumerate().all(|(i, &p)| i != p));
            }
        }
        assert!(derangement(1, 0).is_none());
    }

    #[test]
    fn accuracy_counts_match_hand_tally() {
        // 4 records; event_description annotation wrong for exactly one.
        let gts: Vec<GroundTruthCampaign> = (0..4).map(record).collect();
        let mut annotations = BTreeMap::new();
        for (i, gt) in gts.iter().enumerate() {
            let mut a = annotation_from(gt);
            if i == 3 {
                a.event_description = "something else entirely".into();
            }
            annotations.insert(gt.record_id.clone(), a);
        }
        let report =
            evaluate_catalogue(&gts, &annotations, &StringEqualityJudge, 42).unwrap();
        let event = report.rows.iter().find(|r| r.field == "event_description").unwrap();
        assert!((event.accuracy - 0.75).abs() < 1e-12);
        // Crafted fields are unique per record, so the derangement scores 0.
        assert_eq!(event.baseline_true, 0);
    }

    #[test]
    fn missing_annotation_counts_false_and_flags() {
        let gts: Vec<GroundTruthCampaign> = (0..4).map(record).collect();
        let mut annotations = BTreeMap::new();
        for gt in gts.iter().take(3) {
            annotations.insert(gt.record_id.clone(), annotation_from(gt));
        }
        let report =
            evaluate_catalogue(&gts, &annotations, &StringEqualityJudge, 42).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.missing, 1);
        assert!((row.accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_true_judge_is_degenerate() {
        let gts: Vec<GroundTruthCampaign> = (0..3).map(record).collect();
        let annotations: BTreeMap<String, GoalAnnotation> = gts
            .iter()
            .map(|gt| (gt.record_id.clone(), annotation_from(gt)))
            .collect();
        let always_yes = FnJudge::new("always-yes", |_, _, _| JudgeOutcome {
            verdict: true,
            confidence: None,
            raw: "yes".into(),
        });
        let report = evaluate_catalogue(&gts, &annotations, &always_yes, 42).unwrap();
        for row in &report.rows {
            assert_eq!(row.accuracy, 1.0);
            assert_eq!(row.baseline_accuracy, 1.0);
            assert!(row.degenerate);
        }
    }

    #[test]
    fn report_header_carries_caveat() {
        let gts: Vec<GroundTruthCampaign> = (0..2).map(record).collect();
        let annotations: BTreeMap<String, GoalAnnotation> = gts
            .iter()
            .map(|gt| (gt.record_id.clone(), annotation_from(gt)))
            .collect();
        let report = evaluate_catalogue(&gts, &annotations, &StringEqualityJudge, 1).unwrap();
        let mut buf = Vec::new();
        write_eval_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# caveat:"));
        assert!(text.contains("act as an upper bounds"));
        assert!(text.contains("field,judge,accuracy,baseline,n"));
    }

    #[test]
    fn ground_truth_loader_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        std::fs::write(
            &path,
            "record_id,targeted_country,attacking_country,goal_category,goal_description,event_description\n\
             r1,A,B,cat,desc,event\n\
             r2,A,B,,desc,event\n\
             r3,A,B,cat,desc,event\n",
        )
        .unwrap();
        let load = load_ground_truth(&path).unwrap();
        assert_eq!(load.records.len(), 2);
        assert_eq!(load.errors.len(), 1);
        assert!(load.errors[0].contains("goal_category"));
    }

    #[test]
    fn empty_ground_truth_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        std::fs::write(
            &path,
            "record_id,targeted_country,attacking_country,goal_category,goal_description,event_description\n",
        )
        .unwrap();
        assert!(matches!(
            load_ground_truth(&path),
            Err(ValidationError::NoRecords { .. })
        ));
    }
}
