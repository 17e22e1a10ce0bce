//! Campaign-slice annotation.
//!
//! A campaign's posts are filtered to one concern and one event window,
//! down-sampled, and sent to a chat backend under three schemas: campaign
//! goal/attribution, the eight narrative tactics, and narrative framing.
//! Responses are requested in a `Field: value` layout and parsed
//! tolerantly; the raw text is always retained and structured fields are
//! a function of the raw text alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concern::ConcernLabelSet;
use crate::gateway::{ChatBackend, CompletionRequest, LlmGateway};
use crate::ingest::Post;

/// Placeholder for structured fields the parser could not locate.
pub const UNPARSED: &str = "unparsed";

/// A named half-open time window `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub name: String,
    #[serde(with = "crate::ingest::rfc3339_seconds")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::ingest::rfc3339_seconds")]
    pub end: DateTime<Utc>,
}

impl EventWindow {
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start && ts < self.end
    }
}

/// Ordered, non-overlapping event windows around the dates that matter
/// for a dataset (e.g. election rounds).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindowConfig {
    pub windows: Vec<EventWindow>,
}

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("cannot read windows `{path}`: {reason}")]
    Read { path: String, reason: String },
    #[error("no windows configured")]
    Empty,
    #[error("window `{0}` has start >= end")]
    EmptyWindow(String),
    #[error("duplicate window name `{0}`")]
    DuplicateName(String),
    #[error("windows `{0}` and `{1}` overlap or are out of order")]
    Overlap(String, String),
}

impl EventWindowConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, WindowError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| WindowError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let config: EventWindowConfig = toml::from_str(&raw).map_err(|e| WindowError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.windows.is_empty() {
            return Err(WindowError::Empty);
        }
        let mut names = std::collections::BTreeSet::new();
        for window in &self.windows {
            if window.start >= window.end {
                return Err(WindowError::EmptyWindow(window.name.clone()));
            }
            if !names.insert(window.name.as_str()) {
                return Err(WindowError::DuplicateName(window.name.clone()));
            }
        }
        for pair in self.windows.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(WindowError::Overlap(
                    pair[0].name.clone(),
                    pair[1].name.clone(),
                ));
            }
        }
        Ok(())
    }
}

/// A campaign's posts restricted to one concern and one window, sampled
/// down to at most `k` posts for annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSlice {
    pub campaign_id: u32,
    /// `None` means all concerns.
    pub concern: Option<String>,
    pub window_name: String,
    pub sampled_posts: Vec<Post>,
    pub sample_seed: u64,
    /// Matching posts before sampling; zero flags an empty slice.
    pub available: usize,
}

impl CampaignSlice {
    pub fn is_empty(&self) -> bool {
        self.sampled_posts.is_empty()
    }
}

/// Default sample size per slice.
pub const DEFAULT_SLICE_K: usize = 20;

/// Derives the per-slice sampling seed from the run seed and slice
/// coordinates, so slices are independent and reproducible.
fn slice_seed(master: u64, campaign_id: u32, concern: Option<&str>, window: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"slice");
    hasher.update(master.to_le_bytes());
    hasher.update(campaign_id.to_le_bytes());
    hasher.update(concern.unwrap_or("<all>").as_bytes());
    hasher.update([0u8]);
    hasher.update(window.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Slices one campaign's posts: filter by concern, split by window,
/// sample `min(k, available)` per window with seeded reproducibility.
/// Empty slices are returned (flagged by `available == 0`) so callers
/// can report them.
pub fn slice_campaign(
    campaign_id: u32,
    posts: &[&Post],
    labels_by_post: &BTreeMap<String, ConcernLabelSet>,
    concern: Option<&str>,
    windows: &EventWindowConfig,
    k: usize,
    master_seed: u64,
) -> Vec<CampaignSlice> {
    let matching: Vec<&&Post> = posts
        .iter()
        .filter(|post| match concern {
            None => true,
            Some(name) => labels_by_post
                .get(&post.post_id)
                .is_some_and(|set| set.labels.contains(name)),
        })
        .collect();

    windows
        .windows
        .iter()
        .map(|window| {
            let in_window: Vec<&Post> = matching
                .iter()
                .filter(|post| window.contains(post.timestamp))
                .map(|post| **post)
                .collect();
            let seed = slice_seed(master_seed, campaign_id, concern, &window.name);
            let sampled: Vec<Post> = if in_window.len() <= k {
                in_window.iter().map(|p| (*p).clone()).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut indices = rand::seq::index::sample(&mut rng, in_window.len(), k).into_vec();
                indices.sort_unstable();
                indices.into_iter().map(|i| in_window[i].clone()).collect()
            };
            CampaignSlice {
                campaign_id,
                concern: concern.map(str::to_owned),
                window_name: window.name.clone(),
                available: in_window.len(),
                sampled_posts: sampled,
                sample_seed: seed,
            }
        })
        .collect()
}

/// The eight narrative maneuver tactics annotated per slice. The four
/// positive and four negative message maneuvers are kept; network-level
/// maneuvers cannot be measured from post text alone.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum BendTactic {
    Engage,
    Explain,
    Excite,
    Enhance,
    Dismiss,
    Distort,
    Dismay,
    Distract,
}

impl BendTactic {
    pub const ALL: [BendTactic; 8] = [
        BendTactic::Engage,
        BendTactic::Explain,
        BendTactic::Excite,
        BendTactic::Enhance,
        BendTactic::Dismiss,
        BendTactic::Distort,
        BendTactic::Dismay,
        BendTactic::Distract,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BendTactic::Engage => "Engage",
            BendTactic::Explain => "Explain",
            BendTactic::Excite => "Excite",
            BendTactic::Enhance => "Enhance",
            BendTactic::Dismiss => "Dismiss",
            BendTactic::Distort => "Distort",
            BendTactic::Dismay => "Dismay",
            BendTactic::Distract => "Distract",
        }
    }

    pub fn definition(&self) -> &'static str {
        match self {
            BendTactic::Engage => "bring up related/relevant topics",
            BendTactic::Explain => "provide details on or elaborate the topic",
            BendTactic::Excite => "elicit positive emotions",
            BendTactic::Enhance => "encourage messages on the topic",
            BendTactic::Dismiss => "explain why topic is unimportant",
            BendTactic::Distort => "alter the main message of a topic",
            BendTactic::Dismay => "elicit negative emotions",
            BendTactic::Distract => "discuss a different, irrelevant topic",
        }
    }
}

/// Goal and attribution fields for one slice. Fields the backend did not
/// answer are set to [`UNPARSED`]; the raw response is kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalAnnotation {
    pub targeted_country: String,
    pub attacking_country: String,
    pub goal_category: String,
    pub goal_description: String,
    pub event_description: String,
    pub raw_response: String,
}

/// Posts matched to one tactic plus the backend's justification.
/// `post_indices` are 0-based indices into the slice's sampled posts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticFinding {
    pub post_indices: Vec<usize>,
    pub explanation: String,
    pub raw_response: String,
}

/// Exactly the eight tactics, each with its finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BendAnnotation {
    pub tactics: BTreeMap<BendTactic, TacticFinding>,
}

/// Narrative framing fields plus cultural cues and rhetorical fallacies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub problem: String,
    pub cause: String,
    pub remedy: String,
    pub metaphors: String,
    pub catchphrases: String,
    pub frame_examples: String,
    pub cultural_cues: String,
    /// Names restricted to the configured fallacy list plus "other".
    pub rhetorical_fallacies: Vec<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallacyDef {
    pub name: String,
    pub definition: String,
}

/// Named rhetorical fallacies embedded in the framing prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallacyList {
    pub fallacies: Vec<FallacyDef>,
}

impl FallacyList {
    /// The default list of classical intentional rhetorical fallacies.
    pub fn standard() -> Self {
        let defs: [(&str, &str); 12] = [
            ("Ad Hominem", "attacking the speaker instead of the argument"),
            ("Ad Baculum", "backing a claim with a threat of force"),
            ("Ad Populum", "arguing a claim is true because many believe it"),
            ("Appeal to Authority", "resting a claim on an authority rather than evidence"),
            ("Appeal to Emotion", "substituting emotional pressure for evidence"),
            ("Appeal to Ignorance", "treating lack of disproof as proof"),
            ("False Dilemma", "presenting two options as the only possibilities"),
            ("Hasty Generalization", "generalizing from too few cases"),
            ("Red Herring", "diverting attention with an irrelevant point"),
            ("Slippery Slope", "claiming one step inevitably leads to an extreme outcome"),
            ("Straw Man", "refuting a distorted version of the opposing view"),
            ("Tu Quoque", "deflecting criticism by accusing the critic of the same"),
        ];
        FallacyList {
            fallacies: defs
                .into_iter()
                .map(|(name, definition)| FallacyDef {
                    name: name.into(),
                    definition: definition.into(),
                })
                .collect(),
        }
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| AnnotateError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        toml::from_str(&raw).map_err(|e| AnnotateError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("slice has no posts to annotate")]
    EmptySlice,
    #[error("cannot read config `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("backend failure while annotating: {0}")]
    Backend(String),
}

fn numbered_posts(slice: &CampaignSlice) -> String {
    slice
        .sampled_posts
        .iter()
        .enumerate()
        .map(|(i, post)| format!("{}. {}", i + 1, post.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn slice_header(slice: &CampaignSlice) -> String {
    format!(
        "The numbered posts below were published by one coordinated social-media campaign.\n\nPosts:\n{}",
        numbered_posts(slice)
    )
}

/// Options for the goal prompt. The goal category is asked
/// open-vocabulary by default; supplying `goal_categories` switches to a
/// closed set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalPromptOptions {
    #[serde(default)]
    pub goal_categories: Option<Vec<String>>,
}

/// Builds the goal/attribution prompt: numbered posts plus a request for
/// the five fields in `Field: value` layout.
pub fn build_goal_prompt(
    slice: &CampaignSlice,
    options: &GoalPromptOptions,
) -> Result<String, AnnotateError> {
    if slice.is_empty() {
        return Err(AnnotateError::EmptySlice);
    }
    let category_line = match &options.goal_categories {
        Some(categories) => format!(
            "Goal category: <one of: {}>\n",
            categories.join(", ")
        ),
        None => "Goal category: <short category>\n".to_owned(),
    };
    Ok(format!(
        "{}\n\nAnalyze the campaign behind these posts and answer in exactly this format:\n\
         Targeted country: <country, or unknown>\n\
         Attacking country: <country, or unknown>\n\
         {}\
         Goal description: <one or two sentences>\n\
         Event description: <one or two sentences>",
        slice_header(slice),
        category_line
    ))
}

/// Builds the prompt for one tactic: numbered posts, the tactic's
/// one-line definition, and a request for matching posts plus
/// justification.
pub fn build_bend_prompt(
    slice: &CampaignSlice,
    tactic: BendTactic,
) -> Result<String, AnnotateError> {
    if slice.is_empty() {
        return Err(AnnotateError::EmptySlice);
    }
    Ok(format!(
        "{}\n\nThe \"{}\" tactic means: {}.\n\
         List the posts above that use the {} tactic and justify the choice. Answer in exactly this format:\n\
         Posts: <comma-separated post numbers, or none>\n\
         Explanation: <why these posts match>",
        slice_header(slice),
        tactic.name(),
        tactic.definition(),
        tactic.name()
    ))
}

/// Builds the framing prompt: numbered posts, the fallacy list, and the
/// eight framing fields.
pub fn build_frame_prompt(
    slice: &CampaignSlice,
    fallacies: &FallacyList,
) -> Result<String, AnnotateError> {
    if slice.is_empty() {
        return Err(AnnotateError::EmptySlice);
    }
    let fallacy_lines = fallacies
        .fallacies
        .iter()
        .map(|f| format!("- {}: {}", f.name, f.definition))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(format!(
        "{}\n\nKnown intentional rhetorical fallacies:\n{}\n\n\
         Describe how the campaign frames its message. Answer in exactly this format:\n\
         Problem: <the problem the campaign describes>\n\
         Cause: <the cause of the problem>\n\
         Remedy: <the remedy for this cause>\n\
         Metaphors: <metaphors used in this frame>\n\
         Catchphrases: <catchphrases and slogans>\n\
         Frame examples: <example posts for the problem, cause, and remedy>\n\
         Cultural cues: <cultural cues or in-group language>\n\
         Rhetorical fallacies: <names from the list above, or other, or none>",
        slice_header(slice),
        fallacy_lines
    ))
}

/// Tolerant `Field: value` parser. Field names match case-insensitively
/// at line starts (leading bullets/numbering allowed); values may span
/// lines until the next recognized field. Returns lower-cased field name
/// to trimmed value.
pub(crate) fn parse_fields(raw: &str, field_names: &[&str]) -> BTreeMap<String, String> {
    let mut values: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in raw.lines() {
        let stripped = line
            .trim_start()
            .trim_start_matches(['-', '*', '•'])
            .trim_start();
        let mut matched = false;
        for name in field_names {
            if stripped.len() >= name.len() + 1
                && stripped[..name.len()].eq_ignore_ascii_case(name)
                && stripped[name.len()..].starts_with(':')
            {
                let value = stripped[name.len() + 1..].trim().to_owned();
                let key = name.to_lowercase();
                values.insert(key.clone(), value);
                current = Some(key);
                matched = true;
                break;
            }
        }
        if !matched {
            if let Some(key) = &current {
                let entry = values.get_mut(key).expect("current key exists");
                if !line.trim().is_empty() {
                    if !entry.is_empty() {
                        entry.push('\n');
                    }
                    entry.push_str(line.trim());
                }
            }
        }
    }
    values
}

fn field_or_unparsed(values: &BTreeMap<String, String>, name: &str) -> String {
    match values.get(&name.to_lowercase()) {
        Some(v) if !v.is_empty() => v.clone(),
        _ => UNPARSED.to_owned(),
    }
}

/// Parses a goal response into structured fields; unanswered fields
/// become [`UNPARSED`], the raw text is kept.
pub fn parse_goal_response(raw: &str) -> GoalAnnotation {
    let values = parse_fields(
        raw,
        &[
            "Targeted country",
            "Attacking country",
            "Goal category",
            "Goal description",
            "Event description",
        ],
    );
    GoalAnnotation {
        targeted_country: field_or_unparsed(&values, "Targeted country"),
        attacking_country: field_or_unparsed(&values, "Attacking country"),
        goal_category: field_or_unparsed(&values, "Goal category"),
        goal_description: field_or_unparsed(&values, "Goal description"),
        event_description: field_or_unparsed(&values, "Event description"),
        raw_response: raw.to_owned(),
    }
}

/// Parses "Posts: 1, 3" (1-based in the prompt) into 0-based indices,
/// dropping anything out of range for the slice.
pub fn parse_bend_response(raw: &str, slice_len: usize) -> TacticFinding {
    let values = parse_fields(raw, &["Posts", "Explanation"]);
    let mut indices = Vec::new();
    if let Some(posts) = values.get("posts") {
        for token in posts.split(|c: char| !c.is_ascii_digit()) {
            if token.is_empty() {
                continue;
            }
            if let Ok(number) = token.parse::<usize>() {
                if (1..=slice_len).contains(&number) && !indices.contains(&(number - 1)) {
                    indices.push(number - 1);
                }
            }
        }
    }
    TacticFinding {
        post_indices: indices,
        explanation: field_or_unparsed(&values, "Explanation"),
        raw_response: raw.to_owned(),
    }
}

/// Parses a framing response. Fallacy names are matched
/// case-insensitively against the configured list; any other non-empty
/// answer maps to "other".
pub fn parse_frame_response(raw: &str, fallacies: &FallacyList) -> FrameAnnotation {
    let values = parse_fields(
        raw,
        &[
            "Problem",
            "Cause",
            "Remedy",
            "Metaphors",
            "Catchphrases",
            "Frame examples",
            "Cultural cues",
            "Rhetorical fallacies",
        ],
    );
    let fallacy_text = values
        .get("rhetorical fallacies")
        .cloned()
        .unwrap_or_default();
    let folded = fallacy_text.to_lowercase();
    let mut named: Vec<String> = Vec::new();
    for def in &fallacies.fallacies {
        if folded.contains(&def.name.to_lowercase()) {
            named.push(def.name.clone());
        }
    }
    if named.is_empty() && !folded.trim().is_empty() && folded.trim() != "none" {
        named.push("other".to_owned());
    }
    FrameAnnotation {
        problem: field_or_unparsed(&values, "Problem"),
        cause: field_or_unparsed(&values, "Cause"),
        remedy: field_or_unparsed(&values, "Remedy"),
        metaphors: field_or_unparsed(&values, "Metaphors"),
        catchphrases: field_or_unparsed(&values, "Catchphrases"),
        frame_examples: field_or_unparsed(&values, "Frame examples"),
        cultural_cues: field_or_unparsed(&values, "Cultural cues"),
        rhetorical_fallacies: named,
        raw_response: raw.to_owned(),
    }
}

/// Everything needed to annotate slices against one backend.
pub struct Annotator {
    pub backend: Arc<dyn ChatBackend>,
    pub gateway: Arc<LlmGateway>,
    pub model_id: String,
    pub fallacies: FallacyList,
    pub goal_options: GoalPromptOptions,
}

impl Annotator {
    fn complete(&self, prompt: String, tag: String) -> Result<String, AnnotateError> {
        let request = CompletionRequest::new(self.backend.id(), &self.model_id, prompt, tag);
        self.gateway
            .complete(self.backend.as_ref(), &request)
            .map(|r| r.text)
            .map_err(|e| AnnotateError::Backend(e.to_string()))
    }

    pub fn annotate_goal(&self, slice: &CampaignSlice) -> Result<GoalAnnotation, AnnotateError> {
        let prompt = build_goal_prompt(slice, &self.goal_options)?;
        let raw = self.complete(prompt, "goal".into())?;
        Ok(parse_goal_response(&raw))
    }

    pub fn annotate_bend(&self, slice: &CampaignSlice) -> Result<BendAnnotation, AnnotateError> {
        let mut tactics = BTreeMap::new();
        for tactic in BendTactic::ALL {
            let prompt = build_bend_prompt(slice, tactic)?;
            let raw = self.complete(prompt, format!("bend:{}", tactic.name()))?;
            tactics.insert(tactic, parse_bend_response(&raw, slice.sampled_posts.len()));
        }
        Ok(BendAnnotation { tactics })
    }

    pub fn annotate_frame(&self, slice: &CampaignSlice) -> Result<FrameAnnotation, AnnotateError> {
        let prompt = build_frame_prompt(slice, &self.fallacies)?;
        let raw = self.complete(prompt, "frame".into())?;
        Ok(parse_frame_response(&raw, &self.fallacies))
    }

    /// Runs the fixed prompt order (goal, the eight tactics, frame) for
    /// one slice. The order is fixed so cache layouts are stable.
    pub fn annotate_slice(&self, slice: &CampaignSlice) -> Result<SliceAnnotation, AnnotateError> {
        if slice.is_empty() {
            return Err(AnnotateError::EmptySlice);
        }
        let goal = self.annotate_goal(slice)?;
        let bend = self.annotate_bend(slice)?;
        let frame = self.annotate_frame(slice)?;
        Ok(SliceAnnotation {
            campaign_id: slice.campaign_id,
            concern: slice.concern.clone(),
            window_name: slice.window_name.clone(),
            post_ids: slice.sampled_posts.iter().map(|p| p.post_id.clone()).collect(),
            goal,
            bend,
            frame,
        })
    }
}

/// One annotated slice: slice coordinates plus all three structured
/// annotations (each retaining its raw response).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceAnnotation {
    pub campaign_id: u32,
    pub concern: Option<String>,
    pub window_name: String,
    pub post_ids: Vec<String>,
    pub goal: GoalAnnotation,
    pub bend: BendAnnotation,
    pub frame: FrameAnnotation,
}

/// Records written by the annotate stage: either an annotation or a
/// skipped-empty-slice marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SliceRecord {
    Annotated(Box<SliceAnnotation>),
    Skipped {
        campaign_id: u32,
        concern: Option<String>,
        window_name: String,
        available: usize,
        skipped: bool,
    },
}

pub fn write_slice_records<W: Write>(records: &[SliceRecord], mut w: W) -> std::io::Result<()> {
    for record in records {
        writeln!(w, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}
