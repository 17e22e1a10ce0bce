//! Corpus ingestion: line-delimited record parsing, hashtag extraction,
//! and corpus statistics.
//!
//! Input files are newline-delimited JSON records (optionally gzipped).
//! Field names vary between platform exports, so parsing is driven by a
//! [`SchemaConfig`] that maps canonical fields to the source field names.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Timelike, Utc};
use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// How a post entered the platform.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PostType {
    Original,
    Repost,
    Reply,
    Quote,
}

impl PostType {
    pub const ALL: [PostType; 4] = [
        PostType::Original,
        PostType::Repost,
        PostType::Reply,
        PostType::Quote,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PostType::Original => "original",
            PostType::Repost => "repost",
            PostType::Reply => "reply",
            PostType::Quote => "quote",
        }
    }

    /// Accepts the common aliases seen in platform exports.
    pub fn parse(s: &str) -> Option<PostType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" | "post" | "tweet" => Some(PostType::Original),
            "repost" | "retweet" | "rt" => Some(PostType::Repost),
            "reply" => Some(PostType::Reply),
            "quote" | "quote_tweet" | "quoted" => Some(PostType::Quote),
            _ => None,
        }
    }
}

impl std::fmt::Display for PostType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A hashtag as written, paired with its canonical matching form.
///
/// `normalized` is the NFKC, lower-cased form of `surface`, applied to a
/// fixpoint so re-normalizing is a no-op. Matching always uses
/// `normalized`; reports show `surface`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizedHashtag {
    pub surface: String,
    pub normalized: String,
}

impl NormalizedHashtag {
    pub fn new(surface: &str) -> Self {
        NormalizedHashtag {
            surface: surface.to_owned(),
            normalized: normalize_hashtag(surface),
        }
    }
}

/// NFKC + lowercase, iterated to a fixpoint.
///
/// A single NFKC+lowercase pass is almost always stable, but a few code
/// points re-compose after case conversion; iterating guarantees the
/// idempotence invariant.
pub fn normalize_hashtag(surface: &str) -> String {
    let mut current = surface.to_owned();
    for _ in 0..4 {
        let next: String = current.nfkc().collect::<String>().to_lowercase();
        if next == current {
            return next;
        }
        current = next;
    }
    current
}

fn is_tag_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Extracts every '#'-prefixed token in order of appearance.
///
/// A token is the maximal run of alphanumeric/underscore characters after
/// a `#`; a `#` with no such run yields nothing. Duplicates are retained
/// and order is preserved, since coordination matching compares full
/// ordered sequences.
pub fn extract_hashtag_sequence(text: &str) -> Vec<NormalizedHashtag> {
    let mut tags = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '#' {
            continue;
        }
        let start = i + c.len_utf8();
        let mut end = start;
        while let Some(&(j, d)) = chars.peek() {
            if is_tag_char(d) {
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        if end > start {
            tags.push(NormalizedHashtag::new(&text[start..end]));
        }
    }
    tags
}

/// Timestamp serde helper: RFC 3339 at second precision, UTC.
pub mod rfc3339_seconds {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

/// Parses a timestamp from the formats seen in platform exports.
///
/// Accepted: RFC 3339 (any offset, converted to UTC), naive
/// `YYYY-MM-DDTHH:MM:SS` / `YYYY-MM-DD HH:MM:SS` (treated as UTC), and
/// integer epoch seconds. Sub-second precision is truncated so that
/// serialize/parse round-trips exactly.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Ok(truncate_to_second(ts.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(naive.and_utc());
        }
    }
    if !raw.is_empty() && raw.chars().all(|c| c.is_ascii_digit()) {
        if let Ok(secs) = raw.parse::<i64>() {
            if let Some(ts) = DateTime::from_timestamp(secs, 0) {
                return Ok(ts);
            }
        }
    }
    Err(format!("unrecognized timestamp `{raw}`"))
}

fn truncate_to_second(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.with_nanosecond(0).unwrap_or(ts)
}

/// One social-media message.
///
/// `hashtags` is always derived from `text` by [`extract_hashtag_sequence`];
/// any hashtag field present in the source record is ignored so the
/// invariant "hashtags match the text" holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub account_id: String,
    #[serde(with = "rfc3339_seconds")]
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub post_type: PostType,
    #[serde(default)]
    pub language: Option<String>,
    pub hashtags: Vec<NormalizedHashtag>,
}

impl Post {
    pub fn new(
        post_id: impl Into<String>,
        account_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        text: impl Into<String>,
        post_type: PostType,
        language: Option<String>,
    ) -> Self {
        let text = text.into();
        let hashtags = extract_hashtag_sequence(&text);
        Post {
            post_id: post_id.into(),
            account_id: account_id.into(),
            timestamp: truncate_to_second(timestamp),
            text,
            post_type,
            language,
            hashtags,
        }
    }
}

/// Maps canonical post fields to the field names used in a source file.
///
/// `post_type` and `language` are optional: records without a mapped (or
/// present) post-type field default to `original`, and language defaults
/// to absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub post_id: String,
    pub account_id: String,
    pub timestamp: String,
    pub text: String,
    #[serde(default)]
    pub post_type: Option<String>,
    #[serde(default)]
    pub language: Option<String>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            post_id: "post_id".into(),
            account_id: "account_id".into(),
            timestamp: "timestamp".into(),
            text: "text".into(),
            post_type: Some("post_type".into()),
            language: Some("language".into()),
        }
    }
}

/// Recoverable per-record parse failure; carries the 1-based line number.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: invalid JSON: {reason}")]
    Json { line: u64, reason: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: u64, field: String },
    #[error("line {line}: invalid field `{field}`: {reason}")]
    InvalidField {
        line: u64,
        field: String,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read corpus `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn field_str<'v>(
    value: &'v serde_json::Value,
    name: &str,
    line: u64,
) -> Result<&'v str, ParseError> {
    match value.get(name) {
        Some(serde_json::Value::String(s)) => Ok(s.as_str()),
        Some(serde_json::Value::Null) | None => Err(ParseError::MissingField {
            line,
            field: name.to_owned(),
        }),
        Some(other) => Err(ParseError::InvalidField {
            line,
            field: name.to_owned(),
            reason: format!("expected a string, got {other}"),
        }),
    }
}

/// Parses one line-delimited JSON record into a [`Post`].
pub fn parse_post_record(
    raw_line: &str,
    schema: &SchemaConfig,
    line: u64,
) -> Result<Post, ParseError> {
    let value: serde_json::Value =
        serde_json::from_str(raw_line).map_err(|e| ParseError::Json {
            line,
            reason: e.to_string(),
        })?;

    let post_id = field_str(&value, &schema.post_id, line)?;
    if post_id.is_empty() {
        return Err(ParseError::InvalidField {
            line,
            field: schema.post_id.clone(),
            reason: "empty post id".into(),
        });
    }
    let account_id = field_str(&value, &schema.account_id, line)?;
    if account_id.is_empty() {
        return Err(ParseError::InvalidField {
            line,
            field: schema.account_id.clone(),
            reason: "empty account id".into(),
        });
    }

    let timestamp = match value.get(&schema.timestamp) {
        Some(serde_json::Value::String(s)) => {
            parse_timestamp(s).map_err(|reason| ParseError::InvalidField {
                line,
                field: schema.timestamp.clone(),
                reason,
            })?
        }
        Some(serde_json::Value::Number(n)) => {
            let secs = n.as_i64().ok_or_else(|| ParseError::InvalidField {
                line,
                field: schema.timestamp.clone(),
                reason: format!("non-integer epoch `{n}`"),
            })?;
            DateTime::from_timestamp(secs, 0).ok_or_else(|| ParseError::InvalidField {
                line,
                field: schema.timestamp.clone(),
                reason: format!("epoch seconds out of range: {secs}"),
            })?
        }
        _ => {
            return Err(ParseError::MissingField {
                line,
                field: schema.timestamp.clone(),
            })
        }
    };

    let text = field_str(&value, &schema.text, line)?;

    let post_type = match schema.post_type.as_deref() {
        Some(name) => match value.get(name) {
            Some(serde_json::Value::String(s)) => {
                PostType::parse(s).ok_or_else(|| ParseError::InvalidField {
                    line,
                    field: name.to_owned(),
                    reason: format!("unknown post type `{s}`"),
                })?
            }
            _ => PostType::Original,
        },
        None => PostType::Original,
    };

    let language = schema
        .language
        .as_deref()
        .and_then(|name| value.get(name))
        .and_then(|v| v.as_str())
        .filter(|s| !s.is_empty())
        .map(str::to_owned);

    Ok(Post::new(
        post_id, account_id, timestamp, text, post_type, language,
    ))
}

/// Filters applied while streaming a corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusFilters {
    /// Half-open UTC range `[start, end)`.
    pub date_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    pub post_types: Option<BTreeSet<PostType>>,
}

impl CorpusFilters {
    fn accepts(&self, post: &Post) -> bool {
        if let Some((start, end)) = self.date_range {
            if post.timestamp < start || post.timestamp >= end {
                return false;
            }
        }
        if let Some(types) = &self.post_types {
            if !types.contains(&post.post_type) {
                return false;
            }
        }
        true
    }
}

/// Streaming corpus reader.
///
/// Parse errors are counted (a bounded sample is retained for reporting)
/// and iteration continues; only failure to open the file is fatal.
pub struct CorpusReader {
    lines: std::io::Lines<BufReader<Box<dyn Read>>>,
    schema: SchemaConfig,
    filters: CorpusFilters,
    line_no: u64,
    error_count: u64,
    error_samples: Vec<String>,
}

const MAX_ERROR_SAMPLES: usize = 20;

impl CorpusReader {
    pub fn error_count(&self) -> u64 {
        self.error_count
    }

    pub fn error_samples(&self) -> &[String] {
        &self.error_samples
    }

    fn record_error(&mut self, err: impl std::fmt::Display) {
        self.error_count += 1;
        if self.error_samples.len() < MAX_ERROR_SAMPLES {
            self.error_samples.push(err.to_string());
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Post;

    fn next(&mut self) -> Option<Post> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.record_error(format!("read error after line {}: {e}", self.line_no));
                    return None;
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match parse_post_record(&line, &self.schema, self.line_no) {
                Ok(post) => {
                    if self.filters.accepts(&post) {
                        return Some(post);
                    }
                }
                Err(e) => self.record_error(e),
            }
        }
    }
}

/// Opens a corpus file (gzipped if the path ends in `.gz`) for streaming.
pub fn load_corpus(
    path: impl AsRef<Path>,
    schema: SchemaConfig,
    filters: CorpusFilters,
) -> Result<CorpusReader, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(CorpusReader {
        lines: BufReader::new(reader).lines(),
        schema,
        filters,
        line_no: 0,
        error_count: 0,
        error_samples: Vec::new(),
    })
}

/// Daily post counts split by whether the author is coordinated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub coordinated: u64,
    pub non_coordinated: u64,
}

/// Corpus-level tallies: totals by type, language, and UTC day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_posts: u64,
    pub by_type: BTreeMap<PostType, u64>,
    pub by_language: BTreeMap<String, u64>,
    pub daily: BTreeMap<NaiveDate, DailyCounts>,
}

impl CorpusStats {
    /// Writes the daily series as `date,coordinated_count,non_coordinated_count`.
    pub fn write_daily_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "date,coordinated_count,non_coordinated_count")?;
        for (date, counts) in &self.daily {
            writeln!(w, "{date},{},{}", counts.coordinated, counts.non_coordinated)?;
        }
        Ok(())
    }
}

/// Tallies a post stream. Stats merge associatively, so shards can be
/// counted independently and combined with [`CorpusStats::merge`].
pub fn corpus_stats<'a>(
    posts: impl IntoIterator<Item = &'a Post>,
    coordinated_accounts: Option<&BTreeSet<String>>,
) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for post in posts {
        stats.total_posts += 1;
        *stats.by_type.entry(post.post_type).or_default() += 1;
        let lang = post.language.as_deref().unwrap_or("und");
        *stats.by_language.entry(lang.to_owned()).or_default() += 1;
        let day = post.timestamp.date_naive();
        let entry = stats.daily.entry(day).or_default();
        let coordinated = coordinated_accounts
            .map(|set| set.contains(&post.account_id))
            .unwrap_or(false);
        if coordinated {
            entry.coordinated += 1;
        } else {
            entry.non_coordinated += 1;
        }
    }
    stats
}

impl CorpusStats {
    pub fn merge(&mut self, other: &CorpusStats) {
        self.total_posts += other.total_posts;
        for (k, v) in &other.by_type {
            *self.by_type.entry(*k).or_default() += v;
        }
        for (k, v) in &other.by_language {
            *self.by_language.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.daily {
            let e = self.daily.entry(*k).or_default();
            e.coordinated += v.coordinated;
            e.non_coordinated += v.non_coordinated;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn extracts_tags_in_order_with_duplicates_case_folded() {
        let tags = extract_hashtag_sequence("#B #a #B");
        let norm: Vec<&str> = tags.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!(norm, ["b", "a", "b"]);
        let surf: Vec<&str> = tags.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surf, ["B", "a", "B"]);
    }

    #[test]
    fn no_tags_yields_empty() {
        assert!(extract_hashtag_sequence("no tags here").is_empty());
    }

    #[test]
    fn trailing_punctuation_is_excluded() {
        let tags = extract_hashtag_sequence("ends with #Macron2022.");
        let norm: Vec<&str> = tags.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!(norm, ["macron2022"]);
    }

    #[test]
    fn bare_hash_and_punctuation_hash_ignored(){
        assert!(extract_hashtag_sequence("# ! #! ended #").is_empty());
    }

    #[test]
    fn adjacent_tags_split() {
        let tags = extract_hashtag_sequence("#a#b and##c");
        let norm: Vec<&str> = tags.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!(norm, ["a", "b", "c"]);
    }

    #[test]
    fn normalization_is_idempotent_on_samples() {
        for s in ["Ukraine", "ÉLECTION", "ｆｕｌｌｗｉｄｔｈ", "İstanbul", "ＭＡＣＲＯＮ２０２２"] {
            let once = normalize_hashtag(s);
            assert_eq!(normalize_hashtag(&once), once, "not idempotent for {s}");
        }
    }

    #[test]
    fn parse_record_extracts_hashtags() {
        let schema = SchemaConfig::default();
        let line = r#"{"post_id":"1","account_id":"a","timestamp":"2022-04-01T10:00:00Z","text":"Vote! #a #b","post_type":"original"}"#;
        let post = parse_post_record(line, &schema, 1).unwrap();
        let norm: Vec<&str> = post.hashtags.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!(norm, ["a", "b"]);
        assert_eq!(post.post_type, PostType::Original);
    }

    #[test]
    fn missing_account_id_names_the_field() {
        let schema = SchemaConfig::default();
        let line = r#"{"post_id":"1","timestamp":"2022-04-01T10:00:00Z","text":"x"}"#;
        let err = parse_post_record(line, &schema, 7).unwrap_err();
        match err {
            ParseError::MissingField { line, field } => {
                assert_eq!(line, 7);
                assert_eq!(field, "account_id");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn schema_mapping_renames_fields() {
        let schema = SchemaConfig {
            post_id: "id".into(),
            account_id: "author_id".into(),
            timestamp: "created_at".into(),
            text: "body".into(),
            post_type: Some("kind".into()),
            language: Some("lang".into()),
        };
        let line = r#"{"id":"9","author_id":"acct","created_at":1649066400,"body":"hi #x","kind":"retweet","lang":"fr"}"#;
        let post = parse_post_record(line, &schema, 1).unwrap();
        assert_eq!(post.post_type, PostType::Repost);
        assert_eq!(post.language.as_deref(), Some("fr"));
        assert_eq!(post.timestamp, Utc.with_ymd_and_hms(2022, 4, 4, 10, 0, 0).unwrap());
    }

    #[test]
    fn timestamp_formats_round_trip() {
        for raw in [
            "2022-04-10T08:30:00Z",
            "2022-04-10T08:30:00+02:00",
            "2022-04-10 08:30:00",
            "2022-04-10T08:30:00.123Z",
            "1649579400",
        ] {
            let parsed = parse_timestamp(raw).unwrap();
            let rendered = parsed.to_rfc3339_opts(SecondsFormat::Secs, true);
            assert_eq!(parse_timestamp(&rendered).unwrap(), parsed, "for {raw}");
        }
    }

    #[test]
    fn post_serde_round_trips_every_field() {
        let post = Post::new(
            "p1",
            "acct",
            ts("2022-04-10T08:30:00Z"),
            "Slava #Ukraini! #StopWar",
            PostType::Quote,
            Some("fr".into()),
        );
        let json = serde_json::to_string(&post).unwrap();
        let back: Post = serde_json::from_str(&json).unwrap();
        assert_eq!(back, post);
    }

    #[test]
    fn stats_partition_counts() {
        let posts = vec![
            Post::new("1", "coord", ts("2022-04-10T01:00:00Z"), "a", PostType::Original, None),
            Post::new("2", "org1", ts("2022-04-10T02:00:00Z"), "b", PostType::Reply, None),
            Post::new("3", "org2", ts("2022-04-10T03:00:00Z"), "c", PostType::Original, None),
        ];
        let coordinated: BTreeSet<String> = ["coord".to_owned()].into();
        let stats = corpus_stats(&posts, Some(&coordinated));
        let day = stats.daily.values().next().unwrap();
        assert_eq!((day.coordinated, day.non_coordinated), (1, 2));
        assert_eq!(stats.total_posts, 3);
    }

    #[test]
    fn empty_stream_yields_zero_stats() {
        let stats = corpus_stats(&[], None);
        assert_eq!(stats, CorpusStats::default());
    }

    #[test]
    fn stats_merge_equals_sequential() {
        let mk = |i: u32, acct: &str| {
            Post::new(
                format!("p{i}"),
                acct,
                ts("2022-04-10T01:00:00Z") + chrono::Duration::hours(i as i64 * 7),
                format!("text {i}"),
                PostType::ALL[(i % 4) as usize],
                if i % 3 == 0 { Some("fr".into()) } else { None },
            )
        };
        let posts: Vec<Post> = (0..40).map(|i| mk(i, &format!("a{}", i % 9))).collect();
        let coord: BTreeSet<String> = ["a1".to_owned(), "a2".to_owned()].into();
        let sequential = corpus_stats(&posts, Some(&coord));
        let mut merged = corpus_stats(&posts[..17], Some(&coord));
        merged.merge(&corpus_stats(&posts[17..], Some(&coord)));
        assert_eq!(merged, sequential);
    }
}
