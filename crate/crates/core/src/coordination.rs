//! Coordinated-account detection.
//!
//! Two accounts are coordinated when each has a post whose full ordered
//! hashtag sequence (length >= 3) is identical to the other's. Posts are
//! reduced to sequence fingerprints, fingerprints with two or more
//! distinct accounts become groups, and campaigns are the connected
//! components of the account graph induced by those groups.
//!
//! Components are built from star edges (every group member united with
//! one representative) rather than O(k^2) cliques; the resulting
//! partition is identical and the largest groups can hold tens of
//! thousands of accounts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{Post, PostType};

/// Minimum hashtag-sequence length for a post to count toward coordination.
pub const MIN_FINGERPRINT_HASHTAGS: usize = 3;

/// Default minimum campaign size kept by [`filter_campaigns`].
pub const DEFAULT_MIN_CAMPAIGN_ACCOUNTS: usize = 10;

/// Stable 128-bit digest of a full normalized hashtag sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    #[serde(with = "hex16")]
    pub digest: [u8; 16],
    pub length: u32,
}

impl Fingerprint {
    pub fn digest_hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

mod hex16 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        s.serialize_str(&hex)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let hex = String::deserialize(d)?;
        if hex.len() != 32 {
            return Err(serde::de::Error::custom("expected 32 hex chars"));
        }
        let mut out = [0u8; 16];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).map_err(serde::de::Error::custom)?;
            out[i] = u8::from_str_radix(s, 16).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

/// Digest of a normalized sequence: first 16 bytes of SHA-256 over the
/// NUL-joined tags. Stable across runs and platforms.
fn sequence_digest<'a>(normalized: impl Iterator<Item = &'a str>) -> [u8; 16] {
    let mut hasher = Sha256::new();
    let mut first = true;
    for tag in normalized {
        if !first {
            hasher.update([0u8]);
        }
        hasher.update(tag.as_bytes());
        first = false;
    }
    let full = hasher.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&full[..16]);
    out
}

/// Fingerprints a post's full normalized hashtag sequence, or `None` when
/// the post carries fewer than [`MIN_FINGERPRINT_HASHTAGS`] hashtags.
pub fn fingerprint(post: &Post) -> Option<Fingerprint> {
    fingerprint_sequence(
        &post
            .hashtags
            .iter()
            .map(|h| h.normalized.as_str())
            .collect::<Vec<_>>(),
        MIN_FINGERPRINT_HASHTAGS,
    )
}

fn fingerprint_sequence(normalized: &[&str], min_len: usize) -> Option<Fingerprint> {
    if normalized.len() < min_len {
        return None;
    }
    Some(Fingerprint {
        digest: sequence_digest(normalized.iter().copied()),
        length: normalized.len() as u32,
    })
}

/// A fingerprint shared by two or more distinct accounts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintGroup {
    pub fingerprint: Fingerprint,
    pub accounts: BTreeSet<String>,
    /// The normalized sequence, kept for reports.
    pub example_sequence: Vec<String>,
}

/// How post sequences are matched into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// Full hashtag sequences must be identical (the default rule).
    #[default]
    FullSequence,
    /// Any shared contiguous ordered run of length >= `min_hashtags`
    /// links two posts. Off by default; broadens matching.
    SubRun,
}

#[derive(Debug, Clone)]
pub struct GroupingOptions {
    /// Post types considered. Reposts are excluded by default: a repost
    /// mechanically copies the original's hashtags and would link
    /// ordinary sharers.
    pub include_types: BTreeSet<PostType>,
    pub rule: MatchRule,
    pub min_hashtags: usize,
}

impl Default for GroupingOptions {
    fn default() -> Self {
        GroupingOptions {
            include_types: [PostType::Original, PostType::Reply, PostType::Quote].into(),
            rule: MatchRule::FullSequence,
            min_hashtags: MIN_FINGERPRINT_HASHTAGS,
        }
    }
}

impl GroupingOptions {
    pub fn all_types() -> Self {
        GroupingOptions {
            include_types: PostType::ALL.into(),
            ..Default::default()
        }
    }
}

/// Groups posts by sequence fingerprint and keeps groups with at least
/// two distinct accounts. An account posting the same sequence many
/// times counts once per group. Output is sorted by digest so the result
/// is independent of post order.
pub fn group_by_fingerprint<'a>(
    posts: impl IntoIterator<Item = &'a Post>,
    options: &GroupingOptions,
) -> Vec<FingerprintGroup> {
    let mut groups: HashMap<Fingerprint, (BTreeSet<String>, Vec<String>)> = HashMap::new();
    for post in posts {
        if !options.include_types.contains(&post.post_type) {
            continue;
        }
        let normalized: Vec<&str> = post.hashtags.iter().map(|h| h.normalized.as_str()).collect();
        match options.rule {
            MatchRule::FullSequence => {
                if let Some(fp) = fingerprint_sequence(&normalized, options.min_hashtags) {
                    groups
                        .entry(fp)
                        .or_insert_with(|| {
                            (BTreeSet::new(), normalized.iter().map(|s| s.to_string()).collect())
                        })
                        .0
                        .insert(post.account_id.clone());
                }
            }
            MatchRule::SubRun => {
                for start in 0..normalized.len() {
                    for end in (start + options.min_hashtags)..=normalized.len() {
                        let window = &normalized[start..end];
                        if let Some(fp) = fingerprint_sequence(window, options.min_hashtags) {
                            groups
                                .entry(fp)
                                .or_insert_with(|| {
                                    (BTreeSet::new(), window.iter().map(|s| s.to_string()).collect())
                                })
                                .0
                                .insert(post.account_id.clone());
                        }
                    }
                }
            }
        }
    }

    let mut out: Vec<FingerprintGroup> = groups
        .into_iter()
        .filter(|(_, (accounts, _))| accounts.len() >= 2)
        .map(|(fingerprint, (accounts, example_sequence))| FingerprintGroup {
            fingerprint,
            accounts,
            example_sequence,
        })
        .collect();
    out.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
    out
}

/// A connected component of coordinated accounts.
///
/// `campaign_id` ranks by size descending, ties broken by the smallest
/// member account id, starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: u32,
    pub size: usize,
    pub accounts: BTreeSet<String>,
    /// Fingerprints of the groups that contributed members.
    pub fingerprint_groups: Vec<Fingerprint>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut x = x;
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Extracts campaigns as connected components of the coordination graph.
///
/// Every account inside a group is united with the group's first member
/// (star edges); components equal those of the full pairwise clique.
pub fn extract_campaigns(groups: &[FingerprintGroup]) -> Vec<Campaign> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for group in groups {
        for account in &group.accounts {
            let next = index.len();
            index.entry(account.as_str()).or_insert(next);
        }
    }
    let mut uf = UnionFind::new(index.len());
    for group in groups {
        let mut members = group.accounts.iter();
        let Some(first) = members.next() else { continue };
        let first_idx = index[first.as_str()];
        for member in members {
            uf.union(first_idx, index[member.as_str()]);
        }
    }

    let mut components: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (account, &idx) in &index {
        let root = uf.find(idx);
        components.entry(root).or_default().insert((*account).to_owned());
    }
    let mut group_lists: BTreeMap<usize, Vec<Fingerprint>> = BTreeMap::new();
    for group in groups {
        let any = group.accounts.iter().next().expect("groups have >=2 accounts");
        let root = uf.find(index[any.as_str()]);
        group_lists.entry(root).or_default().push(group.fingerprint);
    }

    let mut campaigns: Vec<Campaign> = components
        .into_iter()
        .map(|(root, accounts)| {
            let mut fps = group_lists.remove(&root).unwrap_or_default();
            fps.sort();
            Campaign {
                campaign_id: 0,
                size: accounts.len(),
                accounts,
                fingerprint_groups: fps,
            }
        })
        .collect();
    rank_campaigns(&mut campaigns);
    campaigns
}

/// Orders by size descending (ties: smallest member account id) and
/// assigns 1-based ids.
fn rank_campaigns(campaigns: &mut [Campaign]) {
    campaigns.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then_with(|| a.accounts.iter().next().cmp(&b.accounts.iter().next()))
    });
    for (i, campaign) in campaigns.iter_mut().enumerate() {
        campaign.campaign_id = (i + 1) as u32;
    }
}

/// Keeps campaigns with at least `min_size` accounts and re-ranks ids.
pub fn filter_campaigns(campaigns: Vec<Campaign>, min_size: usize) -> Vec<Campaign> {
    let mut kept: Vec<Campaign> = campaigns.into_iter().filter(|c| c.size >= min_size).collect();
    rank_campaigns(&mut kept);
    kept
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("brute-force oracle limited to {limit} accounts, got {got}")]
    TooManyAccounts { limit: usize, got: usize },
}

const ORACLE_ACCOUNT_LIMIT: usize = 200;

/// Test oracle: checks every account pair directly against the matching
/// rule (each has a post with an identical full hashtag sequence of
/// length >= 3) and returns the components of the resulting graph,
/// ordered like [`extract_campaigns`] output.
///
/// Quadratic in accounts; refuses inputs above a small guard so it stays
/// an oracle, not a pipeline.
pub fn brute_force_components(posts: &[Post]) -> Result<Vec<BTreeSet<String>>, OracleError> {
    let mut sequences: BTreeMap<&str, BTreeSet<Vec<&str>>> = BTreeMap::new();
    for post in posts {
        if post.hashtags.len() < MIN_FINGERPRINT_HASHTAGS {
            continue;
        }
        let seq: Vec<&str> = post.hashtags.iter().map(|h| h.normalized.as_str()).collect();
        sequences.entry(post.account_id.as_str()).or_default().insert(seq);
    }
    if sequences.len() > ORACLE_ACCOUNT_LIMIT {
        return Err(OracleError::TooManyAccounts {
            limit: ORACLE_ACCOUNT_LIMIT,
            got: sequences.len(),
        });
    }

    let accounts: Vec<&str> = sequences.keys().copied().collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); accounts.len()];
    for i in 0..accounts.len() {
        for j in (i + 1)..accounts.len() {
            let (sa, sb) = (&sequences[accounts[i]], &sequences[accounts[j]]);
            if sa.iter().any(|seq| sb.contains(seq)) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }

    let mut visited = vec![false; accounts.len()];
    let mut components: Vec<BTreeSet<String>> = Vec::new();
    for start in 0..accounts.len() {
        if visited[start] || adjacency[start].is_empty() {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if visited[node] {
                continue;
            }
            visited[node] = true;
            component.insert(accounts[node].to_owned());
            stack.extend(adjacency[node].iter().copied());
        }
        components.push(component);
    }
    components.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.iter().next().cmp(&b.iter().next()))
    });
    Ok(components)
}

/// All posts authored by campaign members, chronologically ordered
/// (ties broken by post id for determinism).
pub fn campaign_posts<'a>(
    campaign: &Campaign,
    posts: impl IntoIterator<Item = &'a Post>,
) -> Vec<&'a Post> {
    let mut out: Vec<&Post> = posts
        .into_iter()
        .filter(|p| campaign.accounts.contains(&p.account_id))
        .collect();
    out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.post_id.cmp(&b.post_id)));
    out
}

/// Writes one JSON record per campaign: id, size, member accounts.
pub fn write_campaigns_jsonl<W: Write>(campaigns: &[Campaign], mut w: W) -> std::io::Result<()> {
    for campaign in campaigns {
        let line = serde_json::to_string(campaign)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Writes one JSON record per fingerprint group: digest, sequence, accounts.
pub fn write_groups_jsonl<W: Write>(groups: &[FingerprintGroup], mut w: W) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        digest: String,
        length: u32,
        account_count: usize,
        sequence: &'a [String],
    }
    for group in groups {
        let row = Row {
            digest: group.fingerprint.digest_hex(),
            length: group.fingerprint.length,
            account_count: group.accounts.len(),
            sequence: &group.example_sequence,
        };
        writeln!(w, "{}", serde_json::to_string(&row)?)?;
    }
    Ok(())
}

/// Cluster-size histogram: `campaign_id,account_count`, largest first.
pub fn write_histogram_csv<W: Write>(campaigns: &[Campaign], mut w: W) -> std::io::Result<()> {
    writeln!(w, "campaign_id,account_count")?;
    for campaign in campaigns {
        writeln!(w, "{},{}", campaign.campaign_id, campaign.size)?;
    }
    Ok(())
}
