//! Collaboration profiling: communication and popularity contrasts between
//! members, 1-d clustering into coarse Low/Medium/High bins, genre and
//! instrument overlap between recurring and occasional work, and heuristics
//! that flag groups looking like established bands rather than
//! platform-native collaborations.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::Featurizer;
use crate::model::{Author, AuthorId, Event, SongForest, SongId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollabKind {
    OnlineOnly,
    EstablishedBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinLabel {
    Low,
    Medium,
    High,
}

/// A recurring collaboration mined from the forest, enriched with
/// communication and popularity measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurringCollaboration {
    pub collab_id: u64,
    pub members: Vec<AuthorId>,
    pub occurrences: u64,
    pub support: f64,
    pub lift: f64,
    /// Songs of the path windows this itemset was counted from.
    pub song_ids: Vec<SongId>,
    /// Messages exchanged between any two distinct members, whole log.
    pub messages: u64,
    /// Invitations sent between distinct members, whole log.
    pub invites: u64,
    /// Spread (max minus min) of total received likes across members.
    pub delta_likes: u64,
    /// Spread of the popularity ranking across members at collection time.
    pub delta_coolness: f64,
    pub bins: BTreeMap<String, BinLabel>,
    pub kind: CollabKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster index per input value, clusters numbered by ascending center.
    pub assignments: Vec<usize>,
    pub centers: Vec<f64>,
    pub wcss: f64,
}

struct SortedView {
    order: Vec<usize>,
    values: Vec<f64>,
}

fn sorted_view(values: &[f64]) -> SortedView {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]).then(a.cmp(b)));
    let sorted = order.iter().map(|i| values[*i]).collect();
    SortedView { order, values: sorted }
}

/// Within-cluster sum of squares of a contiguous partition given as group
/// lengths over the sorted values.
fn partition_stats(sorted: &[f64], groups: &[usize]) -> (Vec<f64>, f64) {
    let mut centers = Vec::with_capacity(groups.len());
    let mut wcss = 0.0;
    let mut start = 0;
    for len in groups {
        let slice = &sorted[start..start + len];
        let mean = slice.iter().sum::<f64>() / *len as f64;
        wcss += slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        centers.push(mean);
        start += len;
    }
    (centers, wcss)
}

fn clustering_from_groups(view: &SortedView, groups: &[usize]) -> Clustering {
    let (centers, wcss) = partition_stats(&view.values, groups);
    let mut assignments = vec![0usize; view.order.len()];
    let mut pos = 0;
    for (cluster, len) in groups.iter().enumerate() {
        for _ in 0..*len {
            assignments[view.order[pos]] = cluster;
            pos += 1;
        }
    }
    Clustering { assignments, centers, wcss }
}

/// Lloyd iterations from quantile-spread initial centers. In one dimension
/// every nearest-center assignment is a contiguous partition of the sorted
/// values, so the result is returned as group lengths.
fn lloyd_groups(sorted: &[f64], k: usize) -> Vec<usize> {
    let n = sorted.len();
    let mut centers: Vec<f64> =
        (0..k).map(|i| sorted[((2 * i + 1) * n / (2 * k)).min(n - 1)]).collect();
    let mut groups = vec![0usize; k];
    for _ in 0..500 {
        let mut next = vec![0usize; k];
        for v in sorted {
            let mut best = 0;
            for c in 1..k {
                if (v - centers[c]).abs() < (v - centers[best]).abs() {
                    best = c;
                }
            }
            next[best] += 1;
        }
        let mut start = 0;
        for (c, len) in next.iter().enumerate() {
            if *len > 0 {
                let slice = &sorted[start..start + len];
                centers[c] = slice.iter().sum::<f64>() / *len as f64;
                start += len;
            }
        }
        if next == groups {
            break;
        }
        groups = next;
    }
    groups
}

/// Exact contiguous-partition search by dynamic programming. Optimal
/// k-clusterings of points on a line are contiguous in sorted order, so this
/// finds the global minimum of the within-cluster sum of squares.
fn optimal_groups(sorted: &[f64], k: usize) -> Vec<usize> {
    let n = sorted.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, v) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    // cost of the half-open sorted range [a, b)
    let cost = |a: usize, b: usize| {
        let cnt = (b - a) as f64;
        let sum = s1[b] - s1[a];
        (s2[b] - s2[a]) - sum * sum / cnt
    };
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut split = vec![vec![0usize; n + 1]; k + 1];
    best[0][0] = 0.0;
    for m in 1..=k {
        for j in m..=n {
            for cut in (m - 1)..j {
                let c = best[m - 1][cut] + cost(cut, j);
                if c < best[m][j] {
                    best[m][j] = c;
                    split[m][j] = cut;
                }
            }
        }
    }
    let mut groups = vec![0usize; k];
    let mut j = n;
    for m in (1..=k).rev() {
        let cut = split[m][j];
        groups[m - 1] = j - cut;
        j = cut;
    }
    groups
}

/// 1-d k-means: Lloyd iterations refined by an exact dynamic program over
/// contiguous partitions, so the returned clustering attains the global
/// minimum within-cluster sum of squares.
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<Clustering> {
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be at least 1".to_string()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidArgument("values must be finite".to_string()));
    }
    let view = sorted_view(values);
    let mut distinct = 0;
    for (i, v) in view.values.iter().enumerate() {
        if i == 0 || *v != view.values[i - 1] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(CoreError::InsufficientData(format!(
            "need at least {k} distinct values, got {distinct}"
        )));
    }
    let lloyd = lloyd_groups(&view.values, k);
    let dp = optimal_groups(&view.values, k);
    let dp_result = clustering_from_groups(&view, &dp);
    if lloyd.iter().any(|len| *len == 0) {
        return Ok(dp_result);
    }
    let lloyd_result = clustering_from_groups(&view, &lloyd);
    if lloyd_result.wcss <= dp_result.wcss + 1e-9 * (1.0 + dp_result.wcss) {
        Ok(lloyd_result)
    } else {
        Ok(dp_result)
    }
}

/// Mean silhouette of a clustering; singleton clusters score 0 for their
/// point, as does a point with no separation at all.
pub fn silhouette(values: &[f64], clustering: &Clustering) -> f64 {
    let k = clustering.centers.len();
    let mut grouped: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (v, c) in values.iter().zip(&clustering.assignments) {
        grouped[*c].push(*v);
    }
    let mut total = 0.0;
    for (v, c) in values.iter().zip(&clustering.assignments) {
        let own = &grouped[*c];
        if own.len() <= 1 {
            continue;
        }
        let a = own.iter().map(|o| (v - o).abs()).sum::<f64>() / (own.len() - 1) as f64;
        let b = (0..k)
            .filter(|o| *o != *c && !grouped[*o].is_empty())
            .map(|o| grouped[o].iter().map(|w| (v - w).abs()).sum::<f64>() / grouped[o].len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / values.len() as f64
}

/// Picks the cluster count in `k_range` with the best mean silhouette,
/// preferring the smaller count on ties.
pub fn choose_k(values: &[f64], k_range: RangeInclusive<usize>) -> Result<(usize, Clustering)> {
    let mut best: Option<(usize, Clustering, f64)> = None;
    for k in k_range {
        let clustering = match kmeans_1d(values, k) {
            Ok(c) => c,
            Err(CoreError::InsufficientData(_)) => continue,
            Err(e) => return Err(e),
        };
        let score = silhouette(values, &clustering);
        match &best {
            Some((_, _, s)) if score <= *s => {}
            _ => best = Some((k, clustering, score)),
        }
    }
    best.map(|(k, c, _)| (k, c)).ok_or_else(|| {
        CoreError::InsufficientData("too few distinct values to cluster".to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinInterval {
    pub lo: f64,
    pub hi: f64,
    pub label: BinLabel,
}

/// Value-to-bin mapping derived from a clustering: each interval spans one
/// cluster's extent, the lowest labeled Low, the highest High, everything
/// between Medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    pub feature: String,
    pub k: usize,
    pub intervals: Vec<BinInterval>,
}

impl Binner {
    pub fn from_clustering(feature: &str, values: &[f64], clustering: &Clustering) -> Binner {
        let k = clustering.centers.len();
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        for (v, c) in values.iter().zip(&clustering.assignments) {
            lo[*c] = lo[*c].min(*v);
            hi[*c] = hi[*c].max(*v);
        }
        let intervals = (0..k)
            .map(|c| BinInterval {
                lo: lo[c],
                hi: hi[c],
                label: if c == 0 {
                    BinLabel::Low
                } else if c == k - 1 {
                    BinLabel::High
                } else {
                    BinLabel::Medium
                },
            })
            .collect();
        Binner { feature: feature.to_string(), k, intervals }
    }

    pub fn fit(feature: &str, values: &[f64]) -> Result<Binner> {
        let (_, clustering) = choose_k(values, 2..=6)?;
        Ok(Binner::from_clustering(feature, values, &clustering))
    }

    /// The interval containing the value, or the nearest one for values in a
    /// gap or outside the fitted range (ties go to the lower interval).
    pub fn assign(&self, value: f64) -> BinLabel {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, interval) in self.intervals.iter().enumerate() {
            let dist = if value < interval.lo {
                interval.lo - value
            } else if value > interval.hi {
                value - interval.hi
            } else {
                0.0
            };
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        self.intervals[best].label
    }
}

/// Set overlap; two empty sets count as fully disjoint.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn strip_name(s: &str) -> Vec<char> {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(|c| c.to_lowercase()).collect()
}

pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut row = vec![i + 1];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + (ca != cb) as usize;
            row.push(sub.min(prev[j + 1] + 1).min(row[j] + 1));
        }
        prev = row;
    }
    prev[b.len()]
}

/// Edit distance over lowercased alphanumeric characters, divided by the
/// longer stripped length. Identical or doubly empty names score 0.
pub fn normalized_name_distance(a: &str, b: &str) -> f64 {
    let (a, b) = (strip_name(a), strip_name(b));
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

pub const DEFAULT_BIO_KEYWORDS: [&str; 8] =
    ["trio", "quartet", "band", "collaboration", "together", "we", "us", "our"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstablishedConfig {
    /// Names at or under this normalized edit distance look like variants of
    /// one shared name.
    pub max_name_distance: f64,
    /// A shared leading run of at least this many characters, covering at
    /// least half the shorter stripped name, also counts.
    pub min_shared_prefix: usize,
    pub bio_keywords: Vec<String>,
}

impl Default for EstablishedConfig {
    fn default() -> Self {
        EstablishedConfig {
            max_name_distance: 0.3,
            min_shared_prefix: 4,
            bio_keywords: DEFAULT_BIO_KEYWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "signal")]
pub enum EstablishedSignal {
    SimilarNames { a: AuthorId, b: AuthorId, distance: f64 },
    SharedNamePrefix { a: AuthorId, b: AuthorId, prefix: String },
    BioKeyword { author: AuthorId, keyword: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstablishedCandidate {
    pub collab_id: u64,
    pub signals: Vec<EstablishedSignal>,
}

/// Flags collaborations whose member names or bios suggest a pre-existing
/// band: near-identical usernames, usernames sharing a long leading run
/// (a band name with different member suffixes), or group language in bios.
/// Candidates are reported for review, never reclassified automatically.
pub fn detect_established(
    collabs: &[RecurringCollaboration],
    authors: &BTreeMap<AuthorId, Author>,
    config: &EstablishedConfig,
) -> Vec<EstablishedCandidate> {
    let mut out = Vec::new();
    for collab in collabs {
        let mut signals = Vec::new();
        for (i, a) in collab.members.iter().enumerate() {
            for b in &collab.members[i + 1..] {
                let (Some(ua), Some(ub)) = (authors.get(a), authors.get(b)) else { continue };
                let distance = normalized_name_distance(&ua.username, &ub.username);
                let (sa, sb) = (strip_name(&ua.username), strip_name(&ub.username));
                if sa.is_empty() || sb.is_empty() {
                    continue;
                }
                if distance <= config.max_name_distance {
                    signals.push(EstablishedSignal::SimilarNames { a: *a, b: *b, distance });
                }
                let prefix = sa.iter().zip(&sb).take_while(|(x, y)| x == y).count();
                let shorter = sa.len().min(sb.len());
                if prefix >= config.min_shared_prefix && 2 * prefix >= shorter {
                    signals.push(EstablishedSignal::SharedNamePrefix {
                        a: *a,
                        b: *b,
                        prefix: sa[..prefix].iter().collect(),
                    });
                }
            }
        }
        for member in &collab.members {
            let Some(author) = authors.get(member) else { continue };
            let words: BTreeSet<String> = author
                .bio
                .split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(|w| w.to_lowercase())
                .collect();
            for keyword in &config.bio_keywords {
                if words.contains(&keyword.to_lowercase()) {
                    signals.push(EstablishedSignal::BioKeyword {
                        author: *member,
                        keyword: keyword.clone(),
                    });
                }
            }
        }
        if !signals.is_empty() {
            out.push(EstablishedCandidate { collab_id: collab.collab_id, signals });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelfOverdubRun {
    pub author: AuthorId,
    pub song_ids: Vec<SongId>,
}

/// Maximal parent-child chains of one author overdubbing themself, at least
/// `min_len` songs long. A chain shared by several root-to-leaf paths is
/// reported once.
pub fn detect_self_overdub_runs(forest: &SongForest, min_len: usize) -> Vec<SelfOverdubRun> {
    let mut runs: BTreeSet<SelfOverdubRun> = BTreeSet::new();
    for tree in &forest.trees {
        for path in tree.paths() {
            let mut start = 0;
            for i in 1..=path.len() {
                let same = i < path.len()
                    && tree.nodes[&path[i]].author_id == tree.nodes[&path[start]].author_id;
                if !same {
                    if i - start >= min_len {
                        runs.insert(SelfOverdubRun {
                            author: tree.nodes[&path[start]].author_id,
                            song_ids: path[start..i].to_vec(),
                        });
                    }
                    start = i;
                }
            }
        }
    }
    runs.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberTagProfile {
    pub collab_id: u64,
    pub author: AuthorId,
    pub recurring_songs: usize,
    pub occasional_songs: usize,
    /// Overlap of genre tags between recurring and occasional work; None
    /// when the member has no songs on one of the sides.
    pub genre_overlap: Option<f64>,
    pub instrument_overlap: Option<f64>,
}

fn tag_set(forest: &SongForest, songs: &[SongId], namespace: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for song in songs {
        if let Some(node) = forest.node(*song) {
            for tag in &node.tags {
                if let Some(rest) = tag.strip_prefix(namespace) {
                    out.insert(rest.to_string());
                }
            }
        }
    }
    out
}

/// Per member of each collaboration, the genre and instrument overlap
/// between songs inside the collaboration and the member's other songs.
pub fn genre_instrument_profile(
    collabs: &[RecurringCollaboration],
    forest: &SongForest,
) -> Vec<MemberTagProfile> {
    let mut by_author: BTreeMap<AuthorId, Vec<SongId>> = BTreeMap::new();
    for tree in &forest.trees {
        for node in tree.nodes.values() {
            by_author.entry(node.author_id).or_default().push(node.song_id);
        }
    }
    let mut out = Vec::new();
    for collab in collabs {
        let collab_songs: BTreeSet<SongId> = collab.song_ids.iter().copied().collect();
        for member in &collab.members {
            let songs = by_author.get(member).cloned().unwrap_or_default();
            let (recurring, occasional): (Vec<SongId>, Vec<SongId>) =
                songs.iter().partition(|s| collab_songs.contains(s));
            let overlap = |namespace: &str| {
                if recurring.is_empty() || occasional.is_empty() {
                    None
                } else {
                    Some(jaccard(
                        &tag_set(forest, &recurring, namespace),
                        &tag_set(forest, &occasional, namespace),
                    ))
                }
            };
            out.push(MemberTagProfile {
                collab_id: collab.collab_id,
                author: *member,
                recurring_songs: recurring.len(),
                occasional_songs: occasional.len(),
                genre_overlap: overlap("genre:"),
                instrument_overlap: overlap("instrument:"),
            });
        }
    }
    out
}

pub const BIN_FEATURES: [&str; 4] = ["messages", "invites", "delta_likes", "delta_coolness"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub established: EstablishedConfig,
    pub min_self_overdub_run: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { established: EstablishedConfig::default(), min_self_overdub_run: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub binners: BTreeMap<String, Binner>,
    /// Features left unbinned, with the reason (too few distinct values).
    pub unbinned: BTreeMap<String, String>,
    pub established: Vec<EstablishedCandidate>,
    pub tag_profiles: Vec<MemberTagProfile>,
    pub self_overdub_runs: Vec<SelfOverdubRun>,
}

/// Enriches mined collaborations with communication and popularity measures
/// from the event log, bins each measure across collaborations, and gathers
/// the review signals (established-band candidates, self-overdub chains,
/// tag overlap).
pub fn profile_collaborations(
    collabs: &[RecurringCollaboration],
    forest: &SongForest,
    events: &[Event],
    config: &ProfileConfig,
) -> Result<(Vec<RecurringCollaboration>, ProfileReport)> {
    let featurizer = Featurizer::new(forest, events);
    let t = featurizer.log_end() + 1;
    let mut enriched = collabs.to_vec();
    for collab in &mut enriched {
        let mut messages = 0;
        let mut invites = 0;
        for (i, a) in collab.members.iter().enumerate() {
            for b in &collab.members[i + 1..] {
                messages += featurizer.directed_messages(*a, *b)
                    + featurizer.directed_messages(*b, *a);
                invites +=
                    featurizer.directed_invites(*a, *b) + featurizer.directed_invites(*b, *a);
            }
        }
        collab.messages = messages;
        collab.invites = invites;
        let likes: Vec<u64> =
            collab.members.iter().map(|m| featurizer.likes_received_total(*m)).collect();
        collab.delta_likes =
            likes.iter().max().copied().unwrap_or(0) - likes.iter().min().copied().unwrap_or(0);
        let mut rankings = Vec::new();
        for member in &collab.members {
            rankings.push(featurizer.ranking(*member, t)?);
        }
        let hi = rankings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = rankings.iter().copied().fold(f64::INFINITY, f64::min);
        collab.delta_coolness = if rankings.is_empty() { 0.0 } else { hi - lo };
    }

    let mut binners = BTreeMap::new();
    let mut unbinned = BTreeMap::new();
    for feature in BIN_FEATURES {
        let values: Vec<f64> = enriched
            .iter()
            .map(|c| match feature {
                "messages" => c.messages as f64,
                "invites" => c.invites as f64,
                "delta_likes" => c.delta_likes as f64,
                "delta_coolness" => c.delta_coolness,
                other => unreachable!("unknown bin feature {other}"),
            })
            .collect();
        match Binner::fit(feature, &values) {
            Ok(binner) => {
                for (collab, value) in enriched.iter_mut().zip(&values) {
                    collab.bins.insert(feature.to_string(), binner.assign(*value));
                }
                binners.insert(feature.to_string(), binner);
            }
            Err(CoreError::InsufficientData(reason)) => {
                unbinned.insert(feature.to_string(), reason);
            }
            Err(e) => return Err(e),
        }
    }

    let report = ProfileReport {
        binners,
        unbinned,
        established: detect_established(&enriched, &forest.authors, &config.established),
        tag_profiles: genre_instrument_profile(&enriched, forest),
        self_overdub_runs: detect_self_overdub_runs(forest, config.min_self_overdub_run),
    };
    Ok((enriched, report))
}
