//! Regression-table construction: song and author measures evaluated at
//! overdub times, row serialization, the log transform and collinearity
//! screen, and descriptive summaries.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{
    parse_badge_payload, song_depth, upload_time_interval, AuthorId, BadgeKind, Event, EventKind,
    SongForest, SongId,
};
use crate::profile::RecurringCollaboration;

/// Measures for one (song, time) query. Counting measures are taken strictly
/// before the query time; bookmarks, invitations, tags, and avatars are
/// end-of-log state because the log does not record when they were removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureVector {
    pub likes: u64,
    pub bookmarks: u64,
    pub plays: u64,
    pub reposts: u64,
    pub comments: u64,
    pub upload_time_interval: i64,
    pub song_depth: u32,
    pub has_tags: bool,
    pub followers: u64,
    pub ranking: f64,
    pub msg_exchange_rate: u64,
    pub sent_messages: u64,
    pub received_messages: u64,
    pub invitations: u64,
    pub new_songs_badge: u8,
    pub overdubs_badge: u8,
    pub overdubs_received_badge: u8,
    pub has_avatar: bool,
}

/// One row of the regression table: song `song_id` just before its `x`-th
/// overdub (x = 0 rows are never-overdubbed songs at the collection time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub song_id: SongId,
    pub x: u64,
    pub outcome: u64,
    pub cluster_id: u64,
    pub measures: MeasureVector,
}

/// Row grouping for cluster-robust inference.
pub enum RowLevel<'a> {
    /// One cluster per song author.
    Occasional,
    /// Rows restricted to songs covered by mined collaborations; clusters
    /// are collaboration ids (the smallest id when songs are shared).
    Recurring(&'a [RecurringCollaboration]),
}

pub struct Featurizer<'a> {
    forest: &'a SongForest,
    log_end: i64,
    likes: BTreeMap<SongId, Vec<i64>>,
    plays: BTreeMap<SongId, Vec<i64>>,
    reposts: BTreeMap<SongId, Vec<i64>>,
    comments: BTreeMap<SongId, Vec<i64>>,
    bookmarks: BTreeMap<SongId, u64>,
    invitations: BTreeMap<SongId, u64>,
    invite_pairs: BTreeMap<(AuthorId, AuthorId), u64>,
    followers: BTreeMap<AuthorId, Vec<i64>>,
    uploads: BTreeMap<AuthorId, Vec<i64>>,
    author_likes: BTreeMap<AuthorId, Vec<i64>>,
    author_plays: BTreeMap<AuthorId, Vec<i64>>,
    derived_plays: BTreeMap<AuthorId, Vec<i64>>,
    badges: BTreeMap<AuthorId, Vec<(i64, BadgeKind, u8)>>,
    messages: BTreeMap<(AuthorId, AuthorId), u64>,
}

fn count_before(ts_sorted: &[i64], t: i64) -> u64 {
    ts_sorted.partition_point(|ts| *ts < t) as u64
}

impl<'a> Featurizer<'a> {
    pub fn new(forest: &'a SongForest, events: &[Event]) -> Featurizer<'a> {
        let mut f = Featurizer {
            forest,
            log_end: events.iter().map(|e| e.ts).max().unwrap_or(0).max(forest.horizon),
            likes: BTreeMap::new(),
            plays: BTreeMap::new(),
            reposts: BTreeMap::new(),
            comments: BTreeMap::new(),
            bookmarks: BTreeMap::new(),
            invitations: BTreeMap::new(),
            invite_pairs: BTreeMap::new(),
            followers: BTreeMap::new(),
            uploads: BTreeMap::new(),
            author_likes: BTreeMap::new(),
            author_plays: BTreeMap::new(),
            derived_plays: BTreeMap::new(),
            badges: BTreeMap::new(),
            messages: BTreeMap::new(),
        };
        // authors of the song and of every ancestor, for crediting reactions
        let mut owner: BTreeMap<SongId, AuthorId> = BTreeMap::new();
        let mut ancestor_authors: BTreeMap<SongId, Vec<AuthorId>> = BTreeMap::new();
        for tree in &forest.trees {
            for node in tree.nodes.values() {
                owner.insert(node.song_id, node.author_id);
                let mut seen = Vec::new();
                let mut here = node.parent_id;
                while let Some(p) = here {
                    let a = tree.nodes[&p].author_id;
                    if !seen.contains(&a) {
                        seen.push(a);
                    }
                    here = tree.nodes[&p].parent_id;
                }
                ancestor_authors.insert(node.song_id, seen);
            }
        }

        for event in events {
            match event.kind {
                EventKind::Like => {
                    if let Some(song) = event.subject {
                        f.likes.entry(song).or_default().push(event.ts);
                        if let Some(a) = owner.get(&song) {
                            f.author_likes.entry(*a).or_default().push(event.ts);
                        }
                    }
                }
                EventKind::Play => {
                    if let Some(song) = event.subject {
                        f.plays.entry(song).or_default().push(event.ts);
                        if let Some(a) = owner.get(&song) {
                            f.author_plays.entry(*a).or_default().push(event.ts);
                        }
                        if let Some(ancestors) = ancestor_authors.get(&song) {
                            for a in ancestors {
                                f.derived_plays.entry(*a).or_default().push(event.ts);
                            }
                        }
                    }
                }
                EventKind::Repost => {
                    if let Some(song) = event.subject {
                        f.reposts.entry(song).or_default().push(event.ts);
                    }
                }
                EventKind::Comment => {
                    if let Some(song) = event.subject {
                        f.comments.entry(song).or_default().push(event.ts);
                    }
                }
                EventKind::Bookmark => {
                    if let Some(song) = event.subject {
                        *f.bookmarks.entry(song).or_default() += 1;
                    }
                }
                EventKind::Invitation => {
                    if let Some(song) = event.subject {
                        *f.invitations.entry(song).or_default() += 1;
                    }
                    if let Some(target) = event.target {
                        *f.invite_pairs.entry((event.actor, target)).or_default() += 1;
                    }
                }
                EventKind::Follow => {
                    if let Some(target) = event.target {
                        f.followers.entry(target).or_default().push(event.ts);
                    }
                }
                EventKind::Message => {
                    if let Some(target) = event.target {
                        *f.messages.entry((event.actor, target)).or_default() += 1;
                    }
                }
                EventKind::SongUploaded | EventKind::OverdubUploaded => {
                    f.uploads.entry(event.actor).or_default().push(event.ts);
                }
                EventKind::BadgeAwarded => {
                    if let Some((kind, level)) =
                        event.payload.as_deref().and_then(parse_badge_payload)
                    {
                        f.badges.entry(event.actor).or_default().push((event.ts, kind, level));
                    }
                }
                _ => {}
            }
        }
        for list in f
            .likes
            .values_mut()
            .chain(f.plays.values_mut())
            .chain(f.reposts.values_mut())
            .chain(f.comments.values_mut())
            .chain(f.followers.values_mut())
            .chain(f.uploads.values_mut())
            .chain(f.author_likes.values_mut())
            .chain(f.author_plays.values_mut())
            .chain(f.derived_plays.values_mut())
        {
            list.sort_unstable();
        }
        for list in f.badges.values_mut() {
            list.sort_unstable();
        }
        f
    }

    pub fn log_end(&self) -> i64 {
        self.log_end
    }

    /// Likes ever received on songs the author owns in the forest.
    pub fn likes_received_total(&self, author: AuthorId) -> u64 {
        self.author_likes.get(&author).map(|l| l.len() as u64).unwrap_or(0)
    }

    pub fn directed_messages(&self, from: AuthorId, to: AuthorId) -> u64 {
        self.messages.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn directed_invites(&self, from: AuthorId, to: AuthorId) -> u64 {
        self.invite_pairs.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Popularity at time t: received likes, plays, plays of derived songs,
    /// and followers, all per shared song. Errors when the author has shared
    /// nothing yet.
    pub fn ranking(&self, author: AuthorId, t: i64) -> Result<f64> {
        if !self.forest.authors.contains_key(&author) && !self.uploads.contains_key(&author) {
            return Err(CoreError::UnknownAuthor(author));
        }
        let shared =
            self.uploads.get(&author).map(|u| count_before(u, t)).unwrap_or(0);
        if shared == 0 {
            return Err(CoreError::InsufficientData(format!(
                "author {author} has no shared song before t={t}"
            )));
        }
        let at = |map: &BTreeMap<AuthorId, Vec<i64>>| {
            map.get(&author).map(|l| count_before(l, t)).unwrap_or(0)
        };
        let numerator =
            at(&self.followers) + at(&self.author_likes) + at(&self.author_plays) + at(&self.derived_plays);
        Ok(numerator as f64 / shared as f64)
    }

    fn badge_level(&self, author: AuthorId, kind: BadgeKind, t: i64) -> u8 {
        self.badges
            .get(&author)
            .map(|list| {
                list.iter()
                    .filter(|(ts, k, _)| *ts <= t && *k == kind)
                    .map(|(_, _, level)| *level)
                    .last()
                    .unwrap_or(0)
            })
            .unwrap_or(0)
    }

    /// Measures for `song` at time `t`. The message measures relate the
    /// song's author to `partner` (the overdubbing author), when given.
    fn measures_with_partner(
        &self,
        song: SongId,
        t: i64,
        partner: Option<AuthorId>,
    ) -> Result<MeasureVector> {
        let node = self.forest.node(song).ok_or(CoreError::UnknownSong(song))?;
        let author = node.author_id;
        let count = |map: &BTreeMap<SongId, Vec<i64>>| {
            map.get(&song).map(|l| count_before(l, t)).unwrap_or(0)
        };
        let (sent, received, exchange) = match partner {
            Some(p) => {
                let sent = self.messages.get(&(author, p)).copied().unwrap_or(0);
                let received = self.messages.get(&(p, author)).copied().unwrap_or(0);
                (sent, received, sent + received)
            }
            None => (0, 0, 0),
        };
        Ok(MeasureVector {
            likes: count(&self.likes),
            bookmarks: self.bookmarks.get(&song).copied().unwrap_or(0),
            plays: count(&self.plays),
            reposts: count(&self.reposts),
            comments: count(&self.comments),
            upload_time_interval: if node.parent_id.is_some() {
                upload_time_interval(self.forest, song)?
            } else {
                0
            },
            song_depth: song_depth(self.forest, song)?,
            has_tags: !node.tags.is_empty(),
            followers: self
                .followers
                .get(&author)
                .map(|l| count_before(l, t))
                .unwrap_or(0),
            ranking: self.ranking(author, t)?,
            msg_exchange_rate: exchange,
            sent_messages: sent,
            received_messages: received,
            invitations: self.invitations.get(&song).copied().unwrap_or(0),
            new_songs_badge: self.badge_level(author, BadgeKind::NewSongs, t),
            overdubs_badge: self.badge_level(author, BadgeKind::Overdubs, t),
            overdubs_received_badge: self.badge_level(author, BadgeKind::OverdubsReceived, t),
            has_avatar: self
                .forest
                .authors
                .get(&author)
                .map(|a| a.has_avatar)
                .unwrap_or(false),
        })
    }

    /// Measures for `song` at time `t`. When an overdub of the song was
    /// uploaded exactly at `t` the message measures pair the song's author
    /// with that overdubber.
    pub fn measures_at(&self, song: SongId, t: i64) -> Result<MeasureVector> {
        let tree = self.forest.tree_of(song).ok_or(CoreError::UnknownSong(song))?;
        let partner = tree
            .children(song)
            .iter()
            .find(|c| tree.nodes[c].uploaded_at == t)
            .map(|c| tree.nodes[c].author_id);
        self.measures_with_partner(song, t, partner)
    }

    /// Serializes the forest to regression rows: a song with n overdubs
    /// yields rows x = 1..=n measured just before each overdub, a song with
    /// none yields one x = 0 row at the collection time. Rows are ordered by
    /// (song_id, x).
    pub fn build_rows(&self, level: RowLevel<'_>) -> Result<Vec<RegressionRow>> {
        let collab_of: Option<BTreeMap<SongId, u64>> = match &level {
            RowLevel::Occasional => None,
            RowLevel::Recurring(collabs) => {
                let mut map: BTreeMap<SongId, u64> = BTreeMap::new();
                for c in *collabs {
                    for song in &c.song_ids {
                        map.entry(*song).or_insert(c.collab_id);
                    }
                }
                Some(map)
            }
        };
        let mut rows = Vec::new();
        for tree in &self.forest.trees {
            for node in tree.nodes.values() {
                let cluster_id = match &collab_of {
                    None => node.author_id.0,
                    Some(map) => match map.get(&node.song_id) {
                        Some(id) => *id,
                        None => continue,
                    },
                };
                let kids = tree.children(node.song_id);
                if kids.is_empty() {
                    let measures =
                        self.measures_with_partner(node.song_id, self.log_end + 1, None)?;
                    rows.push(RegressionRow {
                        song_id: node.song_id,
                        x: 0,
                        outcome: 0,
                        cluster_id,
                        measures,
                    });
                } else {
                    for (i, kid) in kids.iter().enumerate() {
                        let child = &tree.nodes[kid];
                        let measures = self.measures_with_partner(
                            node.song_id,
                            child.uploaded_at,
                            Some(child.author_id),
                        )?;
                        rows.push(RegressionRow {
                            song_id: node.song_id,
                            x: i as u64 + 1,
                            outcome: i as u64 + 1,
                            cluster_id,
                            measures,
                        });
                    }
                }
            }
        }
        rows.sort_by_key(|r| (r.song_id, r.x));
        Ok(rows)
    }
}

pub const CONTINUOUS_MEASURES: [&str; 13] = [
    "likes",
    "bookmarks",
    "plays",
    "reposts",
    "comments",
    "upload_time_interval",
    "song_depth",
    "followers",
    "ranking",
    "msg_exchange_rate",
    "sent_messages",
    "received_messages",
    "invitations",
];

fn continuous_value(m: &MeasureVector, name: &str) -> f64 {
    match name {
        "likes" => m.likes as f64,
        "bookmarks" => m.bookmarks as f64,
        "plays" => m.plays as f64,
        "reposts" => m.reposts as f64,
        "comments" => m.comments as f64,
        "upload_time_interval" => m.upload_time_interval as f64,
        "song_depth" => m.song_depth as f64,
        "followers" => m.followers as f64,
        "ranking" => m.ranking,
        "msg_exchange_rate" => m.msg_exchange_rate as f64,
        "sent_messages" => m.sent_messages as f64,
        "received_messages" => m.received_messages as f64,
        "invitations" => m.invitations as f64,
        other => panic!("unknown continuous measure {other}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum DropReason {
    Constant,
    Collinear { with: String, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

/// Design matrix ready for fitting: named columns, outcome, clusters, and
/// the columns the screen removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBuild {
    pub columns: Vec<String>,
    /// Row-major predictor values, without an intercept column.
    pub data: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub cluster_ids: Vec<u64>,
    pub dropped: Vec<DroppedColumn>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Builds the design from rows: continuous measures are log(1+x)
/// transformed, badge levels expand to indicator contrasts against "None",
/// constant columns are dropped with a warning entry, and of any continuous
/// pair correlated at |r| >= `corr_threshold` the member with the higher
/// mean absolute correlation to the other continuous predictors is dropped
/// (ties break lexicographically, keeping the earlier name).
pub fn transform_and_screen(rows: &[RegressionRow], corr_threshold: f64) -> Result<DesignBuild> {
    if rows.is_empty() {
        return Err(CoreError::InsufficientData("no rows to transform".to_string()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut continuous = Vec::new();
    for name in CONTINUOUS_MEASURES {
        continuous.push(names.len());
        names.push(name.to_string());
        cols.push(rows.iter().map(|r| continuous_value(&r.measures, name).ln_1p()).collect());
    }
    names.push("has_tags".to_string());
    cols.push(rows.iter().map(|r| r.measures.has_tags as u8 as f64).collect());
    names.push("has_avatar".to_string());
    cols.push(rows.iter().map(|r| r.measures.has_avatar as u8 as f64).collect());
    for kind in crate::model::BADGE_KINDS {
        let level_of = |m: &MeasureVector| match kind {
            BadgeKind::NewSongs => m.new_songs_badge,
            BadgeKind::Overdubs => m.overdubs_badge,
            BadgeKind::OverdubsReceived => m.overdubs_received_badge,
        };
        for level in 1..=3u8 {
            names.push(format!("{}_badge={}", kind.as_str(), kind.levels()[level as usize]));
            cols.push(
                rows.iter().map(|r| (level_of(&r.measures) == level) as u8 as f64).collect(),
            );
        }
    }

    let mut dropped = Vec::new();
    let mut alive: Vec<bool> = vec![true; names.len()];
    for (i, col) in cols.iter().enumerate() {
        if col.iter().all(|v| *v == col[0]) {
            alive[i] = false;
            dropped.push(DroppedColumn { name: names[i].clone(), reason: DropReason::Constant });
        }
    }

    loop {
        let live: Vec<usize> =
            continuous.iter().copied().filter(|i| alive[*i]).collect();
        let mut worst: Option<(usize, usize, f64)> = None;
        for (a, &i) in live.iter().enumerate() {
            for &j in &live[a + 1..] {
                let r = pearson(&cols[i], &cols[j]).abs();
                if r >= corr_threshold {
                    let better = match worst {
                        None => true,
                        Some((wi, wj, wr)) => {
                            r > wr
                                || (r == wr
                                    && (names[i].clone(), names[j].clone())
                                        < (names[wi].clone(), names[wj].clone()))
                        }
                    };
                    if better {
                        worst = Some((i, j, r));
                    }
                }
            }
        }
        let Some((i, j, r)) = worst else { break };
        let mean_abs = |x: usize| {
            let others: Vec<f64> = live
                .iter()
                .filter(|o| **o != x)
                .map(|o| pearson(&cols[x], &cols[*o]).abs())
                .collect();
            others.iter().sum::<f64>() / others.len().max(1) as f64
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        let (drop, keep) = if mi > mj {
            (i, j)
        } else if mj > mi {
            (j, i)
        } else if names[i] <= names[j] {
            (j, i)
        } else {
            (i, j)
        };
        alive[drop] = false;
        dropped.push(DroppedColumn {
            name: names[drop].clone(),
            reason: DropReason::Collinear { with: names[keep].clone(), r },
        });
    }

    let columns: Vec<String> =
        names.iter().enumerate().filter(|(i, _)| alive[*i]).map(|(_, n)| n.clone()).collect();
    let kept: Vec<usize> = (0..names.len()).filter(|i| alive[*i]).collect();
    let data: Vec<Vec<f64>> = (0..rows.len())
        .map(|r| kept.iter().map(|c| cols[*c][r]).collect())
        .collect();
    Ok(DesignBuild {
        columns,
        data,
        y: rows.iter().map(|r| r.outcome as f64).collect(),
        cluster_ids: rows.iter().map(|r| r.cluster_id).collect(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub total: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n_rows: usize,
    pub numeric: BTreeMap<String, NumericSummary>,
    pub categorical: BTreeMap<String, BTreeMap<String, u64>>,
}

fn summarize(values: &[f64]) -> NumericSummary {
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mean = total / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    NumericSummary {
        total,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        sd: variance.sqrt(),
        variance,
    }
}

/// Sample statistics (n - 1 denominators) per measure, plus level counts for
/// the boolean and badge measures and the outcome.
pub fn describe(rows: &[RegressionRow]) -> Result<DescriptiveStats> {
    if rows.is_empty() {
        return Err(CoreError::InsufficientData("no rows to describe".to_string()));
    }
    let mut numeric = BTreeMap::new();
    for name in CONTINUOUS_MEASURES {
        let values: Vec<f64> =
            rows.iter().map(|r| continuous_value(&r.measures, name)).collect();
        numeric.insert(name.to_string(), summarize(&values));
    }
    let outcomes: Vec<f64> = rows.iter().map(|r| r.outcome as f64).collect();
    numeric.insert("overdubs".to_string(), summarize(&outcomes));

    let mut categorical: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut bump = |cat: &str, level: String| {
        *categorical.entry(cat.to_string()).or_default().entry(level).or_default() += 1;
    };
    for row in rows {
        bump("has_tags", row.measures.has_tags.to_string());
        bump("has_avatar", row.measures.has_avatar.to_string());
        for kind in crate::model::BADGE_KINDS {
            let level = match kind {
                BadgeKind::NewSongs => row.measures.new_songs_badge,
                BadgeKind::Overdubs => row.measures.overdubs_badge,
                BadgeKind::OverdubsReceived => row.measures.overdubs_received_badge,
            };
            bump(
                &format!("{}_badge", kind.as_str()),
                kind.levels()[level as usize].to_string(),
            );
        }
    }
    Ok(DescriptiveStats { n_rows: rows.len(), numeric, categorical })
}

const TSV_HEADER: [&str; 22] = [
    "song_id",
    "x",
    "overdubs",
    "cluster_id",
    "likes",
    "bookmarks",
    "plays",
    "reposts",
    "comments",
    "upload_time_interval",
    "song_depth",
    "has_tags",
    "followers",
    "ranking",
    "msg_exchange_rate",
    "sent_messages",
    "received_messages",
    "invitations",
    "new_songs_badge",
    "overdubs_badge",
    "overdubs_received_badge",
    "has_avatar",
];

pub fn write_rows_tsv<W: Write>(rows: &[RegressionRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", TSV_HEADER.join("\t"))?;
    for r in rows {
        let m = &r.measures;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.song_id,
            r.x,
            r.outcome,
            r.cluster_id,
            m.likes,
            m.bookmarks,
            m.plays,
            m.reposts,
            m.comments,
            m.upload_time_interval,
            m.song_depth,
            m.has_tags,
            m.followers,
            m.ranking,
            m.msg_exchange_rate,
            m.sent_messages,
            m.received_messages,
            m.invitations,
            BadgeKind::NewSongs.levels()[m.new_songs_badge as usize],
            BadgeKind::Overdubs.levels()[m.overdubs_badge as usize],
            BadgeKind::OverdubsReceived.levels()[m.overdubs_received_badge as usize],
            m.has_avatar,
        )?;
    }
    Ok(())
}

pub fn read_rows_tsv<R: BufRead>(reader: R) -> Result<Vec<RegressionRow>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| CoreError::Parse { line: 1, message: "empty table".to_string() })?;
    if header.split('\t').collect::<Vec<_>>() != TSV_HEADER {
        return Err(CoreError::Parse { line: 1, message: "unexpected header".to_string() });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != TSV_HEADER.len() {
            return Err(CoreError::Parse {
                line: i + 2,
                message: format!("expected {} fields, got {}", TSV_HEADER.len(), fields.len()),
            });
        }
        let bad = |what: &str| CoreError::Parse { line: i + 2, message: format!("bad {what}") };
        let parse_u64 =
            |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(what));
        let badge = |kind: BadgeKind, s: &str| {
            kind.parse_level(s).ok_or_else(|| bad(kind.as_str()))
        };
        rows.push(RegressionRow {
            song_id: SongId(parse_u64(fields[0], "song_id")?),
            x: parse_u64(fields[1], "x")?,
            outcome: parse_u64(fields[2], "overdubs")?,
            cluster_id: parse_u64(fields[3], "cluster_id")?,
            measures: MeasureVector {
                likes: parse_u64(fields[4], "likes")?,
                bookmarks: parse_u64(fields[5], "bookmarks")?,
                plays: parse_u64(fields[6], "plays")?,
                reposts: parse_u64(fields[7], "reposts")?,
                comments: parse_u64(fields[8], "comments")?,
                upload_time_interval: fields[9].parse().map_err(|_| bad("upload_time_interval"))?,
                song_depth: fields[10].parse().map_err(|_| bad("song_depth"))?,
                has_tags: fields[11].parse().map_err(|_| bad("has_tags"))?,
                followers: parse_u64(fields[12], "followers")?,
                ranking: fields[13].parse().map_err(|_| bad("ranking"))?,
                msg_exchange_rate: parse_u64(fields[14], "msg_exchange_rate")?,
                sent_messages: parse_u64(fields[15], "sent_messages")?,
                received_messages: parse_u64(fields[16], "received_messages")?,
                invitations: parse_u64(fields[17], "invitations")?,
                new_songs_badge: badge(BadgeKind::NewSongs, fields[18])?,
                overdubs_badge: badge(BadgeKind::Overdubs, fields[19])?,
                overdubs_received_badge: badge(BadgeKind::OverdubsReceived, fields[20])?,
                has_avatar: fields[21].parse().map_err(|_| bad("has_avatar"))?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_forest;
    use crate::model::{Event, EventKind};

    fn ev(id: u64, kind: EventKind, ts: i64, actor: u64) -> Event {
        Event {
            event_id: id,
            kind,
            ts,
            actor: AuthorId(actor),
            subject: None,
            target: None,
            payload: None,
        }
    }

    fn on_song(mut e: Event, song: u64) -> Event {
        e.subject = Some(SongId(song));
        e
    }

    fn at_author(mut e: Event, author: u64) -> Event {
        e.target = Some(AuthorId(author));
        e
    }

    fn upload(id: u64, ts: i64, actor: u64, song: u64, parent: Option<u64>) -> Event {
        Event {
            event_id: id,
            kind: if parent.is_some() {
                EventKind::OverdubUploaded
            } else {
                EventKind::SongUploaded
            },
            ts,
            actor: AuthorId(actor),
            subject: Some(SongId(song)),
            target: None,
            payload: parent.map(|p| format!("parent={p}")),
        }
    }

    /// Song 1 by author 1 at t=0; likes at 5, 10, 15; overdub 2 by author 2
    /// at t=12; bookmark at 20.
    fn timeline_events() -> Vec<Event> {
        vec![
            upload(1, 0, 1, 1, None),
            on_song(ev(2, EventKind::Like, 5, 7), 1),
            on_song(ev(3, EventKind::Like, 10, 8), 1),
            upload(4, 12, 2, 2, Some(1)),
            on_song(ev(5, EventKind::Like, 15, 9), 1),
            on_song(ev(6, EventKind::Bookmark, 20, 7), 1),
        ]
    }

    #[test]
    fn counting_measures_are_strictly_before_t() {
        let events = timeline_events();
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        assert_eq!(f.measures_at(SongId(1), 12).unwrap().likes, 2);
        assert_eq!(f.measures_at(SongId(1), 1).unwrap().likes, 0);
        assert_eq!(f.measures_at(SongId(1), 5).unwrap().likes, 0);
        assert_eq!(f.measures_at(SongId(1), 6).unwrap().likes, 1);
        // bookmarks ignore t
        assert_eq!(f.measures_at(SongId(1), 1).unwrap().bookmarks, 1);
        // at the upload instant nothing has been shared yet, so no ranking
        assert!(f.measures_at(SongId(1), 0).is_err());
    }

    #[test]
    fn ranking_is_popularity_per_shared_song() {
        // author 1: two songs (1, 2), 3 followers, 10 likes, 20 plays,
        // 5 plays of the derived song 3
        let mut events = vec![
            upload(1, 0, 1, 1, None),
            upload(2, 1, 1, 2, None),
            upload(3, 2, 2, 3, Some(1)),
        ];
        let mut id = 10;
        for i in 0..3 {
            events.push(at_author(ev(id, EventKind::Follow, 3 + i, 50 + i as u64), 1));
            id += 1;
        }
        for i in 0..10 {
            events.push(on_song(ev(id, EventKind::Like, 3 + i, 60), 1));
            id += 1;
        }
        for i in 0..20 {
            events.push(on_song(ev(id, EventKind::Play, 3 + i, 61), 2));
            id += 1;
        }
        for i in 0..5 {
            events.push(on_song(ev(id, EventKind::Play, 3 + i, 62), 3));
            id += 1;
        }
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        let t = f.log_end() + 1;
        assert!((f.ranking(AuthorId(1), t).unwrap() - (3 + 10 + 20 + 5) as f64 / 2.0).abs() < 1e-12);
        // before anything happened there is no shared song
        assert!(f.ranking(AuthorId(1), 0).is_err());
        assert!(f.ranking(AuthorId(404), t).is_err());
    }

    #[test]
    fn rows_serialize_one_per_overdub_plus_zero_rows() {
        // root 1 (author 1) overdubbed by 2 (author 2, t=10) and 3 (author 3, t=20)
        let events = vec![
            upload(1, 0, 1, 1, None),
            upload(2, 10, 2, 2, Some(1)),
            upload(3, 20, 3, 3, Some(1)),
            on_song(ev(4, EventKind::Like, 15, 9), 1),
        ];
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        let rows = f.build_rows(RowLevel::Occasional).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows.iter().map(|r| (r.song_id.0, r.x, r.outcome)).collect::<Vec<_>>(),
            vec![(1, 1, 1), (1, 2, 2), (2, 0, 0), (3, 0, 0)]
        );
        // the like at t=15 is visible just before the second overdub only
        assert_eq!(rows[0].measures.likes, 0);
        assert_eq!(rows[1].measures.likes, 1);
        assert_eq!(rows[0].cluster_id, 1);
        assert_eq!(rows[2].cluster_id, 2);
    }

    #[test]
    fn message_measures_pair_author_with_overdubber() {
        let mut events = vec![upload(1, 0, 1, 1, None), upload(2, 50, 2, 2, Some(1))];
        let mut id = 10;
        for _ in 0..4 {
            events.push(at_author(ev(id, EventKind::Message, 60, 1), 2));
            id += 1;
        }
        for _ in 0..3 {
            events.push(at_author(ev(id, EventKind::Message, 61, 2), 1));
            id += 1;
        }
        // chatter with an unrelated author never counts
        events.push(at_author(ev(id, EventKind::Message, 62, 1), 9));
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        let rows = f.build_rows(RowLevel::Occasional).unwrap();
        let row = rows.iter().find(|r| r.song_id == SongId(1) && r.x == 1).unwrap();
        assert_eq!(row.measures.sent_messages, 4);
        assert_eq!(row.measures.received_messages, 3);
        assert_eq!(row.measures.msg_exchange_rate, 7);
        // the never-overdubbed row of song 2 has no partner
        let zero = rows.iter().find(|r| r.song_id == SongId(2)).unwrap();
        assert_eq!(zero.measures.msg_exchange_rate, 0);
    }

    #[test]
    fn badges_follow_award_events_up_to_t() {
        let mut badge = ev(3, EventKind::BadgeAwarded, 30, 1);
        badge.payload = Some("new_songs:Rookie".to_string());
        let mut badge2 = ev(4, EventKind::BadgeAwarded, 60, 1);
        badge2.payload = Some("new_songs:Songwriter".to_string());
        let events = vec![
            upload(1, 0, 1, 1, None),
            upload(2, 40, 2, 2, Some(1)),
            badge,
            badge2,
            upload(5, 70, 3, 3, Some(1)),
        ];
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        assert_eq!(f.measures_at(SongId(1), 29).unwrap().new_songs_badge, 0);
        assert_eq!(f.measures_at(SongId(1), 30).unwrap().new_songs_badge, 1);
        assert_eq!(f.measures_at(SongId(1), 70).unwrap().new_songs_badge, 2);
    }

    #[test]
    fn recurring_rows_restrict_to_collab_songs() {
        let events = vec![
            upload(1, 0, 1, 1, None),
            upload(2, 10, 2, 2, Some(1)),
            upload(3, 0, 8, 30, None),
            upload(4, 10, 9, 31, Some(30)),
        ];
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        let collab = RecurringCollaboration {
            collab_id: 5,
            members: vec![AuthorId(1), AuthorId(2)],
            occurrences: 1,
            support: 1.0,
            lift: 1.0,
            song_ids: vec![SongId(1), SongId(2)],
            messages: 0,
            invites: 0,
            delta_likes: 0,
            delta_coolness: 0.0,
            bins: BTreeMap::new(),
            kind: crate::profile::CollabKind::OnlineOnly,
        };
        let rows = f.build_rows(RowLevel::Recurring(&[collab])).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.cluster_id == 5));
        assert!(rows.iter().all(|r| r.song_id == SongId(1) || r.song_id == SongId(2)));
    }

    fn simple_rows() -> Vec<RegressionRow> {
        let events = timeline_events();
        let forest = build_forest(&events).unwrap();
        let f = Featurizer::new(&forest, &events);
        f.build_rows(RowLevel::Occasional).unwrap()
    }

    #[test]
    fn transform_applies_log1p_and_drops_constants() {
        let rows = simple_rows();
        let design = transform_and_screen(&rows, 0.7).unwrap();
        // likes on row 0 (song 1 just before its overdub) were 2
        let likes_col = design.columns.iter().position(|c| c == "likes");
        if let Some(idx) = likes_col {
            assert!((design.data[0][idx] - 3f64.ln()).abs() < 1e-12);
        }
        // has_avatar never varies in this fixture
        assert!(design
            .dropped
            .iter()
            .any(|d| d.name == "has_avatar" && d.reason == DropReason::Constant));
        assert_eq!(design.y.len(), rows.len());
    }

    #[test]
    fn screen_drops_correlated_member_with_higher_mean_correlation() {
        // hand-built rows: plays equals likes exactly, reposts varies freely
        let mut rows = simple_rows();
        let patterns = [(5u64, 1u64), (9, 4), (2, 7), (12, 2)];
        while rows.len() < 4 {
            let mut extra = rows[0].clone();
            extra.song_id = SongId(100 + rows.len() as u64);
            rows.push(extra);
        }
        for (row, (likes, reposts)) in rows.iter_mut().zip(patterns) {
            row.measures.likes = likes;
            row.measures.plays = likes;
            row.measures.reposts = reposts;
        }
        let design = transform_and_screen(&rows, 0.7).unwrap();
        assert!(design.columns.iter().any(|c| c == "likes"));
        assert!(!design.columns.iter().any(|c| c == "plays"));
        let drop = design.dropped.iter().find(|d| d.name == "plays").unwrap();
        match &drop.reason {
            DropReason::Collinear { with, r } => {
                assert_eq!(with, "likes");
                assert!((*r - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected reason {other:?}"),
        }
    }

    #[test]
    fn describe_uses_sample_standard_deviation() {
        let mut rows = Vec::new();
        for i in 0..100u64 {
            let mut row = simple_rows()[0].clone();
            row.song_id = SongId(i + 1);
            row.measures.likes = if i == 99 { 100 } else { 0 };
            rows.push(row);
        }
        let stats = describe(&rows).unwrap();
        let likes = &stats.numeric["likes"];
        assert!((likes.mean - 1.0).abs() < 1e-12);
        assert!((likes.sd - 10.0).abs() < 1e-12);
        assert!((likes.variance - 100.0).abs() < 1e-12);
        assert_eq!(likes.total, 100.0);
        assert_eq!(likes.max, 100.0);
    }

    #[test]
    fn tsv_roundtrip_preserves_rows() {
        let rows = simple_rows();
        let mut buf = Vec::new();
        write_rows_tsv(&rows, &mut buf).unwrap();
        let back = read_rows_tsv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(rows, back);
    }
}
