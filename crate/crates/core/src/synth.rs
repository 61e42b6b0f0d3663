//! Deterministic synthetic event logs with known ground truth: planted
//! recurring collaborations as contiguous overdub chains, random noise
//! trees from a disjoint author pool, optional reaction traffic, and
//! optional outcome songs whose overdub counts are drawn from a configured
//! count distribution.
//!
//! Planted authors never appear in noise trees and planted trees are pure
//! chains, so the co-occurrence count of each planted member set equals its
//! configured tree count exactly. Planted sets must not contain one another
//! or sub-windows of one chain would silently inflate another set's count.

use std::collections::{BTreeMap, BTreeSet};

use remixtree_sim::Stream;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ingest::build_forest;
use crate::miner::MinerConfig;
use crate::model::{AuthorId, Event, EventKind, SongId, SongTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedCollab {
    /// Distinct author ids; the chain overdubs in this order.
    pub members: Vec<AuthorId>,
    /// Number of dedicated trees carrying the full chain.
    pub co_trees: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionRates {
    /// Expected likes per song (Poisson).
    pub likes_per_song: f64,
    pub plays_per_song: f64,
    /// Expected messages per direction per planted member pair.
    pub messages_per_planted_pair: f64,
    pub invites_per_planted_pair: f64,
}

impl Default for ReactionRates {
    fn default() -> Self {
        ReactionRates {
            likes_per_song: 0.0,
            plays_per_song: 0.0,
            messages_per_planted_pair: 0.0,
            invites_per_planted_pair: 0.0,
        }
    }
}

/// Overdub counts for standalone outcome songs: mu = exp(beta0 +
/// beta_log_likes * ln(1 + likes)), zero-inflated negative binomial when
/// `zero_inflation` or `alpha` are positive (alpha = 0 degenerates to
/// Poisson).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeModel {
    pub n_songs: u64,
    pub beta0: f64,
    pub beta_log_likes: f64,
    pub alpha: f64,
    pub zero_inflation: f64,
    /// Expected likes arriving before the first overdub (Poisson).
    pub likes_rate: f64,
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel {
            n_songs: 0,
            beta0: 0.0,
            beta_log_likes: 0.0,
            alpha: 0.0,
            zero_inflation: 0.0,
            likes_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NameBio {
    pub username: String,
    pub bio: String,
}

impl Default for NameBio {
    fn default() -> Self {
        NameBio { username: String::new(), bio: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub planted: Vec<PlantedCollab>,
    pub n_noise_authors: u64,
    pub n_noise_trees: u64,
    /// Chance of attaching one more overdub while growing a noise tree.
    pub noise_overdub_prob: f64,
    pub max_tree_size: u64,
    pub reactions: ReactionRates,
    pub outcome: Option<OutcomeModel>,
    /// Username and bio overrides, keyed by author id.
    pub author_names: BTreeMap<AuthorId, NameBio>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            planted: Vec::new(),
            n_noise_authors: 50,
            n_noise_trees: 100,
            noise_overdub_prob: 0.5,
            max_tree_size: 12,
            reactions: ReactionRates::default(),
            outcome: None,
            author_names: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Canonical (sorted, deduplicated) member set.
    pub members: Vec<AuthorId>,
    pub co_trees: u64,
    pub tree_roots: Vec<SongId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSongTruth {
    pub song_id: SongId,
    pub likes: u64,
    pub mu: f64,
    pub outcome: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub planted: Vec<PlantedTruth>,
    pub outcome_songs: Vec<OutcomeSongTruth>,
}

struct Emitter {
    events: Vec<Event>,
    next_event: u64,
    next_song: u64,
    minute: i64,
}

impl Emitter {
    fn tick(&mut self) -> i64 {
        self.minute += 1;
        self.minute
    }

    fn push(&mut self, kind: EventKind, ts: i64, actor: AuthorId) -> &mut Event {
        let id = self.next_event;
        self.next_event += 1;
        self.events.push(Event {
            event_id: id,
            kind,
            ts,
            actor,
            subject: None,
            target: None,
            payload: None,
        });
        self.events.last_mut().unwrap()
    }

    fn upload(&mut self, actor: AuthorId, parent: Option<SongId>) -> SongId {
        let song = SongId(self.next_song);
        self.next_song += 1;
        let ts = self.tick();
        let kind = match parent {
            Some(_) => EventKind::OverdubUploaded,
            None => EventKind::SongUploaded,
        };
        let e = self.push(kind, ts, actor);
        e.subject = Some(song);
        e.payload = parent.map(|p| format!("parent={p}"));
        song
    }
}

fn validate(config: &SynthConfig) -> Result<()> {
    if !(0.0..1.0).contains(&config.noise_overdub_prob) {
        return Err(CoreError::InvalidArgument(
            "noise_overdub_prob must be in [0, 1)".to_string(),
        ));
    }
    let mut sets: Vec<BTreeSet<AuthorId>> = Vec::new();
    for planted in &config.planted {
        let set: BTreeSet<AuthorId> = planted.members.iter().copied().collect();
        if set.len() < 2 || set.len() != planted.members.len() {
            return Err(CoreError::InvalidArgument(
                "planted members must be at least two distinct authors".to_string(),
            ));
        }
        if planted.co_trees == 0 {
            return Err(CoreError::InvalidArgument("co_trees must be positive".to_string()));
        }
        for other in &sets {
            if set.is_subset(other) || other.is_subset(&set) {
                return Err(CoreError::InvalidArgument(
                    "planted member sets must not contain one another".to_string(),
                ));
            }
        }
        sets.push(set);
    }
    Ok(())
}

/// Generates an event log and its ground truth. The same config always
/// produces the same log.
pub fn generate(config: &SynthConfig) -> Result<(Vec<Event>, GroundTruth)> {
    validate(config)?;
    let base = Stream::new(config.seed);
    let planted_max = config
        .planted
        .iter()
        .flat_map(|p| p.members.iter())
        .map(|a| a.0)
        .max()
        .unwrap_or(0);
    let noise_start = planted_max + 1;
    let noise_pool: Vec<AuthorId> =
        (noise_start..noise_start + config.n_noise_authors).map(AuthorId).collect();
    let outcome_start = noise_start + config.n_noise_authors;
    let n_outcome = config.outcome.as_ref().map(|o| o.n_songs).unwrap_or(0);

    let mut authors: BTreeSet<AuthorId> = BTreeSet::new();
    authors.extend(config.planted.iter().flat_map(|p| p.members.iter().copied()));
    authors.extend(noise_pool.iter().copied());
    authors.extend((outcome_start..outcome_start + n_outcome).map(AuthorId));

    let mut em = Emitter { events: Vec::new(), next_event: 1, next_song: 1, minute: 0 };
    for author in &authors {
        let name = config.author_names.get(author).cloned().unwrap_or_default();
        let username =
            if name.username.is_empty() { format!("user{author}") } else { name.username };
        let e = em.push(EventKind::UserRegistered, 0, *author);
        e.payload = Some(format!("{username}|{}", name.bio));
    }

    let mut reaction_stream = base.substream(1);
    let mut decorate = |em: &mut Emitter, song: SongId, rates: &ReactionRates| {
        let likes = reaction_stream.poisson(rates.likes_per_song);
        for _ in 0..likes {
            let actor = noise_pool
                .get(reaction_stream.next_range(noise_pool.len().max(1) as u64) as usize)
                .copied()
                .unwrap_or(AuthorId(noise_start));
            let ts = em.tick();
            em.push(EventKind::Like, ts, actor).subject = Some(song);
        }
        let plays = reaction_stream.poisson(rates.plays_per_song);
        for _ in 0..plays {
            let actor = noise_pool
                .get(reaction_stream.next_range(noise_pool.len().max(1) as u64) as usize)
                .copied()
                .unwrap_or(AuthorId(noise_start));
            let ts = em.tick();
            em.push(EventKind::Play, ts, actor).subject = Some(song);
        }
    };

    let mut truth_planted = Vec::new();
    for planted in &config.planted {
        let mut roots = Vec::new();
        for _ in 0..planted.co_trees {
            let mut parent = None;
            for member in &planted.members {
                let song = em.upload(*member, parent);
                decorate(&mut em, song, &config.reactions);
                if parent.is_none() {
                    roots.push(song);
                }
                parent = Some(song);
            }
        }
        let members: Vec<AuthorId> = {
            let set: BTreeSet<AuthorId> = planted.members.iter().copied().collect();
            set.into_iter().collect()
        };
        truth_planted.push(PlantedTruth { members, co_trees: planted.co_trees, tree_roots: roots });
    }

    for t in 0..config.n_noise_trees {
        let mut stream = base.substream(1_000_000 + t);
        if noise_pool.is_empty() {
            break;
        }
        let pick = |s: &mut Stream| noise_pool[s.next_range(noise_pool.len() as u64) as usize];
        let root_author = pick(&mut stream);
        let root = em.upload(root_author, None);
        decorate(&mut em, root, &config.reactions);
        let mut songs = vec![root];
        while (songs.len() as u64) < config.max_tree_size
            && stream.bernoulli(config.noise_overdub_prob)
        {
            let parent = songs[stream.next_range(songs.len() as u64) as usize];
            let author = pick(&mut stream);
            let song = em.upload(author, Some(parent));
            decorate(&mut em, song, &config.reactions);
            songs.push(song);
        }
    }

    let mut truth_outcome = Vec::new();
    if let Some(outcome) = &config.outcome {
        for i in 0..outcome.n_songs {
            let mut stream = base.substream(2_000_000 + i);
            let author = AuthorId(outcome_start + i);
            let song = em.upload(author, None);
            let likes = stream.poisson(outcome.likes_rate);
            for _ in 0..likes {
                let actor = noise_pool
                    .get(stream.next_range(noise_pool.len().max(1) as u64) as usize)
                    .copied()
                    .unwrap_or(author);
                let ts = em.tick();
                em.push(EventKind::Like, ts, actor).subject = Some(song);
            }
            let mu =
                (outcome.beta0 + outcome.beta_log_likes * (1.0 + likes as f64).ln()).exp();
            let y = if outcome.zero_inflation > 0.0 && stream.bernoulli(outcome.zero_inflation) {
                0
            } else if outcome.alpha > 0.0 {
                stream.neg_binomial(mu, outcome.alpha)
            } else {
                stream.poisson(mu)
            };
            for j in 0..y {
                let overdubber = if noise_pool.is_empty() {
                    author
                } else {
                    noise_pool[((i + j) % noise_pool.len() as u64) as usize]
                };
                em.upload(overdubber, Some(song));
            }
            truth_outcome.push(OutcomeSongTruth { song_id: song, likes, mu, outcome: y });
        }
    }

    let mut social = base.substream(3);
    for planted in &config.planted {
        for (i, a) in planted.members.iter().enumerate() {
            for b in &planted.members[i + 1..] {
                for (from, to) in [(*a, *b), (*b, *a)] {
                    for _ in 0..social.poisson(config.reactions.messages_per_planted_pair) {
                        let ts = em.tick();
                        em.push(EventKind::Message, ts, from).target = Some(to);
                    }
                    for _ in 0..social.poisson(config.reactions.invites_per_planted_pair) {
                        let ts = em.tick();
                        em.push(EventKind::Invitation, ts, from).target = Some(to);
                    }
                }
            }
        }
    }

    Ok((em.events, GroundTruth { seed: config.seed, planted: truth_planted, outcome_songs: truth_outcome }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleItemset {
    pub occurrences: u64,
    pub support: f64,
    pub lift: f64,
}

fn oracle_paths(tree: &SongTree, at: SongId, trail: &mut Vec<SongId>, out: &mut Vec<Vec<SongId>>) {
    trail.push(at);
    let kids = tree.children(at);
    if kids.is_empty() {
        out.push(trail.clone());
    } else {
        for kid in kids {
            oracle_paths(tree, *kid, trail, out);
        }
    }
    trail.pop();
}

/// Brute-force reference miner: enumerates every contiguous window of every
/// root-to-leaf path directly and counts trees per author set. Written
/// independently of the production miner so the two can check each other.
pub fn oracle_mine(
    events: &[Event],
    config: &MinerConfig,
) -> Result<BTreeMap<Vec<AuthorId>, OracleItemset>> {
    let forest = build_forest(events)?;
    let n = forest.trees.len() as u64;
    let mut counts: BTreeMap<BTreeSet<AuthorId>, u64> = BTreeMap::new();
    for tree in &forest.trees {
        let mut paths = Vec::new();
        let mut trail = Vec::new();
        oracle_paths(tree, tree.root, &mut trail, &mut paths);
        let mut seen: BTreeSet<BTreeSet<AuthorId>> = BTreeSet::new();
        for path in &paths {
            for start in 0..path.len() {
                for end in start..path.len() {
                    let set: BTreeSet<AuthorId> =
                        path[start..=end].iter().map(|s| tree.nodes[s].author_id).collect();
                    seen.insert(set);
                }
            }
        }
        for set in seen {
            *counts.entry(set).or_default() += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (set, occ) in &counts {
        if set.len() < 2 || *occ < config.min_occurrences {
            continue;
        }
        let support = *occ as f64 / n as f64;
        if let Some(minsup) = config.minsup {
            if support < minsup {
                continue;
            }
        }
        let mut denom = 1.0;
        let mut defined = true;
        for member in set {
            let single: BTreeSet<AuthorId> = [*member].into_iter().collect();
            match counts.get(&single) {
                Some(c) if *c > 0 => denom *= *c as f64 / n as f64,
                _ => defined = false,
            }
        }
        if !defined {
            continue;
        }
        let lift = support / denom;
        if lift > config.min_lift {
            out.insert(
                set.iter().copied().collect(),
                OracleItemset { occurrences: *occ, support, lift },
            );
        }
    }
    Ok(out)
}
