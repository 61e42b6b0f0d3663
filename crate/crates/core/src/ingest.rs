//! Event-log parsing, forest reconstruction, and the exclusion pipeline that
//! prepares a forest for mining and regression.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{
    parse_upload_payload, parse_user_payload, Author, AuthorId, Event, EventKind, NodeFlag,
    SongForest, SongId, SongNode, SongTree,
};

/// Reads a line-delimited JSON event log. Records are validated and returned
/// sorted by (ts, id); blank lines are skipped.
pub fn parse_event_log<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events: Vec<Event> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| CoreError::Parse { line: i + 1, message: e.to_string() })?;
        if event.ts < 0 {
            return Err(CoreError::Parse {
                line: i + 1,
                message: format!("negative timestamp {}", event.ts),
            });
        }
        if !seen.insert(event.event_id) {
            return Err(CoreError::DuplicateEvent(event.event_id));
        }
        events.push(event);
    }
    events.sort_by_key(|e| (e.ts, e.event_id));
    Ok(events)
}

struct AuthorBuilder {
    author: Author,
    explicit: bool,
}

/// Rebuilds the song forest from an event log.
///
/// Every song id may be uploaded exactly once; a second upload (or a second
/// claimed parent) is rejected. Overdubs must be uploaded strictly after
/// their parent. Overdubs whose claimed parent never appears anywhere in the
/// log become orphan roots of their own trees. Authors referenced before (or
/// without) a registration event get a minimal record.
pub fn build_forest(events: &[Event]) -> Result<SongForest> {
    let mut known_songs = BTreeSet::new();
    for event in events {
        if matches!(event.kind, EventKind::SongUploaded | EventKind::OverdubUploaded) {
            if let Some(song) = event.subject {
                if !known_songs.insert(song) {
                    return Err(CoreError::DuplicateSong(song));
                }
            }
        }
    }

    let mut authors: BTreeMap<AuthorId, AuthorBuilder> = BTreeMap::new();
    let touch = |authors: &mut BTreeMap<AuthorId, AuthorBuilder>, id: AuthorId, ts: i64| {
        authors.entry(id).or_insert_with(|| AuthorBuilder {
            author: Author {
                author_id: id,
                username: String::new(),
                bio: String::new(),
                has_avatar: false,
                registered_at: ts,
            },
            explicit: false,
        });
    };

    let mut nodes: BTreeMap<SongId, SongNode> = BTreeMap::new();
    let mut horizon = 0i64;
    for event in events {
        horizon = horizon.max(event.ts);
        touch(&mut authors, event.actor, event.ts);
        if let Some(target) = event.target {
            touch(&mut authors, target, event.ts);
        }
        match event.kind {
            EventKind::UserRegistered => {
                let entry = authors.get_mut(&event.actor).expect("touched above");
                if entry.explicit {
                    return Err(CoreError::InvalidArgument(format!(
                        "author {} registered twice",
                        event.actor
                    )));
                }
                let (username, bio) =
                    parse_user_payload(event.payload.as_deref().unwrap_or_default());
                entry.author.username = username;
                entry.author.bio = bio;
                entry.author.registered_at = event.ts;
                entry.explicit = true;
            }
            EventKind::AvatarSet => {
                authors.get_mut(&event.actor).expect("touched above").author.has_avatar = true;
            }
            EventKind::SongUploaded | EventKind::OverdubUploaded => {
                let song = event.subject.ok_or_else(|| {
                    CoreError::InvalidArgument(format!("upload event {} has no subject", event.event_id))
                })?;
                let (claimed_parent, flags) =
                    parse_upload_payload(event.payload.as_deref().unwrap_or_default())?;
                let is_overdub = matches!(event.kind, EventKind::OverdubUploaded);
                if is_overdub && claimed_parent.is_none() {
                    return Err(CoreError::InvalidArgument(format!(
                        "overdub {song} has no parent reference"
                    )));
                }
                if !is_overdub && claimed_parent.is_some() {
                    return Err(CoreError::InvalidArgument(format!(
                        "plain upload {song} carries a parent reference"
                    )));
                }
                if claimed_parent == Some(song) {
                    return Err(CoreError::InvalidArgument(format!("song {song} is its own parent")));
                }
                let (parent_id, missing_parent) = match claimed_parent {
                    Some(p) if known_songs.contains(&p) => (Some(p), None),
                    Some(p) => (None, Some(p)),
                    None => (None, None),
                };
                nodes.insert(
                    song,
                    SongNode {
                        song_id: song,
                        author_id: event.actor,
                        parent_id,
                        missing_parent,
                        uploaded_at: event.ts,
                        tags: BTreeSet::new(),
                        flags,
                    },
                );
            }
            EventKind::TagApplied => {
                if let (Some(song), Some(tag)) = (event.subject, event.payload.as_ref()) {
                    if let Some(node) = nodes.get_mut(&song) {
                        node.tags.insert(tag.clone());
                    }
                }
            }
            _ => {}
        }
    }

    for node in nodes.values() {
        if let Some(parent) = node.parent_id {
            let parent_ts = nodes[&parent].uploaded_at;
            if node.uploaded_at <= parent_ts {
                return Err(CoreError::NonMonotoneUpload {
                    child: node.song_id,
                    parent,
                    child_ts: node.uploaded_at,
                    parent_ts,
                });
            }
        }
    }

    let mut members: BTreeMap<SongId, Vec<SongId>> = BTreeMap::new();
    for node in nodes.values() {
        members.entry(root_of(&nodes, node.song_id)).or_default().push(node.song_id);
    }
    let trees = members
        .into_iter()
        .map(|(root, ids)| {
            let tree_nodes =
                ids.into_iter().map(|id| (id, nodes[&id].clone())).collect::<BTreeMap<_, _>>();
            SongTree::new(root, tree_nodes)
        })
        .collect();
    let authors = authors.into_iter().map(|(id, b)| (id, b.author)).collect();
    Ok(SongForest::new(trees, authors, horizon, None))
}

fn root_of(nodes: &BTreeMap<SongId, SongNode>, mut id: SongId) -> SongId {
    while let Some(parent) = nodes[&id].parent_id {
        id = parent;
    }
    id
}

/// Nearest-rank percentile of first-overdub waiting times, in minutes.
///
/// For every song with at least one overdub the waiting time is the minutes
/// until its earliest child. `percentile` must lie in 10..=100.
pub fn censor_threshold(forest: &SongForest, percentile: u32) -> Result<i64> {
    if !(10..=100).contains(&percentile) {
        return Err(CoreError::InvalidArgument(format!(
            "percentile {percentile} outside 10..=100"
        )));
    }
    let mut intervals = Vec::new();
    for tree in &forest.trees {
        for node in tree.nodes.values() {
            if let Some(first) = tree.children(node.song_id).first() {
                intervals.push(tree.nodes[first].uploaded_at - node.uploaded_at);
            }
        }
    }
    if intervals.is_empty() {
        return Err(CoreError::InsufficientData("no overdubbed song in forest".to_string()));
    }
    intervals.sort_unstable();
    let n = intervals.len() as u64;
    let rank = (u64::from(percentile) * n).div_ceil(100).max(1);
    Ok(intervals[rank as usize - 1])
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub admin_ids: BTreeSet<AuthorId>,
    pub window_start: Option<i64>,
    /// Percentile of first-overdub waiting times that sets the censor window
    /// before the collection horizon.
    pub censor_percentile: Option<u32>,
    pub drop_flags: BTreeSet<NodeFlag>,
    pub drop_self_overdubs: bool,
    pub drop_orphans: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub retained_songs: usize,
    pub retained_authors: usize,
    pub removed_songs: usize,
    /// Removed-song counts keyed by the criterion that triggered the removal;
    /// subtree members count towards the triggering criterion. Only criteria
    /// that removed something appear.
    pub counts: BTreeMap<String, u64>,
    pub censor_threshold_minutes: Option<i64>,
    pub censor_cutoff: Option<i64>,
}

/// Ordered removal criteria. Hidden, remix-only, and contest removals take
/// whole subtrees with them; closed/complete removals only ever take leaves.
/// The ordered sweep repeats until stable so criteria that expose each other
/// (a hidden child shielding a closed parent) resolve deterministically, and
/// so applying the same configuration twice changes nothing.
pub fn apply_filters(
    forest: &SongForest,
    config: &FilterConfig,
) -> Result<(SongForest, FilterReport)> {
    let mut censor_threshold_minutes = None;
    let censor_cutoff = match forest.censor_cutoff {
        Some(cut) => Some(cut),
        None => match config.censor_percentile {
            Some(p) => match censor_threshold(forest, p) {
                Ok(thr) => {
                    censor_threshold_minutes = Some(thr);
                    Some(forest.horizon - thr)
                }
                Err(CoreError::InsufficientData(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        },
    };

    let mut removed: BTreeMap<SongId, &'static str> = BTreeMap::new();
    loop {
        let before = removed.len();
        for tree in &forest.trees {
            sweep_tree(tree, config, censor_cutoff, &mut removed);
        }
        if removed.len() == before {
            break;
        }
    }

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for criterion in removed.values() {
        *counts.entry((*criterion).to_string()).or_default() += 1;
    }

    let mut trees = Vec::new();
    for tree in &forest.trees {
        if removed.contains_key(&tree.root) {
            continue;
        }
        let kept: BTreeMap<SongId, SongNode> = tree
            .nodes
            .iter()
            .filter(|(id, _)| !removed.contains_key(id))
            .map(|(id, n)| (*id, n.clone()))
            .collect();
        trees.push(SongTree::new(tree.root, kept));
    }
    let owners: BTreeSet<AuthorId> =
        trees.iter().flat_map(|t| t.nodes.values().map(|n| n.author_id)).collect();
    let authors: BTreeMap<AuthorId, Author> = forest
        .authors
        .iter()
        .filter(|(id, _)| owners.contains(id))
        .map(|(id, a)| (*id, a.clone()))
        .collect();

    let out = SongForest::new(trees, authors, forest.horizon, censor_cutoff);
    let report = FilterReport {
        retained_songs: out.num_songs(),
        retained_authors: out.authors.len(),
        removed_songs: removed.len(),
        counts,
        censor_threshold_minutes,
        censor_cutoff,
    };
    Ok((out, report))
}

fn sweep_tree(
    tree: &SongTree,
    config: &FilterConfig,
    censor_cutoff: Option<i64>,
    removed: &mut BTreeMap<SongId, &'static str>,
) {
    let subtree_criteria: Vec<(&'static str, Box<dyn Fn(&SongNode) -> bool>)> = vec![
        ("admin", Box::new(|n: &SongNode| config.admin_ids.contains(&n.author_id))),
        (
            "window",
            Box::new(|n: &SongNode| {
                config.window_start.is_some_and(|start| n.uploaded_at < start)
            }),
        ),
        (
            "censor",
            Box::new(|n: &SongNode| censor_cutoff.is_some_and(|cut| n.uploaded_at > cut)),
        ),
    ];
    for (name, trigger) in &subtree_criteria {
        remove_matching_subtrees(tree, removed, name, trigger);
    }
    if config.drop_flags.contains(&NodeFlag::Closed) {
        remove_flagged_leaves(tree, removed, "closed", NodeFlag::Closed);
    }
    if config.drop_flags.contains(&NodeFlag::Complete) {
        remove_flagged_leaves(tree, removed, "complete", NodeFlag::Complete);
    }
    if config.drop_flags.contains(&NodeFlag::Hidden) {
        remove_matching_subtrees(tree, removed, "hidden", &|n| n.has_flag(NodeFlag::Hidden));
    }
    if config.drop_orphans {
        remove_matching_subtrees(tree, removed, "orphan", &SongNode::is_orphan);
    }
    if config.drop_self_overdubs {
        remove_matching_subtrees(tree, removed, "self_overdub", &|n| {
            n.parent_id.is_some_and(|p| tree.nodes[&p].author_id == n.author_id)
        });
    }
    if config.drop_flags.contains(&NodeFlag::RemixOnly) {
        remove_matching_subtrees(tree, removed, "remix_only", &|n| n.has_flag(NodeFlag::RemixOnly));
    }
    if config.drop_flags.contains(&NodeFlag::Contest) {
        remove_matching_subtrees(tree, removed, "contest", &|n| n.has_flag(NodeFlag::Contest));
    }
}

fn remove_matching_subtrees(
    tree: &SongTree,
    removed: &mut BTreeMap<SongId, &'static str>,
    criterion: &'static str,
    trigger: &dyn Fn(&SongNode) -> bool,
) {
    let triggers: Vec<SongId> = tree
        .nodes
        .values()
        .filter(|n| !removed.contains_key(&n.song_id) && trigger(n))
        .map(|n| n.song_id)
        .collect();
    for id in triggers {
        let mut stack = vec![id];
        while let Some(here) = stack.pop() {
            if removed.insert(here, criterion).is_none() {
                stack.extend(tree.children(here).iter().copied());
            }
        }
    }
}

fn remove_flagged_leaves(
    tree: &SongTree,
    removed: &mut BTreeMap<SongId, &'static str>,
    criterion: &'static str,
    flag: NodeFlag,
) {
    loop {
        let leaves: Vec<SongId> = tree
            .nodes
            .values()
            .filter(|n| {
                !removed.contains_key(&n.song_id)
                    && n.has_flag(flag)
                    && tree.children(n.song_id).iter().all(|c| removed.contains_key(c))
            })
            .map(|n| n.song_id)
            .collect();
        if leaves.is_empty() {
            return;
        }
        for id in leaves {
            removed.insert(id, criterion);
        }
    }
}

/// Restricts a filtered forest to the trees collaboration mining works on:
/// at least two nodes, no contest songs, no orphan roots.
pub fn mining_subset(forest: &SongForest) -> SongForest {
    let trees: Vec<SongTree> = forest
        .trees
        .iter()
        .filter(|t| t.len() >= 2 && !t.contains_flag(NodeFlag::Contest) && !t.contains_orphan())
        .cloned()
        .collect();
    let owners: BTreeSet<AuthorId> =
        trees.iter().flat_map(|t| t.nodes.values().map(|n| n.author_id)).collect();
    let authors = forest
        .authors
        .iter()
        .filter(|(id, _)| owners.contains(id))
        .map(|(id, a)| (*id, a.clone()))
        .collect();
    SongForest::new(trees, authors, forest.horizon, forest.censor_cutoff)
}
