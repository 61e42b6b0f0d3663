//! Domain model: append-only community events and the song forest derived
//! from them.
//!
//! A song forest is a set of rooted trees. Roots are plain uploads; every
//! other node is an overdub of its parent. Trees never share nodes and edges
//! always point from parent to child, so author sequences along root-to-leaf
//! paths are well defined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SongId(pub u64);

impl fmt::Display for AuthorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SongId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Event kinds recorded by the platform log.
///
/// Field usage by kind:
/// - `user_registered`: `actor` is the new author, `payload` is
///   `"<username>"` or `"<username>|<bio>"`.
/// - `song_uploaded`: `actor`, `subject` is the new song, `payload` an
///   optional comma-joined flag list (`hidden,contest,...`).
/// - `overdub_uploaded`: like `song_uploaded` plus a leading `parent=<id>`
///   entry in the payload.
/// - `like` / `play` / `bookmark` / `repost` / `comment`: `actor` reacts to
///   `subject`.
/// - `follow` / `message`: `actor` towards `target`.
/// - `invitation`: `actor` invites `target` to overdub `subject`.
/// - `tag_applied`: `payload` is the tag text for `subject`; `genre:` and
///   `instrument:` prefixes classify the tag.
/// - `avatar_set`: `actor` uploaded a custom avatar.
/// - `badge_awarded`: `actor` received the badge named in `payload`
///   (`<category>:<level>`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserRegistered,
    SongUploaded,
    OverdubUploaded,
    Like,
    Play,
    Bookmark,
    Repost,
    Comment,
    Follow,
    Message,
    Invitation,
    TagApplied,
    AvatarSet,
    BadgeAwarded,
}

/// One line of the event log. Timestamps are minutes since the epoch and
/// non-negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "id")]
    pub event_id: u64,
    pub kind: EventKind,
    pub ts: i64,
    pub actor: AuthorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<SongId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<AuthorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFlag {
    Hidden,
    Closed,
    Complete,
    Contest,
    RemixOnly,
}

impl NodeFlag {
    pub fn parse(s: &str) -> Option<NodeFlag> {
        match s {
            "hidden" => Some(NodeFlag::Hidden),
            "closed" => Some(NodeFlag::Closed),
            "complete" => Some(NodeFlag::Complete),
            "contest" => Some(NodeFlag::Contest),
            "remix_only" => Some(NodeFlag::RemixOnly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeFlag::Hidden => "hidden",
            NodeFlag::Closed => "closed",
            NodeFlag::Complete => "complete",
            NodeFlag::Contest => "contest",
            NodeFlag::RemixOnly => "remix_only",
        }
    }
}

/// Badge categories awarded by the platform. Each category has four ordered
/// levels; level 0 is the implicit "None".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadgeKind {
    NewSongs,
    Overdubs,
    OverdubsReceived,
}

pub const BADGE_KINDS: [BadgeKind; 3] =
    [BadgeKind::NewSongs, BadgeKind::Overdubs, BadgeKind::OverdubsReceived];

impl BadgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BadgeKind::NewSongs => "new_songs",
            BadgeKind::Overdubs => "overdubs",
            BadgeKind::OverdubsReceived => "overdubs_received",
        }
    }

    pub fn parse(s: &str) -> Option<BadgeKind> {
        match s {
            "new_songs" => Some(BadgeKind::NewSongs),
            "overdubs" => Some(BadgeKind::Overdubs),
            "overdubs_received" => Some(BadgeKind::OverdubsReceived),
            _ => None,
        }
    }

    /// Level names from lowest (no badge) to highest.
    pub fn levels(self) -> [&'static str; 4] {
        match self {
            BadgeKind::NewSongs => ["None", "Rookie", "Songwriter", "Composer"],
            BadgeKind::Overdubs => ["None", "Performer", "Top performer", "Virtuoso"],
            BadgeKind::OverdubsReceived => ["None", "Songsmith", "Band leader", "Maestro"],
        }
    }

    pub fn parse_level(self, name: &str) -> Option<u8> {
        self.levels().iter().position(|l| *l == name).map(|i| i as u8)
    }
}

/// Parses a `badge_awarded` payload of the form `<category>:<level>`.
pub fn parse_badge_payload(payload: &str) -> Option<(BadgeKind, u8)> {
    let (kind, level) = payload.split_once(':')?;
    let kind = BadgeKind::parse(kind)?;
    let level = kind.parse_level(level)?;
    Some((kind, level))
}

/// Parses an upload payload: optional `parent=<id>` head entry plus flags.
pub fn parse_upload_payload(payload: &str) -> Result<(Option<SongId>, BTreeSet<NodeFlag>)> {
    let mut parent = None;
    let mut flags = BTreeSet::new();
    for part in payload.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some(id) = part.strip_prefix("parent=") {
            let id: u64 = id
                .parse()
                .map_err(|_| CoreError::InvalidArgument(format!("bad parent id {id:?}")))?;
            parent = Some(SongId(id));
        } else if let Some(flag) = NodeFlag::parse(part) {
            flags.insert(flag);
        } else {
            return Err(CoreError::InvalidArgument(format!("unknown upload flag {part:?}")));
        }
    }
    Ok((parent, flags))
}

/// Splits a `user_registered` payload into username and bio.
pub fn parse_user_payload(payload: &str) -> (String, String) {
    match payload.split_once('|') {
        Some((name, bio)) => (name.to_string(), bio.to_string()),
        None => (payload.to_string(), String::new()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Author {
    pub author_id: AuthorId,
    pub username: String,
    pub bio: String,
    pub has_avatar: bool,
    pub registered_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongNode {
    pub song_id: SongId,
    pub author_id: AuthorId,
    /// Parent within the forest; absent exactly for tree roots.
    pub parent_id: Option<SongId>,
    /// Parent id claimed by the upload event when that song never appeared in
    /// the log. Present exactly for orphan nodes, which root their own trees.
    pub missing_parent: Option<SongId>,
    pub uploaded_at: i64,
    pub tags: BTreeSet<String>,
    pub flags: BTreeSet<NodeFlag>,
}

impl SongNode {
    pub fn is_orphan(&self) -> bool {
        self.missing_parent.is_some()
    }

    pub fn has_flag(&self, flag: NodeFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// One rooted tree of the forest. Children are kept sorted by
/// (uploaded_at, song_id) so traversals are deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongTree {
    pub root: SongId,
    pub nodes: BTreeMap<SongId, SongNode>,
    children: BTreeMap<SongId, Vec<SongId>>,
}

impl SongTree {
    pub fn new(root: SongId, nodes: BTreeMap<SongId, SongNode>) -> SongTree {
        let mut children: BTreeMap<SongId, Vec<SongId>> = BTreeMap::new();
        for node in nodes.values() {
            if let Some(parent) = node.parent_id {
                children.entry(parent).or_default().push(node.song_id);
            }
        }
        for (_, kids) in children.iter_mut() {
            kids.sort_by_key(|id| (nodes[id].uploaded_at, *id));
        }
        SongTree { root, nodes, children }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: SongId) -> Option<&SongNode> {
        self.nodes.get(&id)
    }

    /// Children of a node ordered by upload time, then song id.
    pub fn children(&self, id: SongId) -> &[SongId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_leaf(&self, id: SongId) -> bool {
        self.children(id).is_empty()
    }

    /// All root-to-leaf paths as song id sequences, in child-order.
    pub fn paths(&self) -> Vec<Vec<SongId>> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        self.walk(&mut stack, &mut out);
        out
    }

    fn walk(&self, stack: &mut Vec<SongId>, out: &mut Vec<Vec<SongId>>) {
        let here = *stack.last().expect("non-empty walk stack");
        let kids = self.children(here);
        if kids.is_empty() {
            out.push(stack.clone());
            return;
        }
        for &kid in kids {
            stack.push(kid);
            self.walk(stack, out);
            stack.pop();
        }
    }

    pub fn contains_flag(&self, flag: NodeFlag) -> bool {
        self.nodes.values().any(|n| n.has_flag(flag))
    }

    pub fn contains_orphan(&self) -> bool {
        self.nodes.values().any(|n| n.is_orphan())
    }
}

/// The reconstructed forest plus the author table and collection horizon.
///
/// `horizon` is the largest event timestamp seen at reconstruction and is
/// preserved by filtering, as is `censor_cutoff` once a censoring pass has
/// fixed it; both make repeated filtering stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongForest {
    pub trees: Vec<SongTree>,
    pub authors: BTreeMap<AuthorId, Author>,
    pub horizon: i64,
    pub censor_cutoff: Option<i64>,
    index: BTreeMap<SongId, usize>,
}

impl SongForest {
    pub fn new(
        mut trees: Vec<SongTree>,
        authors: BTreeMap<AuthorId, Author>,
        horizon: i64,
        censor_cutoff: Option<i64>,
    ) -> SongForest {
        trees.sort_by_key(|t| t.root);
        let mut index = BTreeMap::new();
        for (i, tree) in trees.iter().enumerate() {
            for id in tree.nodes.keys() {
                index.insert(*id, i);
            }
        }
        SongForest { trees, authors, horizon, censor_cutoff, index }
    }

    pub fn num_songs(&self) -> usize {
        self.index.len()
    }

    pub fn tree_of(&self, id: SongId) -> Option<&SongTree> {
        self.index.get(&id).map(|i| &self.trees[*i])
    }

    pub fn node(&self, id: SongId) -> Option<&SongNode> {
        self.tree_of(id).and_then(|t| t.node(id))
    }

    /// All songs in ascending id order.
    pub fn songs(&self) -> impl Iterator<Item = &SongNode> + '_ {
        self.index.iter().map(|(id, i)| self.trees[*i].node(*id).expect("indexed node"))
    }
}

/// Number of overdub steps from the tree root down to `id` (roots are 0).
pub fn song_depth(forest: &SongForest, id: SongId) -> Result<u32> {
    let tree = forest.tree_of(id).ok_or(CoreError::UnknownSong(id))?;
    let mut depth = 0u32;
    let mut here = tree.node(id).expect("indexed node");
    while let Some(parent) = here.parent_id {
        depth += 1;
        here = tree.node(parent).ok_or(CoreError::UnknownSong(parent))?;
    }
    Ok(depth)
}

/// Minutes between an overdub's upload and its parent's upload. Errors for
/// roots and orphans, which have no parent in the forest.
pub fn upload_time_interval(forest: &SongForest, id: SongId) -> Result<i64> {
    let node = forest.node(id).ok_or(CoreError::UnknownSong(id))?;
    let parent_id = node.parent_id.ok_or(CoreError::NotAnOverdub(id))?;
    let parent = forest.node(parent_id).ok_or(CoreError::UnknownSong(parent_id))?;
    Ok(node.uploaded_at - parent.uploaded_at)
}

/// Serializes a forest back to a structural event log (registrations,
/// avatars, uploads, tags). Re-ingesting the result reproduces the forest
/// exactly when the forest itself came from a structural log.
pub fn events_from_forest(forest: &SongForest) -> Vec<Event> {
    let mut events = Vec::new();
    let mut next_id = 1u64;
    let mut push = |kind, ts, actor, subject, target, payload| {
        events.push(Event { event_id: next_id, kind, ts, actor, subject, target, payload });
        next_id += 1;
    };

    for author in forest.authors.values() {
        let payload = if author.bio.is_empty() {
            author.username.clone()
        } else {
            format!("{}|{}", author.username, author.bio)
        };
        push(
            EventKind::UserRegistered,
            author.registered_at,
            author.author_id,
            None,
            None,
            Some(payload),
        );
        if author.has_avatar {
            push(EventKind::AvatarSet, author.registered_at, author.author_id, None, None, None);
        }
    }

    let mut songs: Vec<&SongNode> = forest.songs().collect();
    songs.sort_by_key(|n| (n.uploaded_at, n.song_id));
    for node in songs {
        let mut parts = Vec::new();
        if let Some(parent) = node.parent_id.or(node.missing_parent) {
            parts.push(format!("parent={parent}"));
        }
        parts.extend(node.flags.iter().map(|f| f.as_str().to_string()));
        let payload = if parts.is_empty() { None } else { Some(parts.join(",")) };
        let kind = if node.parent_id.is_some() || node.missing_parent.is_some() {
            EventKind::OverdubUploaded
        } else {
            EventKind::SongUploaded
        };
        push(kind, node.uploaded_at, node.author_id, Some(node.song_id), None, payload);
        for tag in &node.tags {
            push(
                EventKind::TagApplied,
                node.uploaded_at,
                node.author_id,
                Some(node.song_id),
                None,
                Some(tag.clone()),
            );
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(song: u64, author: u64, parent: Option<u64>, ts: i64) -> SongNode {
        SongNode {
            song_id: SongId(song),
            author_id: AuthorId(author),
            parent_id: parent.map(SongId),
            missing_parent: None,
            uploaded_at: ts,
            tags: BTreeSet::new(),
            flags: BTreeSet::new(),
        }
    }

    fn chain_forest() -> SongForest {
        // 1 <- 2 <- 3, authors 10, 20, 30
        let nodes: BTreeMap<SongId, SongNode> = [
            (SongId(1), node(1, 10, None, 0)),
            (SongId(2), node(2, 20, Some(1), 5)),
            (SongId(3), node(3, 30, Some(2), 9)),
        ]
        .into();
        let tree = SongTree::new(SongId(1), nodes);
        SongForest::new(vec![tree], BTreeMap::new(), 9, None)
    }

    #[test]
    fn depth_counts_overdub_steps() {
        let forest = chain_forest();
        assert_eq!(song_depth(&forest, SongId(1)).unwrap(), 0);
        assert_eq!(song_depth(&forest, SongId(2)).unwrap(), 1);
        assert_eq!(song_depth(&forest, SongId(3)).unwrap(), 2);
        assert!(matches!(song_depth(&forest, SongId(99)), Err(CoreError::UnknownSong(_))));
    }

    #[test]
    fn interval_is_child_minus_parent() {
        let forest = chain_forest();
        assert_eq!(upload_time_interval(&forest, SongId(2)).unwrap(), 5);
        assert_eq!(upload_time_interval(&forest, SongId(3)).unwrap(), 4);
        assert!(matches!(
            upload_time_interval(&forest, SongId(1)),
            Err(CoreError::NotAnOverdub(_))
        ));
    }

    #[test]
    fn children_sorted_by_upload_time() {
        let nodes: BTreeMap<SongId, SongNode> = [
            (SongId(1), node(1, 10, None, 0)),
            (SongId(5), node(5, 20, Some(1), 7)),
            (SongId(4), node(4, 30, Some(1), 3)),
        ]
        .into();
        let tree = SongTree::new(SongId(1), nodes);
        assert_eq!(tree.children(SongId(1)), &[SongId(4), SongId(5)]);
        assert_eq!(tree.paths(), vec![vec![SongId(1), SongId(4)], vec![SongId(1), SongId(5)]]);
    }

    #[test]
    fn event_wire_field_names() {
        let event = Event {
            event_id: 7,
            kind: EventKind::OverdubUploaded,
            ts: 120,
            actor: AuthorId(3),
            subject: Some(SongId(9)),
            target: None,
            payload: Some("parent=4".to_string()),
        };
        let json = serde_json::to_value(&event).unwrap();
        assert_eq!(json["id"], 7);
        assert_eq!(json["kind"], "overdub_uploaded");
        assert_eq!(json["ts"], 120);
        assert_eq!(json["actor"], 3);
        assert_eq!(json["subject"], 9);
        assert!(json.get("target").is_none());
    }

    #[test]
    fn upload_payload_roundtrip() {
        let (parent, flags) = parse_upload_payload("parent=12,hidden,contest").unwrap();
        assert_eq!(parent, Some(SongId(12)));
        assert!(flags.contains(&NodeFlag::Hidden));
        assert!(flags.contains(&NodeFlag::Contest));
        assert!(parse_upload_payload("parent=x").is_err());
        assert!(parse_upload_payload("sparkly").is_err());
    }

    #[test]
    fn badge_payload_parses_categories_and_levels() {
        assert_eq!(parse_badge_payload("new_songs:Rookie"), Some((BadgeKind::NewSongs, 1)));
        assert_eq!(parse_badge_payload("overdubs:Virtuoso"), Some((BadgeKind::Overdubs, 3)));
        assert_eq!(
            parse_badge_payload("overdubs_received:Band leader"),
            Some((BadgeKind::OverdubsReceived, 2))
        );
        assert_eq!(parse_badge_payload("overdubs:Maestro"), None);
    }
}
