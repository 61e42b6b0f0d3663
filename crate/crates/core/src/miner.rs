//! Recurring-collaboration mining over song trees.
//!
//! Each tree is one transaction. The items of a transaction are the author
//! sets of every contiguous window of every root-to-leaf path, with repeated
//! authors inside a window collapsed. Counting is exact: because windows must
//! be contiguous, support is not monotone under subsets (a chain by authors
//! A-B-C yields {A,B}, {B,C} and {A,B,C} but never {A,C}), so no a-priori
//! style candidate pruning is applicable and only itemsets that actually
//! occur are ever counted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{AuthorId, SongForest, SongId, SongTree};
use crate::profile::{CollabKind, RecurringCollaboration};

/// Canonical author set: sorted, distinct ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Itemset(Vec<AuthorId>);

impl Itemset {
    pub fn from_members<I: IntoIterator<Item = AuthorId>>(members: I) -> Itemset {
        let mut ids: Vec<AuthorId> = members.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Itemset(ids)
    }

    pub fn members(&self) -> &[AuthorId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Itemset without one member; `member` must be present.
    pub fn without(&self, member: AuthorId) -> Itemset {
        Itemset(self.0.iter().copied().filter(|m| *m != member).collect())
    }
}

impl fmt::Display for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        write!(f, "{{")?;
        for m in &self.0 {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

/// The distinct author sets contributed by one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub itemsets: BTreeSet<Itemset>,
}

/// Exact occurrence counts over a transaction list.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemsetCounts {
    pub n_transactions: u64,
    pub counts: BTreeMap<Itemset, u64>,
}

impl ItemsetCounts {
    pub fn occurrences(&self, itemset: &Itemset) -> u64 {
        self.counts.get(itemset).copied().unwrap_or(0)
    }

    /// Fraction of transactions containing the itemset.
    pub fn support(&self, itemset: &Itemset) -> f64 {
        if self.n_transactions == 0 {
            return 0.0;
        }
        self.occurrences(itemset) as f64 / self.n_transactions as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerConfig {
    /// Keep itemsets seen in at least this many trees.
    pub min_occurrences: u64,
    /// Keep itemsets whose lift strictly exceeds this.
    pub min_lift: f64,
    /// Optional minimum support, disabled by default.
    pub minsup: Option<f64>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig { min_occurrences: 3, min_lift: 1.0, minsup: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Vec<AuthorId>,
    pub consequent: AuthorId,
    pub itemset: Itemset,
    pub occurrences: u64,
    pub support: f64,
    pub lift: f64,
}

/// Author sequences along every root-to-leaf path, in child order.
pub fn enumerate_paths(tree: &SongTree) -> Vec<Vec<AuthorId>> {
    tree.paths()
        .into_iter()
        .map(|path| path.into_iter().map(|id| tree.nodes[&id].author_id).collect())
        .collect()
}

/// All contiguous windows of a path: lengths 1..=l, offsets left to right,
/// l(l+1)/2 windows in total.
pub fn contiguous_windows<T: Clone>(path: &[T]) -> Vec<Vec<T>> {
    let l = path.len();
    let mut out = Vec::with_capacity(l * (l + 1) / 2);
    for len in 1..=l {
        for start in 0..=(l - len) {
            out.push(path[start..start + len].to_vec());
        }
    }
    out
}

/// The transaction a tree contributes: canonical author sets of all windows,
/// deduplicated within the tree.
pub fn transaction_of(tree: &SongTree) -> Transaction {
    let mut itemsets = BTreeSet::new();
    for path in enumerate_paths(tree) {
        for window in contiguous_windows(&path) {
            itemsets.insert(Itemset::from_members(window));
        }
    }
    Transaction { itemsets }
}

/// Counts in how many transactions each itemset occurs. The merge is a sum
/// of per-transaction indicator maps, so parallel and sequential evaluation
/// agree exactly.
pub fn count_itemsets(transactions: &[Transaction]) -> ItemsetCounts {
    let counts = transactions
        .par_iter()
        .fold(BTreeMap::<Itemset, u64>::new, |mut acc, t| {
            for itemset in &t.itemsets {
                *acc.entry(itemset.clone()).or_default() += 1;
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (itemset, c) in b {
                *a.entry(itemset).or_default() += c;
            }
            a
        });
    ItemsetCounts { n_transactions: transactions.len() as u64, counts }
}

/// Support of the itemset over the product of its members' singleton
/// supports. Defined for any size >= 1; singletons get lift 1/sup({a}) * sup
/// which reduces to 1 only in degenerate corpora, so callers normally apply
/// it to sizes >= 2.
pub fn lift(counts: &ItemsetCounts, itemset: &Itemset) -> Result<f64> {
    if itemset.is_empty() {
        return Err(CoreError::InvalidArgument("lift of empty itemset".to_string()));
    }
    let mut denom = 1.0;
    for member in itemset.members() {
        let single = counts.support(&Itemset::from_members([*member]));
        if single == 0.0 {
            return Err(CoreError::InsufficientData(format!(
                "member {member} has zero singleton support"
            )));
        }
        denom *= single;
    }
    Ok(counts.support(itemset) / denom)
}

/// Emits, for every itemset of size >= 2 that passes the occurrence, lift,
/// and optional support thresholds, one rule per member as consequent (the
/// rest as antecedent). Ordered by lift, then occurrences, both descending,
/// then itemset and consequent.
pub fn generate_rules(counts: &ItemsetCounts, config: &MinerConfig) -> Result<Vec<AssociationRule>> {
    let mut rules = Vec::new();
    for (itemset, &occ) in &counts.counts {
        if itemset.len() < 2 || occ < config.min_occurrences {
            continue;
        }
        let support = counts.support(itemset);
        if config.minsup.is_some_and(|m| support < m) {
            continue;
        }
        let lift = lift(counts, itemset)?;
        if lift <= config.min_lift {
            continue;
        }
        for &consequent in itemset.members() {
            rules.push(AssociationRule {
                antecedent: itemset.without(consequent).members().to_vec(),
                consequent,
                itemset: itemset.clone(),
                occurrences: occ,
                support,
                lift,
            });
        }
    }
    rules.sort_by(|a, b| {
        b.lift
            .total_cmp(&a.lift)
            .then(b.occurrences.cmp(&a.occurrences))
            .then(a.itemset.cmp(&b.itemset))
            .then(a.consequent.cmp(&b.consequent))
    });
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiningOutcome {
    pub n_transactions: u64,
    /// Itemsets of size >= 2 that occurred at all.
    pub distinct_itemsets: u64,
    pub rules: Vec<AssociationRule>,
    pub collaborations: Vec<RecurringCollaboration>,
}

/// Full mining pass over a forest: one transaction per tree, exact counting,
/// thresholding, and one collaboration record per retained itemset carrying
/// the ids of the songs its windows cover. Collaboration ids are assigned in
/// ascending member order.
pub fn mine_recurring(forest: &SongForest, config: &MinerConfig) -> Result<MiningOutcome> {
    let transactions: Vec<Transaction> =
        forest.trees.par_iter().map(transaction_of).collect();
    let counts = count_itemsets(&transactions);
    let rules = generate_rules(&counts, config)?;

    let retained: BTreeSet<Itemset> = rules.iter().map(|r| r.itemset.clone()).collect();
    let mut songs_of: BTreeMap<Itemset, BTreeSet<SongId>> =
        retained.iter().map(|i| (i.clone(), BTreeSet::new())).collect();
    if !retained.is_empty() {
        for tree in &forest.trees {
            for path in tree.paths() {
                let authors: Vec<AuthorId> =
                    path.iter().map(|id| tree.nodes[id].author_id).collect();
                let l = path.len();
                for len in 1..=l {
                    for start in 0..=(l - len) {
                        let itemset = Itemset::from_members(authors[start..start + len].iter().copied());
                        if let Some(songs) = songs_of.get_mut(&itemset) {
                            songs.extend(&path[start..start + len]);
                        }
                    }
                }
            }
        }
    }

    let collaborations = retained
        .iter()
        .enumerate()
        .map(|(i, itemset)| RecurringCollaboration {
            collab_id: i as u64 + 1,
            members: itemset.members().to_vec(),
            occurrences: counts.occurrences(itemset),
            support: counts.support(itemset),
            lift: lift(&counts, itemset).expect("retained itemset has supported members"),
            song_ids: songs_of[itemset].iter().copied().collect(),
            messages: 0,
            invites: 0,
            delta_likes: 0,
            delta_coolness: 0.0,
            bins: BTreeMap::new(),
            kind: CollabKind::OnlineOnly,
        })
        .collect();

    let distinct_itemsets = counts.counts.keys().filter(|i| i.len() >= 2).count() as u64;
    Ok(MiningOutcome { n_transactions: counts.n_transactions, distinct_itemsets, rules, collaborations })
}
