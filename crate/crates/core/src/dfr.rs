//! Directly-follows relations with per-trace binary counts.
//!
//! The relation ranges over the alphabet augmented with dummy START and END
//! endpoints. A raw table materializes the full product set
//! (A ∪ {START}) × (A ∪ {END}), zero counts included, so that noisy-max
//! selection can pick pairs that never occur. Counts are binary per trace:
//! a pair is counted once per trace containing it, however often it repeats.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{Activity, EventLog};

#[derive(Debug, Error)]
pub enum DfrError {
    #[error("restriction set contains {0:?} which is not in the table's alphabet")]
    NotInAlphabet(Activity),
}

/// One side of a directly-follows pair: a real activity or a dummy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Start,
    Act(Activity),
    End,
}

impl Endpoint {
    pub fn activity(&self) -> Option<&Activity> {
        match self {
            Endpoint::Act(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_dummy(&self) -> bool {
        !matches!(self, Endpoint::Act(_))
    }

    pub fn label(&self) -> &str {
        match self {
            Endpoint::Start => "START",
            Endpoint::End => "END",
            Endpoint::Act(a) => a.label(),
        }
    }
}

/// A directed pair (from, to); `from` is never END and `to` is never START.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivityPair {
    pub from: Endpoint,
    pub to: Endpoint,
}

impl ActivityPair {
    pub fn new(from: Endpoint, to: Endpoint) -> Self {
        debug_assert!(!matches!(from, Endpoint::End));
        debug_assert!(!matches!(to, Endpoint::Start));
        ActivityPair { from, to }
    }

    pub fn acts(from: &Activity, to: &Activity) -> Self {
        ActivityPair {
            from: Endpoint::Act(from.clone()),
            to: Endpoint::Act(to.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DfrKind {
    /// Integer-valued counts over the full product set.
    Raw,
    /// Noised counts over a selected subset of pairs.
    Noisy,
}

/// Frequency-annotated directly-follows relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfrTable {
    counts: BTreeMap<ActivityPair, f64>,
    alphabet: BTreeSet<Activity>,
    kind: DfrKind,
}

impl DfrTable {
    pub fn from_counts(
        counts: BTreeMap<ActivityPair, f64>,
        alphabet: BTreeSet<Activity>,
        kind: DfrKind,
    ) -> Self {
        DfrTable {
            counts,
            alphabet,
            kind,
        }
    }

    pub fn kind(&self) -> DfrKind {
        self.kind
    }

    pub fn alphabet(&self) -> &BTreeSet<Activity> {
        &self.alphabet
    }

    pub fn counts(&self) -> &BTreeMap<ActivityPair, f64> {
        &self.counts
    }

    pub fn count(&self, pair: &ActivityPair) -> f64 {
        self.counts.get(pair).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, pair: &ActivityPair) -> bool {
        self.counts.contains_key(pair)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Whether a pair counts as present when reading the table as a graph.
    /// In a raw table the full product set is materialized, so presence
    /// means a strictly positive count; in a noisy table every selected
    /// pair is present, negative noise and all.
    pub fn is_edge(&self, pair: &ActivityPair) -> bool {
        match self.kind {
            DfrKind::Raw => self.count(pair) > 0.0,
            DfrKind::Noisy => self.contains(pair),
        }
    }

    /// Sum of counts of pairs starting at START (the noisy log size proxy).
    pub fn start_count_sum(&self) -> f64 {
        self.counts
            .iter()
            .filter(|(p, _)| p.from == Endpoint::Start)
            .map(|(_, c)| c)
            .sum()
    }

    /// Keeps pairs whose non-dummy endpoints all lie in `acts`. Pairs
    /// touching START or END survive when their non-dummy endpoint does.
    pub fn restrict(&self, acts: &BTreeSet<Activity>) -> Result<DfrTable, DfrError> {
        if let Some(missing) = acts.iter().find(|a| !self.alphabet.contains(*a)) {
            return Err(DfrError::NotInAlphabet(missing.clone()));
        }
        let keep = |e: &Endpoint| match e {
            Endpoint::Act(a) => acts.contains(a),
            _ => true,
        };
        let counts = self
            .counts
            .iter()
            .filter(|(p, _)| keep(&p.from) && keep(&p.to))
            .map(|(p, c)| (p.clone(), *c))
            .collect();
        Ok(DfrTable {
            counts,
            alphabet: acts.clone(),
            kind: self.kind,
        })
    }

    /// Deletes the given pairs (used to strip loop-back edges).
    pub fn without_pairs(&self, pairs: &BTreeSet<ActivityPair>) -> DfrTable {
        let counts = self
            .counts
            .iter()
            .filter(|(p, _)| !pairs.contains(*p))
            .map(|(p, c)| (p.clone(), *c))
            .collect();
        DfrTable {
            counts,
            alphabet: self.alphabet.clone(),
            kind: self.kind,
        }
    }

    /// Activities b with count(a, b) at or above the threshold.
    pub fn successors(&self, a: &Endpoint, present_threshold: f64) -> BTreeSet<Activity> {
        self.counts
            .iter()
            .filter(|(p, c)| p.from == *a && **c >= present_threshold)
            .filter_map(|(p, _)| p.to.activity().cloned())
            .collect()
    }

    /// Activities b with count(b, a) at or above the threshold.
    pub fn predecessors(&self, a: &Endpoint, present_threshold: f64) -> BTreeSet<Activity> {
        self.counts
            .iter()
            .filter(|(p, c)| p.to == *a && **c >= present_threshold)
            .filter_map(|(p, _)| p.from.activity().cloned())
            .collect()
    }

    /// `from,to,count` CSV for inspection.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,count\n");
        for (pair, count) in &self.counts {
            let _ = writeln!(out, "{},{},{}", pair.from.label(), pair.to.label(), count);
        }
        out
    }

    /// DOT digraph with counts as edge labels. Zero-count pairs are omitted
    /// to keep the graph readable.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfr {\n  rankdir=LR;\n");
        for (pair, count) in &self.counts {
            if self.kind == DfrKind::Raw && *count == 0.0 {
                continue;
            }
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                pair.from.label(),
                pair.to.label(),
                count
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the raw binary directly-follows table of a log. Every pair of the
/// product set is present; a pair's count is the number of traces in which
/// it occurs at least once. Each trace also contributes (START, first) and
/// (last, END) once.
pub fn build_dfr(log: &EventLog) -> DfrTable {
    let alphabet = log.alphabet().clone();
    let mut counts: BTreeMap<ActivityPair, f64> = BTreeMap::new();

    // Full product set (A ∪ {START}) × (A ∪ {END}), including (START, END).
    for a in &alphabet {
        counts.insert(
            ActivityPair::new(Endpoint::Start, Endpoint::Act(a.clone())),
            0.0,
        );
        counts.insert(
            ActivityPair::new(Endpoint::Act(a.clone()), Endpoint::End),
            0.0,
        );
        for b in &alphabet {
            counts.insert(ActivityPair::acts(a, b), 0.0);
        }
    }
    counts.insert(ActivityPair::new(Endpoint::Start, Endpoint::End), 0.0);

    for trace in log.traces() {
        let mut seen: BTreeSet<ActivityPair> = BTreeSet::new();
        seen.insert(ActivityPair::new(
            Endpoint::Start,
            Endpoint::Act(trace.first().clone()),
        ));
        seen.insert(ActivityPair::new(
            Endpoint::Act(trace.last().clone()),
            Endpoint::End,
        ));
        for window in trace.activities().windows(2) {
            seen.insert(ActivityPair::acts(&window[0], &window[1]));
        }
        for pair in seen {
            *counts.get_mut(&pair).expect("pair in product set") += 1.0;
        }
    }

    DfrTable {
        counts,
        alphabet,
        kind: DfrKind::Raw,
    }
}
