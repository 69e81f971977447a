//! Replay-based quality metrics: token-replay fitness, escaping-edges
//! precision, inverse-arc-degree simplicity, and execution-count
//! generalization. The formulas follow the PM4Py conventions so values are
//! comparable with that toolkit:
//!
//! - trace fitness  f = 1/2·(1 - missing/consumed) + 1/2·(1 - remaining/produced)
//! - precision      1 - Σ_s w(s)·|escaping(s)| / Σ_s w(s)·|enabled(s)|
//! - simplicity     1 / (1 + max(mean node degree - 2, 0))
//! - generalization 1 - mean over transitions of 1/sqrt(executions)
//!
//! Silent transitions are fired on demand along the shortest silent path;
//! the search is bounded at 10^4 markings per step, beyond which the trace
//! scores as if no silent path existed. Activities without any matching
//! transition in the net are skipped without token effect.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::event_log::{Activity, EventLog};
use crate::process_tree::{to_petri_net, Marking, PetriNet, ProcessTree};

/// Cap on markings explored per silent-transition search.
const SILENT_SEARCH_BOUND: usize = 10_000;

/// Token counts of one replayed trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayResult {
    pub produced: u64,
    pub consumed: u64,
    pub missing: u64,
    pub remaining: u64,
    /// Executions per transition, silent firings included.
    pub fired: Vec<u64>,
}

impl ReplayResult {
    pub fn fitness(&self) -> f64 {
        let missing_part = 1.0 - self.missing as f64 / self.consumed as f64;
        let remaining_part = 1.0 - self.remaining as f64 / self.produced as f64;
        0.5 * missing_part + 0.5 * remaining_part
    }
}

enum SilentGoal<'a> {
    EnableLabel(&'a Activity),
    ReachMarking(&'a [u32]),
}

/// Shortest sequence of silent firings from `start` satisfying the goal.
/// Deterministic: breadth-first, transitions expanded in index order.
fn silent_path(net: &PetriNet, start: &Marking, goal: &SilentGoal) -> Option<Vec<usize>> {
    let satisfied = |m: &Marking| match goal {
        SilentGoal::EnableLabel(a) => net
            .transitions()
            .iter()
            .enumerate()
            .any(|(t, tr)| tr.label.as_ref() == Some(*a) && net.is_enabled(t, m)),
        SilentGoal::ReachMarking(target) => m.as_slice() == *target,
    };
    if satisfied(start) {
        return Some(Vec::new());
    }

    let mut states: Vec<Marking> = vec![start.clone()];
    let mut parents: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX)];
    let mut seen: HashMap<Marking, usize> = HashMap::new();
    seen.insert(start.clone(), 0);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    while let Some(state) = queue.pop_front() {
        for (t, tr) in net.transitions().iter().enumerate() {
            if !tr.is_silent() || !net.is_enabled(t, &states[state]) {
                continue;
            }
            let mut next = states[state].clone();
            net.fire(t, &mut next);
            if seen.contains_key(&next) {
                continue;
            }
            if seen.len() >= SILENT_SEARCH_BOUND {
                return None;
            }
            let index = states.len();
            seen.insert(next.clone(), index);
            states.push(next);
            parents.push((state, t));

            if satisfied(&states[index]) {
                let mut path = Vec::new();
                let mut at = index;
                while at != 0 {
                    let (prev, trans) = parents[at];
                    path.push(trans);
                    at = prev;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(index);
        }
    }
    None
}

/// Token replay of a single trace against a workflow net.
pub fn replay_trace(net: &PetriNet, activities: &[Activity]) -> ReplayResult {
    let mut marking = net.initial_marking();
    let mut fired = vec![0u64; net.transitions().len()];
    let mut produced: u64 = 1; // the initial token
    let mut consumed: u64 = 0;
    let mut missing: u64 = 0;

    let mut fire_counted = |t: usize, marking: &mut Marking, missing: &mut u64| {
        let tr = &net.transitions()[t];
        for &p in &tr.inputs {
            if marking[p] == 0 {
                *missing += 1;
            }
        }
        consumed += tr.inputs.len() as u64;
        produced += tr.outputs.len() as u64;
        fired[t] += 1;
        net.fire(t, marking);
    };

    for activity in activities {
        let candidates: Vec<usize> = net
            .transitions()
            .iter()
            .enumerate()
            .filter(|(_, tr)| tr.label.as_ref() == Some(activity))
            .map(|(t, _)| t)
            .collect();
        if candidates.is_empty() {
            // No transition carries this label; the event is skipped.
            continue;
        }
        match silent_path(net, &marking, &SilentGoal::EnableLabel(activity)) {
            Some(path) => {
                for t in path {
                    fire_counted(t, &mut marking, &mut missing);
                }
                let t = *candidates
                    .iter()
                    .find(|&&t| net.is_enabled(t, &marking))
                    .expect("goal state enables the label");
                fire_counted(t, &mut marking, &mut missing);
            }
            None => {
                // Force the candidate needing the fewest conjured tokens.
                let t = *candidates
                    .iter()
                    .min_by_key(|&&t| {
                        net.transitions()[t]
                            .inputs
                            .iter()
                            .filter(|&&p| marking[p] == 0)
                            .count()
                    })
                    .unwrap();
                fire_counted(t, &mut marking, &mut missing);
            }
        }
    }

    let final_marking = net.final_marking();
    if let Some(path) = silent_path(net, &marking, &SilentGoal::ReachMarking(&final_marking)) {
        for t in path {
            fire_counted(t, &mut marking, &mut missing);
        }
    }
    // Consume the sink token that the final marking requires.
    consumed += 1;
    if marking[net.sink()] > 0 {
        marking[net.sink()] -= 1;
    } else {
        missing += 1;
    }
    let remaining: u64 = marking.iter().map(|&t| t as u64).sum();

    ReplayResult {
        produced,
        consumed,
        missing,
        remaining,
        fired,
    }
}

/// One replay pass over the log, grouped by trace variant: average trace
/// fitness and per-transition execution counts.
pub fn replay_log(net: &PetriNet, log: &EventLog) -> (f64, Vec<u64>) {
    let mut fired = vec![0u64; net.transitions().len()];
    if log.is_empty() {
        return (1.0, fired);
    }
    let mut variants: BTreeMap<&[Activity], u64> = BTreeMap::new();
    for trace in log.traces() {
        *variants.entry(trace.activities()).or_insert(0) += 1;
    }
    let mut total = 0.0;
    for (variant, count) in variants {
        let result = replay_trace(net, variant);
        total += result.fitness() * count as f64;
        for (total, c) in fired.iter_mut().zip(&result.fired) {
            *total += c * count;
        }
    }
    (total / log.len() as f64, fired)
}

/// Average token-replay fitness over all traces of the log.
pub fn replay_fitness(net: &PetriNet, log: &EventLog) -> f64 {
    replay_log(net, log).0
}

/// Labels enabled in the marking or any marking silently reachable from it.
fn enabled_labels(net: &PetriNet, start: &Marking) -> BTreeSet<Activity> {
    let mut labels = BTreeSet::new();
    let mut seen: HashMap<Marking, ()> = HashMap::new();
    seen.insert(start.clone(), ());
    let mut queue: VecDeque<Marking> = VecDeque::from([start.clone()]);
    while let Some(marking) = queue.pop_front() {
        for (t, tr) in net.transitions().iter().enumerate() {
            if !net.is_enabled(t, &marking) {
                continue;
            }
            match &tr.label {
                Some(a) => {
                    labels.insert(a.clone());
                }
                None => {
                    let mut next = marking.clone();
                    net.fire(t, &mut next);
                    if !seen.contains_key(&next) && seen.len() < SILENT_SEARCH_BOUND {
                        seen.insert(next.clone(), ());
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    labels
}

/// Replays a prefix cleanly; None when it needs missing tokens (the model
/// state after an unfitting prefix is undefined for precision purposes).
fn replay_prefix(net: &PetriNet, prefix: &[Activity]) -> Option<Marking> {
    let mut marking = net.initial_marking();
    for activity in prefix {
        let path = silent_path(net, &marking, &SilentGoal::EnableLabel(activity))?;
        for t in path {
            net.fire(t, &mut marking);
        }
        let t = net
            .transitions()
            .iter()
            .enumerate()
            .find(|(t, tr)| tr.label.as_ref() == Some(activity) && net.is_enabled(*t, &marking))
            .map(|(t, _)| t)?;
        net.fire(t, &mut marking);
    }
    Some(marking)
}

/// Escaping-edges precision: of the activities the model enables at each
/// log prefix state, which fraction was actually observed next?
pub fn precision(net: &PetriNet, log: &EventLog) -> f64 {
    // Prefix -> (weight, observed continuations).
    let mut states: BTreeMap<Vec<Activity>, (u64, BTreeSet<Activity>)> = BTreeMap::new();
    for trace in log.traces() {
        let acts = trace.activities();
        for i in 0..acts.len() {
            let entry = states.entry(acts[..i].to_vec()).or_default();
            entry.0 += 1;
            entry.1.insert(acts[i].clone());
        }
    }

    let mut allowed_total = 0.0;
    let mut escaping_total = 0.0;
    for (prefix, (weight, observed)) in &states {
        let Some(marking) = replay_prefix(net, prefix) else {
            continue;
        };
        let enabled = enabled_labels(net, &marking);
        let escaping = enabled.difference(observed).count();
        allowed_total += *weight as f64 * enabled.len() as f64;
        escaping_total += *weight as f64 * escaping as f64;
    }
    if allowed_total == 0.0 {
        return 1.0;
    }
    1.0 - escaping_total / allowed_total
}

/// Inverse arc-degree simplicity of the tree's net.
pub fn simplicity(tree: &ProcessTree) -> f64 {
    let net = to_petri_net(tree);
    let mut degrees: Vec<usize> = vec![0; net.place_count()];
    let mut node_count = net.place_count();
    for t in net.transitions() {
        for &p in t.inputs.iter().chain(t.outputs.iter()) {
            degrees[p] += 1;
        }
        node_count += 1;
    }
    let total_degree: usize =
        degrees.iter().sum::<usize>() + net.transitions().iter().map(|t| t.inputs.len() + t.outputs.len()).sum::<usize>();
    let mean = total_degree as f64 / node_count as f64;
    1.0 / (1.0 + (mean - 2.0).max(0.0))
}

/// Execution-count generalization: transitions replayed often generalize
/// well; never-replayed transitions count fully against the score.
pub fn generalization(net: &PetriNet, log: &EventLog) -> f64 {
    let (_, counts) = replay_log(net, log);
    generalization_from_counts(&counts)
}

fn generalization_from_counts(counts: &[u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let inv_sqrt_sum: f64 = counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { 1.0 / (c as f64).sqrt() })
        .sum();
    1.0 - inv_sqrt_sum / counts.len() as f64
}

/// The four quality metrics, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub fitness: f64,
    pub precision: f64,
    pub simplicity: f64,
    pub generalization: f64,
}

impl QualityReport {
    pub fn evaluate(tree: &ProcessTree, log: &EventLog) -> QualityReport {
        let net = to_petri_net(tree);
        let (fitness, fired) = replay_log(&net, log);
        QualityReport {
            fitness,
            precision: precision(&net, log),
            simplicity: simplicity(tree),
            generalization: generalization_from_counts(&fired),
        }
    }

    pub fn max_abs_deviation(&self, other: &QualityReport) -> f64 {
        (self.fitness - other.fitness)
            .abs()
            .max((self.precision - other.precision).abs())
            .max((self.simplicity - other.simplicity).abs())
            .max((self.generalization - other.generalization).abs())
    }
}
