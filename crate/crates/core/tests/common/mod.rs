//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles here deliberately take different routes than the library:
//! reachability by per-node BFS instead of a closure matrix, components by
//! BFS instead of union-find, and cut validity by exhaustive enumeration
//! of (ordered) partitions. They define what the fast implementations must
//! agree with.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dpim_core::cut_detection::DfrGraph;
use dpim_core::event_log::{Activity, EventLog, Trace};
use dpim_core::process_tree::{Marking, Operator, PetriNet, ProcessTree};

pub fn act(label: &str) -> Activity {
    Activity::new(label).unwrap()
}

pub fn acts(labels: &[&str]) -> BTreeSet<Activity> {
    labels.iter().map(|l| act(l)).collect()
}

pub fn trace(labels: &[&str]) -> Trace {
    Trace::new(labels.iter().map(|l| act(l)).collect()).unwrap()
}

/// The 100-trace worked example: 63x(R,H,M,D), 25x(R,H,S,D), 12x(R,H,D),
/// optionally plus the single (R,H,S,S,D) trace.
pub fn table1_log(with_variant4: bool) -> EventLog {
    let mut traces = Vec::new();
    for _ in 0..63 {
        traces.push(trace(&["R", "H", "M", "D"]));
    }
    for _ in 0..25 {
        traces.push(trace(&["R", "H", "S", "D"]));
    }
    for _ in 0..12 {
        traces.push(trace(&["R", "H", "D"]));
    }
    if with_variant4 {
        traces.push(trace(&["R", "H", "S", "S", "D"]));
    }
    EventLog::new(traces)
}

// ---------------------------------------------------------------------------
// Graph helpers and enumeration
// ---------------------------------------------------------------------------

pub fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> DfrGraph {
    DfrGraph::from_parts(
        acts(nodes),
        edges.iter().map(|(a, b)| (act(a), act(b))).collect(),
    )
}

/// Every directed graph (self-loops allowed) over the given nodes,
/// enumerated by edge bitmask.
pub fn all_graphs<'a>(labels: &'a [&'a str]) -> impl Iterator<Item = DfrGraph> + 'a {
    let n = labels.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    (0u64..(1u64 << pairs.len())).map(move |mask| {
        let edges: BTreeSet<(Activity, Activity)> = pairs
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, (i, j))| (act(labels[*i]), act(labels[*j])))
            .collect();
        DfrGraph::from_parts(labels.iter().map(|l| act(l)).collect(), edges)
    })
}

pub fn random_graph(labels: &[&str], edge_probability: f64, rng: &mut ChaCha8Rng) -> DfrGraph {
    let mut edges = BTreeSet::new();
    for a in labels {
        for b in labels {
            if rng.gen::<f64>() < edge_probability {
                edges.insert((act(a), act(b)));
            }
        }
    }
    DfrGraph::from_parts(labels.iter().map(|l| act(l)).collect(), edges)
}

/// Path-of-length-one-or-more reachability by plain BFS from each node.
pub fn bfs_reachability(g: &DfrGraph) -> BTreeMap<Activity, BTreeSet<Activity>> {
    let mut succ: BTreeMap<&Activity, Vec<&Activity>> = BTreeMap::new();
    for (a, b) in g.edges() {
        succ.entry(a).or_default().push(b);
    }
    let mut out = BTreeMap::new();
    for start in g.nodes() {
        let mut reached = BTreeSet::new();
        let mut queue: VecDeque<&Activity> = succ.get(start).cloned().unwrap_or_default().into();
        while let Some(node) = queue.pop_front() {
            if reached.insert(node.clone()) {
                if let Some(next) = succ.get(node) {
                    queue.extend(next.iter().copied());
                }
            }
        }
        out.insert(start.clone(), reached);
    }
    out
}

/// All unordered partitions of the items into nonempty blocks.
pub fn set_partitions(items: &[Activity]) -> Vec<Vec<BTreeSet<Activity>>> {
    fn recurse(
        items: &[Activity],
        at: usize,
        current: &mut Vec<BTreeSet<Activity>>,
        out: &mut Vec<Vec<BTreeSet<Activity>>>,
    ) {
        if at == items.len() {
            out.push(current.clone());
            return;
        }
        for i in 0..current.len() {
            current[i].insert(items[at].clone());
            recurse(items, at + 1, current, out);
            current[i].remove(&items[at]);
        }
        current.push(BTreeSet::from([items[at].clone()]));
        recurse(items, at + 1, current, out);
        current.pop();
    }
    let mut out = Vec::new();
    recurse(items, 0, &mut Vec::new(), &mut out);
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..k).collect();
    fn heap(k: usize, order: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(order.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, order, out);
            if k % 2 == 0 {
                order.swap(i, k - 1);
            } else {
                order.swap(0, k - 1);
            }
        }
    }
    heap(k, &mut order, &mut out);
    out
}

/// All ordered partitions (every unordered partition in every block order).
pub fn ordered_partitions(items: &[Activity]) -> Vec<Vec<BTreeSet<Activity>>> {
    let mut out = Vec::new();
    for partition in set_partitions(items) {
        for perm in permutations(partition.len()) {
            out.push(perm.iter().map(|&i| partition[i].clone()).collect());
        }
    }
    out
}

fn canonical_key(parts: &[BTreeSet<Activity>]) -> Vec<Vec<Activity>> {
    let mut key: Vec<Vec<Activity>> = parts
        .iter()
        .map(|p| p.iter().cloned().collect())
        .collect();
    key.sort();
    key
}

fn sort_parts(mut parts: Vec<BTreeSet<Activity>>) -> Vec<BTreeSet<Activity>> {
    parts.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    parts
}

// ---------------------------------------------------------------------------
// Cut oracles
// ---------------------------------------------------------------------------

/// Connected components by BFS over the undirected edge relation.
pub fn xor_oracle(g: &DfrGraph) -> Option<Vec<BTreeSet<Activity>>> {
    let mut neighbors: BTreeMap<&Activity, Vec<&Activity>> = BTreeMap::new();
    for (a, b) in g.edges() {
        neighbors.entry(a).or_default().push(b);
        neighbors.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<Activity> = BTreeSet::new();
    let mut components = Vec::new();
    for start in g.nodes() {
        if seen.contains(start) {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if !component.insert(node.clone()) {
                continue;
            }
            seen.insert(node.clone());
            if let Some(next) = neighbors.get(node) {
                queue.extend(next.iter().copied());
            }
        }
        components.push(component);
    }
    if components.len() < 2 {
        return None;
    }
    Some(sort_parts(components))
}

/// Exhaustive maximal sequence cut: ordered partitions where every earlier
/// activity reaches every later one and never the reverse.
pub fn seq_oracle(g: &DfrGraph) -> Option<Vec<BTreeSet<Activity>>> {
    let nodes: Vec<Activity> = g.nodes().iter().cloned().collect();
    if nodes.len() < 2 {
        return None;
    }
    let reach = bfs_reachability(g);
    let reaches = |a: &Activity, b: &Activity| reach[a].contains(b);
    let mut best: Option<Vec<BTreeSet<Activity>>> = None;
    for partition in ordered_partitions(&nodes) {
        if partition.len() < 2 {
            continue;
        }
        let valid = (0..partition.len()).all(|i| {
            (i + 1..partition.len()).all(|j| {
                partition[i].iter().all(|a| {
                    partition[j]
                        .iter()
                        .all(|b| reaches(a, b) && !reaches(b, a))
                })
            })
        });
        if !valid {
            continue;
        }
        let better = match &best {
            None => true,
            Some(current) => {
                partition.len() > current.len()
                    || (partition.len() == current.len()
                        && ordered_key(&partition) < ordered_key(current))
            }
        };
        if better {
            best = Some(partition);
        }
    }
    best
}

fn ordered_key(parts: &[BTreeSet<Activity>]) -> Vec<Vec<Activity>> {
    parts.iter().map(|p| p.iter().cloned().collect()).collect()
}

/// Exhaustive parallel cut: unordered partitions with fully bidirectional
/// cross-part pairs and a start and an end in every part.
pub fn and_oracle(
    g: &DfrGraph,
    starts: &BTreeSet<Activity>,
    ends: &BTreeSet<Activity>,
) -> Option<Vec<BTreeSet<Activity>>> {
    let nodes: Vec<Activity> = g.nodes().iter().cloned().collect();
    if nodes.len() < 2 {
        return None;
    }
    let mut best: Option<Vec<BTreeSet<Activity>>> = None;
    for partition in set_partitions(&nodes) {
        if partition.len() < 2 {
            continue;
        }
        let bidirectional = (0..partition.len()).all(|i| {
            (i + 1..partition.len()).all(|j| {
                partition[i].iter().all(|a| {
                    partition[j]
                        .iter()
                        .all(|b| g.has_edge(a, b) && g.has_edge(b, a))
                })
            })
        });
        let anchored = partition.iter().all(|part| {
            part.iter().any(|a| starts.contains(a)) && part.iter().any(|a| ends.contains(a))
        });
        if !bidirectional || !anchored {
            continue;
        }
        let candidate = sort_parts(partition);
        let better = match &best {
            None => true,
            Some(current) => {
                candidate.len() > current.len()
                    || (candidate.len() == current.len()
                        && canonical_key(&candidate) < canonical_key(current))
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    best
}

/// Exhaustive loop cut: the block containing all starts and ends is the
/// do-part; the others must be entered only from ends (all of them, if
/// any), left only into starts (all of them, if any), and mutually
/// unconnected.
pub fn loop_oracle(
    g: &DfrGraph,
    starts: &BTreeSet<Activity>,
    ends: &BTreeSet<Activity>,
) -> Option<Vec<BTreeSet<Activity>>> {
    let nodes: Vec<Activity> = g.nodes().iter().cloned().collect();
    let starts: BTreeSet<Activity> = starts.iter().filter(|a| g.nodes().contains(*a)).cloned().collect();
    let ends: BTreeSet<Activity> = ends.iter().filter(|a| g.nodes().contains(*a)).cloned().collect();
    if nodes.len() < 2 || starts.is_empty() || ends.is_empty() {
        return None;
    }
    let need: BTreeSet<Activity> = starts.union(&ends).cloned().collect();
    let mut best: Option<Vec<BTreeSet<Activity>>> = None;
    for partition in set_partitions(&nodes) {
        if partition.len() < 2 {
            continue;
        }
        let Some(do_index) = partition.iter().position(|p| need.is_subset(p)) else {
            continue;
        };
        let do_part = &partition[do_index];
        let redos: Vec<&BTreeSet<Activity>> = partition
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != do_index)
            .map(|(_, p)| p)
            .collect();

        let mut valid = true;
        // No edges between distinct redo parts.
        'pairs: for (i, r1) in redos.iter().enumerate() {
            for r2 in redos.iter().skip(i + 1) {
                for a in r1.iter() {
                    for b in r2.iter() {
                        if g.has_edge(a, b) || g.has_edge(b, a) {
                            valid = false;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        // Boundary conditions.
        if valid {
            for (a, b) in g.edges() {
                let a_do = do_part.contains(a);
                let b_do = do_part.contains(b);
                if a_do && !b_do && !ends.contains(a) {
                    valid = false;
                }
                if !a_do && b_do && !starts.contains(b) {
                    valid = false;
                }
            }
        }
        // Completeness: a redo node touching the body touches all of it.
        if valid {
            for redo in &redos {
                for x in redo.iter() {
                    if starts.iter().any(|s| g.has_edge(x, s))
                        && !starts.iter().all(|s| g.has_edge(x, s))
                    {
                        valid = false;
                    }
                    if ends.iter().any(|e| g.has_edge(e, x))
                        && !ends.iter().all(|e| g.has_edge(e, x))
                    {
                        valid = false;
                    }
                }
            }
        }
        if !valid {
            continue;
        }

        let mut candidate = vec![do_part.clone()];
        candidate.extend(sort_parts(redos.into_iter().cloned().collect()));
        let better = match &best {
            None => true,
            Some(current) => {
                candidate.len() > current.len()
                    || (candidate.len() == current.len()
                        && ordered_key(&candidate) < ordered_key(current))
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Workflow-net soundness by state-space exploration
// ---------------------------------------------------------------------------

/// Classic soundness: from every reachable marking the final marking stays
/// reachable, the final marking is never strictly covered, and every
/// transition fires somewhere. Exploration is capped.
pub fn check_soundness(net: &PetriNet, max_markings: usize) -> Result<(), String> {
    let initial = net.initial_marking();
    let final_marking = net.final_marking();

    let mut states: Vec<Marking> = vec![initial.clone()];
    let mut index: HashMap<Marking, usize> = HashMap::from([(initial, 0)]);
    let mut edges: Vec<Vec<usize>> = vec![Vec::new()];
    let mut fired = vec![false; net.transitions().len()];
    let mut queue = VecDeque::from([0usize]);

    while let Some(at) = queue.pop_front() {
        for t in 0..net.transitions().len() {
            if !net.is_enabled(t, &states[at]) {
                continue;
            }
            fired[t] = true;
            let mut next = states[at].clone();
            net.fire(t, &mut next);
            let next_index = match index.get(&next) {
                Some(&i) => i,
                None => {
                    if states.len() >= max_markings {
                        return Err(format!("state space exceeds {max_markings} markings"));
                    }
                    let i = states.len();
                    index.insert(next.clone(), i);
                    states.push(next);
                    edges.push(Vec::new());
                    queue.push_back(i);
                    i
                }
            };
            edges[at].push(next_index);
        }
    }

    let Some(&final_index) = index.get(&final_marking) else {
        return Err("final marking unreachable".into());
    };
    // Backward reachability to the final marking.
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (from, outs) in edges.iter().enumerate() {
        for &to in outs {
            reverse[to].push(from);
        }
    }
    let mut can_finish = vec![false; states.len()];
    let mut queue = VecDeque::from([final_index]);
    can_finish[final_index] = true;
    while let Some(at) = queue.pop_front() {
        for &prev in &reverse[at] {
            if !can_finish[prev] {
                can_finish[prev] = true;
                queue.push_back(prev);
            }
        }
    }
    if let Some(stuck) = can_finish.iter().position(|ok| !ok) {
        return Err(format!("marking {:?} cannot reach the final marking", states[stuck]));
    }
    for state in &states {
        let covers = state.iter().zip(&final_marking).all(|(m, f)| m >= f);
        if covers && state != &final_marking {
            return Err(format!("marking {state:?} strictly covers the final marking"));
        }
    }
    if let Some(dead) = fired.iter().position(|f| !f) {
        return Err(format!("transition {dead} is dead"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random trees and logs sampled from them
// ---------------------------------------------------------------------------

/// Random block-structured tree over distinct activities.
pub fn random_tree(rng: &mut ChaCha8Rng, max_activities: usize, depth: usize) -> ProcessTree {
    let labels: Vec<String> = (0..max_activities)
        .map(|i| format!("{}", (b'A' + i as u8) as char))
        .collect();
    let mut pool: Vec<Activity> = labels.iter().map(|l| act(l)).collect();
    build_random(rng, &mut pool, depth)
}

fn build_random(rng: &mut ChaCha8Rng, pool: &mut Vec<Activity>, depth: usize) -> ProcessTree {
    if pool.is_empty() {
        return ProcessTree::Tau;
    }
    if depth == 0 || pool.len() == 1 || rng.gen::<f64>() < 0.3 {
        return ProcessTree::Leaf(pool.remove(rng.gen_range(0..pool.len())));
    }
    let op = match rng.gen_range(0..4) {
        0 => Operator::Seq,
        1 => Operator::Xor,
        2 => Operator::And,
        _ => Operator::Loop,
    };
    let arity = rng.gen_range(2..=3.min(pool.len()));
    let mut children = Vec::new();
    for i in 0..arity {
        // Allow a tau child occasionally, but keep at least one real child.
        if i > 0 && rng.gen::<f64>() < 0.15 {
            children.push(ProcessTree::Tau);
        } else {
            children.push(build_random(rng, pool, depth - 1));
        }
    }
    ProcessTree::Node(op, children)
}

/// One random walk through the tree's language.
pub fn sample_trace(tree: &ProcessTree, rng: &mut ChaCha8Rng) -> Vec<Activity> {
    match tree {
        ProcessTree::Tau => Vec::new(),
        ProcessTree::Leaf(a) => vec![a.clone()],
        ProcessTree::Node(Operator::Seq, children) => children
            .iter()
            .flat_map(|c| sample_trace(c, rng))
            .collect(),
        ProcessTree::Node(Operator::Xor, children) => {
            let pick = rng.gen_range(0..children.len());
            sample_trace(&children[pick], rng)
        }
        ProcessTree::Node(Operator::And, children) => {
            let mut parts: Vec<Vec<Activity>> =
                children.iter().map(|c| sample_trace(c, rng)).collect();
            let mut merged = Vec::new();
            while parts.iter().any(|p| !p.is_empty()) {
                let alive: Vec<usize> = parts
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| !p.is_empty())
                    .map(|(i, _)| i)
                    .collect();
                let pick = alive[rng.gen_range(0..alive.len())];
                merged.push(parts[pick].remove(0));
            }
            merged
        }
        ProcessTree::Node(Operator::Loop, children) => {
            let mut out = sample_trace(&children[0], rng);
            let mut rounds = 0;
            while rounds < 3 && rng.gen::<f64>() < 0.4 {
                let redo = rng.gen_range(1..children.len());
                out.extend(sample_trace(&children[redo], rng));
                out.extend(sample_trace(&children[0], rng));
                rounds += 1;
            }
            out
        }
    }
}

/// Samples `size` nonempty traces from the tree's language.
pub fn sample_log(tree: &ProcessTree, size: usize, rng: &mut ChaCha8Rng) -> EventLog {
    let mut traces = Vec::with_capacity(size);
    let mut guard = 0;
    while traces.len() < size {
        let sampled = sample_trace(tree, rng);
        if !sampled.is_empty() {
            traces.push(Trace::new(sampled).unwrap());
        } else {
            guard += 1;
            if guard > size * 100 {
                panic!("tree language appears to be empty-only");
            }
        }
    }
    EventLog::new(traces)
}

// ---------------------------------------------------------------------------
// Synthetic logs for the non-DP parity check
// ---------------------------------------------------------------------------

fn repeat_traces(groups: &[(usize, &[&str])]) -> Vec<Trace> {
    let mut out = Vec::new();
    for (count, labels) in groups {
        for _ in 0..*count {
            out.push(trace(labels));
        }
    }
    out
}

/// Interleaves the given per-branch sequences uniformly at random.
fn interleave(parts: &mut [Vec<Activity>], rng: &mut ChaCha8Rng) -> Vec<Activity> {
    let mut merged = Vec::new();
    while parts.iter().any(|p| !p.is_empty()) {
        let alive: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(i, _)| i)
            .collect();
        let pick = alive[rng.gen_range(0..alive.len())];
        merged.push(parts[pick].remove(0));
    }
    merged
}

/// Eight deterministic block-structured logs (>= 500 traces, <= 10
/// activities) covering SEQ, XOR, AND, and LOOP roots. Activities repeat
/// or skip with clear margins so the private miner's tau and loop rules
/// settle the same way the baseline does at negligible noise.
pub fn parity_logs() -> Vec<(&'static str, EventLog)> {
    let mut out = Vec::new();

    // SEQ roots: every letter occasionally doubles into a short self-loop.
    out.push((
        "seq3",
        EventLog::new(repeat_traces(&[
            (400, &["A", "B", "C"]),
            (40, &["A", "A", "B", "C"]),
            (30, &["A", "B", "B", "C"]),
            (30, &["A", "B", "C", "C"]),
        ])),
    ));
    out.push((
        "seq5",
        EventLog::new(repeat_traces(&[
            (430, &["A", "B", "C", "D", "E"]),
            (16, &["A", "A", "B", "C", "D", "E"]),
            (16, &["A", "B", "B", "C", "D", "E"]),
            (16, &["A", "B", "C", "C", "D", "E"]),
            (16, &["A", "B", "C", "D", "D", "E"]),
            (16, &["A", "B", "C", "D", "E", "E"]),
        ])),
    ));

    // XOR roots over self-loopable branches.
    out.push((
        "xor2",
        EventLog::new(repeat_traces(&[
            (250, &["A"]),
            (50, &["A", "A"]),
            (150, &["B"]),
            (50, &["B", "B"]),
        ])),
    ));
    out.push((
        "xor3",
        EventLog::new(repeat_traces(&[
            (150, &["A"]),
            (30, &["A", "A"]),
            (120, &["B"]),
            (30, &["B", "B"]),
            (140, &["C"]),
            (30, &["C", "C"]),
        ])),
    ));

    // AND roots: four optional branches, and three branches with doubles.
    let mut rng = ChaCha8Rng::seed_from_u64(0xDF1);
    let mut traces = Vec::new();
    while traces.len() < 500 {
        let mut parts: Vec<Vec<Activity>> = ["A", "B", "C", "D"]
            .iter()
            .filter(|_| rng.gen::<f64>() < 0.85)
            .map(|l| vec![act(l)])
            .collect();
        if parts.is_empty() {
            continue;
        }
        traces.push(Trace::new(interleave(&mut parts, &mut rng)).unwrap());
    }
    out.push(("and4_optional", EventLog::new(traces)));

    let mut rng = ChaCha8Rng::seed_from_u64(0xDF2);
    let mut traces = Vec::new();
    for _ in 0..500 {
        let mut parts: Vec<Vec<Activity>> = ["A", "B", "C"]
            .iter()
            .map(|l| {
                if rng.gen::<f64>() < 0.3 {
                    vec![act(l), act(l)]
                } else {
                    vec![act(l)]
                }
            })
            .collect();
        traces.push(Trace::new(interleave(&mut parts, &mut rng)).unwrap());
    }
    out.push(("and3_doubled", EventLog::new(traces)));

    // LOOP roots: a sequential body whose letters double, a redo that
    // doubles too, and zero or more loop rounds per trace.
    for (name, letters, seed) in [
        ("loop3", vec!["A", "B", "C"], 0xDF3u64),
        ("loop5", vec!["A", "B", "C", "D", "E"], 0xDF4),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traces = Vec::new();
        for _ in 0..520 {
            let mut sequence: Vec<Activity> = Vec::new();
            let body = |sequence: &mut Vec<Activity>, rng: &mut ChaCha8Rng| {
                for l in &letters {
                    sequence.push(act(l));
                    if rng.gen::<f64>() < 0.15 {
                        sequence.push(act(l));
                    }
                }
            };
            body(&mut sequence, &mut rng);
            let mut rounds = 0;
            while rounds < 2 && rng.gen::<f64>() < 0.4 {
                sequence.push(act("F"));
                if rng.gen::<f64>() < 0.3 {
                    sequence.push(act("F"));
                }
                body(&mut sequence, &mut rng);
                rounds += 1;
            }
            traces.push(Trace::new(sequence).unwrap());
        }
        out.push((name, EventLog::new(traces)));
    }

    out
}

// ---------------------------------------------------------------------------
// Bitmask cut oracles for exhaustive graph enumeration
// ---------------------------------------------------------------------------

/// Exhaustive cut oracles over node-index bitmasks. Partitions of the node
/// set are enumerated once and reused across all graphs of the same size;
/// graphs are adjacency masks (edges[i] has bit j set for an edge i -> j).
pub struct MaskOracle {
    n: usize,
    /// Unordered partitions, each a list of block masks.
    unordered: Vec<Vec<u32>>,
    /// Ordered partitions (unordered ones in every block order).
    ordered: Vec<Vec<u32>>,
}

impl MaskOracle {
    pub fn new(n: usize) -> MaskOracle {
        let items: Vec<Activity> = (0..n)
            .map(|i| act(&format!("{}", (b'A' + i as u8) as char)))
            .collect();
        let to_mask = |block: &BTreeSet<Activity>| -> u32 {
            block
                .iter()
                .map(|a| {
                    1u32 << items
                        .iter()
                        .position(|x| x == a)
                        .expect("block element in item list")
                })
                .sum()
        };
        let unordered: Vec<Vec<u32>> = set_partitions(&items)
            .iter()
            .map(|p| p.iter().map(to_mask).collect())
            .collect();
        let ordered: Vec<Vec<u32>> = ordered_partitions(&items)
            .iter()
            .map(|p| p.iter().map(to_mask).collect())
            .collect();
        MaskOracle {
            n,
            unordered,
            ordered,
        }
    }

    /// Reachability (paths of length >= 1) by mask fixpoint per node.
    fn reach(&self, edges: &[u32]) -> Vec<u32> {
        (0..self.n)
            .map(|start| {
                let mut reached = edges[start];
                loop {
                    let mut grown = reached;
                    for j in Self::bits(reached) {
                        grown |= edges[j];
                    }
                    if grown == reached {
                        break;
                    }
                    reached = grown;
                }
                reached
            })
            .collect()
    }

    fn bits(mask: u32) -> impl Iterator<Item = usize> {
        (0..32).filter(move |j| mask & (1 << j) != 0)
    }

    /// Sorted-block encoding for canonical tie-breaking; matches the
    /// lexicographic order on activity-label block lists.
    fn key(blocks: &[u32], sort_blocks: bool) -> Vec<Vec<usize>> {
        let mut key: Vec<Vec<usize>> = blocks.iter().map(|&m| Self::bits(m).collect()).collect();
        if sort_blocks {
            key.sort();
        }
        key
    }

    fn better(candidate: &[u32], best: &Option<Vec<u32>>, sort_blocks: bool) -> bool {
        match best {
            None => true,
            Some(current) => {
                candidate.len() > current.len()
                    || (candidate.len() == current.len()
                        && Self::key(candidate, sort_blocks) < Self::key(current, sort_blocks))
            }
        }
    }

    pub fn seq(&self, edges: &[u32]) -> Option<Vec<u32>> {
        let reach = self.reach(edges);
        let mut best: Option<Vec<u32>> = None;
        for partition in &self.ordered {
            if partition.len() < 2 || !Self::better(partition, &best, false) {
                continue;
            }
            let valid = (0..partition.len()).all(|i| {
                (i + 1..partition.len()).all(|j| {
                    Self::bits(partition[i]).all(|a| reach[a] & partition[j] == partition[j])
                        && Self::bits(partition[j]).all(|b| reach[b] & partition[i] == 0)
                })
            });
            if valid {
                best = Some(partition.clone());
            }
        }
        best
    }

    pub fn xor(&self, edges: &[u32]) -> Option<Vec<u32>> {
        // Undirected components by repeated mask expansion.
        let undirected: Vec<u32> = (0..self.n)
            .map(|i| {
                let mut m = edges[i];
                for j in 0..self.n {
                    if edges[j] & (1 << i) != 0 {
                        m |= 1 << j;
                    }
                }
                m
            })
            .collect();
        let mut seen = 0u32;
        let mut components = Vec::new();
        for i in 0..self.n {
            if seen & (1 << i) != 0 {
                continue;
            }
            let mut component = 1u32 << i;
            loop {
                let mut grown = component;
                for j in Self::bits(component) {
                    grown |= undirected[j];
                }
                if grown == component {
                    break;
                }
                component = grown;
            }
            seen |= component;
            components.push(component);
        }
        if components.len() < 2 {
            return None;
        }
        components.sort_by_key(|m| m.trailing_zeros());
        Some(components)
    }

    pub fn and(&self, edges: &[u32], starts: u32, ends: u32) -> Option<Vec<u32>> {
        let mut best: Option<Vec<u32>> = None;
        for partition in &self.unordered {
            if partition.len() < 2 {
                continue;
            }
            let anchored = partition
                .iter()
                .all(|&m| m & starts != 0 && m & ends != 0);
            if !anchored {
                continue;
            }
            let bidirectional = (0..partition.len()).all(|i| {
                (i + 1..partition.len()).all(|j| {
                    Self::bits(partition[i]).all(|a| edges[a] & partition[j] == partition[j])
                        && Self::bits(partition[j]).all(|b| edges[b] & partition[i] == partition[i])
                })
            });
            if !bidirectional {
                continue;
            }
            let mut candidate = partition.clone();
            candidate.sort_by_key(|m| m.trailing_zeros());
            if Self::better(&candidate, &best, true) {
                best = Some(candidate);
            }
        }
        best
    }

    pub fn loop_(&self, edges: &[u32], starts: u32, ends: u32) -> Option<Vec<u32>> {
        if starts == 0 || ends == 0 {
            return None;
        }
        let need = starts | ends;
        let mut best: Option<Vec<u32>> = None;
        for partition in &self.unordered {
            if partition.len() < 2 {
                continue;
            }
            let Some(do_index) = partition.iter().position(|&m| m & need == need) else {
                continue;
            };
            let do_part = partition[do_index];
            let redos: Vec<u32> = partition
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != do_index)
                .map(|(_, &m)| m)
                .collect();

            let mut valid = true;
            for (i, &r1) in redos.iter().enumerate() {
                for &r2 in redos.iter().skip(i + 1) {
                    if Self::bits(r1).any(|a| edges[a] & r2 != 0)
                        || Self::bits(r2).any(|b| edges[b] & r1 != 0)
                    {
                        valid = false;
                    }
                }
            }
            if valid {
                for a in 0..self.n {
                    let a_bit = 1u32 << a;
                    if do_part & a_bit != 0 {
                        // do -> redo only out of ends.
                        if edges[a] & !do_part != 0 && ends & a_bit == 0 {
                            valid = false;
                        }
                    } else {
                        // redo -> do only into starts.
                        if edges[a] & do_part & !starts != 0 {
                            valid = false;
                        }
                        // Completeness towards starts and from ends.
                        if edges[a] & starts != 0 && edges[a] & starts != starts {
                            valid = false;
                        }
                        let entered: u32 = Self::bits(ends)
                            .filter(|&e| edges[e] & a_bit != 0)
                            .map(|e| 1u32 << e)
                            .sum();
                        if entered != 0 && entered != ends {
                            valid = false;
                        }
                    }
                }
            }
            if !valid {
                continue;
            }

            let mut candidate = vec![do_part];
            let mut sorted_redos = redos;
            sorted_redos.sort_by_key(|m| m.trailing_zeros());
            candidate.extend(sorted_redos);
            if Self::better(&candidate, &best, false) {
                best = Some(candidate);
            }
        }
        best
    }
}

/// Converts a partition over indexed labels to block masks, for comparing
/// implementation output against the mask oracles.
pub fn partition_to_masks(parts: &[BTreeSet<Activity>], labels: &[&str]) -> Vec<u32> {
    parts
        .iter()
        .map(|block| {
            block
                .iter()
                .map(|a| {
                    1u32 << labels
                        .iter()
                        .position(|l| *l == a.label())
                        .expect("known label")
                })
                .sum()
        })
        .collect()
}

/// Number of raw directly-follows pairs with positive count; used to pin
/// lb = ub in non-private runs so selection covers the whole support.
pub fn positive_pair_count(log: &EventLog) -> usize {
    dpim_core::dfr::build_dfr(log)
        .counts()
        .values()
        .filter(|c| **c > 0.0)
        .count()
}
