//! Cut detection on a directly-follows graph: sequence, exclusive-or,
//! parallel, and loop cuts in that order, with the start/end-set variants
//! of the parallel and loop conditions that work without trace access.
//!
//! Cuts are maximal: the partition with the most parts wins; among equals
//! the canonically smallest (parts sorted by minimum activity) is returned
//! so results are deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dfr::{DfrTable, Endpoint};
use crate::event_log::Activity;

/// A directly-follows table viewed as a directed graph over activities.
/// Dummy endpoints are kept as node attributes, not as nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfrGraph {
    nodes: BTreeSet<Activity>,
    edges: BTreeSet<(Activity, Activity)>,
    start_adjacent: BTreeSet<Activity>,
    end_adjacent: BTreeSet<Activity>,
}

impl DfrGraph {
    /// Reads a table as a graph. Raw tables materialize the whole product
    /// set, so presence means count > 0 there; in a noisy table every
    /// selected pair is an edge, whatever its noised value.
    pub fn from_table(table: &DfrTable) -> DfrGraph {
        let nodes = table.alphabet().clone();
        let mut edges = BTreeSet::new();
        let mut start_adjacent = BTreeSet::new();
        let mut end_adjacent = BTreeSet::new();
        for pair in table.counts().keys() {
            if !table.is_edge(pair) {
                continue;
            }
            match (&pair.from, &pair.to) {
                (Endpoint::Act(a), Endpoint::Act(b)) => {
                    edges.insert((a.clone(), b.clone()));
                }
                (Endpoint::Start, Endpoint::Act(b)) => {
                    start_adjacent.insert(b.clone());
                }
                (Endpoint::Act(a), Endpoint::End) => {
                    end_adjacent.insert(a.clone());
                }
                _ => {}
            }
        }
        DfrGraph {
            nodes,
            edges,
            start_adjacent,
            end_adjacent,
        }
    }

    pub fn from_parts(
        nodes: BTreeSet<Activity>,
        edges: BTreeSet<(Activity, Activity)>,
    ) -> DfrGraph {
        debug_assert!(edges
            .iter()
            .all(|(a, b)| nodes.contains(a) && nodes.contains(b)));
        DfrGraph {
            nodes,
            edges,
            start_adjacent: BTreeSet::new(),
            end_adjacent: BTreeSet::new(),
        }
    }

    pub fn nodes(&self) -> &BTreeSet<Activity> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(Activity, Activity)> {
        &self.edges
    }

    pub fn has_edge(&self, a: &Activity, b: &Activity) -> bool {
        self.edges.contains(&(a.clone(), b.clone()))
    }

    pub fn start_adjacent(&self) -> &BTreeSet<Activity> {
        &self.start_adjacent
    }

    pub fn end_adjacent(&self) -> &BTreeSet<Activity> {
        &self.end_adjacent
    }

    pub fn without_edges(&self, removed: &BTreeSet<(Activity, Activity)>) -> DfrGraph {
        DfrGraph {
            nodes: self.nodes.clone(),
            edges: self.edges.difference(removed).cloned().collect(),
            start_adjacent: self.start_adjacent.clone(),
            end_adjacent: self.end_adjacent.clone(),
        }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfr_graph {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{}\";", n.label());
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", a.label(), b.label());
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Seq,
    Xor,
    And,
    Loop,
}

/// A successful cut: an ordered partition of the graph's nodes. For Loop
/// cuts the first part is the do-part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    pub kind: CutKind,
    pub partition: Vec<BTreeSet<Activity>>,
}

impl Cut {
    fn checked(kind: CutKind, partition: Vec<BTreeSet<Activity>>, nodes: &BTreeSet<Activity>) -> Cut {
        debug_assert!(partition.len() >= 2);
        debug_assert!(partition.iter().all(|p| !p.is_empty()));
        let mut union = BTreeSet::new();
        let mut total = 0;
        for part in &partition {
            total += part.len();
            union.extend(part.iter().cloned());
        }
        debug_assert_eq!(total, union.len(), "parts overlap");
        debug_assert_eq!(&union, nodes, "parts do not cover the node set");
        Cut { kind, partition }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            self.parent[i] = self.find(self.parent[i]);
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn indexed(nodes: &BTreeSet<Activity>) -> (Vec<Activity>, BTreeMap<Activity, usize>) {
    let order: Vec<Activity> = nodes.iter().cloned().collect();
    let index = order
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), i))
        .collect();
    (order, index)
}

/// parts-by-min-element ordering used wherever part order is arbitrary.
fn sort_parts(mut parts: Vec<BTreeSet<Activity>>) -> Vec<BTreeSet<Activity>> {
    parts.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    parts
}

/// Exclusive-or cut: connected components of the graph read undirected.
pub fn xor_cut(g: &DfrGraph) -> Option<Cut> {
    if g.nodes.len() < 2 {
        return None;
    }
    let (order, index) = indexed(&g.nodes);
    let mut uf = UnionFind::new(order.len());
    for (a, b) in &g.edges {
        uf.union(index[a], index[b]);
    }
    let mut components: BTreeMap<usize, BTreeSet<Activity>> = BTreeMap::new();
    for (i, a) in order.iter().enumerate() {
        components.entry(uf.find(i)).or_default().insert(a.clone());
    }
    if components.len() < 2 {
        return None;
    }
    let parts = sort_parts(components.into_values().collect());
    Some(Cut::checked(CutKind::Xor, parts, &g.nodes))
}

/// Reachability closure: reach[a][b] iff a path of length >= 1 from a to b.
fn reachability(order: &[Activity], index: &BTreeMap<Activity, usize>, g: &DfrGraph) -> Vec<Vec<bool>> {
    let n = order.len();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in &g.edges {
        adj[index[a]][index[b]] = true;
    }
    let mut reach = adj.clone();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Sequence cut: the maximal ordered partition where every activity of an
/// earlier part reaches every activity of a later part and never the other
/// way around. Found by merging any two groups holding a mutually reachable
/// or mutually unreachable pair, to fixpoint, then ordering by reachability.
pub fn seq_cut(g: &DfrGraph) -> Option<Cut> {
    if g.nodes.len() < 2 {
        return None;
    }
    let (order, index) = indexed(&g.nodes);
    let n = order.len();
    let reach = reachability(&order, &index, g);

    let mut groups: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    loop {
        let mut merged = false;
        'outer: for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let must_merge = groups[i].iter().any(|&a| {
                    groups[j]
                        .iter()
                        .any(|&b| reach[a][b] == reach[b][a])
                });
                if must_merge {
                    let g2 = groups.remove(j);
                    groups[i].extend(g2);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    if groups.len() < 2 {
        return None;
    }

    // Order by reachability: a group's rank is how many groups reach it.
    let reaches = |from: &BTreeSet<usize>, to: &BTreeSet<usize>| {
        from.iter().any(|&a| to.iter().any(|&b| reach[a][b]))
    };
    let mut ranked: Vec<(usize, BTreeSet<usize>)> = groups
        .iter()
        .map(|group| {
            let rank = groups
                .iter()
                .filter(|other| !std::ptr::eq(*other, group) && reaches(other, group))
                .count();
            (rank, group.clone())
        })
        .collect();
    ranked.sort_by_key(|(rank, _)| *rank);

    // The merge fixpoint should leave a totally ordered chain; verify the
    // full condition and bail out if anything is off.
    for i in 0..ranked.len() {
        for j in i + 1..ranked.len() {
            let forward = ranked[i]
                .1
                .iter()
                .all(|&a| ranked[j].1.iter().all(|&b| reach[a][b] && !reach[b][a]));
            if !forward {
                return None;
            }
        }
    }

    let parts = ranked
        .into_iter()
        .map(|(_, group)| group.into_iter().map(|i| order[i].clone()).collect())
        .collect();
    Some(Cut::checked(CutKind::Seq, parts, &g.nodes))
}

fn enumerate_set_partitions<T: Clone>(items: &[T]) -> Vec<Vec<Vec<T>>> {
    let mut results = Vec::new();
    let mut current: Vec<Vec<T>> = Vec::new();
    fn recurse<T: Clone>(items: &[T], at: usize, current: &mut Vec<Vec<T>>, out: &mut Vec<Vec<Vec<T>>>) {
        if at == items.len() {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(items[at].clone());
            recurse(items, at + 1, current, out);
            current[b].pop();
        }
        current.push(vec![items[at].clone()]);
        recurse(items, at + 1, current, out);
        current.pop();
    }
    recurse(items, 0, &mut current, &mut results);
    results
}

fn canonical_key(parts: &[BTreeSet<Activity>]) -> Vec<Vec<Activity>> {
    let mut key: Vec<Vec<Activity>> = parts
        .iter()
        .map(|p| p.iter().cloned().collect())
        .collect();
    key.sort();
    key
}

/// Parallel cut: at least two parts, every cross-part activity pair has
/// edges in both directions, and each part holds at least one start and
/// one end activity. The finest such partition is found from the
/// components of the "not bidirectional" relation; when some component
/// lacks a start or an end, components are regrouped exactly (they are few)
/// for the most-parts valid coarsening.
pub fn and_cut(
    g: &DfrGraph,
    starts: &BTreeSet<Activity>,
    ends: &BTreeSet<Activity>,
) -> Option<Cut> {
    if g.nodes.len() < 2 {
        return None;
    }
    let (order, _) = indexed(&g.nodes);
    let n = order.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let bidirectional =
                g.has_edge(&order[i], &order[j]) && g.has_edge(&order[j], &order[i]);
            if !bidirectional {
                uf.union(i, j);
            }
        }
    }
    let mut components: BTreeMap<usize, BTreeSet<Activity>> = BTreeMap::new();
    for (i, a) in order.iter().enumerate() {
        components.entry(uf.find(i)).or_default().insert(a.clone());
    }
    let components: Vec<BTreeSet<Activity>> = components.into_values().collect();
    if components.len() < 2 {
        return None;
    }

    let valid = |part: &BTreeSet<Activity>| {
        part.iter().any(|a| starts.contains(a)) && part.iter().any(|a| ends.contains(a))
    };
    if components.iter().all(valid) {
        return Some(Cut::checked(
            CutKind::And,
            sort_parts(components),
            &g.nodes,
        ));
    }
    if components.len() > 12 {
        // Regrouping enumerates set partitions of the components; past a
        // dozen candidate groups the search space explodes and such inputs
        // fall through to the loop cut or the flower model.
        return None;
    }

    // Regroup components so each group gains a start and an end. Any
    // grouping keeps cross-part bidirectionality, so this stays exact.
    let mut best: Option<Vec<BTreeSet<Activity>>> = None;
    for grouping in enumerate_set_partitions(&components) {
        if grouping.len() < 2 {
            continue;
        }
        let parts: Vec<BTreeSet<Activity>> = grouping
            .into_iter()
            .map(|group| group.into_iter().flatten().collect())
            .collect();
        if !parts.iter().all(valid) {
            continue;
        }
        let parts = sort_parts(parts);
        let better = match &best {
            None => true,
            Some(current) => {
                parts.len() > current.len()
                    || (parts.len() == current.len()
                        && canonical_key(&parts) < canonical_key(current))
            }
        };
        if better {
            best = Some(parts);
        }
    }
    best.map(|parts| Cut::checked(CutKind::And, parts, &g.nodes))
}

/// Result of loop-cut detection: the cut (when one exists) and the graph
/// with the do/redo boundary edges removed for the recursive rounds.
#[derive(Debug, Clone)]
pub struct LoopCutResult {
    pub cut: Option<Cut>,
    pub pruned: DfrGraph,
    pub removed_edges: BTreeSet<(Activity, Activity)>,
}

/// Loop cut: the do-part is the smallest set containing all starts and
/// ends whose remaining components behave like redo parts: entered only
/// from end activities (from all of them, if from any) and left only into
/// start activities (into all of them, if into any). Components violating
/// the conditions are absorbed into the do-part until stable.
pub fn loop_cut(
    g: &DfrGraph,
    starts: &BTreeSet<Activity>,
    ends: &BTreeSet<Activity>,
) -> LoopCutResult {
    let no_cut = |g: &DfrGraph| LoopCutResult {
        cut: None,
        pruned: g.clone(),
        removed_edges: BTreeSet::new(),
    };
    let starts: BTreeSet<Activity> = starts.intersection(&g.nodes).cloned().collect();
    let ends: BTreeSet<Activity> = ends.intersection(&g.nodes).cloned().collect();
    if starts.is_empty() || ends.is_empty() || g.nodes.len() < 2 {
        return no_cut(g);
    }

    let mut do_part: BTreeSet<Activity> = starts.union(&ends).cloned().collect();
    let redo_parts = loop {
        let rest: BTreeSet<Activity> = g.nodes.difference(&do_part).cloned().collect();
        if rest.is_empty() {
            return no_cut(g);
        }
        // Undirected components of the graph restricted to non-do nodes.
        let (order, index) = indexed(&rest);
        let mut uf = UnionFind::new(order.len());
        for (a, b) in &g.edges {
            if rest.contains(a) && rest.contains(b) {
                uf.union(index[a], index[b]);
            }
        }
        let mut components: BTreeMap<usize, BTreeSet<Activity>> = BTreeMap::new();
        for (i, a) in order.iter().enumerate() {
            components.entry(uf.find(i)).or_default().insert(a.clone());
        }

        let mut violating: Vec<BTreeSet<Activity>> = Vec::new();
        let mut valid: Vec<BTreeSet<Activity>> = Vec::new();
        for component in components.into_values() {
            if redo_conditions_hold(g, &do_part, &starts, &ends, &component) {
                valid.push(component);
            } else {
                violating.push(component);
            }
        }
        if violating.is_empty() {
            break valid;
        }
        for component in violating {
            do_part.extend(component);
        }
    };

    if redo_parts.is_empty() {
        return no_cut(g);
    }

    // Strip the boundary edges so recursion sees loop-free parts.
    let mut removed_edges = BTreeSet::new();
    for (a, b) in &g.edges {
        let a_in_do = do_part.contains(a);
        let b_in_do = do_part.contains(b);
        if a_in_do != b_in_do {
            removed_edges.insert((a.clone(), b.clone()));
        }
    }
    let pruned = g.without_edges(&removed_edges);

    let mut partition = vec![do_part];
    partition.extend(sort_parts(redo_parts));
    LoopCutResult {
        cut: Some(Cut::checked(CutKind::Loop, partition, &g.nodes)),
        pruned,
        removed_edges,
    }
}

fn redo_conditions_hold(
    g: &DfrGraph,
    do_part: &BTreeSet<Activity>,
    starts: &BTreeSet<Activity>,
    ends: &BTreeSet<Activity>,
    component: &BTreeSet<Activity>,
) -> bool {
    for (a, b) in &g.edges {
        // do -> redo only out of end activities.
        if do_part.contains(a) && component.contains(b) && !ends.contains(a) {
            return false;
        }
        // redo -> do only into start activities.
        if component.contains(a) && do_part.contains(b) && !starts.contains(b) {
            return false;
        }
    }
    for node in component {
        let enters_body = starts.iter().any(|s| g.has_edge(node, s));
        if enters_body && !starts.iter().all(|s| g.has_edge(node, s)) {
            return false;
        }
        let entered_from_body = ends.iter().any(|e| g.has_edge(e, node));
        if entered_from_body && !ends.iter().all(|e| g.has_edge(e, node)) {
            return false;
        }
    }
    true
}

/// Deletes both directions of any activity pair whose combined count
/// reaches the noisy log size plus the significance margin; those pairs
/// are loops, not parallelism, and would confuse the parallel cut.
/// Only pairs present in both directions participate.
pub fn remove_heavy_loops(table: &DfrTable, dp_esize: f64, std: f64) -> DfrTable {
    let mut doomed = BTreeSet::new();
    for (pair, count) in table.counts() {
        let (Endpoint::Act(a), Endpoint::Act(b)) = (&pair.from, &pair.to) else {
            continue;
        };
        if a >= b {
            continue;
        }
        let reverse = crate::dfr::ActivityPair::acts(b, a);
        if !table.contains(&reverse) {
            continue;
        }
        if count + table.count(&reverse) >= dp_esize + std {
            doomed.insert(pair.clone());
            doomed.insert(reverse);
        }
    }
    table.without_pairs(&doomed)
}
