//! The DPIM miner: rejection-sampled, noise-calibrated tree discovery on a
//! privately selected directly-follows relation, plus a non-private
//! baseline miner used as the utility reference.
//!
//! A mining run spends its budget ε as 2ε₁ + ε₀ with ε₁ = 0.5·(ε − ε₀):
//! ε₀ pays for the rejection sampler's abort coin and ε₁ for one (doubled)
//! pass of the tree-building mechanism, itself split into shares r₁ (pair
//! selection), r₂ (start/end re-detection, spent as a geometric series),
//! and r₃ (the released fitness score).
//!
//! The sensitive log is touched in exactly three places: the raw DFR count,
//! the start/end counting inside parallel/loop cuts, and the fitness
//! computation. Everything else post-processes differentially private
//! values. [`LogGate`] records those touches so tests can verify the
//! firewall.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::replay_fitness;
use crate::cut_detection::{
    and_cut, loop_cut, remove_heavy_loops, seq_cut, xor_cut, Cut, CutKind, DfrGraph,
};
use crate::dfr::{build_dfr, ActivityPair, DfrKind, DfrTable, Endpoint};
use crate::dp_mech::{
    laplace_sample, rejection_step_bound, report_noisy_max, BudgetLedger, DpError, DpRng,
    LaplaceScale, RandomSource,
};
use crate::event_log::{Activity, EventLog, Trace};
use crate::process_tree::{flower, to_petri_net, Operator, ProcessTree, Scaffold, TreeCursor};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("the event log is empty")]
    EmptyLog,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("select_top_n asked for {n} pairs but the domain has {domain}")]
    SelectionTooLarge { n: usize, domain: usize },
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Dfr(#[from] crate::dfr::DfrError),
    #[error(transparent)]
    Tree(#[from] crate::process_tree::TreeError),
}

/// All hyperparameters of a DPIM run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpimConfig {
    /// Total privacy budget ε.
    pub eps: f64,
    /// Abort-coin budget ε₀ of the rejection sampler.
    pub eps0: f64,
    /// Budget shares (r₁, r₂, r₃), positive and summing to one.
    pub shares: (f64, f64, f64),
    /// Fitness threshold t for accepting a tree.
    pub threshold: f64,
    /// Abort-coin bias γ.
    pub gamma: f64,
    /// Bounds for the uniformly drawn number of selected pairs.
    pub lb: usize,
    pub ub: usize,
    pub rng: RandomSource,
}

impl DpimConfig {
    /// Default hyperparameters (ε₀ = 0.01, shares 0.65/0.25/0.1, t = 0.95,
    /// γ = 0.01) at a given ε and pair bounds.
    pub fn with_defaults(eps: f64, lb: usize, ub: usize, rng: RandomSource) -> DpimConfig {
        DpimConfig {
            eps,
            eps0: 0.01,
            shares: (0.65, 0.25, 0.1),
            threshold: 0.95,
            gamma: 0.01,
            lb,
            ub,
            rng,
        }
    }

    pub fn eps1(&self) -> f64 {
        0.5 * (self.eps - self.eps0)
    }

    pub fn validate(&self) -> Result<(), MinerError> {
        let fail = |msg: String| Err(MinerError::InvalidConfig(msg));
        if !(self.eps > 0.0) {
            return fail(format!("eps must be > 0, got {}", self.eps));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return fail(format!("eps0 must be in (0, 1], got {}", self.eps0));
        }
        if !(self.eps1() > 0.0) {
            return fail(format!(
                "eps1 = 0.5*(eps - eps0) must be > 0, got {}",
                self.eps1()
            ));
        }
        let (r1, r2, r3) = self.shares;
        if !(r1 > 0.0 && r2 > 0.0 && r3 > 0.0) {
            return fail(format!("shares must be positive, got {:?}", self.shares));
        }
        if (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
            return fail(format!("shares must sum to 1, got {}", r1 + r2 + r3));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold must be in [0, 1], got {}", self.threshold));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.lb < 1 || self.lb > self.ub {
            return fail(format!("need 1 <= lb <= ub, got lb={}, ub={}", self.lb, self.ub));
        }
        Ok(())
    }
}

/// Result of a DPIM run: an accepted tree with its released noisy fitness,
/// or ⊥ when the rejection sampler gave up.
#[derive(Debug, Clone, PartialEq)]
pub enum MiningOutcome {
    Accepted {
        tree: ProcessTree,
        noisy_fitness: f64,
    },
    Bottom,
}

impl MiningOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, MiningOutcome::Accepted { .. })
    }

    pub fn tree(&self) -> Option<&ProcessTree> {
        match self {
            MiningOutcome::Accepted { tree, .. } => Some(tree),
            MiningOutcome::Bottom => None,
        }
    }
}

/// Which of the three sanctioned call sites touched the sensitive log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogAccess {
    BuildDfr,
    DetectStartEnd,
    Fitness,
}

/// Wraps the sensitive log and records every hand-out.
pub struct LogGate<'a> {
    log: &'a EventLog,
    accesses: RefCell<Vec<LogAccess>>,
}

impl<'a> LogGate<'a> {
    pub fn new(log: &'a EventLog) -> Self {
        LogGate {
            log,
            accesses: RefCell::new(Vec::new()),
        }
    }

    pub fn open(&self, access: LogAccess) -> &'a EventLog {
        self.accesses.borrow_mut().push(access);
        self.log
    }

    pub fn accesses(&self) -> Vec<LogAccess> {
        self.accesses.borrow().clone()
    }
}

/// Full record of one run: outcome, iterations used, the budget ledger,
/// and the log-access trace.
#[derive(Debug, Clone)]
pub struct MineRun {
    pub outcome: MiningOutcome,
    pub iterations: u64,
    pub ledger: BudgetLedger,
    pub log_accesses: Vec<LogAccess>,
}

/// Chooses `n` pairs of the raw table by repeated Report Noisy Max, each
/// round over the not-yet-selected pairs at budget eps_r1/(2n), and
/// releases each chosen pair's count with fresh Laplace(0, 2n/eps_r1)
/// noise. The result covers exactly the selected pairs; its alphabet is
/// the activities they mention.
pub fn select_top_n(
    dfr: &DfrTable,
    n: usize,
    eps_r1: f64,
    rng: &mut DpRng,
) -> Result<DfrTable, MinerError> {
    let domain = dfr.len();
    if n < 1 || n > domain {
        return Err(MinerError::SelectionTooLarge { n, domain });
    }
    let release_scale = LaplaceScale::new(2.0 * n as f64 / eps_r1)?;
    let renom_eps = eps_r1 / (2.0 * n as f64);

    let mut remaining: Vec<(ActivityPair, f64)> =
        dfr.counts().iter().map(|(p, c)| (p.clone(), *c)).collect();
    let mut selected: BTreeMap<ActivityPair, f64> = BTreeMap::new();
    for _ in 0..n {
        let winner = report_noisy_max(rng, &remaining, renom_eps)?;
        let at = remaining
            .iter()
            .position(|(p, _)| *p == winner)
            .expect("winner drawn from remaining");
        let (pair, raw) = remaining.swap_remove(at);
        let released = raw + laplace_sample(rng, release_scale);
        selected.insert(pair, released);
    }

    let mut alphabet = BTreeSet::new();
    for pair in selected.keys() {
        if let Some(a) = pair.from.activity() {
            alphabet.insert(a.clone());
        }
        if let Some(a) = pair.to.activity() {
            alphabet.insert(a.clone());
        }
    }
    Ok(DfrTable::from_counts(selected, alphabet, DfrKind::Noisy))
}

/// Values fixed at the recursion root and never recomputed in subtrees.
struct Globals {
    dp_esize: f64,
    dp_actc: BTreeMap<Activity, f64>,
    std: f64,
}

impl Globals {
    fn from_table(table: &DfrTable, std: f64) -> Globals {
        let dp_esize = table.start_count_sum();
        // Per-activity count: sum over pairs led by the activity,
        // (a, END) included, START-led pairs excluded.
        let mut dp_actc: BTreeMap<Activity, f64> =
            table.alphabet().iter().map(|a| (a.clone(), 0.0)).collect();
        for (pair, count) in table.counts() {
            if let Some(a) = pair.from.activity() {
                *dp_actc.entry(a.clone()).or_insert(0.0) += count;
            }
        }
        Globals {
            dp_esize,
            dp_actc,
            std,
        }
    }

    fn actc(&self, a: &Activity) -> f64 {
        self.dp_actc.get(a).copied().unwrap_or(0.0)
    }
}

/// Per-level recursion state: the (restricted) table and the current
/// start/end sets.
#[derive(Clone)]
struct Frame {
    table: DfrTable,
    dp_s: BTreeSet<Activity>,
    dp_e: BTreeSet<Activity>,
}

/// Mutable state threaded through one mechanism iteration.
struct BuildShared<'a, 'b> {
    gate: &'a LogGate<'b>,
    rng: &'a mut DpRng,
    ledger: &'a mut BudgetLedger,
    eps_start_end_total: f64,
    detect_calls: u32,
}

fn build_tree(
    frame: &Frame,
    globals: &Globals,
    shared: &mut BuildShared,
) -> Result<ProcessTree, MinerError> {
    let graph = DfrGraph::from_table(&frame.table);
    let nodes = graph.nodes().clone();
    match nodes.len() {
        0 => return Ok(ProcessTree::Tau),
        1 => {
            let only = nodes.iter().next().unwrap().clone();
            return singleton_leaf(&only, frame, globals);
        }
        _ => {}
    }

    if let Some(cut) = seq_cut(&graph) {
        return append_tree(cut, frame, globals, shared);
    }
    if let Some(cut) = xor_cut(&graph) {
        return append_tree(cut, frame, globals, shared);
    }

    let starts: BTreeSet<Activity> = frame.dp_s.intersection(&nodes).cloned().collect();
    let ends: BTreeSet<Activity> = frame.dp_e.intersection(&nodes).cloned().collect();

    let deloped = remove_heavy_loops(&frame.table, globals.dp_esize, globals.std);
    if let Some(cut) = and_cut(&DfrGraph::from_table(&deloped), &starts, &ends) {
        let frame = Frame {
            table: deloped,
            ..frame.clone()
        };
        return append_tree(cut, &frame, globals, shared);
    }

    let loop_result = loop_cut(&graph, &starts, &ends);
    if let Some(cut) = loop_result.cut {
        let removed: BTreeSet<ActivityPair> = loop_result
            .removed_edges
            .iter()
            .map(|(a, b)| ActivityPair::acts(a, b))
            .collect();
        let frame = Frame {
            table: frame.table.without_pairs(&removed),
            ..frame.clone()
        };
        return append_tree(cut, &frame, globals, shared);
    }

    Ok(flower(&nodes)?)
}

/// Leaf construction for a single activity: a self-loop if its self-pair
/// was selected, an optional leaf if it occurs significantly less often
/// than the log size, a plain leaf otherwise.
fn singleton_leaf(
    a: &Activity,
    frame: &Frame,
    globals: &Globals,
) -> Result<ProcessTree, MinerError> {
    let self_pair = ActivityPair::acts(a, a);
    if frame.table.is_edge(&self_pair) {
        return Ok(ProcessTree::node(
            Operator::Loop,
            vec![ProcessTree::Leaf(a.clone()), ProcessTree::Tau],
        )?);
    }
    if globals.actc(a) <= globals.dp_esize - globals.std {
        return Ok(ProcessTree::node(
            Operator::Xor,
            vec![ProcessTree::Tau, ProcessTree::Leaf(a.clone())],
        )?);
    }
    Ok(ProcessTree::Leaf(a.clone()))
}

fn append_tree(
    cut: Cut,
    frame: &Frame,
    globals: &Globals,
    shared: &mut BuildShared,
) -> Result<ProcessTree, MinerError> {
    let operator = match cut.kind {
        CutKind::Seq => Operator::Seq,
        CutKind::Xor => Operator::Xor,
        CutKind::And => Operator::And,
        CutKind::Loop => Operator::Loop,
    };

    let (dp_s, dp_e) = detect_start_end(&cut, frame, shared)?;
    let child_frame_base = Frame {
        table: frame.table.clone(),
        dp_s,
        dp_e,
    };

    let total_actc: f64 = cut
        .partition
        .iter()
        .flat_map(|part| part.iter())
        .map(|a| globals.actc(a))
        .sum();
    let extra_tau = total_actc <= globals.dp_esize - globals.std;
    let arity = cut.partition.len() + usize::from(extra_tau);

    let mut cursor = TreeCursor::new();
    if operator == Operator::Loop {
        // Loops are always optional.
        cursor.graft(Scaffold::Node(
            Operator::Xor,
            vec![Scaffold::Tau, Scaffold::Hole],
        ))?;
    }
    cursor.graft(Scaffold::holes(operator, arity))?;

    for part in &cut.partition {
        match part.len() {
            0 => cursor.graft(Scaffold::Tau)?,
            1 => {
                let a = part.iter().next().unwrap();
                cursor.graft(Scaffold::Subtree(singleton_leaf(a, &child_frame_base, globals)?))?
            }
            _ => {
                let child_frame = Frame {
                    table: child_frame_base.table.restrict(part)?,
                    dp_s: child_frame_base.dp_s.clone(),
                    dp_e: child_frame_base.dp_e.clone(),
                };
                let subtree = build_tree(&child_frame, globals, shared)?;
                cursor.graft(Scaffold::Subtree(subtree))?;
            }
        }
    }
    if extra_tau {
        cursor.graft(Scaffold::Tau)?;
    }
    Ok(cursor.finish()?)
}

/// Recomputes the start/end sets for the recursion below a cut.
///
/// Sequence and xor cuts post-process the noisy table: a singleton start
/// (end) activity is replaced by its successors (predecessors). Parallel
/// and loop cuts consult the sensitive log: traces are projected onto the
/// cut's activities, first/last activities of nonempty projections are
/// counted, every count is noised, and the survivors are those clearing
/// the doubled-standard-deviation bar. The spend follows a geometric
/// series of the r₂ share, halving with each parallel/loop cut.
fn detect_start_end(
    cut: &Cut,
    frame: &Frame,
    shared: &mut BuildShared,
) -> Result<(BTreeSet<Activity>, BTreeSet<Activity>), MinerError> {
    match cut.kind {
        CutKind::Seq | CutKind::Xor => {
            let mut dp_s = frame.dp_s.clone();
            let mut dp_e = frame.dp_e.clone();
            for part in &cut.partition {
                if part.len() != 1 {
                    continue;
                }
                let a = part.iter().next().unwrap();
                if dp_s.remove(a) {
                    dp_s.extend(frame.table.successors(&Endpoint::Act(a.clone()), 0.0));
                }
                if dp_e.remove(a) {
                    dp_e.extend(frame.table.predecessors(&Endpoint::Act(a.clone()), 0.0));
                }
            }
            Ok((dp_s, dp_e))
        }
        CutKind::And | CutKind::Loop => {
            shared.detect_calls += 1;
            let eps_se = shared.eps_start_end_total / 2f64.powi(shared.detect_calls as i32);
            shared
                .ledger
                .spend(format!("detect_start_end#{}", shared.detect_calls), eps_se)?;

            let acts: BTreeSet<Activity> =
                cut.partition.iter().flatten().cloned().collect();
            let log = shared.gate.open(LogAccess::DetectStartEnd);
            let (c_start, c_end) = start_end_counts(log, &acts);

            let mut dp_s = noisy_survivors(&c_start, eps_se, shared.rng)?;
            let mut dp_e = noisy_survivors(&c_end, eps_se, shared.rng)?;
            // Empty survivor sets would make every later cut vacuous; fall
            // back to the whole (data-independent) candidate set.
            if dp_s.is_empty() {
                dp_s = acts.clone();
            }
            if dp_e.is_empty() {
                dp_e = acts;
            }
            Ok((dp_s, dp_e))
        }
    }
}

/// Projects every trace onto `acts` and counts how often each activity is
/// the first and the last of a nonempty projection. Reads the sensitive
/// log; each trace moves at most one start and one end count.
pub fn start_end_counts(
    log: &EventLog,
    acts: &BTreeSet<Activity>,
) -> (BTreeMap<Activity, f64>, BTreeMap<Activity, f64>) {
    let mut c_start: BTreeMap<Activity, f64> = acts.iter().map(|a| (a.clone(), 0.0)).collect();
    let mut c_end = c_start.clone();
    for trace in log.traces() {
        let mut projected = trace.activities().iter().filter(|a| acts.contains(*a));
        // A trace whose projection is empty has no first or last.
        let Some(first) = projected.next() else {
            continue;
        };
        let last = projected.next_back().unwrap_or(first);
        *c_start.get_mut(first).unwrap() += 1.0;
        *c_end.get_mut(last).unwrap() += 1.0;
    }
    (c_start, c_end)
}

/// Adds Laplace(0, 4/eps_se) to every count and keeps the activities whose
/// noisy count clears the doubled standard deviation sqrt(8)·(4/eps_se).
pub fn noisy_survivors(
    counts: &BTreeMap<Activity, f64>,
    eps_se: f64,
    rng: &mut DpRng,
) -> Result<BTreeSet<Activity>, MinerError> {
    let scale = LaplaceScale::new(4.0 / eps_se)?;
    let bar = scale.significance_bar();
    let mut kept = BTreeSet::new();
    for (a, count) in counts {
        if count + laplace_sample(rng, scale) >= bar {
            kept.insert(a.clone());
        }
    }
    Ok(kept)
}

/// Runs DPIM and returns just the outcome.
pub fn mine_dp(log: &EventLog, cfg: &DpimConfig) -> Result<MiningOutcome, MinerError> {
    Ok(mine_dp_run(log, cfg)?.outcome)
}

/// Runs DPIM, returning the outcome together with the budget ledger and
/// the sensitive-log access trace.
pub fn mine_dp_run(log: &EventLog, cfg: &DpimConfig) -> Result<MineRun, MinerError> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(MinerError::EmptyLog);
    }

    let gate = LogGate::new(log);
    let raw = build_dfr(gate.open(LogAccess::BuildDfr));
    if cfg.ub > raw.len() {
        return Err(MinerError::InvalidConfig(format!(
            "ub={} exceeds the pair domain of size {}",
            cfg.ub,
            raw.len()
        )));
    }

    let eps1 = cfg.eps1();
    let (r1, r2, r3) = cfg.shares;
    let steps = rejection_step_bound(cfg.gamma, cfg.eps0);
    let fitness_scale = LaplaceScale::new(1.0 / (log.len() as f64 * eps1 * r3))?;
    let mut rng = cfg.rng.rng();

    let mut outcome = MiningOutcome::Bottom;
    let mut iterations = 0u64;
    let mut last_mechanism_ledger = BudgetLedger::new(eps1);

    for _ in 0..steps {
        iterations += 1;
        let mut mechanism_ledger = BudgetLedger::new(eps1);

        let n = rng.uniform_usize(cfg.lb, cfg.ub);
        mechanism_ledger.spend("select_top_n", r1 * eps1)?;
        let dp_dfr = select_top_n(&raw, n, r1 * eps1, &mut rng)?;

        let selection_scale = LaplaceScale::new(2.0 * n as f64 / (eps1 * r1))?;
        let globals = Globals::from_table(&dp_dfr, selection_scale.significance_bar());
        let graph = DfrGraph::from_table(&dp_dfr);
        let frame = Frame {
            dp_s: graph.start_adjacent().clone(),
            dp_e: graph.end_adjacent().clone(),
            table: dp_dfr,
        };

        let tree = {
            let mut shared = BuildShared {
                gate: &gate,
                rng: &mut rng,
                ledger: &mut mechanism_ledger,
                eps_start_end_total: r2 * eps1,
                detect_calls: 0,
            };
            build_tree(&frame, &globals, &mut shared)?
        };

        mechanism_ledger.spend("fitness", r3 * eps1)?;
        let net = to_petri_net(&tree);
        let fitness = replay_fitness(&net, gate.open(LogAccess::Fitness));
        let noisy_fitness = fitness + laplace_sample(&mut rng, fitness_scale);

        last_mechanism_ledger = mechanism_ledger;
        if noisy_fitness >= cfg.threshold {
            outcome = MiningOutcome::Accepted {
                tree,
                noisy_fitness,
            };
            break;
        }
        if rng.coin(cfg.gamma) {
            break;
        }
    }

    let ledger = run_ledger(cfg, &last_mechanism_ledger)?;
    Ok(MineRun {
        outcome,
        iterations,
        ledger,
        log_accesses: gate.accesses(),
    })
}

/// Assembles the run-level ledger. The rejection sampler costs 2ε₁ + ε₀
/// however many rounds it takes: ε₀ for the abort coin, one ε₁ envelope on
/// top of the per-round mechanism, and the mechanism's own ε₁ itemized
/// from its final round, with the unspent tail of the start/end share
/// recorded as a reserve so the full share is accounted.
fn run_ledger(cfg: &DpimConfig, mechanism: &BudgetLedger) -> Result<BudgetLedger, MinerError> {
    let eps1 = cfg.eps1();
    let r2 = cfg.shares.1;
    let mut ledger = BudgetLedger::new(cfg.eps);
    ledger.spend("rejection_sampling/coin", cfg.eps0)?;
    ledger.spend("rejection_sampling/envelope", eps1)?;
    for entry in mechanism.entries() {
        ledger.spend(format!("mechanism/{}", entry.label), entry.amount)?;
    }
    let detect_spent = mechanism.spent_with_prefix("detect_start_end");
    let reserve = r2 * eps1 - detect_spent;
    if reserve > 0.0 {
        ledger.spend("mechanism/detect_start_end_reserve", reserve)?;
    }
    Ok(ledger)
}

/// The number of positive raw pair counts, widened by ±15 and rounded up
/// to multiples of five, clamped to [|A|, |A|²].
///
/// NOT differentially private: it reads the raw relation without noise.
/// It mirrors the evaluation recipe for choosing bounds; production runs
/// should supply lb/ub from domain knowledge instead.
pub fn auto_bounds_unsafe(log: &EventLog) -> (usize, usize) {
    log::warn!("auto-derived pair bounds read the raw DFR and are not differentially private");
    let dfr = build_dfr(log);
    let positive = dfr.counts().values().filter(|c| **c > 0.0).count() as i64;
    let a = log.alphabet().len() as i64;
    let round_up5 = |x: i64| (x + 4).div_euclid(5) * 5;
    let lb = round_up5(positive - 15).max(a).max(1);
    let ub = round_up5(positive + 15).min(a * a).max(lb);
    (lb as usize, ub as usize)
}

// ---------------------------------------------------------------------------
// Baseline miner
// ---------------------------------------------------------------------------

/// The classic Inductive Miner on the plain log, with the same cut cascade
/// order as the private miner. Deterministic; serves as the utility
/// reference the private trees are compared against.
pub fn mine_baseline(log: &EventLog) -> Result<ProcessTree, MinerError> {
    if log.is_empty() {
        return Err(MinerError::EmptyLog);
    }
    let traces: Vec<Vec<Activity>> = log
        .traces()
        .iter()
        .map(|t| t.activities().to_vec())
        .collect();
    Ok(normalize(baseline_node(&traces)))
}

fn baseline_node(traces: &[Vec<Activity>]) -> ProcessTree {
    let nonempty: Vec<Vec<Activity>> = traces.iter().filter(|t| !t.is_empty()).cloned().collect();
    if nonempty.is_empty() {
        return ProcessTree::Tau;
    }
    if nonempty.len() < traces.len() {
        // Some traces skip this block entirely.
        let inner = baseline_node(&nonempty);
        return ProcessTree::Node(Operator::Xor, vec![ProcessTree::Tau, inner]);
    }

    let alphabet: BTreeSet<Activity> = nonempty.iter().flatten().cloned().collect();
    if alphabet.len() == 1 {
        let a = alphabet.into_iter().next().unwrap();
        if nonempty.iter().all(|t| t.len() == 1) {
            return ProcessTree::Leaf(a);
        }
        return ProcessTree::Node(
            Operator::Loop,
            vec![ProcessTree::Leaf(a), ProcessTree::Tau],
        );
    }

    let sublog = EventLog::new(
        nonempty
            .iter()
            .map(|t| Trace::new(t.clone()).expect("nonempty"))
            .collect(),
    );
    let dfr = build_dfr(&sublog);
    let graph = DfrGraph::from_table(&dfr);
    let starts = graph.start_adjacent().clone();
    let ends = graph.end_adjacent().clone();
    let esize = nonempty.len() as f64;

    if let Some(cut) = seq_cut(&graph) {
        let children = cut
            .partition
            .iter()
            .map(|part| baseline_node(&project_all(&nonempty, part)))
            .collect();
        return ProcessTree::Node(Operator::Seq, children);
    }
    if let Some(cut) = xor_cut(&graph) {
        let children = cut
            .partition
            .iter()
            .enumerate()
            .map(|(i, _)| baseline_node(&split_xor(&nonempty, &cut.partition, i)))
            .collect();
        return ProcessTree::Node(Operator::Xor, children);
    }
    // Exact counts: a combined count strictly above the trace count marks
    // a loop; at equality it is parallelism. The 0.5 margin turns >= into >.
    let deloped = remove_heavy_loops(&dfr, esize, 0.5);
    if let Some(cut) = and_cut(&DfrGraph::from_table(&deloped), &starts, &ends) {
        let children = cut
            .partition
            .iter()
            .map(|part| baseline_node(&project_all(&nonempty, part)))
            .collect();
        return ProcessTree::Node(Operator::And, children);
    }
    if let Some(cut) = loop_cut(&graph, &starts, &ends).cut {
        let children: Vec<ProcessTree> = cut
            .partition
            .iter()
            .enumerate()
            .map(|(i, _)| baseline_node(&split_loop(&nonempty, &cut.partition, i)))
            .collect();
        return ProcessTree::Node(Operator::Loop, children);
    }
    flower(&alphabet).expect("alphabet nonempty")
}

fn project(trace: &[Activity], part: &BTreeSet<Activity>) -> Vec<Activity> {
    trace
        .iter()
        .filter(|a| part.contains(*a))
        .cloned()
        .collect()
}

fn project_all(traces: &[Vec<Activity>], part: &BTreeSet<Activity>) -> Vec<Vec<Activity>> {
    traces.iter().map(|t| project(t, part)).collect()
}

/// Assigns each trace to the xor branch holding most of its activities.
fn split_xor(
    traces: &[Vec<Activity>],
    partition: &[BTreeSet<Activity>],
    part_index: usize,
) -> Vec<Vec<Activity>> {
    let mut out = Vec::new();
    for trace in traces {
        let mut best = 0usize;
        let mut best_overlap = 0usize;
        for (i, candidate) in partition.iter().enumerate() {
            let overlap = trace.iter().filter(|a| candidate.contains(*a)).count();
            if overlap > best_overlap {
                best_overlap = overlap;
                best = i;
            }
        }
        if best == part_index {
            out.push(project(trace, &partition[part_index]));
        }
    }
    out
}

/// Splits traces at do/redo boundaries; each maximal same-part run becomes
/// one sub-trace of that part.
fn split_loop(
    traces: &[Vec<Activity>],
    partition: &[BTreeSet<Activity>],
    part_index: usize,
) -> Vec<Vec<Activity>> {
    let part_of = |a: &Activity| partition.iter().position(|p| p.contains(a));
    let mut out = Vec::new();
    for trace in traces {
        let mut current: Vec<Activity> = Vec::new();
        let mut current_part: Option<usize> = None;
        for activity in trace {
            let p = part_of(activity);
            if p != current_part {
                if current_part == Some(part_index) {
                    out.push(std::mem::take(&mut current));
                }
                current.clear();
                current_part = p;
            }
            if p == Some(part_index) {
                current.push(activity.clone());
            }
        }
        if current_part == Some(part_index) {
            out.push(current);
        }
    }
    out
}

/// Flattens nested same-operator nodes (SEQ in SEQ, XOR in XOR, AND in
/// AND); loops are untouched.
fn normalize(tree: ProcessTree) -> ProcessTree {
    match tree {
        ProcessTree::Node(op, children) => {
            let children: Vec<ProcessTree> = children.into_iter().map(normalize).collect();
            if op == Operator::Loop {
                return ProcessTree::Node(op, children);
            }
            let mut flat = Vec::new();
            for child in children {
                match child {
                    ProcessTree::Node(child_op, grandchildren) if child_op == op => {
                        flat.extend(grandchildren)
                    }
                    other => flat.push(other),
                }
            }
            ProcessTree::Node(op, flat)
        }
        leaf => leaf,
    }
}
