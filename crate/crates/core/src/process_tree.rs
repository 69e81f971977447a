//! Process trees and their Petri-net translation.
//!
//! A tree is either an activity leaf, the silent leaf tau, or one of the
//! operators SEQ, XOR, AND, LOOP over at least two children. For LOOP the
//! first child is the mandatory body and the remaining children lead back
//! to it. Trees under construction are handled by [`TreeCursor`], which
//! fills empty leaves left to right.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::Activity;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("operator {0:?} needs at least two children, got {1}")]
    Arity(Operator, usize),
    #[error("no empty leaf left to graft into")]
    NoHole,
    #[error("tree still contains {0} empty leaves")]
    UnfinishedTree(usize),
    #[error("flower model needs a nonempty activity set")]
    EmptyFlower,
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error(transparent)]
    Label(#[from] crate::event_log::LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Seq,
    Xor,
    And,
    Loop,
}

impl Operator {
    fn symbol(&self) -> &'static str {
        match self {
            Operator::Seq => "->",
            Operator::Xor => "X",
            Operator::And => "+",
            Operator::Loop => "*",
        }
    }
}

/// A finished process tree (no empty leaves by construction).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessTree {
    Leaf(Activity),
    Tau,
    Node(Operator, Vec<ProcessTree>),
}

impl ProcessTree {
    pub fn node(op: Operator, children: Vec<ProcessTree>) -> Result<Self, TreeError> {
        if children.len() < 2 {
            return Err(TreeError::Arity(op, children.len()));
        }
        Ok(ProcessTree::Node(op, children))
    }

    pub fn leaf(activity: Activity) -> Self {
        ProcessTree::Leaf(activity)
    }

    /// All activities in the tree.
    pub fn activities(&self) -> BTreeSet<Activity> {
        let mut out = BTreeSet::new();
        self.collect_activities(&mut out);
        out
    }

    fn collect_activities(&self, out: &mut BTreeSet<Activity>) {
        match self {
            ProcessTree::Leaf(a) => {
                out.insert(a.clone());
            }
            ProcessTree::Tau => {}
            ProcessTree::Node(_, children) => {
                for c in children {
                    c.collect_activities(out);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ProcessTree::Leaf(_) | ProcessTree::Tau => 1,
            ProcessTree::Node(_, children) => {
                1 + children.iter().map(ProcessTree::depth).max().unwrap_or(0)
            }
        }
    }

    /// Canonical s-expression, e.g. `->( 'R', X( tau, 'S' ) )`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(&mut out);
        out
    }

    fn write_sexpr(&self, out: &mut String) {
        match self {
            ProcessTree::Tau => out.push_str("tau"),
            ProcessTree::Leaf(a) => {
                out.push('\'');
                for ch in a.label().chars() {
                    if ch == '\'' || ch == '\\' {
                        out.push('\\');
                    }
                    out.push(ch);
                }
                out.push('\'');
            }
            ProcessTree::Node(op, children) => {
                out.push_str(op.symbol());
                out.push_str("( ");
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    c.write_sexpr(out);
                }
                out.push_str(" )");
            }
        }
    }

    pub fn deserialize(text: &str) -> Result<ProcessTree, TreeError> {
        let mut parser = SexprParser {
            bytes: text.as_bytes(),
            position: 0,
        };
        let tree = parser.parse_tree()?;
        parser.skip_whitespace();
        if parser.position != parser.bytes.len() {
            return Err(TreeError::Parse {
                position: parser.position,
                message: "trailing input after tree".into(),
            });
        }
        Ok(tree)
    }

    /// Nested `{op, label?, children?}` JSON.
    pub fn to_json(&self) -> TreeJson {
        match self {
            ProcessTree::Tau => TreeJson {
                op: "tau".into(),
                label: None,
                children: Vec::new(),
            },
            ProcessTree::Leaf(a) => TreeJson {
                op: "activity".into(),
                label: Some(a.label().to_string()),
                children: Vec::new(),
            },
            ProcessTree::Node(op, children) => TreeJson {
                op: match op {
                    Operator::Seq => "seq",
                    Operator::Xor => "xor",
                    Operator::And => "and",
                    Operator::Loop => "loop",
                }
                .into(),
                label: None,
                children: children.iter().map(ProcessTree::to_json).collect(),
            },
        }
    }

    pub fn from_json(json: &TreeJson) -> Result<ProcessTree, TreeError> {
        match json.op.as_str() {
            "tau" => Ok(ProcessTree::Tau),
            "activity" => {
                let label = json.label.as_deref().unwrap_or("");
                Ok(ProcessTree::Leaf(Activity::new(label)?))
            }
            op => {
                let operator = match op {
                    "seq" => Operator::Seq,
                    "xor" => Operator::Xor,
                    "and" => Operator::And,
                    "loop" => Operator::Loop,
                    other => {
                        return Err(TreeError::Parse {
                            position: 0,
                            message: format!("unknown operator {other:?} in JSON tree"),
                        })
                    }
                };
                let children = json
                    .children
                    .iter()
                    .map(ProcessTree::from_json)
                    .collect::<Result<Vec<_>, _>>()?;
                ProcessTree::node(operator, children)
            }
        }
    }
}

/// JSON shape of a tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeJson>,
}

struct SexprParser<'a> {
    bytes: &'a [u8],
    position: usize,
}

impl<'a> SexprParser<'a> {
    fn error(&self, message: impl Into<String>) -> TreeError {
        TreeError::Parse {
            position: self.position,
            message: message.into(),
        }
    }

    fn skip_whitespace(&mut self) {
        while self.position < self.bytes.len() && self.bytes[self.position].is_ascii_whitespace() {
            self.position += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.position).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.bytes[self.position..].starts_with(token.as_bytes()) {
            self.position += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), TreeError> {
        if self.peek() == Some(byte) {
            self.position += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {:?}", byte as char)))
        }
    }

    fn parse_tree(&mut self) -> Result<ProcessTree, TreeError> {
        self.skip_whitespace();
        if self.eat("tau") {
            return Ok(ProcessTree::Tau);
        }
        if self.peek() == Some(b'\'') {
            return self.parse_leaf();
        }
        let op = if self.eat("->") {
            Operator::Seq
        } else if self.eat("X") {
            Operator::Xor
        } else if self.eat("+") {
            Operator::And
        } else if self.eat("*") {
            Operator::Loop
        } else {
            return Err(self.error("expected tau, 'activity', or an operator (->, X, +, *)"));
        };
        self.skip_whitespace();
        self.expect(b'(')?;
        let mut children = vec![self.parse_tree()?];
        loop {
            self.skip_whitespace();
            match self.peek() {
                Some(b',') => {
                    self.position += 1;
                    children.push(self.parse_tree()?);
                }
                Some(b')') => {
                    self.position += 1;
                    break;
                }
                _ => return Err(self.error("expected ',' or ')'")),
            }
        }
        if children.len() < 2 {
            return Err(self.error(format!(
                "operator {} needs at least two children, got {}",
                op.symbol(),
                children.len()
            )));
        }
        Ok(ProcessTree::Node(op, children))
    }

    fn parse_leaf(&mut self) -> Result<ProcessTree, TreeError> {
        self.expect(b'\'')?;
        let mut label = String::new();
        loop {
            match self.peek() {
                Some(b'\\') => {
                    self.position += 1;
                    match self.peek() {
                        Some(c @ (b'\'' | b'\\')) => {
                            label.push(c as char);
                            self.position += 1;
                        }
                        _ => return Err(self.error("invalid escape in activity label")),
                    }
                }
                Some(b'\'') => {
                    self.position += 1;
                    break;
                }
                Some(_) => {
                    let start = self.position;
                    // Advance one UTF-8 scalar.
                    let s = std::str::from_utf8(&self.bytes[start..])
                        .map_err(|_| self.error("invalid UTF-8 in label"))?;
                    let ch = s.chars().next().unwrap();
                    label.push(ch);
                    self.position += ch.len_utf8();
                }
                None => return Err(self.error("unterminated activity label")),
            }
        }
        Ok(ProcessTree::Leaf(Activity::new(&label).map_err(|e| {
            self.error(format!("invalid activity label: {e}"))
        })?))
    }
}

/// The flower model over an activity set: LOOP(tau, a1, ..., ak). Its
/// language is every sequence over the set, the empty one included.
pub fn flower(acts: &BTreeSet<Activity>) -> Result<ProcessTree, TreeError> {
    if acts.is_empty() {
        return Err(TreeError::EmptyFlower);
    }
    let mut children = vec![ProcessTree::Tau];
    children.extend(acts.iter().cloned().map(ProcessTree::Leaf));
    ProcessTree::node(Operator::Loop, children)
}

/// What [`TreeCursor::graft`] plants into the leftmost empty leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaffold {
    Hole,
    Tau,
    Leaf(Activity),
    Node(Operator, Vec<Scaffold>),
    Subtree(ProcessTree),
}

impl Scaffold {
    /// Operator node with `holes` empty children.
    pub fn holes(op: Operator, holes: usize) -> Scaffold {
        Scaffold::Node(op, vec![Scaffold::Hole; holes])
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BuildNode {
    Hole,
    Tau,
    Leaf(Activity),
    Node(Operator, Vec<BuildNode>),
}

impl BuildNode {
    fn from_scaffold(scaffold: Scaffold) -> Result<BuildNode, TreeError> {
        Ok(match scaffold {
            Scaffold::Hole => BuildNode::Hole,
            Scaffold::Tau => BuildNode::Tau,
            Scaffold::Leaf(a) => BuildNode::Leaf(a),
            Scaffold::Node(op, children) => {
                if children.len() < 2 {
                    return Err(TreeError::Arity(op, children.len()));
                }
                BuildNode::Node(
                    op,
                    children
                        .into_iter()
                        .map(BuildNode::from_scaffold)
                        .collect::<Result<_, _>>()?,
                )
            }
            Scaffold::Subtree(tree) => BuildNode::from_tree(tree),
        })
    }

    fn from_tree(tree: ProcessTree) -> BuildNode {
        match tree {
            ProcessTree::Tau => BuildNode::Tau,
            ProcessTree::Leaf(a) => BuildNode::Leaf(a),
            ProcessTree::Node(op, children) => {
                BuildNode::Node(op, children.into_iter().map(BuildNode::from_tree).collect())
            }
        }
    }

    fn fill_leftmost_hole(&mut self, replacement: &mut Option<BuildNode>) -> bool {
        match self {
            BuildNode::Hole => {
                *self = replacement.take().expect("replacement consumed once");
                true
            }
            BuildNode::Node(_, children) => children
                .iter_mut()
                .any(|c| c.fill_leftmost_hole(replacement)),
            _ => false,
        }
    }

    fn count_holes(&self) -> usize {
        match self {
            BuildNode::Hole => 1,
            BuildNode::Node(_, children) => children.iter().map(BuildNode::count_holes).sum(),
            _ => 0,
        }
    }

    fn finish(self) -> Result<ProcessTree, TreeError> {
        match self {
            BuildNode::Hole => unreachable!("caller checks hole count"),
            BuildNode::Tau => Ok(ProcessTree::Tau),
            BuildNode::Leaf(a) => Ok(ProcessTree::Leaf(a)),
            BuildNode::Node(op, children) => ProcessTree::node(
                op,
                children
                    .into_iter()
                    .map(BuildNode::finish)
                    .collect::<Result<_, _>>()?,
            ),
        }
    }
}

/// A tree under construction, filled left to right.
#[derive(Debug, Clone)]
pub struct TreeCursor {
    root: BuildNode,
}

impl TreeCursor {
    /// A cursor holding a single empty leaf.
    pub fn new() -> Self {
        TreeCursor {
            root: BuildNode::Hole,
        }
    }

    pub fn has_hole(&self) -> bool {
        self.root.count_holes() > 0
    }

    /// Replaces the leftmost empty leaf with the scaffold (which may itself
    /// contain empty leaves, filled by later grafts).
    pub fn graft(&mut self, scaffold: Scaffold) -> Result<(), TreeError> {
        let mut replacement = Some(BuildNode::from_scaffold(scaffold)?);
        if self.root.fill_leftmost_hole(&mut replacement) {
            Ok(())
        } else {
            Err(TreeError::NoHole)
        }
    }

    pub fn finish(self) -> Result<ProcessTree, TreeError> {
        let holes = self.root.count_holes();
        if holes > 0 {
            return Err(TreeError::UnfinishedTree(holes));
        }
        self.root.finish()
    }
}

impl Default for TreeCursor {
    fn default() -> Self {
        Self::new()
    }
}

/// A workflow net: unique source and sink place, transitions wired by
/// index. Arcs are stored on the transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PetriNet {
    place_count: usize,
    transitions: Vec<Transition>,
    source: usize,
    sink: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub label: Option<Activity>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl Transition {
    pub fn is_silent(&self) -> bool {
        self.label.is_none()
    }
}

pub type Marking = Vec<u32>;

impl PetriNet {
    pub fn place_count(&self) -> usize {
        self.place_count
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn initial_marking(&self) -> Marking {
        let mut m = vec![0; self.place_count];
        m[self.source] = 1;
        m
    }

    pub fn final_marking(&self) -> Marking {
        let mut m = vec![0; self.place_count];
        m[self.sink] = 1;
        m
    }

    pub fn is_enabled(&self, transition: usize, marking: &[u32]) -> bool {
        self.transitions[transition]
            .inputs
            .iter()
            .all(|&p| marking[p] > 0)
    }

    /// Fires without checking enablement; missing input tokens saturate at 0
    /// (token replay inserts them and accounts for the deficit separately).
    pub fn fire(&self, transition: usize, marking: &mut Marking) {
        let t = &self.transitions[transition];
        for &p in &t.inputs {
            marking[p] = marking[p].saturating_sub(1);
        }
        for &p in &t.outputs {
            marking[p] += 1;
        }
    }

    /// Minimal PNML (net/place/transition/arc; silent transitions flagged).
    pub fn to_pnml(&self) -> String {
        let escape = |s: &str| {
            s.replace('&', "&amp;")
                .replace('<', "&lt;")
                .replace('>', "&gt;")
                .replace('"', "&quot;")
        };
        let mut out = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <pnml>\n  <net id=\"net1\" type=\"http://www.pnml.org/version-2009/grammar/pnmlcoremodel\">\n    <page id=\"page1\">\n",
        );
        for p in 0..self.place_count {
            let _ = write!(out, "      <place id=\"p{p}\">");
            if p == self.source {
                out.push_str("<initialMarking><text>1</text></initialMarking>");
            }
            out.push_str("</place>\n");
        }
        for (i, t) in self.transitions.iter().enumerate() {
            match &t.label {
                Some(a) => {
                    let _ = writeln!(
                        out,
                        "      <transition id=\"t{i}\"><name><text>{}</text></name></transition>",
                        escape(a.label())
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "      <transition id=\"t{i}\"><toolspecific tool=\"dpim\" version=\"1\" activity=\"$invisible$\"/></transition>"
                    );
                }
            }
        }
        let mut arc_id = 0;
        for (i, t) in self.transitions.iter().enumerate() {
            for &p in &t.inputs {
                let _ = writeln!(
                    out,
                    "      <arc id=\"a{arc_id}\" source=\"p{p}\" target=\"t{i}\"/>"
                );
                arc_id += 1;
            }
            for &p in &t.outputs {
                let _ = writeln!(
                    out,
                    "      <arc id=\"a{arc_id}\" source=\"t{i}\" target=\"p{p}\"/>"
                );
                arc_id += 1;
            }
        }
        out.push_str("    </page>\n  </net>\n</pnml>\n");
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph net {\n  rankdir=LR;\n");
        for p in 0..self.place_count {
            let marker = if p == self.source {
                " [label=\"•\"]"
            } else if p == self.sink {
                " [label=\"o\"]"
            } else {
                " [label=\"\"]"
            };
            let _ = writeln!(out, "  p{p} [shape=circle]{marker};");
        }
        for (i, t) in self.transitions.iter().enumerate() {
            let label = t.label.as_ref().map(|a| a.label()).unwrap_or("τ");
            let style = if t.is_silent() {
                ", style=filled, fillcolor=gray"
            } else {
                ""
            };
            let _ = writeln!(out, "  t{i} [shape=box, label=\"{label}\"{style}];");
            for &p in &t.inputs {
                let _ = writeln!(out, "  p{p} -> t{i};");
            }
            for &p in &t.outputs {
                let _ = writeln!(out, "  t{i} -> p{p};");
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn arc_count(&self) -> usize {
        self.transitions
            .iter()
            .map(|t| t.inputs.len() + t.outputs.len())
            .sum()
    }
}

struct NetBuilder {
    place_count: usize,
    transitions: Vec<Transition>,
}

impl NetBuilder {
    fn place(&mut self) -> usize {
        self.place_count += 1;
        self.place_count - 1
    }

    fn transition(&mut self, label: Option<Activity>, inputs: Vec<usize>, outputs: Vec<usize>) {
        self.transitions.push(Transition {
            label,
            inputs,
            outputs,
        });
    }

    fn translate(&mut self, tree: &ProcessTree, entry: usize, exit: usize) {
        match tree {
            ProcessTree::Leaf(a) => {
                self.transition(Some(a.clone()), vec![entry], vec![exit]);
            }
            ProcessTree::Tau => {
                self.transition(None, vec![entry], vec![exit]);
            }
            ProcessTree::Node(Operator::Seq, children) => {
                let mut current = entry;
                for (i, child) in children.iter().enumerate() {
                    let next = if i + 1 == children.len() {
                        exit
                    } else {
                        self.place()
                    };
                    self.translate(child, current, next);
                    current = next;
                }
            }
            ProcessTree::Node(Operator::Xor, children) => {
                for child in children {
                    self.translate(child, entry, exit);
                }
            }
            ProcessTree::Node(Operator::And, children) => {
                let mut starts = Vec::new();
                let mut ends = Vec::new();
                for child in children {
                    let s = self.place();
                    let e = self.place();
                    self.translate(child, s, e);
                    starts.push(s);
                    ends.push(e);
                }
                self.transition(None, vec![entry], starts);
                self.transition(None, ends, vec![exit]);
            }
            ProcessTree::Node(Operator::Loop, children) => {
                let body_in = self.place();
                let body_out = self.place();
                self.transition(None, vec![entry], vec![body_in]);
                self.translate(&children[0], body_in, body_out);
                for redo in &children[1..] {
                    self.translate(redo, body_out, body_in);
                }
                self.transition(None, vec![body_out], vec![exit]);
            }
        }
    }
}

/// Standard block-structured translation to a workflow net. Sound by
/// construction for every finished tree.
pub fn to_petri_net(tree: &ProcessTree) -> PetriNet {
    let mut builder = NetBuilder {
        place_count: 0,
        transitions: Vec::new(),
    };
    let source = builder.place();
    let sink = builder.place();
    builder.translate(tree, source, sink);
    PetriNet {
        place_count: builder.place_count,
        transitions: builder.transitions,
        source,
        sink,
    }
}
