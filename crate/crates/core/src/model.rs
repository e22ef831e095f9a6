//! Shared domain types: intentions and intention trees, constraints and their
//! cover algebra, requirement/service patterns, services and contexts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::ProcessGraph;

/// Lowercases, strips punctuation and collapses whitespace.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut pending_space = false;
    for ch in label.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(ch.to_lowercase());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    Enumeration,
    Boolean,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum ConstraintValue {
    Enumeration(Vec<String>),
    Boolean(bool),
    Interval(Interval),
}

/// A named non-functional restriction on an intention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    #[serde(flatten)]
    pub value: ConstraintValue,
}

impl Constraint {
    pub fn interval(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Constraint {
            name: name.into(),
            value: ConstraintValue::Interval(Interval { lo, hi, unit: None }),
        }
    }

    pub fn enumeration<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Constraint {
            name: name.into(),
            value: ConstraintValue::Enumeration(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn boolean(name: impl Into<String>, value: bool) -> Self {
        Constraint { name: name.into(), value: ConstraintValue::Boolean(value) }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self.value {
            ConstraintValue::Enumeration(_) => ConstraintKind::Enumeration,
            ConstraintValue::Boolean(_) => ConstraintKind::Boolean,
            ConstraintValue::Interval(_) => ConstraintKind::Interval,
        }
    }

    /// Checks the per-kind value invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("constraint name is empty".into());
        }
        match &self.value {
            ConstraintValue::Interval(iv) => {
                if !(iv.lo.is_finite() && iv.hi.is_finite()) {
                    return Err(format!("`{}`: interval bounds must be finite", self.name));
                }
                if iv.lo > iv.hi {
                    return Err(format!("`{}`: lo {} > hi {}", self.name, iv.lo, iv.hi));
                }
            }
            ConstraintValue::Enumeration(vals) => {
                if vals.is_empty() {
                    return Err(format!("`{}`: enumeration is empty", self.name));
                }
                let set: BTreeSet<&str> = vals.iter().map(String::as_str).collect();
                if set.len() != vals.len() {
                    return Err(format!("`{}`: duplicate enumeration literal", self.name));
                }
            }
            ConstraintValue::Boolean(_) => {}
        }
        Ok(())
    }

    fn signature(&self) -> String {
        match &self.value {
            ConstraintValue::Enumeration(v) => {
                let set: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                format!("{}:E{:?}", self.name, set)
            }
            ConstraintValue::Boolean(b) => format!("{}:B{}", self.name, b),
            ConstraintValue::Interval(iv) => {
                format!("{}:I[{},{}]{}", self.name, iv.lo, iv.hi, iv.unit.as_deref().unwrap_or(""))
            }
        }
    }
}

fn check_comparable(a: &Constraint, b: &Constraint) -> Result<()> {
    if a.name != b.name {
        return Err(Error::KindMismatch(format!("names `{}` and `{}` differ", a.name, b.name)));
    }
    if a.kind() != b.kind() {
        return Err(Error::KindMismatch(format!(
            "`{}`: {:?} vs {:?}",
            a.name,
            a.kind(),
            b.kind()
        )));
    }
    if let (ConstraintValue::Interval(x), ConstraintValue::Interval(y)) = (&a.value, &b.value) {
        if let (Some(u), Some(v)) = (&x.unit, &y.unit) {
            if u != v {
                return Err(Error::KindMismatch(format!("`{}`: units {u} vs {v}", a.name)));
            }
        }
    }
    Ok(())
}

/// `true` when `looser` admits every value `tighter` admits.
pub fn covers(looser: &Constraint, tighter: &Constraint) -> Result<bool> {
    check_comparable(looser, tighter)?;
    Ok(match (&looser.value, &tighter.value) {
        (ConstraintValue::Interval(l), ConstraintValue::Interval(t)) => l.lo <= t.lo && t.hi <= l.hi,
        (ConstraintValue::Enumeration(l), ConstraintValue::Enumeration(t)) => {
            t.iter().all(|v| l.contains(v))
        }
        (ConstraintValue::Boolean(l), ConstraintValue::Boolean(t)) => l == t,
        _ => unreachable!("kinds checked above"),
    })
}

/// Similarity in `[0, 1]`: Jaccard for enumerations, overlap over union
/// length for intervals, equality for booleans.
pub fn constraint_similarity(a: &Constraint, b: &Constraint) -> Result<f64> {
    check_comparable(a, b)?;
    Ok(match (&a.value, &b.value) {
        (ConstraintValue::Enumeration(x), ConstraintValue::Enumeration(y)) => {
            let x: BTreeSet<&String> = x.iter().collect();
            let y: BTreeSet<&String> = y.iter().collect();
            let union = x.union(&y).count();
            if union == 0 {
                1.0
            } else {
                x.intersection(&y).count() as f64 / union as f64
            }
        }
        (ConstraintValue::Interval(x), ConstraintValue::Interval(y)) => {
            if x.lo == y.lo && x.hi == y.hi {
                1.0
            } else {
                let inter = (x.hi.min(y.hi) - x.lo.max(y.lo)).max(0.0);
                let union = x.hi.max(y.hi) - x.lo.min(y.lo);
                if union <= 0.0 {
                    0.0
                } else {
                    inter / union
                }
            }
        }
        (ConstraintValue::Boolean(x), ConstraintValue::Boolean(y)) => {
            if x == y {
                1.0
            } else {
                0.0
            }
        }
        _ => unreachable!("kinds checked above"),
    })
}

// ---------------------------------------------------------------------------
// Intentions and trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Cost,
    Time,
    Quality,
    Satisfaction,
    Profit,
    ResourceUtilization,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Cost,
        Metric::Time,
        Metric::Quality,
        Metric::Satisfaction,
        Metric::Profit,
        Metric::ResourceUtilization,
    ];

    pub fn natural_direction(self) -> Direction {
        match self {
            Metric::Cost | Metric::Time => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptObjective {
    pub metric: Metric,
    pub direction: Direction,
}

impl OptObjective {
    pub fn natural(metric: Metric) -> Self {
        OptObjective { metric, direction: metric.natural_direction() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Intention {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_objective: Option<OptObjective>,
}

impl Intention {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Intention { id: id.into(), label: label.into(), constraints: Vec::new(), opt_objective: None }
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_objective(mut self, metric: Metric) -> Self {
        self.opt_objective = Some(OptObjective::natural(metric));
        self
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    pub fn normalized_label(&self) -> String {
        normalize_label(&self.label)
    }
}

/// `true` iff labels match after normalization and every constraint on `q`
/// is covered by the same-named constraint on `p`. Constraints only `p`
/// carries do not matter.
pub fn intention_covers(p: &Intention, q: &Intention) -> bool {
    if p.normalized_label() != q.normalized_label() {
        return false;
    }
    q.constraints.iter().all(|qc| {
        p.constraint(&qc.name).is_some_and(|pc| covers(pc, qc).unwrap_or(false))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecompositionKind {
    #[serde(rename = "AND")]
    And,
    #[serde(rename = "OR")]
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub kind: DecompositionKind,
    pub children: Vec<String>,
}

/// Rooted tree of intentions with AND/OR decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    pub root: String,
    pub nodes: BTreeMap<String, Intention>,
    #[serde(default)]
    pub decomposition: BTreeMap<String, Decomposition>,
    /// `(from, to)`: `from` depends on `to`.
    #[serde(default)]
    pub dependencies: BTreeSet<(String, String)>,
    #[serde(default)]
    pub owner: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
}

impl ITree {
    pub fn new(root: Intention) -> Self {
        let id = root.id.clone();
        let mut nodes = BTreeMap::new();
        nodes.insert(id.clone(), root);
        ITree {
            root: id,
            nodes,
            decomposition: BTreeMap::new(),
            dependencies: BTreeSet::new(),
            owner: String::new(),
            roles: BTreeSet::new(),
        }
    }

    /// Appends `child` under `parent`. The decomposition kind is set when the
    /// parent gets its first child and left untouched afterwards.
    pub fn add_child(&mut self, parent: &str, kind: DecompositionKind, child: Intention) -> &mut Self {
        let id = child.id.clone();
        self.nodes.insert(id.clone(), child);
        self.decomposition
            .entry(parent.to_string())
            .or_insert_with(|| Decomposition { kind, children: Vec::new() })
            .children
            .push(id);
        self
    }

    pub fn add_dependency(&mut self, from: &str, to: &str) -> &mut Self {
        self.dependencies.insert((from.to_string(), to.to_string()));
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&Intention> {
        self.nodes.get(id)
    }

    pub fn children(&self, id: &str) -> &[String] {
        self.decomposition.get(id).map(|d| d.children.as_slice()).unwrap_or(&[])
    }

    pub fn kind(&self, id: &str) -> Option<DecompositionKind> {
        self.decomposition.get(id).filter(|d| !d.children.is_empty()).map(|d| d.kind)
    }

    pub fn parents(&self) -> BTreeMap<&str, &str> {
        let mut out = BTreeMap::new();
        for (p, d) in &self.decomposition {
            for c in &d.children {
                out.insert(c.as_str(), p.as_str());
            }
        }
        out
    }

    /// Pre-order ids from the root, children in declared order. Assumes a
    /// valid tree; unreachable nodes are skipped.
    pub fn preorder(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root.as_str()];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !self.nodes.contains_key(id) || !seen.insert(id) {
                continue;
            }
            out.push(id);
            for c in self.children(id).iter().rev() {
                stack.push(c.as_str());
            }
        }
        out
    }

    /// Node ids of the subtree rooted at `id` (inclusive).
    pub fn subtree_ids(&self, id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some((k, _)) = self.nodes.get_key_value(n) {
                out.push(k.as_str());
                for c in self.children(n).iter().rev() {
                    stack.push(c.as_str());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_itree(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTree(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    MissingRoot,
    IdMismatch,
    EmptyLabel,
    InvalidConstraint,
    DuplicateConstraint,
    ObjectiveDirection,
    UnknownParent,
    UnknownChild,
    EmptyDecomposition,
    DuplicateChild,
    MultipleParents,
    RootHasParent,
    Cycle,
    Unreachable,
    DependencyUnknownEndpoint,
    DependencySelfLoop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    fn new(node: Option<&str>, rule: Rule, detail: impl Into<String>) -> Self {
        Violation { node: node.map(str::to_string), rule, detail: detail.into() }
    }
}

/// Lists every structural and value invariant the tree breaks.
pub fn validate_itree(tree: &ITree) -> Vec<Violation> {
    let mut out = Vec::new();

    if !tree.nodes.contains_key(&tree.root) {
        out.push(Violation::new(Some(&tree.root), Rule::MissingRoot, "root id is not a node"));
    }

    for (key, node) in &tree.nodes {
        let at = Some(key.as_str());
        if &node.id != key {
            out.push(Violation::new(at, Rule::IdMismatch, format!("intention id is `{}`", node.id)));
        }
        if node.label.trim().is_empty() {
            out.push(Violation::new(at, Rule::EmptyLabel, "label is empty"));
        }
        let mut names = BTreeSet::new();
        for c in &node.constraints {
            if let Err(e) = c.validate() {
                out.push(Violation::new(at, Rule::InvalidConstraint, e));
            }
            if !names.insert(c.name.as_str()) {
                out.push(Violation::new(at, Rule::DuplicateConstraint, format!("`{}` repeated", c.name)));
            }
        }
        if let Some(o) = node.opt_objective {
            if o.direction != o.metric.natural_direction() {
                out.push(Violation::new(
                    at,
                    Rule::ObjectiveDirection,
                    format!("{} must be {:?}", o.metric, o.metric.natural_direction()),
                ));
            }
        }
    }

    // Parent bookkeeping over decomposition edges.
    let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
    for (p, d) in &tree.decomposition {
        if !tree.nodes.contains_key(p) {
            out.push(Violation::new(Some(p), Rule::UnknownParent, "decomposition of unknown node"));
        }
        if d.children.is_empty() {
            out.push(Violation::new(Some(p), Rule::EmptyDecomposition, "decomposition without children"));
        }
        let mut local = BTreeSet::new();
        for c in &d.children {
            if !local.insert(c.as_str()) {
                out.push(Violation::new(Some(c), Rule::DuplicateChild, format!("listed twice under `{p}`")));
                continue;
            }
            if !tree.nodes.contains_key(c) {
                out.push(Violation::new(Some(c), Rule::UnknownChild, format!("child of `{p}` is not a node")));
                continue;
            }
            if c == &tree.root {
                out.push(Violation::new(Some(c), Rule::RootHasParent, format!("root listed under `{p}`")));
                continue;
            }
            match parent_of.get(c.as_str()) {
                Some(prev) => out.push(Violation::new(
                    Some(c),
                    Rule::MultipleParents,
                    format!("parents `{prev}` and `{p}`"),
                )),
                None => {
                    parent_of.insert(c.as_str(), p.as_str());
                }
            }
        }
    }

    // Reachability from the root along decomposition edges.
    if tree.nodes.contains_key(&tree.root) {
        let mut reached = BTreeSet::new();
        let mut stack = vec![tree.root.as_str()];
        while let Some(n) = stack.pop() {
            if !reached.insert(n) {
                continue;
            }
            if let Some(d) = tree.decomposition.get(n) {
                for c in &d.children {
                    if tree.nodes.contains_key(c) && parent_of.get(c.as_str()) == Some(&n) {
                        stack.push(c.as_str());
                    }
                }
            }
        }
        for id in tree.nodes.keys() {
            if reached.contains(id.as_str()) {
                continue;
            }
            // Walk parent pointers to distinguish cycles from detached parts.
            let mut cur = id.as_str();
            let mut seen = BTreeSet::new();
            let mut cyclic = false;
            while let Some(&p) = parent_of.get(cur) {
                if !seen.insert(cur) {
                    cyclic = true;
                    break;
                }
                if p == id {
                    cyclic = true;
                    break;
                }
                cur = p;
            }
            if cyclic {
                out.push(Violation::new(Some(id), Rule::Cycle, "node lies on a decomposition cycle"));
            } else {
                out.push(Violation::new(Some(id), Rule::Unreachable, "node is not reachable from the root"));
            }
        }
    }

    for (from, to) in &tree.dependencies {
        for end in [from, to] {
            if !tree.nodes.contains_key(end) {
                out.push(Violation::new(
                    Some(end),
                    Rule::DependencyUnknownEndpoint,
                    format!("dependency {from} -> {to}"),
                ));
            }
        }
        if from == to {
            out.push(Violation::new(Some(from), Rule::DependencySelfLoop, "dependency on itself"));
        }
    }

    out
}

fn escape_label(label: &str, out: &mut String) {
    for ch in label.chars() {
        if matches!(ch, '\\' | '$' | ' ') {
            out.push('\\');
        }
        out.push(ch);
    }
}

/// Canonical string of the tree: pre-order labels separated by spaces, `$`
/// closing each node, children sorted by `(label, encoding)`.
pub fn canonical_encode(tree: &ITree) -> Result<String> {
    tree.validate()?;
    Ok(encode_node(tree, &tree.root, &|t: &ITree, id: &str| t.nodes[id].label.clone()))
}

/// Same shape as [`canonical_encode`] with a caller-chosen node token.
pub(crate) fn encode_node(tree: &ITree, id: &str, token: &dyn Fn(&ITree, &str) -> String) -> String {
    let label = token(tree, id);
    let mut kids: Vec<(String, String)> = tree
        .children(id)
        .iter()
        .map(|c| (token(tree, c), encode_node(tree, c, token)))
        .collect();
    kids.sort();
    let mut out = String::new();
    escape_label(&label, &mut out);
    for (_, enc) in kids {
        out.push(' ');
        out.push_str(&enc);
    }
    out.push('$');
    out
}

// ---------------------------------------------------------------------------
// Patterns, services, contexts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RpInfo {
    pub use_frequency: u64,
    pub domain: String,
    pub description: String,
}

/// Reusable demand-side unit: a forest of intention trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementPattern {
    pub id: String,
    pub info: RpInfo,
    pub forest: Vec<ITree>,
}

impl RequirementPattern {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidDocument("requirement pattern id is empty".into()));
        }
        if self.forest.is_empty() {
            return Err(Error::InvalidDocument(format!("{}: forest is empty", self.id)));
        }
        for t in &self.forest {
            t.validate()?;
        }
        Ok(())
    }

    pub fn intention_count(&self) -> usize {
        self.forest.iter().map(ITree::len).sum()
    }

    /// Canonical encodings of the forest trees, sorted.
    pub fn forest_encoding(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .forest
            .iter()
            .map(crate::requirement_mining::pattern_key)
            .collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosVector {
    pub cost: f64,
    pub time: f64,
    pub availability: f64,
    pub rating: f64,
}

impl QosVector {
    pub fn new(cost: f64, time: f64, availability: f64, rating: f64) -> Self {
        QosVector { cost, time, availability, rating }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let fields = [("cost", self.cost), ("time", self.time), ("availability", self.availability), ("rating", self.rating)];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("qos {name} must be a non-negative number, got {v}"));
            }
        }
        if self.availability > 1.0 {
            return Err(format!("qos availability {} exceeds 1", self.availability));
        }
        if self.rating > 5.0 {
            return Err(format!("qos rating {} exceeds 5", self.rating));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SupplyMode {
    Reserved,
    OnDemand,
    Spot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Organization,
    InnerDomain,
    CrossDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CooperationKind {
    Symbiosis,
    Parasite,
    LocationComplementarity,
    TemporalComplementarity,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CooperativeRel {
    pub peer: String,
    pub kind: CooperationKind,
}

/// An atomic service offered by a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceSpec {
    pub id: String,
    pub function: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub provider: String,
    pub user_group: String,
    pub qos: QosVector,
    pub supply_mode: SupplyMode,
    pub layer: Layer,
    #[serde(default)]
    pub cooperative_rels: BTreeSet<CooperativeRel>,
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidDocument("service id is empty".into()));
        }
        self.qos.validate().map_err(|e| Error::InvalidDocument(format!("{}: {e}", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpInfo {
    pub description: String,
    pub domain: String,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpInstance {
    /// Activity id to service id.
    pub binding: BTreeMap<String, String>,
    pub aggregate_qos: QosVector,
}

/// Reusable supply-side unit: a process over service classes with concrete
/// bindings observed in history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServicePattern {
    pub id: String,
    pub info: SpInfo,
    pub fr: String,
    pub process: ProcessGraph,
    pub qos: QosVector,
    #[serde(default)]
    pub cons: Vec<Constraint>,
    pub instances: Vec<SpInstance>,
    pub granularity: usize,
    pub support: u64,
    pub verifying_degree: f64,
}

impl ServicePattern {
    /// Checks the pattern against its own invariants and, when given, that
    /// every instance binds activities to services of the matching function.
    pub fn validate(&self, services: Option<&BTreeMap<String, ServiceSpec>>) -> Result<()> {
        let bad = |m: String| Error::InvalidDocument(format!("{}: {m}", self.id));
        if self.id.trim().is_empty() {
            return Err(Error::InvalidDocument("service pattern id is empty".into()));
        }
        self.process.validate()?;
        if self.granularity != self.process.activities.len() {
            return Err(bad(format!(
                "granularity {} != activity count {}",
                self.granularity,
                self.process.activities.len()
            )));
        }
        if self.instances.is_empty() {
            return Err(bad("no instances".into()));
        }
        if !(0.0..=1.0).contains(&self.verifying_degree) {
            return Err(bad(format!("verifying degree {} outside [0,1]", self.verifying_degree)));
        }
        self.qos.validate().map_err(bad)?;
        for c in &self.cons {
            c.validate().map_err(bad)?;
        }
        for inst in &self.instances {
            for act in self.process.activities.keys() {
                let Some(sid) = inst.binding.get(act) else {
                    return Err(bad(format!("instance leaves activity `{act}` unbound")));
                };
                if let Some(services) = services {
                    let Some(svc) = services.get(sid) else {
                        return Err(bad(format!("unknown service `{sid}`")));
                    };
                    let class = &self.process.activities[act].service_class;
                    if &svc.function != class {
                        return Err(bad(format!(
                            "service `{sid}` provides `{}`, activity `{act}` needs `{class}`",
                            svc.function
                        )));
                    }
                }
            }
            if inst.binding.len() != self.process.activities.len() {
                return Err(bad("instance binds unknown activities".into()));
            }
        }
        Ok(())
    }
}

/// Matching scenario: who, where, and what is optimized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Context {
    pub user_class: String,
    pub environment: String,
    pub objective: Metric,
}

impl Context {
    pub fn new(user_class: impl Into<String>, environment: impl Into<String>, objective: Metric) -> Self {
        Context { user_class: user_class.into(), environment: environment.into(), objective }
    }

    /// Canonical `userClass|environment|objective` string.
    pub fn key(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('|', "\\|");
        format!("{}|{}|{}", esc(&self.user_class), esc(&self.environment), self.objective)
    }

    /// Inverse of [`Context::key`].
    pub fn from_key(key: &str) -> Option<Context> {
        let mut parts = vec![String::new()];
        let mut chars = key.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => parts.last_mut()?.push(chars.next()?),
                '|' => parts.push(String::new()),
                c => parts.last_mut()?.push(c),
            }
        }
        let [user_class, environment, objective]: [String; 3] = parts.try_into().ok()?;
        let objective = Metric::ALL.into_iter().find(|m| m.to_string() == objective)?;
        Some(Context { user_class, environment, objective })
    }
}

/// Registered context dimensions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextVocabulary {
    pub user_classes: BTreeSet<String>,
    pub environments: BTreeSet<String>,
}

impl ContextVocabulary {
    pub fn check(&self, ctx: &Context) -> Result<()> {
        if !self.user_classes.contains(&ctx.user_class) {
            return Err(Error::Range(format!("unregistered user class `{}`", ctx.user_class)));
        }
        if !self.environments.contains(&ctx.environment) {
            return Err(Error::Range(format!("unregistered environment `{}`", ctx.environment)));
        }
        Ok(())
    }
}

/// Stable identity for a set of constraints, used when deduplicating
/// patterns that share a shape.
pub(crate) fn constraint_signature(cs: &[Constraint]) -> String {
    let mut v: Vec<String> = cs.iter().map(Constraint::signature).collect();
    v.sort();
    v.join(",")
}
