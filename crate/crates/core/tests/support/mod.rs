//! Random generators and brute-force oracles shared by the property tests and
//! the acceptance suite. Oracles deliberately avoid the library's own
//! encodings and search code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use bilateral_core::model::{
    Constraint, ConstraintValue, DecompositionKind, Direction, ITree, Intention, Interval, Metric, OptObjective,
    RequirementPattern,
};
use bilateral_core::model::{Context, QosVector};
use bilateral_core::pmm::{MatchOutcome, MatchingMatrix, DEFAULT_SMOOTHING};
use bilateral_core::process::{Block, ProcessGraph};
use bilateral_core::sp_mining::{HistoricalIss, ServiceClassGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Constraints and intentions
// ---------------------------------------------------------------------------

const ENUM_POOL: [&str; 5] = ["car", "bus", "train", "walk", "bike"];

/// Random valid constraint of the given kind (0 interval, 1 enumeration,
/// 2 boolean) named `name`. Small integer bounds make containment common.
pub fn constraint_of_kind(r: &mut ChaCha8Rng, name: &str, kind: u8) -> Constraint {
    match kind {
        0 => {
            let a = r.random_range(0..8) as f64;
            let b = r.random_range(0..8) as f64;
            Constraint::interval(name, a.min(b), a.max(b))
        }
        1 => {
            let mut vals: Vec<&str> = ENUM_POOL.iter().copied().filter(|_| r.random_bool(0.5)).collect();
            if vals.is_empty() {
                vals.push(ENUM_POOL[r.random_range(0..ENUM_POOL.len())]);
            }
            // Shuffle so literal order never matters.
            for i in (1..vals.len()).rev() {
                vals.swap(i, r.random_range(0..=i));
            }
            Constraint::enumeration(name, vals)
        }
        _ => Constraint::boolean(name, r.random_bool(0.5)),
    }
}

/// Set semantics of a constraint value, for comparisons that ignore literal
/// order.
pub fn value_key(c: &Constraint) -> String {
    match &c.value {
        ConstraintValue::Interval(iv) => format!("I{}:{}", iv.lo, iv.hi),
        ConstraintValue::Enumeration(v) => format!("E{:?}", v.iter().collect::<BTreeSet<_>>()),
        ConstraintValue::Boolean(b) => format!("B{b}"),
    }
}

pub fn random_intention(r: &mut ChaCha8Rng, id: &str) -> Intention {
    let labels = ["banquet", "Banquet", "food", "music"];
    let mut it = Intention::new(id, labels[r.random_range(0..labels.len())]);
    for (name, kind) in [("tables", 0u8), ("transport", 1), ("outdoor", 2)] {
        if r.random_bool(0.5) {
            it = it.with_constraint(constraint_of_kind(r, name, kind));
        }
    }
    it
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

/// Valid random tree over `labels` with between 1 and `max_nodes` nodes.
pub fn random_tree(r: &mut ChaCha8Rng, max_nodes: usize, labels: &[&str]) -> ITree {
    bilateral_core::fixtures::random_tree(r, max_nodes, labels)
}

/// Copy of `t` with fresh ids and every child list shuffled.
pub fn shuffled_copy(r: &mut ChaCha8Rng, t: &ITree) -> ITree {
    let rename = |id: &str| format!("s-{id}");
    let mut out = ITree::new({
        let mut n = t.nodes[&t.root].clone();
        n.id = rename(&n.id);
        n
    });
    let mut stack = vec![t.root.clone()];
    while let Some(id) = stack.pop() {
        let mut kids: Vec<String> = t.children(&id).to_vec();
        for i in (1..kids.len()).rev() {
            kids.swap(i, r.random_range(0..=i));
        }
        for c in kids {
            let mut n = t.nodes[&c].clone();
            n.id = rename(&c);
            out.add_child(&rename(&id), t.kind(&id).unwrap(), n);
            stack.push(c);
        }
    }
    out
}

/// Unordered labelled-tree isomorphism by trying every child permutation.
pub fn isomorphic(a: &ITree, b: &ITree) -> bool {
    fn node_iso(a: &ITree, x: &str, b: &ITree, y: &str) -> bool {
        if a.nodes[x].label != b.nodes[y].label {
            return false;
        }
        let (ka, kb) = (a.children(x), b.children(y));
        if ka.len() != kb.len() {
            return false;
        }
        let mut used = vec![false; kb.len()];
        match_children(a, ka, 0, b, kb, &mut used)
    }
    fn match_children(a: &ITree, ka: &[String], i: usize, b: &ITree, kb: &[String], used: &mut [bool]) -> bool {
        if i == ka.len() {
            return true;
        }
        for j in 0..kb.len() {
            if !used[j] && node_iso(a, &ka[i], b, &kb[j]) {
                used[j] = true;
                if match_children(a, ka, i + 1, b, kb, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    node_iso(a, &a.root, b, &b.root)
}

/// Arbitrary (often invalid) tree-like graph: starts from a valid tree and
/// applies up to two random corruptions.
pub fn random_raw_tree(r: &mut ChaCha8Rng) -> ITree {
    let mut t = random_tree(r, 10, &["a", "b", "c"]);
    let ids: Vec<String> = t.nodes.keys().cloned().collect();
    let pick = |r: &mut ChaCha8Rng| ids[r.random_range(0..ids.len())].clone();
    if r.random_bool(0.3) {
        t.add_dependency(&pick(r), &pick(r));
    }
    for _ in 0..r.random_range(0..3) {
        match r.random_range(0..12) {
            0 => t.root = "ghost".into(),
            1 => {
                let id = pick(r);
                t.nodes.get_mut(&id).unwrap().id = "other".into();
            }
            2 => {
                let id = pick(r);
                t.nodes.get_mut(&id).unwrap().label = "  ".into();
            }
            3 => {
                let id = pick(r);
                t.nodes.get_mut(&id).unwrap().constraints.push(Constraint::interval("bad", 3.0, 1.0));
            }
            4 => {
                let id = pick(r);
                let n = t.nodes.get_mut(&id).unwrap();
                n.constraints.push(Constraint::boolean("dup", true));
                n.constraints.push(Constraint::boolean("dup", false));
            }
            5 => {
                let id = pick(r);
                t.nodes.get_mut(&id).unwrap().opt_objective =
                    Some(OptObjective { metric: Metric::Cost, direction: Direction::Maximize });
            }
            6 => {
                // Extra edge: second parent, cycle or root under a child.
                let (p, c) = (pick(r), pick(r));
                t.decomposition
                    .entry(p)
                    .or_insert(bilateral_core::model::Decomposition { kind: DecompositionKind::And, children: vec![] })
                    .children
                    .push(c);
            }
            7 => {
                let p = pick(r);
                t.decomposition
                    .entry(p)
                    .or_insert(bilateral_core::model::Decomposition { kind: DecompositionKind::Or, children: vec![] })
                    .children
                    .push("missing".into());
            }
            8 => {
                let p = pick(r);
                t.decomposition.insert(
                    p,
                    bilateral_core::model::Decomposition { kind: DecompositionKind::And, children: vec![] },
                );
            }
            9 => {
                // Detach a subtree.
                if let Some(d) = t.decomposition.values_mut().find(|d| !d.children.is_empty()) {
                    d.children.pop();
                }
                t.decomposition.retain(|_, d| !d.children.is_empty());
            }
            10 => {
                let x = pick(r);
                t.add_dependency(&x, &x);
            }
            _ => {
                t.add_dependency(&pick(r), "nowhere");
            }
        }
    }
    t
}

fn constraint_ok(c: &Constraint) -> bool {
    if c.name.trim().is_empty() {
        return false;
    }
    match &c.value {
        ConstraintValue::Interval(Interval { lo, hi, .. }) => lo.is_finite() && hi.is_finite() && lo <= hi,
        ConstraintValue::Enumeration(v) => !v.is_empty() && v.iter().collect::<BTreeSet<_>>().len() == v.len(),
        ConstraintValue::Boolean(_) => true,
    }
}

/// Brute-force validity: one rooted tree, well-formed nodes, sound
/// dependencies.
pub fn oracle_tree_valid(t: &ITree) -> bool {
    if !t.nodes.contains_key(&t.root) {
        return false;
    }
    for (k, n) in &t.nodes {
        if &n.id != k || n.label.trim().is_empty() {
            return false;
        }
        if !n.constraints.iter().all(constraint_ok) {
            return false;
        }
        let names: BTreeSet<&str> = n.constraints.iter().map(|c| c.name.as_str()).collect();
        if names.len() != n.constraints.len() {
            return false;
        }
        if let Some(o) = n.opt_objective {
            let want = match o.metric {
                Metric::Cost | Metric::Time => Direction::Minimize,
                _ => Direction::Maximize,
            };
            if o.direction != want {
                return false;
            }
        }
    }
    let mut parent_count: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, d) in &t.decomposition {
        if !t.nodes.contains_key(p) || d.children.is_empty() {
            return false;
        }
        for c in &d.children {
            if !t.nodes.contains_key(c) {
                return false;
            }
            *parent_count.entry(c).or_default() += 1;
        }
    }
    for id in t.nodes.keys() {
        let want = if id == &t.root { 0 } else { 1 };
        if parent_count.get(id.as_str()).copied().unwrap_or(0) != want {
            return false;
        }
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![t.root.as_str()];
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            return false;
        }
        stack.extend(t.children(n).iter().map(String::as_str));
    }
    if seen.len() != t.nodes.len() {
        return false;
    }
    t.dependencies.iter().all(|(a, b)| a != b && t.nodes.contains_key(a) && t.nodes.contains_key(b))
}

// ---------------------------------------------------------------------------
// Frequent subtrees
// ---------------------------------------------------------------------------

fn kind_tag(k: DecompositionKind) -> &'static str {
    match k {
        DecompositionKind::And => "&",
        DecompositionKind::Or => "|",
    }
}

/// Unordered code of the sub-tree of `t` induced by `keep`, rooted at `id`.
/// Internal nodes carry the kind of their outgoing decomposition.
fn oracle_code(t: &ITree, id: &str, keep: &BTreeSet<&str>) -> String {
    let mut kids: Vec<String> =
        t.children(id).iter().filter(|c| keep.contains(c.as_str())).map(|c| oracle_code(t, c, keep)).collect();
    kids.sort();
    let label = t.nodes[id].label.to_lowercase();
    if kids.is_empty() {
        format!("<{label}>")
    } else {
        format!("<{label}{}{}>", kind_tag(t.kind(id).unwrap()), kids.concat())
    }
}

pub fn oracle_pattern_code(shape: &ITree) -> String {
    let all: BTreeSet<&str> = shape.nodes.keys().map(String::as_str).collect();
    oracle_code(shape, &shape.root, &all)
}

/// Every node set that contains `id`, is closed under taking parents up to
/// `id`, and has at most `max` nodes.
fn rooted_sets<'a>(t: &'a ITree, id: &'a str, max: usize) -> Vec<BTreeSet<&'a str>> {
    let mut acc: Vec<BTreeSet<&'a str>> = vec![BTreeSet::from([id])];
    for c in t.children(id) {
        let subs = rooted_sets(t, c, max);
        let mut next = Vec::new();
        for base in &acc {
            next.push(base.clone());
            for s in &subs {
                if base.len() + s.len() <= max {
                    let mut u = base.clone();
                    u.extend(s.iter().copied());
                    next.push(u);
                }
            }
        }
        acc = next;
    }
    acc
}

/// Pattern code to transaction support over all rooted connected subtrees.
pub fn oracle_frequent_subtrees(corpus: &[ITree], min_support: usize, max_nodes: usize) -> BTreeMap<String, usize> {
    let mut trees_of: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (ti, t) in corpus.iter().enumerate() {
        for id in t.nodes.keys() {
            for set in rooted_sets(t, id, max_nodes) {
                trees_of.entry(oracle_code(t, id, &set)).or_default().insert(ti);
            }
        }
    }
    trees_of.into_iter().map(|(k, v)| (k, v.len())).filter(|(_, s)| *s >= min_support).collect()
}

// ---------------------------------------------------------------------------
// KGR
// ---------------------------------------------------------------------------

#[derive(Debug, Default, PartialEq)]
pub struct KgrCounts {
    pub nodes: BTreeMap<String, u64>,
    pub parent_child: BTreeMap<(String, String), u64>,
    pub sibling: BTreeMap<(String, String), u64>,
}

/// Per-tree pair counting over lower-cased labels.
pub fn oracle_kgr(corpus: &[ITree]) -> KgrCounts {
    let mut out = KgrCounts::default();
    for t in corpus {
        let label = |id: &str| t.nodes[id].label.to_lowercase();
        let labels: BTreeSet<String> = t.nodes.keys().map(|id| label(id)).collect();
        for l in labels {
            *out.nodes.entry(l).or_default() += 1;
        }
        let mut pc = BTreeSet::new();
        let mut sib = BTreeSet::new();
        for p in t.nodes.keys() {
            let kids = t.children(p);
            for a in kids {
                pc.insert((label(p), label(a)));
                for b in kids {
                    let (x, y) = (label(a), label(b));
                    if x < y {
                        sib.insert((x, y));
                    }
                }
            }
        }
        for k in pc {
            *out.parent_child.entry(k).or_default() += 1;
        }
        for k in sib {
            *out.sibling.entry(k).or_default() += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// RP selection
// ---------------------------------------------------------------------------

/// Best (coverage, count) over all pairwise disjoint subsets of cover sets.
pub fn oracle_best_selection(covers: &[BTreeSet<String>]) -> (usize, usize) {
    let n = covers.len();
    assert!(n <= 20, "oracle limited to 20 patterns");
    let mut best = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        let mut seen = BTreeSet::new();
        let mut ok = true;
        let mut count = 0;
        for (i, c) in covers.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            if c.is_empty() || c.iter().any(|x| seen.contains(x)) {
                ok = false;
                break;
            }
            seen.extend(c.iter().cloned());
            count += 1;
        }
        if !ok {
            continue;
        }
        let cov = seen.len();
        if cov > best.0 || (cov == best.0 && count < best.1) {
            best = (cov, count);
        }
    }
    best
}

pub fn rp_labels(rp: &RequirementPattern) -> BTreeSet<String> {
    rp.forest.iter().flat_map(|t| t.nodes.values().map(|n| n.label.to_lowercase())).collect()
}

// ---------------------------------------------------------------------------
// Solution logs and segments
// ---------------------------------------------------------------------------

pub const CLASSES: [&str; 3] = ["x", "y", "z"];

/// Class groups `x`, `y`, `z`, each with two member services `x1`, `x2`, ...
pub fn oracle_groups() -> Vec<ServiceClassGroup> {
    CLASSES
        .iter()
        .map(|c| ServiceClassGroup {
            class_label: c.to_string(),
            member_service_ids: [format!("{c}1"), format!("{c}2")].into_iter().collect(),
            centroid: vec![],
            conditional_assoc_prob: BTreeMap::new(),
        })
        .collect()
}

/// A normalized sequence list with exactly `n` leaves: items are activities
/// or gateways whose branches are again such lists.
fn gen_items(r: &mut ChaCha8Rng, n: usize, next_id: &mut usize) -> Vec<Block<(String, String)>> {
    let mut parts = Vec::new();
    let mut left = n;
    while left > 0 {
        let p = r.random_range(1..=left);
        parts.push(p);
        left -= p;
    }
    parts
        .into_iter()
        .map(|p| {
            if p == 1 {
                *next_id += 1;
                let class = CLASSES[r.random_range(0..CLASSES.len())];
                return Block::Activity((format!("t{next_id}"), class.to_string()));
            }
            let branches = r.random_range(2..=p.min(3));
            let mut sizes = vec![1; branches];
            for _ in 0..p - branches {
                sizes[r.random_range(0..branches)] += 1;
            }
            let bs = sizes.into_iter().map(|s| Block::Seq(gen_items(r, s, next_id))).collect();
            if r.random_bool(0.7) {
                Block::Parallel(bs)
            } else {
                Block::Exclusive(bs)
            }
        })
        .collect()
}

/// Random block-structured process with `1..=max_acts` activities.
pub fn random_block(r: &mut ChaCha8Rng, max_acts: usize) -> Block<(String, String)> {
    let n = r.random_range(1..=max_acts);
    let mut next = 0;
    let items = gen_items(r, n, &mut next);
    if items.len() == 1 {
        items.into_iter().next().unwrap()
    } else {
        Block::Seq(items)
    }
}

/// Log of `1..=max_iss` solutions over the oracle groups, with the block
/// each process was generated from.
pub fn random_log(r: &mut ChaCha8Rng, max_iss: usize, max_acts: usize) -> Vec<(HistoricalIss, Block<(String, String)>)> {
    let n = r.random_range(1..=max_iss);
    (0..n)
        .map(|i| {
            let block = random_block(r, max_acts);
            let binding = block
                .leaves()
                .into_iter()
                .map(|(a, c)| (a.clone(), format!("{c}{}", r.random_range(1..=2))))
                .collect();
            let iss = HistoricalIss {
                id: format!("iss-{i}"),
                process: ProcessGraph::from_block(&block),
                binding,
                context: Context::new("u", "e", Metric::Cost),
                outcome_qos: QosVector::new(1.0, 1.0, 1.0, 4.0),
                rp_ids: vec![],
            };
            (iss, block)
        })
        .collect()
}

fn item_code<T>(b: &Block<T>, label: &dyn Fn(&T) -> String) -> String {
    match b {
        Block::Activity(t) => label(t),
        Block::Seq(v) => run_code(v, label),
        Block::Parallel(v) | Block::Exclusive(v) => {
            let mut codes: Vec<String> = v.iter().map(|x| item_code(x, label)).collect();
            codes.sort();
            let tag = if matches!(b, Block::Parallel(_)) { "AND" } else { "XOR" };
            format!("{tag}<{}>", codes.join("/"))
        }
    }
}

fn run_code<T>(v: &[Block<T>], label: &dyn Fn(&T) -> String) -> String {
    if v.len() == 1 {
        item_code(&v[0], label)
    } else {
        format!("SEQ<{}>", v.iter().map(|x| item_code(x, label)).collect::<Vec<_>>().join(","))
    }
}

/// Unordered-gateway code of a class-labelled block.
pub fn segment_code(b: &Block<String>) -> String {
    item_code(b, &|s: &String| s.clone())
}

/// Code to support over every contiguous run of every sequence list of the
/// generating blocks, classes taken from the bound services.
pub fn oracle_segments(log: &[HistoricalIss], blocks: &[Block<(String, String)>], min_support: usize) -> BTreeMap<String, usize> {
    fn lists<'a>(b: &'a Block<(String, String)>, out: &mut Vec<&'a [Block<(String, String)>]>) {
        match b {
            Block::Activity(_) => {}
            Block::Seq(v) => {
                out.push(v);
                v.iter().for_each(|x| lists(x, out));
            }
            Block::Parallel(v) | Block::Exclusive(v) => v.iter().for_each(|x| lists(x, out)),
        }
    }
    let mut trees_of: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, (iss, b)) in log.iter().zip(blocks).enumerate() {
        let top = match b {
            Block::Seq(_) => b.clone(),
            other => Block::Seq(vec![other.clone()]),
        };
        let mut ls = Vec::new();
        lists(&top, &mut ls);
        let class = |(a, _): &(String, String)| iss.binding[a][..1].to_string();
        for l in ls {
            for s in 0..l.len() {
                for e in s + 1..=l.len() {
                    trees_of.entry(run_code(&l[s..e], &class)).or_default().insert(i);
                }
            }
        }
    }
    trees_of.into_iter().map(|(k, v)| (k, v.len())).filter(|(_, s)| *s >= min_support).collect()
}

// ---------------------------------------------------------------------------
// Hand-computed QoS cases
// ---------------------------------------------------------------------------

pub struct QosCase {
    pub name: &'static str,
    pub process: ProcessGraph,
    pub binding: BTreeMap<String, String>,
    pub expected: QosVector,
}

fn act(id: &str) -> Block<(String, String)> {
    Block::Activity((id.to_string(), "f".to_string()))
}

fn branch(ids: &[&str]) -> Block<(String, String)> {
    Block::Seq(ids.iter().map(|i| act(i)).collect())
}

/// Services `s_a .. s_e`, all on demand so no supply-mode adjustment applies.
pub fn qos_services() -> BTreeMap<String, bilateral_core::model::ServiceSpec> {
    use bilateral_core::fixtures::service;
    use bilateral_core::model::SupplyMode;
    [
        ("a", 1.0, 2.0, 0.9, 4.0),
        ("b", 2.0, 3.0, 0.9, 2.0),
        ("c", 5.0, 1.0, 0.5, 5.0),
        ("d", 0.5, 7.0, 1.0, 3.0),
        ("e", 3.0, 4.0, 0.8, 1.0),
    ]
    .iter()
    .map(|(id, c, t, a, r)| {
        let sid = format!("s_{id}");
        (sid.clone(), service(&sid, "f", "p", QosVector::new(*c, *t, *a, *r), SupplyMode::OnDemand))
    })
    .collect()
}

/// Sequence adds cost and time and multiplies availability; parallel takes
/// the longest branch; exclusive takes the worst branch on every metric.
pub fn qos_cases() -> Vec<QosCase> {
    let bind = |ids: &[&str]| ids.iter().map(|i| (i.to_string(), format!("s_{i}"))).collect();
    vec![
        QosCase {
            name: "sequence 2+3 minutes",
            process: ProcessGraph::from_block(&branch(&["a", "b"])),
            binding: bind(&["a", "b"]),
            expected: QosVector::new(3.0, 5.0, 0.81, 3.0),
        },
        QosCase {
            name: "parallel",
            process: ProcessGraph::from_block(&Block::Parallel(vec![branch(&["a"]), branch(&["b"]), branch(&["c"])])),
            binding: bind(&["a", "b", "c"]),
            // cost 1+2+5, time max(2,3,1), availability 0.9*0.9*0.5, rating 11/3
            expected: QosVector::new(8.0, 3.0, 0.405, 11.0 / 3.0),
        },
        QosCase {
            name: "exclusive",
            process: ProcessGraph::from_block(&Block::Exclusive(vec![branch(&["c"]), branch(&["d"])])),
            binding: bind(&["c", "d"]),
            expected: QosVector::new(5.0, 7.0, 0.5, 3.0),
        },
        QosCase {
            name: "nested",
            process: ProcessGraph::from_block(&Block::Seq(vec![
                act("a"),
                Block::Parallel(vec![branch(&["b", "e"]), branch(&["d"])]),
                Block::Exclusive(vec![branch(&["c"]), branch(&["e2"])]),
            ])),
            binding: {
                let mut b: BTreeMap<String, String> = bind(&["a", "b", "c", "d", "e"]);
                b.insert("e2".into(), "s_e".into());
                b
            },
            // cost 1 + (2+3+0.5) + max(5,3); time 2 + max(7,7) + max(1,4)
            // availability 0.9 * (0.9*0.8*1.0) * min(0.5,0.8)
            // rating (4 + 2 + 1 + 3 + 1) / 5, worst exclusive branch is e2
            expected: QosVector::new(11.5, 13.0, 0.9 * 0.9 * 0.8 * 0.5, 11.0 / 5.0),
        },
    ]
}

// ---------------------------------------------------------------------------
// Entities for round-trip checks
// ---------------------------------------------------------------------------

/// Labels exercising escaping in JSON and XML.
pub const ODD_LABELS: [&str; 8] = ["plain", "a&b", "<tag>", "say \"hi\"", "it's", "naïve café", "tab\there", "semi;colon|(x)"];

pub struct Entities {
    pub tree: ITree,
    pub rps: Vec<RequirementPattern>,
    pub services: Vec<bilateral_core::model::ServiceSpec>,
    pub sps: Vec<bilateral_core::model::ServicePattern>,
    pub log: Vec<HistoricalIss>,
    pub matrix: bilateral_core::pmm::MatchingMatrix,
    pub solution: bilateral_core::construction::Solution,
    pub model: bilateral_core::construction::OptimizationModel,
    pub processes: Vec<ProcessGraph>,
}

fn odd_float(r: &mut ChaCha8Rng, hi: f64) -> f64 {
    // Full-precision values catch lossy float formatting.
    r.random::<f64>() * hi
}

pub fn random_entities(seed: u64) -> Entities {
    use bilateral_core::construction::{construct_metaheuristic, GaConfig, Problem, SearchOptions};
    use bilateral_core::fixtures::{random_instance, service};
    use bilateral_core::model::{Layer, SupplyMode};
    use bilateral_core::pmm::{MatchOutcome, MatchingMatrix};

    let mut r = rng(seed);
    let mut tree = random_tree(&mut r, 8, &ODD_LABELS);
    let ids: Vec<String> = tree.nodes.keys().cloned().collect();
    for id in &ids {
        let extra = random_intention(&mut r, id);
        let n = tree.nodes.get_mut(id).unwrap();
        n.constraints = extra.constraints;
        if r.random_bool(0.3) {
            n.opt_objective = Some(OptObjective::natural(Metric::Satisfaction));
        }
    }
    if ids.len() > 1 {
        tree.add_dependency(&ids[0], &ids[1]);
    }
    tree.owner = "user \"1\"".into();
    tree.roles.insert("planner".into());

    let corpus = bilateral_core::fixtures::random_corpus(seed, 6, 6, &["a", "b", "c"]);
    let rps = bilateral_core::requirement_mining::derive_rps(&corpus, &Default::default()).unwrap();

    let modes = [SupplyMode::Reserved, SupplyMode::OnDemand, SupplyMode::Spot];
    let services: Vec<_> = (0..4)
        .map(|i| {
            let q = QosVector::new(odd_float(&mut r, 100.0), odd_float(&mut r, 10.0), r.random(), odd_float(&mut r, 5.0));
            let mut s = service(&format!("svc-{i}"), ODD_LABELS[i], "prov & co", q, modes[i % 3]);
            s.layer = [Layer::Organization, Layer::InnerDomain, Layer::CrossDomain][i % 3];
            s
        })
        .collect();

    let processes: Vec<ProcessGraph> = (0..3)
        .map(|_| {
            let b = random_block(&mut r, 6);
            let mut k = 0;
            let b = b.map(&mut |(id, _): &(String, String)| {
                k += 1;
                (id.clone(), ODD_LABELS[k % ODD_LABELS.len()].to_string())
            });
            ProcessGraph::from_block(&b)
        })
        .collect();

    let log: Vec<HistoricalIss> = random_log(&mut r, 4, 5)
        .into_iter()
        .map(|(mut iss, _)| {
            iss.outcome_qos = QosVector::new(odd_float(&mut r, 50.0), odd_float(&mut r, 9.0), r.random(), 4.5);
            iss.rp_ids = vec!["rp-x".into()];
            iss
        })
        .collect();

    let inst = random_instance(seed, 3, 2, 2, Some(0.5)).unwrap();
    let problem = Problem::new(&inst.model, &inst.pmm, &inst.sps, &inst.services).unwrap();
    let ga = GaConfig { seed, generations: 10, population_size: 10, ..GaConfig::default() };
    let solution = construct_metaheuristic(&problem, &ga, &SearchOptions::default()).unwrap().solution;

    let ctx = [Context::new("family", "urban", Metric::Cost), Context::new("a&b", "<x>", Metric::Quality)];
    let outcomes: Vec<MatchOutcome> = (0..10)
        .map(|i| MatchOutcome {
            rp_id: format!("rp{}", r.random_range(0..2)),
            sp_id: format!("sp{}", r.random_range(0..3)),
            context: ctx[r.random_range(0..2)].clone(),
            success: r.random_bool(0.7),
            quality_score: r.random(),
            difficulty: r.random(),
            timestamp: i,
        })
        .collect();
    let matrix = MatchingMatrix::from_outcomes(&[], &outcomes, 0.1 + odd_float(&mut r, 1.0)).unwrap();

    Entities { tree, rps, services, sps: inst.sps, log, matrix, solution, model: inst.model, processes }
}

// ---------------------------------------------------------------------------
// Matching outcomes
// ---------------------------------------------------------------------------

pub fn contexts() -> [Context; 2] {
    [Context::new("family", "urban", Metric::Cost), Context::new("solo", "rural", Metric::Time)]
}

pub fn random_outcomes(seed: u64, n: usize) -> Vec<MatchOutcome> {
    let mut r = rng(seed);
    let ctx = contexts();
    (0..n)
        .map(|i| MatchOutcome {
            rp_id: format!("rp{}", r.random_range(0..3)),
            sp_id: format!("sp{}", r.random_range(0..4)),
            context: ctx[r.random_range(0..2)].clone(),
            success: r.random_bool(0.8),
            quality_score: r.random_range(0..=10) as f64 / 10.0,
            difficulty: r.random_range(0..=10) as f64 / 10.0,
            timestamp: i as u64,
        })
        .collect()
}

pub fn slice_sums(m: &MatchingMatrix) -> BTreeMap<(String, String), f64> {
    let mut s = BTreeMap::new();
    for c in &m.cells {
        *s.entry((c.rp_id.clone(), c.context_key.clone())).or_insert(0.0) += c.prob;
    }
    s
}

pub fn rank(m: &MatchingMatrix, rp: &str, sp: &str, ctx: &Context) -> usize {
    m.lookup(rp, ctx, usize::MAX).entries.iter().position(|e| e.sp_id == sp).unwrap()
}

/// Incremental feeding (with periodic recomputes, shuffled order) against
/// one batch build.
pub fn batch_matches_incremental(seed: u64) -> f64 {
    let outcomes = random_outcomes(seed, 80);
    let batch = MatchingMatrix::from_outcomes(&[], &outcomes, DEFAULT_SMOOTHING).unwrap();
    let mut shuffled = outcomes.clone();
    let mut r = rng(seed);
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, r.random_range(0..=i));
    }
    let mut inc = MatchingMatrix::new();
    for (i, o) in shuffled.iter().enumerate() {
        inc.record_outcome(o).unwrap();
        if i % 7 == 0 {
            inc.recompute(DEFAULT_SMOOTHING, o.timestamp).unwrap();
        }
    }
    let latest = shuffled.iter().map(|o| o.timestamp).max().unwrap();
    inc.recompute(DEFAULT_SMOOTHING, latest).unwrap();
    assert_eq!(batch.cells.len(), inc.cells.len());
    assert_eq!(batch.last_recompute, inc.last_recompute);
    batch
        .cells
        .iter()
        .zip(&inc.cells)
        .map(|(a, b)| {
            assert_eq!((&a.rp_id, &a.sp_id, &a.context_key, a.uses), (&b.rp_id, &b.sp_id, &b.context_key, b.uses));
            (a.prob - b.prob).abs()
        })
        .fold(0.0, f64::max)
}

