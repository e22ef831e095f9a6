//! Requirement pattern derivation from a corpus of historical intention
//! trees: frequent subtree mining, functional grouping, constraint
//! clustering and abstraction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    constraint_signature, constraint_similarity, encode_node, normalize_label, Constraint, ConstraintKind,
    ConstraintValue, DecompositionKind, ITree, Intention, Interval, RequirementPattern, RpInfo,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MiningConfig {
    pub min_support: usize,
    pub max_pattern_nodes: usize,
    pub constraint_similarity_threshold: f64,
    pub common_constraint_quorum: f64,
    /// Keep only patterns no one-node extension matches with equal support.
    #[serde(default = "yes")]
    pub closed_only: bool,
}

fn yes() -> bool {
    true
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 2,
            max_pattern_nodes: 8,
            constraint_similarity_threshold: 0.7,
            common_constraint_quorum: 0.5,
            closed_only: true,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.min_support < 1 {
            return bad("minSupport must be >= 1");
        }
        if self.max_pattern_nodes < 1 {
            return bad("maxPatternNodes must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.constraint_similarity_threshold) {
            return bad("constraintSimilarityThreshold must lie in [0,1]");
        }
        if !(self.common_constraint_quorum > 0.0 && self.common_constraint_quorum <= 1.0) {
            return bad("commonConstraintQuorum must lie in (0,1]");
        }
        Ok(())
    }
}

/// One embedding of a pattern in a corpus tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Occurrence {
    /// Position of the tree in the mined corpus.
    pub tree: usize,
    /// Pattern node id to corpus node id.
    pub mapping: BTreeMap<String, String>,
    /// Corpus constraints of each mapped pattern node.
    pub constraints: BTreeMap<String, Vec<Constraint>>,
    /// The pattern root sits on the corpus tree root.
    pub at_root: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentSubtree {
    pub shape: ITree,
    pub support: usize,
    pub occurrences: Vec<Occurrence>,
    /// Canonical code over normalized labels and decomposition kinds.
    pub key: String,
}

/// Canonical code of a tree over normalized labels, with the decomposition
/// kind attached to every internal node.
pub fn pattern_key(tree: &ITree) -> String {
    encode_node(tree, &tree.root, &|t: &ITree, id: &str| {
        let label = t.nodes[id].normalized_label();
        match t.kind(id) {
            Some(DecompositionKind::And) => format!("{label}#and"),
            Some(DecompositionKind::Or) => format!("{label}#or"),
            None => label,
        }
    })
}

// ---------------------------------------------------------------------------
// Frequent subtree mining
// ---------------------------------------------------------------------------

struct IndexedTree<'a> {
    tree: &'a ITree,
    ids: Vec<&'a str>,
    labels: Vec<u32>,
    kinds: Vec<Option<DecompositionKind>>,
    children: Vec<Vec<usize>>,
}

impl<'a> IndexedTree<'a> {
    fn new(tree: &'a ITree, interner: &BTreeMap<String, u32>) -> Self {
        let ids = tree.preorder();
        let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let labels = ids.iter().map(|id| interner[&tree.nodes[*id].normalized_label()]).collect();
        let kinds = ids.iter().map(|id| tree.kind(id)).collect();
        let children = ids
            .iter()
            .map(|id| tree.children(id).iter().map(|c| pos[c.as_str()]).collect())
            .collect();
        IndexedTree { tree, ids, labels, kinds, children }
    }
}

/// Token of a pattern node: the decomposition kind of the edge from its
/// parent (none at the root) and its label.
type Token = (Option<DecompositionKind>, u32);

#[derive(Clone)]
struct PatternNode {
    depth: usize,
    parent: Option<usize>,
    token: Token,
}

#[derive(Clone)]
struct Embedding {
    tree: usize,
    nodes: Vec<usize>,
}

struct Miner<'a> {
    trees: Vec<IndexedTree<'a>>,
    labels: Vec<String>,
    cfg: &'a MiningConfig,
    out: Vec<FrequentSubtree>,
}

fn support_of(embs: &[Embedding]) -> usize {
    embs.iter().map(|e| e.tree).collect::<BTreeSet<_>>().len()
}

/// Left-heavy canonicality after appending the last node: along the
/// rightmost path every subtree must not exceed its left sibling.
fn is_canonical(p: &[PatternNode]) -> bool {
    let seq = |r: std::ops::Range<usize>| p[r].iter().map(|n| (n.depth, n.token)).collect::<Vec<_>>();
    let mut u = p.len() - 1;
    while let Some(parent) = p[u].parent {
        // Left sibling of u: last earlier node with the same parent.
        if let Some(s) = (parent + 1..u).rev().find(|&i| p[i].parent == Some(parent)) {
            if seq(s..u) < seq(u..p.len()) {
                return false;
            }
        }
        u = parent;
    }
    true
}

impl<'a> Miner<'a> {
    fn emit(&mut self, pattern: &[PatternNode], embs: &[Embedding]) {
        let ids: Vec<String> = (0..pattern.len()).map(|i| format!("p{i}")).collect();
        let label_of = |i: usize| -> String {
            embs.iter()
                .map(|e| {
                    let t = &self.trees[e.tree];
                    t.tree.nodes[t.ids[e.nodes[i]]].label.as_str()
                })
                .min()
                .unwrap_or(&self.labels[pattern[i].token.1 as usize])
                .to_string()
        };
        let mut shape = ITree::new(Intention::new(ids[0].clone(), label_of(0)));
        for i in 1..pattern.len() {
            let parent = pattern[i].parent.expect("non-root has a parent");
            let kind = pattern[i].token.0.expect("non-root carries an edge kind");
            shape.add_child(&ids[parent], kind, Intention::new(ids[i].clone(), label_of(i)));
        }

        let mut occurrences = Vec::new();
        let mut seen = BTreeSet::new();
        for e in embs {
            let mut set = e.nodes.clone();
            set.sort_unstable();
            if !seen.insert((e.tree, set)) {
                continue;
            }
            let t = &self.trees[e.tree];
            let mapping = ids.iter().zip(&e.nodes).map(|(pid, &n)| (pid.clone(), t.ids[n].to_string())).collect();
            let constraints = ids
                .iter()
                .zip(&e.nodes)
                .map(|(pid, &n)| (pid.clone(), t.tree.nodes[t.ids[n]].constraints.clone()))
                .collect();
            occurrences.push(Occurrence { tree: e.tree, mapping, constraints, at_root: e.nodes[0] == 0 });
        }
        let key = pattern_key(&shape);
        self.out.push(FrequentSubtree { shape, support: support_of(embs), occurrences, key });
    }

    fn grow(&mut self, pattern: Vec<PatternNode>, embs: Vec<Embedding>) {
        self.emit(&pattern, &embs);
        if pattern.len() >= self.cfg.max_pattern_nodes {
            return;
        }
        let mut path = vec![pattern.len() - 1];
        while let Some(p) = pattern[*path.last().unwrap()].parent {
            path.push(p);
        }

        let mut candidates: BTreeMap<(usize, Token), Vec<Embedding>> = BTreeMap::new();
        for e in &embs {
            let t = &self.trees[e.tree];
            for &v in &path {
                let cv = e.nodes[v];
                for &c in &t.children[cv] {
                    if e.nodes.contains(&c) {
                        continue;
                    }
                    let token = (t.kinds[cv], t.labels[c]);
                    let mut nodes = e.nodes.clone();
                    nodes.push(c);
                    candidates.entry((v, token)).or_default().push(Embedding { tree: e.tree, nodes });
                }
            }
        }
        for ((v, token), next) in candidates {
            if support_of(&next) < self.cfg.min_support {
                continue;
            }
            let mut grown = pattern.clone();
            grown.push(PatternNode { depth: pattern[v].depth + 1, parent: Some(v), token });
            if is_canonical(&grown) {
                self.grow(grown, next);
            }
        }
    }
}

/// Enumerates every rooted connected subtree with transaction support at
/// least `minSupport` and at most `maxPatternNodes` nodes. Patterns are grown
/// by rightmost-path extension of left-heavy canonical forms, so each is
/// produced once; infrequent patterns are never extended.
pub fn mine_frequent_subtrees(corpus: &[ITree], cfg: &MiningConfig) -> Result<Vec<FrequentSubtree>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for t in corpus {
        t.validate()?;
    }
    let labels: Vec<String> = corpus
        .iter()
        .flat_map(|t| t.nodes.values().map(Intention::normalized_label))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let interner: BTreeMap<String, u32> = labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
    let trees: Vec<IndexedTree> = corpus.iter().map(|t| IndexedTree::new(t, &interner)).collect();

    let mut seeds: BTreeMap<u32, Vec<Embedding>> = BTreeMap::new();
    for (ti, t) in trees.iter().enumerate() {
        for (n, &l) in t.labels.iter().enumerate() {
            seeds.entry(l).or_default().push(Embedding { tree: ti, nodes: vec![n] });
        }
    }
    let mut miner = Miner { trees, labels, cfg, out: Vec::new() };
    for (label, embs) in seeds {
        if support_of(&embs) >= cfg.min_support {
            miner.grow(vec![PatternNode { depth: 0, parent: None, token: (None, label) }], embs);
        }
    }
    let mut out = miner.out;
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// Keys of the patterns obtained by deleting one leaf (or a root with a
/// single child).
fn one_node_reductions(shape: &ITree) -> Vec<String> {
    let mut out = Vec::new();
    if shape.len() <= 1 {
        return out;
    }
    for id in shape.nodes.keys() {
        let is_leaf = shape.children(id).is_empty();
        let is_root = id == &shape.root;
        if !(is_leaf || (is_root && shape.children(id).len() == 1)) {
            continue;
        }
        let mut t = shape.clone();
        t.nodes.remove(id);
        if is_root {
            t.root = shape.children(id)[0].clone();
            t.decomposition.remove(id);
        } else {
            for d in t.decomposition.values_mut() {
                d.children.retain(|c| c != id);
            }
            t.decomposition.retain(|_, d| !d.children.is_empty());
        }
        out.push(pattern_key(&t));
    }
    out
}

/// Drops patterns that some one-node extension matches with equal support.
pub fn closed_patterns(patterns: &[FrequentSubtree]) -> Vec<FrequentSubtree> {
    let mut not_closed: BTreeSet<(String, usize)> = BTreeSet::new();
    for q in patterns {
        for k in one_node_reductions(&q.shape) {
            not_closed.insert((k, q.support));
        }
    }
    patterns.iter().filter(|p| !not_closed.contains(&(p.key.clone(), p.support))).cloned().collect()
}

// ---------------------------------------------------------------------------
// Grouping, clustering, abstraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionGroup {
    /// Sorted multiset of normalized labels shared by the members.
    pub labels: Vec<String>,
    pub members: Vec<FrequentSubtree>,
}

pub fn group_by_function(patterns: &[FrequentSubtree]) -> Vec<FunctionGroup> {
    let mut groups: BTreeMap<Vec<String>, Vec<FrequentSubtree>> = BTreeMap::new();
    for p in patterns {
        let mut labels: Vec<String> = p.shape.nodes.values().map(Intention::normalized_label).collect();
        labels.sort();
        groups.entry(labels).or_default().push(p.clone());
    }
    groups.into_iter().map(|(labels, members)| FunctionGroup { labels, members }).collect()
}

/// Occurrences of one shape whose constraints are mutually similar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub shape: ITree,
    pub key: String,
    pub occurrences: Vec<Occurrence>,
}

impl Cluster {
    /// Distinct corpus trees among the occurrences.
    pub fn support(&self) -> usize {
        self.occurrences.iter().map(|o| o.tree).collect::<BTreeSet<_>>().len()
    }
}

/// Mean similarity of same-named constraints over all pattern nodes. A
/// constraint present on only one side, or with differing kinds, scores 0.
pub fn occurrence_similarity(a: &Occurrence, b: &Occurrence) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    let empty = Vec::new();
    let nodes: BTreeSet<&String> = a.constraints.keys().chain(b.constraints.keys()).collect();
    for node in nodes {
        let ca = a.constraints.get(node).unwrap_or(&empty);
        let cb = b.constraints.get(node).unwrap_or(&empty);
        let names: BTreeSet<&str> = ca.iter().chain(cb).map(|c| c.name.as_str()).collect();
        for name in names {
            count += 1;
            let x = ca.iter().find(|c| c.name == name);
            let y = cb.iter().find(|c| c.name == name);
            if let (Some(x), Some(y)) = (x, y) {
                total += constraint_similarity(x, y).unwrap_or(0.0);
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        total / count as f64
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

/// Single-linkage clustering of all occurrences in a functional group.
/// Occurrences of different shapes never share a cluster.
pub fn cluster_by_constraints(group: &[FrequentSubtree], cfg: &MiningConfig) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    for pattern in group {
        let occ = &pattern.occurrences;
        let mut parent: Vec<usize> = (0..occ.len()).collect();
        for i in 0..occ.len() {
            for j in i + 1..occ.len() {
                if occurrence_similarity(&occ[i], &occ[j]) >= cfg.constraint_similarity_threshold {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut members: BTreeMap<usize, Vec<Occurrence>> = BTreeMap::new();
        for (i, o) in occ.iter().enumerate() {
            let r = find(&mut parent, i);
            members.entry(r).or_default().push(o.clone());
        }
        for (_, occurrences) in members {
            clusters.push(Cluster { shape: pattern.shape.clone(), key: pattern.key.clone(), occurrences });
        }
    }
    clusters
}

/// Merges the constraints a node carries across occurrences: kept when
/// present in at least `quorum` of them, widened to cover every value seen.
fn common_constraints(values: &[&[Constraint]], quorum: f64) -> Vec<Constraint> {
    let total = values.len() as f64;
    let mut by_name: BTreeMap<&str, BTreeMap<ConstraintKind, Vec<&Constraint>>> = BTreeMap::new();
    for cs in values {
        for c in cs.iter() {
            by_name.entry(&c.name).or_default().entry(c.kind()).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    for (name, kinds) in by_name {
        let Some((_, seen)) = kinds
            .into_iter()
            .filter(|(_, v)| v.len() as f64 / total >= quorum)
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        else {
            continue;
        };
        let merged = match &seen[0].value {
            ConstraintValue::Interval(_) => {
                let ivs: Vec<&Interval> = seen
                    .iter()
                    .filter_map(|c| match &c.value {
                        ConstraintValue::Interval(i) => Some(i),
                        _ => None,
                    })
                    .collect();
                ConstraintValue::Interval(Interval {
                    lo: ivs.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min),
                    hi: ivs.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max),
                    unit: ivs.iter().filter_map(|i| i.unit.clone()).min(),
                })
            }
            ConstraintValue::Enumeration(_) => {
                let all: BTreeSet<String> = seen
                    .iter()
                    .flat_map(|c| match &c.value {
                        ConstraintValue::Enumeration(v) => v.clone(),
                        _ => Vec::new(),
                    })
                    .collect();
                ConstraintValue::Enumeration(all.into_iter().collect())
            }
            ConstraintValue::Boolean(b) => {
                let unanimous = seen.iter().all(|c| c.value == ConstraintValue::Boolean(*b));
                if !unanimous {
                    continue;
                }
                ConstraintValue::Boolean(*b)
            }
        };
        out.push(Constraint { name: name.to_string(), value: merged });
    }
    out
}

fn is_anchored(cluster: &Cluster) -> bool {
    cluster.occurrences.iter().all(|o| o.at_root)
}

/// Builds the requirement pattern of a cluster. A shape whose root always
/// sits on the corpus tree root stands for the whole requirement; its child
/// subtrees form the forest.
pub fn abstract_rp(cluster: &Cluster, cfg: &MiningConfig) -> Result<RequirementPattern> {
    if cluster.occurrences.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut shape = cluster.shape.clone();
    let ids: Vec<String> = shape.nodes.keys().cloned().collect();
    for id in &ids {
        let per_occ: Vec<&[Constraint]> = cluster
            .occurrences
            .iter()
            .map(|o| o.constraints.get(id).map(Vec::as_slice).unwrap_or(&[]))
            .collect();
        shape.nodes.get_mut(id).expect("id from shape").constraints =
            common_constraints(&per_occ, cfg.common_constraint_quorum);
    }

    let root_label = shape.nodes[&shape.root].label.clone();
    let anchored = is_anchored(cluster) && !shape.children(&shape.root).is_empty();
    let forest: Vec<ITree> = if anchored {
        shape.children(&shape.root).iter().map(|c| subtree(&shape, c)).collect()
    } else {
        vec![shape]
    };
    let description = forest
        .iter()
        .map(|t| {
            t.preorder().iter().map(|id| t.nodes[*id].label.as_str()).collect::<Vec<_>>().join(", ")
        })
        .collect::<Vec<_>>()
        .join(" + ");
    let mut rp = RequirementPattern {
        id: String::new(),
        info: RpInfo { use_frequency: cluster.support() as u64, domain: root_label, description },
        forest,
    };
    rp.id = rp_id(&rp);
    Ok(rp)
}

fn subtree(tree: &ITree, root: &str) -> ITree {
    let mut t = ITree::new(tree.nodes[root].clone());
    for id in tree.subtree_ids(root) {
        if let Some(d) = tree.decomposition.get(id) {
            for c in &d.children {
                t.add_child(id, d.kind, tree.nodes[c].clone());
            }
        }
    }
    t
}

/// Shape and constraint identity of an RP, independent of its id.
pub fn rp_signature(rp: &RequirementPattern) -> String {
    let mut parts: Vec<String> = rp
        .forest
        .iter()
        .map(|t| {
            encode_node(t, &t.root, &|t: &ITree, id: &str| {
                let n = &t.nodes[id];
                let kind = t.kind(id).map(|k| format!("#{k:?}")).unwrap_or_default();
                format!("{}{}[{}]", n.normalized_label(), kind, constraint_signature(&n.constraints))
            })
        })
        .collect();
    parts.sort();
    parts.join(" | ")
}

fn rp_id(rp: &RequirementPattern) -> String {
    let digest = Sha256::digest(rp_signature(rp).as_bytes());
    format!("rp-{}", &hex::encode(digest)[..12])
}

/// Full pipeline: mine, keep closed patterns, group, cluster, abstract.
/// Clusters seen in fewer than `minSupport` trees are dropped, as are
/// patterns made of a corpus root alone.
pub fn derive_rps(corpus: &[ITree], cfg: &MiningConfig) -> Result<Vec<RequirementPattern>> {
    let mined = mine_frequent_subtrees(corpus, cfg)?;
    let patterns = if cfg.closed_only { closed_patterns(&mined) } else { mined };
    let mut out: BTreeMap<String, RequirementPattern> = BTreeMap::new();
    for group in group_by_function(&patterns) {
        for cluster in cluster_by_constraints(&group.members, cfg) {
            if cluster.support() < cfg.min_support {
                continue;
            }
            if cluster.shape.len() == 1 && is_anchored(&cluster) {
                continue;
            }
            let rp = abstract_rp(&cluster, cfg)?;
            let sig = rp_signature(&rp);
            match out.get(&sig) {
                Some(prev) if prev.info.use_frequency >= rp.info.use_frequency => {}
                _ => {
                    out.insert(sig, rp);
                }
            }
        }
    }
    let mut rps: Vec<RequirementPattern> = out.into_values().collect();
    rps.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(rps)
}

/// Lower-case label helper exposed for callers building corpora by hand.
pub fn same_function(a: &str, b: &str) -> bool {
    normalize_label(a) == normalize_label(b)
}
