//! Knowledge graph of requirements: label co-occurrence counts used for
//! intention recommendation, plus RP-driven revision proposals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    covers, intention_covers, normalize_label, Constraint, ConstraintValue, DecompositionKind, ITree, Intention,
    Interval, RequirementPattern,
};
use crate::selection::{first_embedding, for_each_embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgrNode {
    /// Display form of the label (smallest original spelling seen).
    pub label: String,
    pub frequency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    ParentChild,
    Sibling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgrEdge {
    pub a: String,
    pub b: String,
    pub kind: EdgeKind,
    pub count: u64,
}

/// Nodes keyed by normalized label. `ParentChild` edges are directed
/// (`a` is the parent); `Sibling` edges are stored once with `a < b`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgrGraph {
    pub nodes: BTreeMap<String, KgrNode>,
    pub edges: Vec<KgrEdge>,
}

impl KgrGraph {
    pub fn edge_count(&self, a: &str, b: &str, kind: EdgeKind) -> u64 {
        let (a, b) = match kind {
            EdgeKind::Sibling if a > b => (b, a),
            _ => (a, b),
        };
        self.edges
            .binary_search_by(|e| (e.a.as_str(), e.b.as_str(), e.kind).cmp(&(a, b, kind)))
            .map(|i| self.edges[i].count)
            .unwrap_or(0)
    }
}

pub fn build_kgr(corpus: &[ITree]) -> Result<KgrGraph> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    let mut display: BTreeMap<String, String> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String, EdgeKind), u64> = BTreeMap::new();
    for t in corpus {
        t.validate()?;
        let mut labels = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for n in t.nodes.values() {
            let key = n.normalized_label();
            let d = display.entry(key.clone()).or_insert_with(|| n.label.clone());
            if n.label < *d {
                *d = n.label.clone();
            }
            labels.insert(key);
        }
        for (parent, d) in &t.decomposition {
            let pl = t.nodes[parent].normalized_label();
            let kids: Vec<String> = d.children.iter().map(|c| t.nodes[c].normalized_label()).collect();
            for (i, a) in kids.iter().enumerate() {
                pairs.insert((pl.clone(), a.clone(), EdgeKind::ParentChild));
                for b in &kids[i + 1..] {
                    if a != b {
                        let (x, y) = if a < b { (a, b) } else { (b, a) };
                        pairs.insert((x.clone(), y.clone(), EdgeKind::Sibling));
                    }
                }
            }
        }
        for l in labels {
            *freq.entry(l).or_default() += 1;
        }
        for p in pairs {
            *edges.entry(p).or_default() += 1;
        }
    }
    Ok(KgrGraph {
        nodes: freq
            .into_iter()
            .map(|(k, frequency)| {
                let label = display[&k].clone();
                (k, KgrNode { label, frequency })
            })
            .collect(),
        edges: edges.into_iter().map(|((a, b, kind), count)| KgrEdge { a, b, kind, count }).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    PrefixMatch,
    ContextEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub label: String,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecommendWeights {
    pub frequency: f64,
    pub edge: f64,
    pub prefix: f64,
}

impl Default for RecommendWeights {
    fn default() -> Self {
        RecommendWeights { frequency: 0.3, edge: 0.5, prefix: 0.2 }
    }
}

pub fn recommend(
    graph: &KgrGraph,
    partial: &ITree,
    focus: &str,
    prefix: &str,
    limit: usize,
) -> Result<Vec<Recommendation>> {
    recommend_weighted(graph, partial, focus, prefix, limit, RecommendWeights::default())
}

/// With a non-empty prefix only labels starting with it are candidates;
/// with an empty prefix the candidates are the context-edge neighbours of
/// the focus node. Each signal is divided by its maximum over the candidate
/// set, so every candidate keeps a positive frequency term.
pub fn recommend_weighted(
    graph: &KgrGraph,
    partial: &ITree,
    focus: &str,
    prefix: &str,
    limit: usize,
    w: RecommendWeights,
) -> Result<Vec<Recommendation>> {
    let focus_node = partial.node(focus).ok_or_else(|| Error::UnknownFocusNode(focus.to_string()))?;
    let present: BTreeSet<String> = partial.nodes.values().map(Intention::normalized_label).collect();
    let prefix = normalize_label(prefix);
    let focus_label = focus_node.normalized_label();
    let kids: Vec<String> = partial.children(focus).iter().map(|c| partial.nodes[c].normalized_label()).collect();

    struct Cand {
        key: String,
        freq: f64,
        edge: f64,
        ratio: f64,
        provenance: Provenance,
    }
    let mut cands: Vec<Cand> = Vec::new();
    for (key, node) in &graph.nodes {
        if present.contains(key) {
            continue;
        }
        let prefix_hit = !prefix.is_empty() && key.starts_with(&prefix);
        let edge = graph.edge_count(&focus_label, key, EdgeKind::ParentChild)
            + kids.iter().map(|k| graph.edge_count(k, key, EdgeKind::Sibling)).sum::<u64>();
        // A typed prefix filters; context edges only rank.
        if (!prefix.is_empty() && !prefix_hit) || (prefix.is_empty() && edge == 0) {
            continue;
        }
        cands.push(Cand {
            key: key.clone(),
            freq: node.frequency as f64,
            edge: edge as f64,
            ratio: if prefix_hit { prefix.chars().count() as f64 / key.chars().count() as f64 } else { 0.0 },
            provenance: if prefix_hit { Provenance::PrefixMatch } else { Provenance::ContextEdge },
        });
    }
    let max = |f: &dyn Fn(&Cand) -> f64| cands.iter().map(f).fold(0.0, f64::max);
    let (mf, me, mr) = (max(&|c| c.freq), max(&|c| c.edge), max(&|c| c.ratio));
    let norm = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
    let mut out: Vec<Recommendation> = cands
        .iter()
        .map(|c| Recommendation {
            label: graph.nodes[&c.key].label.clone(),
            score: w.frequency * norm(c.freq, mf) + w.edge * norm(c.edge, me) + w.prefix * norm(c.ratio, mr),
            provenance: c.provenance,
        })
        .filter(|r| r.score > 0.0)
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.label.cmp(&b.label)));
    out.truncate(limit);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Revisions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Edit {
    #[serde(rename_all = "camelCase")]
    RelaxConstraint { node: String, before: Constraint, after: Constraint },
    #[serde(rename_all = "camelCase")]
    AddIntention { parent: String, intention: Intention },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Revision {
    pub tree: ITree,
    pub rationale: String,
    pub rp_id: String,
    pub edit: Edit,
}

fn same_label(p: &Intention, q: &Intention) -> bool {
    p.normalized_label() == q.normalized_label()
}

/// The user constraint widened so that it also admits the RP's values.
fn relax(user: &Constraint, rp: &Constraint) -> Option<Constraint> {
    let value = match (&user.value, &rp.value) {
        (ConstraintValue::Interval(u), ConstraintValue::Interval(r)) => {
            if u.unit.is_some() && r.unit.is_some() && u.unit != r.unit {
                return None;
            }
            ConstraintValue::Interval(Interval { lo: u.lo.min(r.lo), hi: u.hi.max(r.hi), unit: u.unit.clone() })
        }
        (ConstraintValue::Enumeration(u), ConstraintValue::Enumeration(r)) => {
            let mut v = u.clone();
            v.extend(r.iter().filter(|x| !u.contains(x)).cloned());
            ConstraintValue::Enumeration(v)
        }
        (ConstraintValue::Boolean(_), ConstraintValue::Boolean(r)) => ConstraintValue::Boolean(*r),
        _ => return None,
    };
    let out = Constraint { name: user.name.clone(), value };
    (out != *user).then_some(out)
}

fn near_misses(partial: &ITree, rp: &RequirementPattern, out: &mut Vec<Revision>) {
    let mut budget = 10_000usize;
    let mut seen = BTreeSet::new();
    for_each_embedding(&rp.forest, partial, &same_label, &mut |emb| {
        budget -= 1;
        let mut failing = Vec::new();
        for (pattern, map) in rp.forest.iter().zip(emb) {
            for (pid, tid) in map {
                let p = &pattern.nodes[pid];
                for uc in &partial.nodes[tid].constraints {
                    let ok = p.constraint(&uc.name).is_some_and(|pc| covers(pc, uc).unwrap_or(false));
                    if !ok {
                        failing.push((tid.clone(), uc.clone(), p.constraint(&uc.name).cloned()));
                    }
                }
            }
        }
        if let [(node, before, Some(rpc))] = failing.as_slice() {
            if let Some(after) = relax(before, rpc) {
                if seen.insert((node.clone(), before.name.clone())) {
                    let mut tree = partial.clone();
                    let n = tree.nodes.get_mut(node).expect("embedded node exists");
                    let slot = n.constraints.iter_mut().find(|c| c.name == before.name).expect("failing constraint");
                    *slot = after.clone();
                    out.push(Revision {
                        rationale: format!(
                            "relax `{}` on `{}` to match {} (used {} times)",
                            before.name, partial.nodes[node].label, rp.id, rp.info.use_frequency
                        ),
                        tree,
                        rp_id: rp.id.clone(),
                        edit: Edit::RelaxConstraint { node: node.clone(), before: before.clone(), after },
                    });
                }
            }
        }
        budget > 0
    });
}

fn fresh_id(tree: &ITree, label: &str) -> String {
    let base: String = normalize_label(label).replace(' ', "-");
    let base = if base.is_empty() { "intention".to_string() } else { base };
    if !tree.nodes.contains_key(&base) {
        return base;
    }
    (2..).map(|i| format!("{base}-{i}")).find(|id| !tree.nodes.contains_key(id)).expect("unbounded")
}

fn completions(partial: &ITree, rp: &RequirementPattern, out: &mut Vec<Revision>) {
    let present: BTreeSet<String> = partial.nodes.values().map(Intention::normalized_label).collect();
    let tree_parents = partial.parents();
    for (fi, pattern) in rp.forest.iter().enumerate() {
        let pattern_parents = pattern.parents();
        for (pid, node) in &pattern.nodes {
            if !pattern.children(pid).is_empty() || present.contains(&node.normalized_label()) {
                continue;
            }
            // RP without this leaf.
            let mut reduced = rp.forest.clone();
            let rp_parent = pattern_parents.get(pid.as_str()).map(|s| s.to_string());
            if rp_parent.is_none() {
                reduced.remove(fi);
            } else {
                let t = &mut reduced[fi];
                t.nodes.remove(pid);
                for d in t.decomposition.values_mut() {
                    d.children.retain(|c| c != pid);
                }
                t.decomposition.retain(|_, d| !d.children.is_empty());
            }
            if reduced.is_empty() {
                continue;
            }
            let Some(emb) = first_embedding(&reduced, partial, &intention_covers) else {
                continue;
            };
            let attach = match &rp_parent {
                Some(par) => emb[fi][par].clone(),
                None => {
                    let other = &emb[0][&reduced[0].root];
                    match tree_parents.get(other.as_str()) {
                        Some(p) => p.to_string(),
                        None => other.clone(),
                    }
                }
            };
            let kind = partial
                .kind(&attach)
                .or_else(|| rp_parent.as_ref().and_then(|p| pattern.kind(p)))
                .unwrap_or(DecompositionKind::And);
            let id = fresh_id(partial, &node.label);
            let intention = Intention::new(id, node.label.clone());
            let mut tree = partial.clone();
            tree.add_child(&attach, kind, intention.clone());
            out.push(Revision {
                rationale: format!(
                    "add `{}` under `{}` to complete {} (used {} times)",
                    node.label, partial.nodes[&attach].label, rp.id, rp.info.use_frequency
                ),
                tree,
                rp_id: rp.id.clone(),
                edit: Edit::AddIntention { parent: attach, intention },
            });
        }
    }
}

/// Up to `k` single-edit revisions drawn from near-miss RPs, most used RPs
/// first. The input tree is never modified.
pub fn propose_revisions(partial: &ITree, repo: &[RequirementPattern], k: usize) -> Vec<Revision> {
    let mut ranked: Vec<&RequirementPattern> = repo.iter().collect();
    ranked.sort_by(|a, b| b.info.use_frequency.cmp(&a.info.use_frequency).then_with(|| a.id.cmp(&b.id)));
    let mut out: Vec<Revision> = Vec::new();
    for rp in ranked {
        if out.len() >= k {
            break;
        }
        if rp.forest.is_empty() {
            continue;
        }
        let mut found = Vec::new();
        near_misses(partial, rp, &mut found);
        completions(partial, rp, &mut found);
        for r in found {
            if !out.iter().any(|o| o.tree == r.tree) {
                out.push(r);
            }
        }
    }
    out.truncate(k);
    out
}
