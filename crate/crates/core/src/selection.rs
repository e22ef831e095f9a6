//! Choosing a set of requirement patterns that covers a final intention
//! tree: forest embedding, greedy and exhaustive selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{intention_covers, DecompositionKind, ITree, Intention, RequirementPattern};

/// Pattern node id to tree node id, one map per forest tree.
pub type Embedding = Vec<BTreeMap<String, String>>;

struct Slot<'a> {
    forest_idx: usize,
    pattern: &'a ITree,
    id: &'a str,
    parent: Option<(usize, &'a str)>,
}

/// Enumerates injective, kind-preserving embeddings of every forest tree into
/// `tree`, with images of different forest trees disjoint. Candidates are
/// tried in tree pre-order, so the first embedding visited is the canonical
/// one. `visit` returns `false` to stop.
pub fn for_each_embedding(
    forest: &[ITree],
    tree: &ITree,
    node_ok: &dyn Fn(&Intention, &Intention) -> bool,
    visit: &mut dyn FnMut(&Embedding) -> bool,
) {
    let mut slots = Vec::new();
    for (fi, p) in forest.iter().enumerate() {
        let parents = p.parents();
        for id in p.preorder() {
            slots.push(Slot { forest_idx: fi, pattern: p, id, parent: parents.get(id).map(|par| (fi, *par)) });
        }
    }
    let order: BTreeMap<&str, usize> = tree.preorder().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let all: Vec<&str> = tree.preorder();
    let mut current: Embedding = vec![BTreeMap::new(); forest.len()];
    let mut used: BTreeSet<String> = BTreeSet::new();

    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        slots: &[Slot<'_>],
        tree: &ITree,
        all: &[&str],
        order: &BTreeMap<&str, usize>,
        node_ok: &dyn Fn(&Intention, &Intention) -> bool,
        current: &mut Embedding,
        used: &mut BTreeSet<String>,
        visit: &mut dyn FnMut(&Embedding) -> bool,
    ) -> bool {
        if i == slots.len() {
            return visit(current);
        }
        let s = &slots[i];
        let mut candidates: Vec<&str> = match s.parent {
            None => all.to_vec(),
            Some((fi, par)) => tree.children(&current[fi][par]).iter().map(String::as_str).collect(),
        };
        candidates.sort_by_key(|c| order[c]);
        let pnode = &s.pattern.nodes[s.id];
        let pkind = s.pattern.kind(s.id);
        for c in candidates {
            if used.contains(c) || !node_ok(pnode, &tree.nodes[c]) {
                continue;
            }
            if pkind.is_some() && tree.kind(c) != pkind {
                continue;
            }
            used.insert(c.to_string());
            current[s.forest_idx].insert(s.id.to_string(), c.to_string());
            let go_on = go(i + 1, slots, tree, all, order, node_ok, current, used, visit);
            current[s.forest_idx].remove(s.id);
            used.remove(c);
            if !go_on {
                return false;
            }
        }
        true
    }

    go(0, &slots, tree, &all, &order, node_ok, &mut current, &mut used, visit);
}

/// First embedding in canonical order under `node_ok`.
pub fn first_embedding(
    forest: &[ITree],
    tree: &ITree,
    node_ok: &dyn Fn(&Intention, &Intention) -> bool,
) -> Option<Embedding> {
    let mut found = None;
    for_each_embedding(forest, tree, node_ok, &mut |e| {
        found = Some(e.clone());
        false
    });
    found
}

/// Tree intentions matched by the canonical embedding of the RP, or the empty
/// set when some forest tree does not embed.
pub fn rp_covers(rp: &RequirementPattern, tree: &ITree) -> BTreeSet<String> {
    if rp.forest.is_empty() {
        return BTreeSet::new();
    }
    first_embedding(&rp.forest, tree, &intention_covers)
        .map(|e| e.into_iter().flat_map(|m| m.into_values()).collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionResult {
    pub chosen: Vec<String>,
    pub coverage_map: BTreeMap<String, String>,
    pub uncovered: BTreeSet<String>,
    pub coverage_ratio: f64,
    /// Intentions achieved by the selection under AND/OR semantics.
    pub achievable: BTreeSet<String>,
    pub rationale: Vec<String>,
}

impl SelectionResult {
    pub fn coverage(&self) -> usize {
        self.coverage_map.len()
    }
}

fn achievable(tree: &ITree, covered: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for id in tree.preorder().into_iter().rev() {
        let kids = tree.children(id);
        let ok = covered.contains(id)
            || (!kids.is_empty()
                && match tree.kind(id) {
                    Some(DecompositionKind::Or) => kids.iter().any(|c| out.contains(c)),
                    _ => kids.iter().all(|c| out.contains(c)),
                });
        if ok {
            out.insert(id.to_string());
        }
    }
    out
}

fn result(tree: &ITree, repo: &[RequirementPattern], chosen: Vec<usize>, covers: &[BTreeSet<String>]) -> SelectionResult {
    let mut coverage_map = BTreeMap::new();
    let mut rationale = Vec::new();
    for &i in &chosen {
        for n in &covers[i] {
            coverage_map.insert(n.clone(), repo[i].id.clone());
        }
        let names: Vec<&str> = covers[i].iter().map(|n| tree.nodes[n].label.as_str()).collect();
        rationale.push(format!("{} covers {}", repo[i].id, names.join(", ")));
    }
    let uncovered: BTreeSet<String> =
        tree.nodes.keys().filter(|id| !coverage_map.contains_key(*id)).cloned().collect();
    let covered: BTreeSet<String> = coverage_map.keys().cloned().collect();
    let achievable = achievable(tree, &covered);
    if achievable.contains(&tree.root) {
        rationale.push("root intention is achievable".into());
    }
    SelectionResult {
        chosen: chosen.iter().map(|&i| repo[i].id.clone()).collect(),
        coverage_ratio: if tree.is_empty() { 0.0 } else { coverage_map.len() as f64 / tree.len() as f64 },
        coverage_map,
        uncovered,
        achievable,
        rationale,
    }
}

/// Repeatedly takes the RP adding the most uncovered intentions whose cover
/// set does not overlap the current selection.
pub fn select_rps_greedy(tree: &ITree, repo: &[RequirementPattern]) -> SelectionResult {
    let covers: Vec<BTreeSet<String>> = repo.iter().map(|rp| rp_covers(rp, tree)).collect();
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut chosen = Vec::new();
    loop {
        let best = (0..repo.len())
            .filter(|&i| !chosen.contains(&i) && !covers[i].is_empty() && covers[i].is_disjoint(&covered))
            .max_by(|&a, &b| {
                covers[a]
                    .len()
                    .cmp(&covers[b].len())
                    .then(repo[a].info.use_frequency.cmp(&repo[b].info.use_frequency))
                    .then(repo[b].id.cmp(&repo[a].id))
            });
        let Some(i) = best else { break };
        covered.extend(covers[i].iter().cloned());
        chosen.push(i);
    }
    result(tree, repo, chosen, &covers)
}

pub const DEFAULT_MAX_REPO: usize = 20;

/// Exhaustive search over pairwise disjoint RP subsets: most intentions
/// covered, then fewest RPs, then smallest summed position in id order.
pub fn select_rps_exact(tree: &ITree, repo: &[RequirementPattern], max_repo: usize) -> Result<SelectionResult> {
    if repo.len() > max_repo {
        return Err(Error::RepoTooLarge { size: repo.len(), max: max_repo });
    }
    let mut by_id: Vec<usize> = (0..repo.len()).collect();
    by_id.sort_by(|&a, &b| repo[a].id.cmp(&repo[b].id));
    let covers: Vec<BTreeSet<String>> = repo.iter().map(|rp| rp_covers(rp, tree)).collect();
    let useful: Vec<usize> = by_id.iter().copied().filter(|&i| !covers[i].is_empty()).collect();
    let rank: BTreeMap<usize, usize> = by_id.iter().enumerate().map(|(r, &i)| (i, r)).collect();

    struct Search<'a> {
        useful: &'a [usize],
        covers: &'a [BTreeSet<String>],
        rank: &'a BTreeMap<usize, usize>,
        best: (usize, usize, usize),
        best_set: Vec<usize>,
    }
    impl Search<'_> {
        fn key(&self, set: &[usize], coverage: usize) -> (usize, usize, usize) {
            // Larger is better on every coordinate.
            let ranks: usize = set.iter().map(|i| self.rank[i]).sum();
            (coverage, usize::MAX - set.len(), usize::MAX - ranks)
        }
        fn dfs(&mut self, from: usize, set: &mut Vec<usize>, covered: &mut BTreeSet<String>) {
            let k = self.key(set, covered.len());
            if k > self.best {
                self.best = k;
                self.best_set = set.clone();
            }
            for j in from..self.useful.len() {
                let i = self.useful[j];
                if !self.covers[i].is_disjoint(covered) {
                    continue;
                }
                set.push(i);
                covered.extend(self.covers[i].iter().cloned());
                self.dfs(j + 1, set, covered);
                for n in &self.covers[i] {
                    covered.remove(n);
                }
                set.pop();
            }
        }
    }
    let mut s = Search { useful: &useful, covers: &covers, rank: &rank, best: (0, 0, 0), best_set: Vec::new() };
    s.dfs(0, &mut Vec::new(), &mut BTreeSet::new());
    let mut chosen = s.best_set;
    chosen.sort_by_key(|i| rank[i]);
    Ok(result(tree, repo, chosen, &covers))
}
