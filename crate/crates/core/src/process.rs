//! Block-structured process graphs and their tree form.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GatewayKind {
    ParallelSplit,
    ParallelJoin,
    ExclusiveSplit,
    ExclusiveJoin,
}

impl GatewayKind {
    pub fn is_split(self) -> bool {
        matches!(self, GatewayKind::ParallelSplit | GatewayKind::ExclusiveSplit)
    }

    fn join(self) -> GatewayKind {
        match self {
            GatewayKind::ParallelSplit => GatewayKind::ParallelJoin,
            GatewayKind::ExclusiveSplit => GatewayKind::ExclusiveJoin,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Activity {
    pub service_class: String,
}

/// Process over service classes: activities, gateways and sequence flows
/// between a single start and a single end event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessGraph {
    pub activities: BTreeMap<String, Activity>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub gateways: BTreeMap<String, GatewayKind>,
    pub start: String,
    pub end: String,
}

/// Series-parallel view of a process. Gateway branches are always
/// [`Block::Seq`] (possibly empty).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block<T> {
    Activity(T),
    Seq(Vec<Block<T>>),
    Parallel(Vec<Block<T>>),
    Exclusive(Vec<Block<T>>),
}

impl<T> Block<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Block<U> {
        match self {
            Block::Activity(t) => Block::Activity(f(t)),
            Block::Seq(v) => Block::Seq(v.iter().map(|b| b.map(f)).collect()),
            Block::Parallel(v) => Block::Parallel(v.iter().map(|b| b.map(f)).collect()),
            Block::Exclusive(v) => Block::Exclusive(v.iter().map(|b| b.map(f)).collect()),
        }
    }

    /// Leaves in pre-order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a T>) {
        match self {
            Block::Activity(t) => out.push(t),
            Block::Seq(v) | Block::Parallel(v) | Block::Exclusive(v) => {
                v.iter().for_each(|b| b.collect_leaves(out))
            }
        }
    }

    pub fn activity_count(&self) -> usize {
        match self {
            Block::Activity(_) => 1,
            Block::Seq(v) | Block::Parallel(v) | Block::Exclusive(v) => {
                v.iter().map(Block::activity_count).sum()
            }
        }
    }

    /// Flattens nested sequences and unwraps singleton sequences outside of
    /// gateway branches.
    pub fn normalized(self) -> Block<T> {
        fn flat<T>(items: Vec<Block<T>>) -> Vec<Block<T>> {
            let mut out = Vec::new();
            for b in items {
                match b.normalized() {
                    Block::Seq(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            out
        }
        fn branch<T>(b: Block<T>) -> Block<T> {
            match b.normalized() {
                Block::Seq(v) => Block::Seq(v),
                other => Block::Seq(vec![other]),
            }
        }
        match self {
            Block::Activity(t) => Block::Activity(t),
            Block::Seq(v) => {
                let mut v = flat(v);
                if v.len() == 1 {
                    v.pop().unwrap()
                } else {
                    Block::Seq(v)
                }
            }
            Block::Parallel(v) => Block::Parallel(v.into_iter().map(branch).collect()),
            Block::Exclusive(v) => Block::Exclusive(v.into_iter().map(branch).collect()),
        }
    }
}

fn escape_code(s: &str, out: &mut String) {
    for ch in s.chars() {
        if matches!(ch, '\\' | '(' | ')' | ';' | '{' | '}' | '|') {
            out.push('\\');
        }
        out.push(ch);
    }
}

impl<T: AsRef<str>> Block<T> {
    /// Canonical code: sequences keep their order, gateway branches are
    /// sorted. Equal codes mean equal processes up to branch order.
    pub fn code(&self) -> String {
        let mut out = String::new();
        self.write_code(&mut out);
        out
    }

    fn write_code(&self, out: &mut String) {
        match self {
            Block::Activity(t) => escape_code(t.as_ref(), out),
            Block::Seq(v) if v.len() == 1 => v[0].write_code(out),
            Block::Seq(v) => {
                out.push('(');
                for (i, b) in v.iter().enumerate() {
                    if i > 0 {
                        out.push(';');
                    }
                    b.write_code(out);
                }
                out.push(')');
            }
            Block::Parallel(v) | Block::Exclusive(v) => {
                out.push_str(if matches!(self, Block::Parallel(_)) { "P{" } else { "X{" });
                let mut codes: Vec<String> = v.iter().map(Block::code).collect();
                codes.sort();
                out.push_str(&codes.join("|"));
                out.push('}');
            }
        }
    }
}

impl<T: Clone> Block<T> {
    /// Reorders gateway branches by the code of `label(leaf)`, so two blocks
    /// with the same code line up leaf by leaf in pre-order.
    pub fn canonical_by<L: AsRef<str>>(&self, label: &impl Fn(&T) -> L) -> Block<T> {
        match self {
            Block::Activity(t) => Block::Activity(t.clone()),
            Block::Seq(v) => Block::Seq(v.iter().map(|b| b.canonical_by(label)).collect()),
            Block::Parallel(v) | Block::Exclusive(v) => {
                let mut kids: Vec<(String, Block<T>)> = v
                    .iter()
                    .map(|b| {
                        let c = b.canonical_by(label);
                        (c.map(&mut |t| label(t).as_ref().to_string()).code(), c)
                    })
                    .collect();
                kids.sort_by(|a, b| a.0.cmp(&b.0));
                let kids = kids.into_iter().map(|(_, b)| b).collect();
                if matches!(self, Block::Parallel(_)) {
                    Block::Parallel(kids)
                } else {
                    Block::Exclusive(kids)
                }
            }
        }
    }
}

impl ProcessGraph {
    /// Parses the graph into its series-parallel form, rejecting anything that
    /// is not a single well-nested block between start and end.
    pub fn to_block(&self) -> Result<Block<String>> {
        let bad = |m: String| Error::MalformedProcess(m);
        if self.start == self.end {
            return Err(bad("start and end coincide".into()));
        }
        let mut known: BTreeSet<&str> = BTreeSet::new();
        for id in self.activities.keys().chain(self.gateways.keys()) {
            if !known.insert(id.as_str()) {
                return Err(bad(format!("id `{id}` used twice")));
            }
        }
        for id in [&self.start, &self.end] {
            if !known.insert(id.as_str()) {
                return Err(bad(format!("event id `{id}` collides")));
            }
        }
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut pred: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut seen_edges = BTreeSet::new();
        for (a, b) in &self.edges {
            if !known.contains(a.as_str()) || !known.contains(b.as_str()) {
                return Err(bad(format!("edge {a} -> {b} references an unknown node")));
            }
            if !seen_edges.insert((a.as_str(), b.as_str())) {
                return Err(bad(format!("duplicate edge {a} -> {b}")));
            }
            succ.entry(a).or_default().push(b);
            pred.entry(b).or_default().push(a);
        }
        let deg = |m: &BTreeMap<&str, Vec<&str>>, n: &str| m.get(n).map_or(0, Vec::len);
        if deg(&pred, &self.start) != 0 || deg(&succ, &self.start) != 1 {
            return Err(bad("start must have no incoming and one outgoing flow".into()));
        }
        if deg(&succ, &self.end) != 0 || deg(&pred, &self.end) != 1 {
            return Err(bad("end must have one incoming and no outgoing flow".into()));
        }

        let mut parser = Parser { graph: self, succ: &succ, pred: &pred, visited: BTreeSet::new() };
        let first = succ[self.start.as_str()][0];
        let (items, stop) = parser.chain(first)?;
        if stop != self.end {
            return Err(bad(format!("unmatched join `{stop}`")));
        }
        if parser.visited.len() != self.activities.len() + self.gateways.len() {
            return Err(bad("some nodes are not on a start-to-end path".into()));
        }
        Ok(Block::Seq(items).normalized())
    }

    pub fn validate(&self) -> Result<()> {
        self.to_block().map(|_| ())
    }

    /// Builds a graph from a block whose leaves are `(activity id, class)`.
    /// Gateways are numbered `g1, g2, ...` in pre-order.
    pub fn from_block(block: &Block<(String, String)>) -> ProcessGraph {
        let mut g = ProcessGraph {
            activities: BTreeMap::new(),
            edges: Vec::new(),
            gateways: BTreeMap::new(),
            start: "start".into(),
            end: "end".into(),
        };
        let mut counter = 0usize;
        let exit = emit(block, "start".to_string(), &mut g, &mut counter);
        g.edges.push((exit, "end".into()));
        g
    }

    /// Leaves carry `(activity id, service class)`.
    pub fn to_labeled_block(&self) -> Result<Block<(String, String)>> {
        let b = self.to_block()?;
        Ok(b.map(&mut |id: &String| (id.clone(), self.activities[id].service_class.clone())))
    }
}

fn emit(block: &Block<(String, String)>, entry: String, g: &mut ProcessGraph, counter: &mut usize) -> String {
    match block {
        Block::Activity((id, class)) => {
            g.activities.insert(id.clone(), Activity { service_class: class.clone() });
            g.edges.push((entry, id.clone()));
            id.clone()
        }
        Block::Seq(items) => {
            let mut cur = entry;
            for b in items {
                cur = emit(b, cur, g, counter);
            }
            cur
        }
        Block::Parallel(branches) | Block::Exclusive(branches) => {
            let (sk, jk) = if matches!(block, Block::Parallel(_)) {
                (GatewayKind::ParallelSplit, GatewayKind::ParallelJoin)
            } else {
                (GatewayKind::ExclusiveSplit, GatewayKind::ExclusiveJoin)
            };
            *counter += 1;
            let split = format!("g{}", *counter);
            *counter += 1;
            let join = format!("g{}", *counter);
            g.gateways.insert(split.clone(), sk);
            g.gateways.insert(join.clone(), jk);
            g.edges.push((entry, split.clone()));
            for b in branches {
                let exit = emit(b, split.clone(), g, counter);
                g.edges.push((exit, join.clone()));
            }
            join
        }
    }
}

struct Parser<'a> {
    graph: &'a ProcessGraph,
    succ: &'a BTreeMap<&'a str, Vec<&'a str>>,
    pred: &'a BTreeMap<&'a str, Vec<&'a str>>,
    visited: BTreeSet<&'a str>,
}

impl<'a> Parser<'a> {
    fn out(&self, n: &str) -> &'a [&'a str] {
        self.succ.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    fn indeg(&self, n: &str) -> usize {
        self.pred.get(n).map_or(0, Vec::len)
    }

    fn visit(&mut self, n: &'a str) -> Result<()> {
        if !self.visited.insert(n) {
            return Err(Error::MalformedProcess(format!("node `{n}` reached twice")));
        }
        Ok(())
    }

    /// Reads a sequence starting at `cur` until the end event or a join.
    fn chain(&mut self, mut cur: &'a str) -> Result<(Vec<Block<String>>, &'a str)> {
        let bad = |m: String| Error::MalformedProcess(m);
        let mut items = Vec::new();
        loop {
            if cur == self.graph.end {
                return Ok((items, cur));
            }
            if self.graph.activities.contains_key(cur) {
                self.visit(cur)?;
                let out = self.out(cur);
                if self.indeg(cur) != 1 || out.len() != 1 {
                    return Err(bad(format!("activity `{cur}` needs one incoming and one outgoing flow")));
                }
                items.push(Block::Activity(cur.to_string()));
                cur = out[0];
                continue;
            }
            let Some(&kind) = self.graph.gateways.get(cur) else {
                return Err(bad(format!("`{cur}` is not an activity or gateway")));
            };
            if !kind.is_split() {
                return Ok((items, cur));
            }
            self.visit(cur)?;
            let out = self.out(cur);
            if self.indeg(cur) != 1 || out.len() < 2 {
                return Err(bad(format!("split `{cur}` needs one incoming and at least two outgoing flows")));
            }
            let mut branches = Vec::new();
            let mut join: Option<&'a str> = None;
            for &s in out {
                let (branch, stop) = self.chain(s)?;
                if stop == self.graph.end {
                    return Err(bad(format!("branch of `{cur}` reaches the end without a join")));
                }
                match join {
                    None => join = Some(stop),
                    Some(j) if j != stop => {
                        return Err(bad(format!("branches of `{cur}` close at `{j}` and `{stop}`")))
                    }
                    _ => {}
                }
                branches.push(Block::Seq(branch));
            }
            let join = join.expect("at least two branches");
            if self.graph.gateways.get(join) != Some(&kind.join()) {
                return Err(bad(format!("split `{cur}` is closed by a mismatched join `{join}`")));
            }
            self.visit(join)?;
            let jout = self.out(join);
            if self.indeg(join) != out.len() || jout.len() != 1 {
                return Err(bad(format!("join `{join}` does not mirror split `{cur}`")));
            }
            items.push(if kind == GatewayKind::ParallelSplit {
                Block::Parallel(branches)
            } else {
                Block::Exclusive(branches)
            });
            cur = jout[0];
        }
    }
}
