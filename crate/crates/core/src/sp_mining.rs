//! Service pattern derivation from historical integrated service solutions:
//! multi-dimensional service grouping, frequent block segments, and
//! abstraction into patterns with concrete instances.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{normalize_label, Context, Layer, QosVector, ServicePattern, ServiceSpec, SpInfo, SpInstance};
use crate::process::{Block, ProcessGraph};
use crate::qos::aggregate_qos;

/// One executed solution from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoricalIss {
    pub id: String,
    pub process: ProcessGraph,
    /// Activity id to service id.
    pub binding: BTreeMap<String, String>,
    pub context: Context,
    pub outcome_qos: QosVector,
    #[serde(default)]
    pub rp_ids: Vec<String>,
}

impl HistoricalIss {
    pub fn validate(&self, services: Option<&BTreeMap<String, ServiceSpec>>) -> Result<()> {
        self.process.validate()?;
        for act in self.process.activities.keys() {
            let Some(sid) = self.binding.get(act) else {
                return Err(Error::UnboundActivity(act.clone()));
            };
            if let Some(services) = services {
                if !services.contains_key(sid) {
                    return Err(Error::InvalidDocument(format!("{}: unknown service `{sid}`", self.id)));
                }
            }
        }
        self.outcome_qos.validate().map_err(|e| Error::InvalidDocument(format!("{}: {e}", self.id)))
    }
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

pub const HASH_WIDTH: usize = 64;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Feature layout shared by a set of services: hashed function tokens,
/// hashed I/O names, one-hot user group, one-hot provider.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    user_groups: Vec<String>,
    providers: Vec<String>,
}

impl Featurizer {
    pub fn from_services<'a>(services: impl IntoIterator<Item = &'a ServiceSpec>) -> Self {
        let mut groups = BTreeSet::new();
        let mut providers = BTreeSet::new();
        for s in services {
            groups.insert(s.user_group.clone());
            providers.insert(s.provider.clone());
        }
        Featurizer { user_groups: groups.into_iter().collect(), providers: providers.into_iter().collect() }
    }

    pub fn dim(&self) -> usize {
        2 * HASH_WIDTH + self.user_groups.len() + self.providers.len()
    }

    pub fn featurize(&self, s: &ServiceSpec) -> Vec<f64> {
        let mut function = vec![0.0; HASH_WIDTH];
        for tok in normalize_label(&s.function).split(' ').filter(|t| !t.is_empty()) {
            function[(fnv1a(tok) % HASH_WIDTH as u64) as usize] += 1.0;
        }
        let mut io = vec![0.0; HASH_WIDTH];
        for name in s.inputs.iter().map(|n| format!("in:{}", normalize_label(n))) {
            io[(fnv1a(&name) % HASH_WIDTH as u64) as usize] += 1.0;
        }
        for name in s.outputs.iter().map(|n| format!("out:{}", normalize_label(n))) {
            io[(fnv1a(&name) % HASH_WIDTH as u64) as usize] += 1.0;
        }
        let one_hot = |vocab: &[String], v: &str| {
            let mut b = vec![0.0; vocab.len()];
            if let Ok(i) = vocab.binary_search_by(|x| x.as_str().cmp(v)) {
                b[i] = 1.0;
            }
            b
        };
        let mut groups = one_hot(&self.user_groups, &s.user_group);
        let mut providers = one_hot(&self.providers, &s.provider);
        for block in [&mut function, &mut io, &mut groups, &mut providers] {
            l2_normalize(block);
        }
        [function, io, groups, providers].concat()
    }
}

pub fn featurize_service(s: &ServiceSpec, featurizer: &Featurizer) -> Vec<f64> {
    featurizer.featurize(s)
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances after each assignment step.
    pub inertia: Vec<f64>,
}

impl KMeans {
    pub fn final_inertia(&self) -> f64 {
        self.inertia.last().copied().unwrap_or(0.0)
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    while chosen.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| chosen.iter().map(|&c| sq_dist(p, &points[c])).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// One Lloyd run from a k-means++ start. Empty clusters keep their centroid.
pub fn kmeans_run(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let dim = points[0].len();
    let mut centroids = plus_plus(points, k, rng);
    let mut assignments = vec![0; points.len()];
    let mut inertia = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(p, m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assignments[i] = best;
            total += d;
        }
        inertia.push(total);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    KMeans { assignments, centroids, inertia }
}

/// Best of [`KMEANS_RESTARTS`] seeded runs by final inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::KTooLarge { k, n: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = kmeans_run(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.final_inertia() < b.final_inertia()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

// ---------------------------------------------------------------------------
// Service groups
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceClassGroup {
    pub class_label: String,
    pub member_service_ids: BTreeSet<String>,
    pub centroid: Vec<f64>,
    /// P(solution uses this class's peer | it uses this class).
    pub conditional_assoc_prob: BTreeMap<String, f64>,
}

/// Clusters services with k-means and labels each group by its most common
/// function. Association probabilities are counted over `log`.
pub fn group_services(
    services: &[ServiceSpec],
    k: usize,
    seed: u64,
    log: &[HistoricalIss],
) -> Result<Vec<ServiceClassGroup>> {
    let mut sorted: Vec<&ServiceSpec> = services.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let fz = Featurizer::from_services(sorted.iter().copied());
    let points: Vec<Vec<f64>> = sorted.iter().map(|s| fz.featurize(s)).collect();
    let km = kmeans(&points, k, seed)?;

    let mut groups = Vec::new();
    for c in 0..k {
        let members: Vec<&ServiceSpec> =
            sorted.iter().zip(&km.assignments).filter(|(_, &a)| a == c).map(|(s, _)| *s).collect();
        if members.is_empty() {
            continue;
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &members {
            *counts.entry(s.function.as_str()).or_default() += 1;
        }
        let label = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| l.to_string()).unwrap();
        groups.push(ServiceClassGroup {
            class_label: label,
            member_service_ids: members.iter().map(|s| s.id.clone()).collect(),
            centroid: km.centroids[c].clone(),
            conditional_assoc_prob: BTreeMap::new(),
        });
    }
    groups.sort_by(|a, b| a.class_label.cmp(&b.class_label).then(a.member_service_ids.cmp(&b.member_service_ids)));

    // Per solution: which group labels it touches.
    let uses: Vec<BTreeSet<&str>> = log
        .iter()
        .map(|iss| {
            groups
                .iter()
                .filter(|g| iss.binding.values().any(|sid| g.member_service_ids.contains(sid)))
                .map(|g| g.class_label.as_str())
                .collect()
        })
        .collect();
    let labels: BTreeSet<String> = groups.iter().map(|g| g.class_label.clone()).collect();
    let mut probs = Vec::new();
    for g in &groups {
        let with_a: Vec<&BTreeSet<&str>> = uses.iter().filter(|u| u.contains(g.class_label.as_str())).collect();
        let mut m = BTreeMap::new();
        for peer in labels.iter().filter(|l| **l != g.class_label) {
            let both = with_a.iter().filter(|u| u.contains(peer.as_str())).count();
            let p = if with_a.is_empty() { 0.0 } else { both as f64 / with_a.len() as f64 };
            m.insert(peer.clone(), p);
        }
        probs.push(m);
    }
    for (g, m) in groups.iter_mut().zip(probs) {
        g.conditional_assoc_prob = m;
    }
    Ok(groups)
}

/// Default cluster count for `n` services: `ceil(sqrt(n / 2))`, at least 1.
pub fn default_k(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().ceil() as usize).max(1)
}

// ---------------------------------------------------------------------------
// Segments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOccurrence {
    /// Index into the log.
    pub iss: usize,
    /// The segment over activity ids, branches in canonical order.
    pub block: Block<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Canonical block over class labels.
    pub block: Block<String>,
    pub code: String,
    pub support: usize,
    pub occurrences: Vec<SegmentOccurrence>,
}

impl Segment {
    pub fn granularity(&self) -> usize {
        self.block.activity_count()
    }
}

fn class_index(groups: &[ServiceClassGroup]) -> BTreeMap<&str, &str> {
    let mut m = BTreeMap::new();
    for g in groups {
        for sid in &g.member_service_ids {
            m.insert(sid.as_str(), g.class_label.as_str());
        }
    }
    m
}

/// Every contiguous run of elements of every sequence in the block tree.
/// These are exactly the connected sub-processes that never cut a
/// split/join pair apart.
pub fn block_segments<T: Clone>(block: &Block<T>) -> Vec<Block<T>> {
    fn lists<'a, T>(b: &'a Block<T>, out: &mut Vec<&'a [Block<T>]>) {
        match b {
            Block::Activity(_) => {}
            Block::Seq(v) => {
                out.push(v);
                v.iter().for_each(|x| lists(x, out));
            }
            Block::Parallel(v) | Block::Exclusive(v) => v.iter().for_each(|x| lists(x, out)),
        }
    }
    let top = match block {
        Block::Seq(_) => block.clone(),
        other => Block::Seq(vec![other.clone()]),
    };
    let mut ls = Vec::new();
    lists(&top, &mut ls);
    let mut out = Vec::new();
    for l in ls {
        for i in 0..l.len() {
            for j in i + 1..=l.len() {
                out.push(Block::Seq(l[i..j].to_vec()).normalized());
            }
        }
    }
    out
}

/// Frequent segments over class labels, counted once per solution.
pub fn mine_frequent_segments(
    log: &[HistoricalIss],
    groups: &[ServiceClassGroup],
    min_support: usize,
) -> Result<Vec<Segment>> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    if min_support == 0 {
        return Err(Error::InvalidConfig("minSupport must be >= 1".into()));
    }
    let classes = class_index(groups);
    let mut found: BTreeMap<String, (Block<String>, Vec<SegmentOccurrence>)> = BTreeMap::new();
    for (i, iss) in log.iter().enumerate() {
        let block = iss.process.to_block()?;
        let mut class_of = BTreeMap::new();
        for act in block.leaves() {
            let sid = iss.binding.get(act).ok_or_else(|| Error::UnboundActivity(act.clone()))?;
            let class = classes
                .get(sid.as_str())
                .ok_or_else(|| Error::InvalidDocument(format!("{}: service `{sid}` is in no group", iss.id)))?;
            class_of.insert(act.clone(), class.to_string());
        }
        for seg in block_segments(&block) {
            let canon = seg.canonical_by(&|a: &String| class_of[a].clone());
            let labeled = canon.map(&mut |a: &String| class_of[a].clone());
            let code = labeled.code();
            let entry = found.entry(code).or_insert_with(|| (labeled, Vec::new()));
            entry.1.push(SegmentOccurrence { iss: i, block: canon });
        }
    }
    Ok(found
        .into_iter()
        .filter_map(|(code, (block, occurrences))| {
            let support = occurrences.iter().map(|o| o.iss).collect::<BTreeSet<_>>().len();
            (support >= min_support).then_some(Segment { block, code, support, occurrences })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Abstraction
// ---------------------------------------------------------------------------

/// A mined pattern with the log positions it was abstracted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MinedSp {
    pub sp: ServicePattern,
    /// `(solution id, activity ids)` per occurrence.
    pub occurrences: Vec<(String, BTreeSet<String>)>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn median_qos(qs: &[QosVector]) -> QosVector {
    QosVector {
        cost: median(qs.iter().map(|q| q.cost).collect()),
        time: median(qs.iter().map(|q| q.time).collect()),
        availability: median(qs.iter().map(|q| q.availability).collect()),
        rating: median(qs.iter().map(|q| q.rating).collect()),
    }
}

pub fn sp_id(process_code: &str) -> String {
    format!("sp-{}", &hex::encode(Sha256::digest(process_code.as_bytes()))[..12])
}

/// Turns each segment into a service pattern. An occurrence becomes an
/// instance only when every bound service belongs to the activity's class
/// group and provides exactly that function; other occurrences are left
/// out, so all instances share one process and one class per activity.
pub fn abstract_sps(
    segments: &[Segment],
    log: &[HistoricalIss],
    groups: &[ServiceClassGroup],
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<Vec<MinedSp>> {
    let classes = class_index(groups);
    let mut out: BTreeMap<String, MinedSp> = BTreeMap::new();
    for seg in segments {
        let class_labels: Vec<String> = seg.block.leaves().into_iter().cloned().collect();
        let mut n = 0;
        let labeled = seg.block.map(&mut |class: &String| {
            n += 1;
            (format!("a{n}"), class.clone())
        });
        let process = ProcessGraph::from_block(&labeled);
        let mut bindings: Vec<BTreeMap<String, String>> = Vec::new();
        let mut occurrences = Vec::new();
        'occ: for occ in &seg.occurrences {
            let iss = &log[occ.iss];
            let acts: Vec<&String> = occ.block.leaves();
            let mut binding = BTreeMap::new();
            for (i, a) in acts.iter().enumerate() {
                let sid = iss.binding.get(*a).ok_or_else(|| Error::UnboundActivity((*a).clone()))?;
                let svc = services.get(sid).ok_or_else(|| Error::NotFound(sid.clone()))?;
                if classes.get(sid.as_str()) != Some(&class_labels[i].as_str()) || svc.function != class_labels[i] {
                    continue 'occ;
                }
                binding.insert(format!("a{}", i + 1), sid.clone());
            }
            if !bindings.contains(&binding) {
                bindings.push(binding);
            }
            occurrences.push((iss.id.clone(), acts.iter().map(|a| (*a).clone()).collect::<BTreeSet<_>>()));
        }
        if bindings.is_empty() {
            continue;
        }
        bindings.sort();
        let mut instances = Vec::new();
        for binding in bindings {
            let q = aggregate_qos(&process, &binding, services)?;
            instances.push(SpInstance { binding, aggregate_qos: q });
        }
        let qos = median_qos(&instances.iter().map(|i| i.aggregate_qos.clone()).collect::<Vec<_>>());
        let used: Vec<&ServiceSpec> =
            instances.iter().flat_map(|i| i.binding.values()).filter_map(|s| services.get(s)).collect();
        let providers: BTreeSet<&str> = used.iter().map(|s| s.provider.as_str()).collect();
        let layer = if providers.len() <= 1 {
            Layer::Organization
        } else {
            used.iter().map(|s| s.layer).max().unwrap_or(Layer::InnerDomain).max(Layer::InnerDomain)
        };
        let fr = class_labels.join(" + ");
        let support = occurrences.iter().map(|(id, _)| id).collect::<BTreeSet<_>>().len() as u64;
        let id = sp_id(&seg.code);
        let sp = ServicePattern {
            id: id.clone(),
            info: SpInfo { description: fr.clone(), domain: class_labels[0].clone(), layer },
            fr,
            granularity: process.activities.len(),
            process,
            qos,
            cons: Vec::new(),
            instances,
            support,
            verifying_degree: 0.0,
        };
        out.entry(id).or_insert(MinedSp { sp, occurrences });
    }
    Ok(out.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpValueRow {
    pub id: String,
    pub granularity: usize,
    pub support: u64,
    pub verifying_degree: f64,
    pub dominated: bool,
}

/// Granularity/support scatter, largest patterns first. A pattern is
/// dominated when another one is strictly larger and strictly more used.
pub fn sp_value_report(sps: &[ServicePattern]) -> Vec<SpValueRow> {
    let mut rows: Vec<SpValueRow> = sps
        .iter()
        .map(|s| SpValueRow {
            id: s.id.clone(),
            granularity: s.granularity,
            support: s.support,
            verifying_degree: s.verifying_degree,
            dominated: sps.iter().any(|o| o.granularity > s.granularity && o.support > s.support),
        })
        .collect();
    rows.sort_by(|a, b| (b.granularity, b.support, &a.id).cmp(&(a.granularity, a.support, &b.id)));
    rows
}
