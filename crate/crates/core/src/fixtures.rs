//! Seeded fixtures: builders for services and patterns, random
//! construction instances, and the wedding and travel scenarios.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::construction::OptimizationModel;
use crate::error::{Error, Result};
use crate::model::{
    normalize_label, Constraint, ConstraintValue, Context, DecompositionKind, ITree, Intention, Layer, Metric, OptObjective, QosVector,
    RequirementPattern, RpInfo, ServicePattern, ServiceSpec, SpInfo, SpInstance, SupplyMode,
};
use crate::pmm::{outcomes_from_log, MatchOutcome, MatchingMatrix, DEFAULT_SMOOTHING};
use crate::requirement_mining::{derive_rps, MiningConfig};
use crate::sp_mining::{abstract_sps, group_services, mine_frequent_segments, HistoricalIss, ServiceClassGroup};
use crate::process::{Block, ProcessGraph};
use crate::qos::aggregate_qos;

pub fn service(id: &str, function: &str, provider: &str, qos: QosVector, mode: SupplyMode) -> ServiceSpec {
    ServiceSpec {
        id: id.into(),
        function: function.into(),
        inputs: vec![format!("{function}-request")],
        outputs: vec![format!("{function}-result")],
        provider: provider.into(),
        user_group: "public".into(),
        qos,
        supply_mode: mode,
        layer: Layer::Organization,
        cooperative_rels: Default::default(),
    }
}

/// SP over a sequence of service classes `a1..an`; each instance lists one
/// service id per activity.
pub fn chain_sp(
    id: &str,
    classes: &[&str],
    instances: &[Vec<&str>],
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<ServicePattern> {
    let block = Block::Seq(
        classes.iter().enumerate().map(|(i, c)| Block::Activity((format!("a{}", i + 1), c.to_string()))).collect(),
    )
    .normalized();
    pattern(id, ProcessGraph::from_block(&block), instances, services)
}

/// SP over an arbitrary process; instance services follow the process's
/// activity ids in sorted order.
pub fn pattern(
    id: &str,
    process: ProcessGraph,
    instances: &[Vec<&str>],
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<ServicePattern> {
    let acts: Vec<String> = process.activities.keys().cloned().collect();
    let mut insts = Vec::new();
    for svc in instances {
        let binding: BTreeMap<String, String> =
            acts.iter().cloned().zip(svc.iter().map(|s| s.to_string())).collect();
        let aggregate_qos = aggregate_qos(&process, &binding, services)?;
        insts.push(SpInstance { binding, aggregate_qos });
    }
    let classes: Vec<String> = process.activities.values().map(|a| a.service_class.clone()).collect();
    Ok(ServicePattern {
        id: id.into(),
        info: SpInfo {
            description: classes.join(" + "),
            domain: classes.first().cloned().unwrap_or_default(),
            layer: Layer::Organization,
        },
        fr: classes.join(" + "),
        qos: insts.first().map(|i| i.aggregate_qos.clone()).unwrap_or_else(|| QosVector::new(0.0, 0.0, 1.0, 0.0)),
        granularity: process.activities.len(),
        process,
        cons: Vec::new(),
        instances: insts,
        support: 1,
        verifying_degree: 0.0,
    })
}

/// A self-contained construction problem.
#[derive(Debug, Clone)]
pub struct ConstructionInstance {
    pub model: OptimizationModel,
    pub pmm: MatchingMatrix,
    pub sps: Vec<ServicePattern>,
    pub services: BTreeMap<String, ServiceSpec>,
}

pub fn default_context() -> Context {
    Context::new("family", "urban", Metric::Cost)
}

/// Random instance: `rps` RPs, each with `sps_per_rp` candidate SPs of
/// `instances` instances over 1-3 activity chains. Outcomes bias the
/// matrix toward random SPs. A budget at `budget_quantile` of the way from
/// the cheapest to the most expensive composition keeps some decisions
/// infeasible; precedence edges are sprinkled between RPs in index order.
pub fn random_instance(
    seed: u64,
    rps: usize,
    sps_per_rp: usize,
    instances: usize,
    budget_quantile: Option<f64>,
) -> Result<ConstructionInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = default_context();
    let modes = [SupplyMode::OnDemand, SupplyMode::OnDemand, SupplyMode::Reserved, SupplyMode::Spot];
    let mut services = BTreeMap::new();
    let mut sps = Vec::new();
    let mut regs = Vec::new();
    let mut outcomes = Vec::new();
    let (mut min_total, mut max_total) = (0.0, 0.0);
    for r in 0..rps {
        let rp = format!("rp-{r}");
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for s in 0..sps_per_rp {
            let len = rng.random_range(1..=3usize);
            let classes: Vec<String> = (0..len).map(|a| format!("class-{r}-{s}-{a}")).collect();
            let mut inst_ids = Vec::new();
            for i in 0..instances {
                let mut ids = Vec::new();
                for (a, class) in classes.iter().enumerate() {
                    let id = format!("svc-{r}-{s}-{i}-{a}");
                    let qos = QosVector::new(
                        rng.random_range(5.0..50.0f64).round(),
                        rng.random_range(1.0..10.0f64).round(),
                        rng.random_range(0.9..1.0f64),
                        rng.random_range(2.0..5.0f64),
                    );
                    let mode = modes[rng.random_range(0..modes.len())];
                    services.insert(id.clone(), service(&id, class, &format!("prov-{s}-{i}"), qos, mode));
                    ids.push(id);
                }
                inst_ids.push(ids);
            }
            let class_refs: Vec<&str> = classes.iter().map(String::as_str).collect();
            let inst_refs: Vec<Vec<&str>> = inst_ids.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
            let sp = chain_sp(&format!("sp-{r}-{s}"), &class_refs, &inst_refs, &services)?;
            for inst in &sp.instances {
                let eff = crate::qos::aggregate_qos(&sp.process, &inst.binding, &services)?;
                lo = lo.min(eff.cost);
                hi = hi.max(eff.cost);
            }
            regs.push((rp.clone(), sp.id.clone(), ctx.clone()));
            for _ in 0..rng.random_range(0..4usize) {
                outcomes.push(MatchOutcome {
                    rp_id: rp.clone(),
                    sp_id: sp.id.clone(),
                    context: ctx.clone(),
                    success: rng.random_bool(0.8),
                    quality_score: rng.random_range(0.3..1.0),
                    difficulty: rng.random_range(0.0..1.0),
                    timestamp: outcomes.len() as u64,
                });
            }
            sps.push(sp);
        }
        min_total += lo;
        max_total += hi;
    }
    let pmm = MatchingMatrix::from_outcomes(&regs, &outcomes, DEFAULT_SMOOTHING)?;
    let mut inequalities = Vec::new();
    if let Some(q) = budget_quantile {
        inequalities.push(crate::construction::Inequality::Budget { limit: min_total + q * (max_total - min_total) });
    }
    inequalities.push(crate::construction::Inequality::SpotAvailabilityFloor {
        floor: crate::construction::SPOT_AVAILABILITY_FLOOR,
    });
    let mut precedence = Vec::new();
    for a in 0..rps {
        for b in a + 1..rps {
            if rng.random_bool(0.25) {
                precedence.push((format!("rp-{a}"), format!("rp-{b}")));
            }
        }
    }
    let model = OptimizationModel {
        rps: (0..rps).map(|r| format!("rp-{r}")).collect(),
        objectives: vec![OptObjective::natural(Metric::Cost)],
        weights: vec![1.0],
        inequalities,
        equalities: Vec::new(),
        precedence,
        context: ctx,
    };
    Ok(ConstructionInstance { model, pmm, sps, services })
}

// ---------------------------------------------------------------------------
// Random trees
// ---------------------------------------------------------------------------

/// Random valid tree of `1..=max_nodes` nodes over `labels`. Node ids are
/// `n0, n1, ...`; roughly a third of the nodes get a `size` interval.
pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize, labels: &[&str]) -> ITree {
    let n = rng.random_range(1..=max_nodes.max(1));
    let node = |rng: &mut ChaCha8Rng, i: usize| {
        let mut it = Intention::new(format!("n{i}"), labels[rng.random_range(0..labels.len())]);
        if rng.random_bool(0.3) {
            let lo = rng.random_range(0..5) as f64;
            it = it.with_constraint(Constraint::interval("size", lo, lo + rng.random_range(0..5) as f64));
        }
        it
    };
    let mut t = ITree::new(node(rng, 0));
    for i in 1..n {
        let parent = format!("n{}", rng.random_range(0..i));
        let kind = if rng.random_bool(0.7) { DecompositionKind::And } else { DecompositionKind::Or };
        let child = node(rng, i);
        t.add_child(&parent, kind, child);
    }
    t
}

/// `1..=max_trees` random trees.
pub fn random_corpus(seed: u64, max_trees: usize, max_nodes: usize, labels: &[&str]) -> Vec<ITree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_trees.max(1));
    (0..n).map(|_| random_tree(&mut rng, max_nodes, labels)).collect()
}

/// User tree plus RPs cut out of it (one or two connected fragments each,
/// constraints loosened) and a few RPs over foreign labels.
pub fn random_selection_instance(
    seed: u64,
    max_rps: usize,
    max_intentions: usize,
) -> (ITree, Vec<RequirementPattern>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let tree = random_tree(&mut rng, max_intentions, &labels);
    let ids: Vec<String> = tree.nodes.keys().cloned().collect();
    let n_rps = rng.random_range(1..=max_rps.max(1));
    let mut rps = Vec::new();
    for r in 0..n_rps {
        let fragments = if rng.random_bool(0.3) { 2 } else { 1 };
        let mut forest = Vec::new();
        for f in 0..fragments {
            let start = &ids[rng.random_range(0..ids.len())];
            if rng.random_bool(0.15) {
                forest.push(ITree::new(Intention::new(format!("x{f}"), "zz-foreign")));
                continue;
            }
            forest.push(fragment(&tree, start, &mut rng, &format!("f{f}-")));
        }
        let mut rp = RequirementPattern {
            id: format!("rp-{r:02}"),
            info: RpInfo { use_frequency: rng.random_range(1..20), domain: "random".into(), description: String::new() },
            forest,
        };
        rp.info.description = format!("fragment set {r}");
        rps.push(rp);
    }
    (tree, rps)
}

/// Connected piece of `tree` rooted at `start`: each child is kept with
/// probability 0.6. Interval constraints are widened by one on each side.
fn fragment(tree: &ITree, start: &str, rng: &mut ChaCha8Rng, prefix: &str) -> ITree {
    let copy = |id: &str| {
        let mut n = tree.nodes[id].clone();
        n.id = format!("{prefix}{id}");
        n.opt_objective = None;
        for c in &mut n.constraints {
            if let ConstraintValue::Interval(iv) = &mut c.value {
                iv.lo -= 1.0;
                iv.hi += 1.0;
            }
        }
        n
    };
    let mut t = ITree::new(copy(start));
    let mut stack = vec![start.to_string()];
    while let Some(id) = stack.pop() {
        let Some(kind) = tree.kind(&id) else { continue };
        for c in tree.children(&id) {
            if rng.random_bool(0.6) {
                t.add_child(&format!("{prefix}{id}"), kind, copy(c));
                stack.push(c.clone());
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Wedding scenario
// ---------------------------------------------------------------------------

const WEDDING_EXTRAS: [&str; 5] = ["music", "photography", "dress", "honeymoon", "flowers"];

fn wedding_root(i: usize) -> Intention {
    Intention::new(format!("w{i}"), "wedding").with_objective(Metric::Cost)
}

/// Wedding requirement corpus. Even trees ask for inviting and picking up
/// guests, odd trees for a banquet with venue layout and food; both get up
/// to two random extras. Exactly one tree mentions planning.
pub fn wedding_corpus(seed: u64, n: usize) -> Vec<ITree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let and = DecompositionKind::And;
    (0..n)
        .map(|i| {
            let root = format!("w{i}");
            let mut t = ITree::new(wedding_root(i));
            if i % 2 == 0 {
                t.add_child(&root, and, Intention::new(format!("inv{i}"), "inviting"));
                t.add_child(&root, and, Intention::new(format!("pick{i}"), "pick-up"));
            } else {
                let lo = [5.0, 6.0][rng.random_range(0..2)];
                let hi = [28.0, 30.0][rng.random_range(0..2)];
                let banquet = format!("ban{i}");
                t.add_child(
                    &root,
                    and,
                    Intention::new(banquet.clone(), "banquet").with_constraint(Constraint::interval("tables", lo, hi)),
                );
                t.add_child(&banquet, and, Intention::new(format!("venue{i}"), "venue layout"));
                t.add_child(&banquet, and, Intention::new(format!("food{i}"), "food"));
            }
            let extras = rng.random_range(0..=2usize);
            let mut pool: Vec<&str> = WEDDING_EXTRAS.to_vec();
            for e in 0..extras {
                let label = pool.remove(rng.random_range(0..pool.len()));
                t.add_child(&root, and, Intention::new(format!("x{i}-{e}"), label));
            }
            if i == 1 {
                t.add_child(&root, and, Intention::new(format!("plan{i}"), "planning"));
            }
            t
        })
        .collect()
}

/// The user's wedding requirement: cost as low as possible; a banquet of
/// 16 tables with venue layout and food; planning; picking up and inviting
/// guests. Guests are picked up after they are invited.
pub fn wedding_tree() -> ITree {
    let and = DecompositionKind::And;
    let mut t = ITree::new(Intention::new("wedding", "wedding").with_objective(Metric::Cost));
    t.add_child(
        "wedding",
        and,
        Intention::new("banquet", "banquet").with_constraint(Constraint::interval("tables", 16.0, 16.0)),
    );
    t.add_child("banquet", and, Intention::new("venue-layout", "venue layout"));
    t.add_child("banquet", and, Intention::new("food", "food"));
    t.add_child("wedding", and, Intention::new("planning", "planning"));
    t.add_child("wedding", and, Intention::new("pick-up", "pick-up"));
    t.add_child("wedding", and, Intention::new("inviting", "inviting"));
    t.add_dependency("pick-up", "inviting");
    t.owner = "couple".into();
    t
}

pub fn wedding_context() -> Context {
    Context::new("family", "urban", Metric::Cost)
}

/// Services for the four wedding functions; same-function services share
/// inputs and outputs.
pub fn wedding_services() -> Vec<ServiceSpec> {
    let mk = |id: &str, function: &str, io: (&str, &str), provider: &str, q: (f64, f64, f64, f64), mode| {
        let mut s = service(id, function, provider, QosVector::new(q.0, q.1, q.2, q.3), mode);
        s.inputs = vec![io.0.into()];
        s.outputs = vec![io.1.into()];
        s.user_group = "family".into();
        s
    };
    use SupplyMode::*;
    let inv = ("guest list", "invitations");
    let shu = ("guest addresses", "guests at venue");
    let ven = ("floor plan", "prepared venue");
    let cat = ("menu", "served meal");
    vec![
        mk("inv-post", "invitation", inv, "PostCo", (120.0, 48.0, 0.99, 4.2), OnDemand),
        mk("inv-print", "invitation", inv, "PrintHub", (90.0, 72.0, 0.97, 3.9), Reserved),
        mk("inv-mail", "invitation", inv, "MailFast", (60.0, 24.0, 0.95, 4.0), Spot),
        mk("shuttle-bus", "shuttle", shu, "CityBus", (300.0, 3.0, 0.96, 3.8), OnDemand),
        mk("shuttle-limo", "shuttle", shu, "LimoCo", (800.0, 2.0, 0.99, 4.8), Reserved),
        mk("shuttle-van", "shuttle", shu, "VanGo", (450.0, 2.5, 0.93, 4.1), Spot),
        mk("venue-hall", "venue setup", ven, "HallCraft", (1500.0, 8.0, 0.98, 4.5), Reserved),
        mk("venue-decor", "venue setup", ven, "DecorPro", (1100.0, 10.0, 0.94, 4.0), OnDemand),
        mk("cater-feast", "catering", cat, "FeastCo", (2400.0, 6.0, 0.97, 4.6), OnDemand),
        mk("cater-chef", "catering", cat, "ChefLine", (1800.0, 5.0, 0.92, 4.1), Spot),
        mk("cater-gourmet", "catering", cat, "GourmetGo", (3000.0, 4.0, 0.99, 4.9), Reserved),
    ]
}

fn log_iss(
    id: String,
    parallel: bool,
    pair: [(&str, &str); 2],
    rp: &str,
    ctx: &Context,
    rating: f64,
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<HistoricalIss> {
    let acts: Vec<Block<(String, String)>> = pair
        .iter()
        .enumerate()
        .map(|(i, (class, _))| Block::Activity((format!("t{}", i + 1), class.to_string())))
        .collect();
    let block = if parallel {
        Block::Parallel(acts.into_iter().map(|a| Block::Seq(vec![a])).collect())
    } else {
        Block::Seq(acts)
    };
    let process = ProcessGraph::from_block(&block);
    let binding: BTreeMap<String, String> =
        pair.iter().enumerate().map(|(i, (_, s))| (format!("t{}", i + 1), s.to_string())).collect();
    let mut outcome_qos = aggregate_qos(&process, &binding, services)?;
    outcome_qos.rating = rating;
    Ok(HistoricalIss { id, process, binding, context: ctx.clone(), outcome_qos, rp_ids: vec![rp.to_string()] })
}

/// Executed wedding solutions, each serving one RP, as a sequence or in
/// parallel.
pub fn wedding_log(
    seed: u64,
    guest_rp: &str,
    banquet_rp: &str,
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<Vec<HistoricalIss>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = wedding_context();
    let other = Context::new("corporate", "suburban", Metric::Time);
    let inv = ["inv-post", "inv-print", "inv-mail"];
    let shu = ["shuttle-bus", "shuttle-limo", "shuttle-van"];
    let ven = ["venue-hall", "venue-decor"];
    let cat = ["cater-feast", "cater-chef", "cater-gourmet"];
    let mut log = Vec::new();
    for i in 0..14 {
        let guest = i % 2 == 0;
        let parallel = (i / 2) % 3 == 2;
        let c = if i % 7 == 6 { &other } else { &ctx };
        let pair = if guest {
            [("invitation", inv[rng.random_range(0..3)]), ("shuttle", shu[rng.random_range(0..3)])]
        } else {
            [("venue setup", ven[rng.random_range(0..2)]), ("catering", cat[rng.random_range(0..3)])]
        };
        let rp = if guest { guest_rp } else { banquet_rp };
        let rating = (rng.random_range(3.0..5.0f64) * 10.0).round() / 10.0;
        log.push(log_iss(format!("iss-{i:02}"), parallel, pair, rp, c, rating, services)?);
    }
    Ok(log)
}

/// Everything the wedding walkthrough needs, derived through the real
/// mining pipeline.
#[derive(Debug, Clone)]
pub struct WeddingScenario {
    pub corpus: Vec<ITree>,
    pub user_tree: ITree,
    pub rps: Vec<RequirementPattern>,
    pub guest_rp: String,
    pub banquet_rp: String,
    pub services: Vec<ServiceSpec>,
    pub log: Vec<HistoricalIss>,
    pub groups: Vec<ServiceClassGroup>,
    pub sps: Vec<ServicePattern>,
    pub pmm: MatchingMatrix,
    pub context: Context,
}

/// Number of service classes in the wedding domain.
pub const WEDDING_K: usize = 4;

pub fn wedding_scenario(seed: u64) -> Result<WeddingScenario> {
    let corpus = wedding_corpus(seed, 12);
    let rps = derive_rps(&corpus, &MiningConfig::default())?;
    let labels = |rp: &RequirementPattern| -> BTreeSet<String> {
        rp.forest.iter().flat_map(|t| t.nodes.values().map(|n| n.normalized_label())).collect()
    };
    let find = |want: &[&str]| -> Result<String> {
        let want: BTreeSet<String> = want.iter().map(|s| normalize_label(s)).collect();
        rps.iter()
            .find(|rp| labels(rp) == want)
            .map(|rp| rp.id.clone())
            .ok_or_else(|| Error::NotFound(format!("mined RP over {want:?}")))
    };
    let guest_rp = find(&["inviting", "pick-up"])?;
    let banquet_rp = find(&["banquet", "venue layout", "food"])?;
    let services = wedding_services();
    let svc_map: BTreeMap<String, ServiceSpec> = services.iter().map(|s| (s.id.clone(), s.clone())).collect();
    let log = wedding_log(seed, &guest_rp, &banquet_rp, &svc_map)?;
    let groups = group_services(&services, WEDDING_K, seed, &log)?;
    let segments = mine_frequent_segments(&log, &groups, 2)?;
    let mined = abstract_sps(&segments, &log, &groups, &svc_map)?;
    let outcomes = outcomes_from_log(&log, &mined);
    let pmm = MatchingMatrix::from_outcomes(&[], &outcomes, DEFAULT_SMOOTHING)?;
    let mut sps: Vec<ServicePattern> = mined.into_iter().map(|m| m.sp).collect();
    pmm.apply_verifying_degree(&mut sps);
    Ok(WeddingScenario {
        corpus,
        user_tree: wedding_tree(),
        rps,
        guest_rp,
        banquet_rp,
        services,
        log,
        groups,
        sps,
        pmm,
        context: wedding_context(),
    })
}

// ---------------------------------------------------------------------------
// Travel log
// ---------------------------------------------------------------------------

pub fn travel_services() -> Vec<ServiceSpec> {
    let mk = |id: &str, function: &str, io: (&str, &str), provider: &str, q: (f64, f64, f64, f64)| {
        let mut s = service(id, function, provider, QosVector::new(q.0, q.1, q.2, q.3), SupplyMode::OnDemand);
        s.inputs = vec![io.0.into()];
        s.outputs = vec![io.1.into()];
        s.user_group = "tourist".into();
        s.layer = Layer::InnerDomain;
        s
    };
    let urban = ("street address", "station arrival");
    let inter = ("departure city", "arrival city");
    vec![
        mk("uber", "urban traffic", urban, "Uber", (18.0, 25.0, 0.97, 4.5)),
        mk("taxi", "urban traffic", urban, "CityCab", (22.0, 30.0, 0.95, 4.0)),
        mk("train", "inter-city traffic", inter, "Rail", (60.0, 180.0, 0.98, 4.2)),
        mk("air", "inter-city traffic", inter, "Airline", (150.0, 90.0, 0.96, 4.4)),
    ]
}

/// Trips that reach a station by Uber or taxi and continue by train or air.
pub fn travel_log(seed: u64, n: usize) -> Result<Vec<HistoricalIss>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let services: BTreeMap<String, ServiceSpec> = travel_services().into_iter().map(|s| (s.id.clone(), s)).collect();
    let ctx = Context::new("tourist", "city", Metric::Time);
    (0..n)
        .map(|i| {
            let urban = ["uber", "taxi"][rng.random_range(0..2)];
            let inter = ["train", "air"][rng.random_range(0..2)];
            let rating = (rng.random_range(3.0..5.0f64) * 10.0).round() / 10.0;
            log_iss(
                format!("trip-{i:02}"),
                false,
                [("urban traffic", urban), ("inter-city traffic", inter)],
                "rp-travel",
                &ctx,
                rating,
                &services,
            )
        })
        .collect()
}

/// Writes every artefact of the scenario into `store`: corpus trees as
/// `req-NN`, patterns, services, the log and the matrix.
pub fn write_scenario(store: &crate::persistence::Store, sc: &WeddingScenario) -> Result<()> {
    for (i, tree) in sc.corpus.iter().enumerate() {
        store.requirements.put(&crate::persistence::RequirementDoc { id: format!("req-{i:02}"), tree: tree.clone() })?;
    }
    for rp in &sc.rps {
        store.rps.put(rp)?;
    }
    for s in &sc.services {
        store.services.put(s)?;
    }
    for sp in &sc.sps {
        store.sps.put(sp)?;
    }
    for iss in &sc.log {
        store.logs.put(iss)?;
    }
    store.pmm.put(&sc.pmm)?;
    Ok(())
}
