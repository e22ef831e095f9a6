//! Optimization model over the selected RPs and its evaluation. A decision
//! assigns each RP one candidate: an SP from the matching matrix together
//! with one of that SP's concrete instances.

mod plan;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use plan::{instantiate, Plan, PlanStep};
pub use search::{
    construct, construct_exact, construct_heuristic, construct_metaheuristic, construct_rule_based, Construction,
    GaConfig, SearchOptions, Strategy, DEFAULT_MAX_SPACE, HEURISTIC_TOP_SPS, PENALTY,
};

use crate::error::{Error, Result};
use crate::model::{
    Context, Direction, ITree, Metric, OptObjective, QosVector, ServicePattern, ServiceSpec, SpInstance, SupplyMode,
};
use crate::pmm::MatchingMatrix;
use crate::process::{Block, ProcessGraph};
use crate::qos::{acc, aggregate_qos, effective_qos, Acc};
use crate::selection::SelectionResult;

/// Minimum raw availability required of spot-mode services.
pub const SPOT_AVAILABILITY_FLOOR: f64 = 0.9;

/// Limits supplied by the user on top of the tree's objectives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
    /// Upper bound on the time of any single activity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time: Option<f64>,
    /// RP id to the SP id it must be bound to.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed_bindings: BTreeMap<String, String>,
}

/// `g(x) <= 0` constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Inequality {
    Budget { limit: f64 },
    Deadline { limit: f64 },
    ResponseTime { limit: f64 },
    SpotAvailabilityFloor { floor: f64 },
}

impl Inequality {
    fn value(&self, m: &Metrics) -> f64 {
        match *self {
            Inequality::Budget { limit } => m.qos.cost - limit,
            Inequality::Deadline { limit } => m.qos.time - limit,
            Inequality::ResponseTime { limit } => m.max_activity_time - limit,
            Inequality::SpotAvailabilityFloor { floor } => floor - m.min_spot_availability,
        }
    }

    /// Divisor turning a positive `g` into a normalized violation.
    fn scale(&self) -> f64 {
        match *self {
            Inequality::Budget { limit } | Inequality::Deadline { limit } | Inequality::ResponseTime { limit } => {
                limit.abs().max(1.0)
            }
            Inequality::SpotAvailabilityFloor { .. } => 1.0,
        }
    }

    fn bound(&self) -> f64 {
        match *self {
            Inequality::Budget { limit } | Inequality::Deadline { limit } | Inequality::ResponseTime { limit } => limit,
            Inequality::SpotAvailabilityFloor { floor } => floor,
        }
    }
}

/// `h(x) = 0` constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Equality {
    #[serde(rename_all = "camelCase")]
    FixedBinding { rp_id: String, sp_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizationModel {
    /// Decision coordinates, in selection order.
    pub rps: Vec<String>,
    pub objectives: Vec<OptObjective>,
    pub weights: Vec<f64>,
    pub inequalities: Vec<Inequality>,
    pub equalities: Vec<Equality>,
    /// `(before, after)` RP pairs.
    #[serde(default)]
    pub precedence: Vec<(String, String)>,
    pub context: Context,
}

impl OptimizationModel {
    pub fn validate(&self) -> Result<()> {
        if self.rps.is_empty() {
            return Err(Error::EmptySelection);
        }
        let ids: BTreeSet<&str> = self.rps.iter().map(String::as_str).collect();
        if ids.len() != self.rps.len() {
            return Err(Error::InvalidConfig("duplicate RP in model".into()));
        }
        if self.objectives.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one objective".into()));
        }
        if self.weights.len() != self.objectives.len() {
            return Err(Error::InvalidConfig("one weight per objective is required".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig("weights must be positive".into()));
        }
        for o in &self.objectives {
            if o.direction != o.metric.natural_direction() {
                return Err(Error::InvalidConfig(format!("{:?} must be {:?}", o.metric, o.metric.natural_direction())));
            }
        }
        for g in &self.inequalities {
            if !g.bound().is_finite() {
                return Err(Error::InvalidConfig("constraint bounds must be finite".into()));
            }
        }
        for Equality::FixedBinding { rp_id, .. } in &self.equalities {
            if !ids.contains(rp_id.as_str()) {
                return Err(Error::UnknownRp(rp_id.clone()));
            }
        }
        for (a, b) in &self.precedence {
            for r in [a, b] {
                if !ids.contains(r.as_str()) {
                    return Err(Error::UnknownRp(r.clone()));
                }
            }
        }
        self.layers().map(|_| ())
    }

    /// RP indices grouped by longest-path depth in the precedence order.
    pub fn layers(&self) -> Result<Vec<Vec<usize>>> {
        let n = self.rps.len();
        let index: BTreeMap<&str, usize> = self.rps.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut succ = vec![BTreeSet::new(); n];
        let mut indeg = vec![0usize; n];
        for (a, b) in &self.precedence {
            let (Some(&a), Some(&b)) = (index.get(a.as_str()), index.get(b.as_str())) else {
                continue;
            };
            if a == b {
                return Err(Error::CyclicPrecedence);
            }
            if succ[a].insert(b) {
                indeg[b] += 1;
            }
        }
        let mut depth = vec![0usize; n];
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &w in &succ[v] {
                depth[w] = depth[w].max(depth[v] + 1);
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(w);
                }
            }
        }
        if seen != n {
            return Err(Error::CyclicPrecedence);
        }
        let levels = depth.iter().max().map_or(0, |d| d + 1);
        let mut out = vec![Vec::new(); levels];
        for (i, d) in depth.into_iter().enumerate() {
            out[d].push(i);
        }
        Ok(out)
    }
}

/// Builds the optimization model for the selected RPs.
pub fn build_model(
    selection: &SelectionResult,
    tree: &ITree,
    context: &Context,
    user: &UserConstraints,
) -> Result<OptimizationModel> {
    if selection.chosen.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut objectives: Vec<OptObjective> = Vec::new();
    for id in tree.preorder() {
        if let Some(o) = tree.node(id).and_then(|n| n.opt_objective) {
            if objectives.iter().all(|x| x.metric != o.metric) {
                objectives.push(o);
            }
        }
    }
    if objectives.is_empty() {
        objectives.push(OptObjective::natural(Metric::Cost));
    }

    let mut inequalities = Vec::new();
    if let Some(limit) = user.budget {
        inequalities.push(Inequality::Budget { limit });
    }
    if let Some(limit) = user.deadline {
        inequalities.push(Inequality::Deadline { limit });
    }
    if let Some(limit) = user.response_time {
        inequalities.push(Inequality::ResponseTime { limit });
    }
    inequalities.push(Inequality::SpotAvailabilityFloor { floor: SPOT_AVAILABILITY_FLOOR });

    let chosen: BTreeSet<&str> = selection.chosen.iter().map(String::as_str).collect();
    let mut equalities = Vec::new();
    for (rp, sp) in &user.fixed_bindings {
        if !chosen.contains(rp.as_str()) {
            return Err(Error::UnknownRp(rp.clone()));
        }
        equalities.push(Equality::FixedBinding { rp_id: rp.clone(), sp_id: sp.clone() });
    }

    // An intention is served by every RP covering it or one of its descendants.
    let served_by = |id: &str| -> BTreeSet<&str> {
        tree.subtree_ids(id).into_iter().filter_map(|n| selection.coverage_map.get(n).map(String::as_str)).collect()
    };
    let mut precedence = BTreeSet::new();
    for (from, to) in &tree.dependencies {
        for before in served_by(to) {
            for after in served_by(from) {
                if before != after {
                    precedence.insert((before.to_string(), after.to_string()));
                }
            }
        }
    }

    let model = OptimizationModel {
        rps: selection.chosen.clone(),
        weights: vec![1.0; objectives.len()],
        objectives,
        inequalities,
        equalities,
        precedence: precedence.into_iter().collect(),
        context: context.clone(),
    };
    model.validate()?;
    Ok(model)
}

/// One value of a decision coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sp_id: String,
    pub instance: usize,
    pub prob: f64,
    /// Position of the SP in the RP's ranked slice.
    pub sp_rank: usize,
    acc: Acc,
    activities: usize,
    reserved: usize,
    max_activity_time: f64,
    min_spot_availability: f64,
}

impl Candidate {
    fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Cost | Metric::Profit => self.acc.cost,
            Metric::Time => self.acc.time,
            Metric::Quality => self.acc.availability,
            Metric::Satisfaction => self.acc.qos().rating,
            Metric::ResourceUtilization => ratio(self.reserved, self.activities),
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Everything a decision is measured by.
#[derive(Debug, Clone, PartialEq)]
struct Metrics {
    qos: QosVector,
    resource_utilization: f64,
    max_activity_time: f64,
    min_spot_availability: f64,
}

fn metric_value(m: &Metrics, metric: Metric) -> f64 {
    match metric {
        Metric::Cost | Metric::Profit => m.qos.cost,
        Metric::Time => m.qos.time,
        Metric::Quality => m.qos.availability,
        Metric::Satisfaction => m.qos.rating,
        Metric::ResourceUtilization => m.resource_utilization,
    }
}

fn orient(o: &OptObjective, v: f64) -> f64 {
    match o.direction {
        Direction::Minimize => v,
        Direction::Maximize => -v,
    }
}

/// Score of one decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub constraints: Vec<f64>,
    pub violation: f64,
    pub scalarized: f64,
    pub feasible: bool,
}

impl Evaluation {
    /// Infeasible points order by violation first.
    pub fn key(&self) -> (f64, f64) {
        (self.violation, self.scalarized)
    }

    pub fn better_than(&self, other: &Evaluation) -> bool {
        self.key() < other.key()
    }
}

/// A model bound to its candidate sets, ready to be searched.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: OptimizationModel,
    pub candidates: Vec<Vec<Candidate>>,
    layers: Vec<Vec<usize>>,
    sps: BTreeMap<String, ServicePattern>,
    services: BTreeMap<String, ServiceSpec>,
    /// Oriented `(lo, span)` per objective for min-max normalization.
    bounds: Vec<(f64, f64)>,
}

impl Problem {
    /// Resolves each RP's candidates through the matrix slice for the
    /// model's context, keeping SPs present in `sp_repo`.
    pub fn new(
        model: &OptimizationModel,
        pmm: &MatchingMatrix,
        sp_repo: &[ServicePattern],
        services: &BTreeMap<String, ServiceSpec>,
    ) -> Result<Problem> {
        model.validate()?;
        let repo: BTreeMap<&str, &ServicePattern> = sp_repo.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut used_sps = BTreeMap::new();
        let mut used_services = BTreeMap::new();
        let mut candidates = Vec::with_capacity(model.rps.len());
        for rp in &model.rps {
            let slice = pmm.lookup(rp, &model.context, usize::MAX);
            let mut cands = Vec::new();
            let mut rank = 0;
            for entry in &slice.entries {
                let Some(sp) = repo.get(entry.sp_id.as_str()) else { continue };
                if sp.instances.is_empty() {
                    continue;
                }
                let block = sp.process.to_block()?;
                for (i, inst) in sp.instances.iter().enumerate() {
                    cands.push(candidate(sp, i, inst, &block, entry.prob, rank, services, &mut used_services)?);
                }
                used_sps.insert(sp.id.clone(), (*sp).clone());
                rank += 1;
            }
            if cands.is_empty() {
                return Err(Error::UnknownRp(rp.clone()));
            }
            candidates.push(cands);
        }
        let mut p = Problem {
            model: model.clone(),
            candidates,
            layers: model.layers()?,
            sps: used_sps,
            services: used_services,
            bounds: Vec::new(),
        };
        p.bounds = p.normalization_bounds();
        Ok(p)
    }

    /// Number of decision vectors.
    pub fn services(&self) -> &BTreeMap<String, ServiceSpec> {
        &self.services
    }

    pub fn space_size(&self) -> u128 {
        self.candidates.iter().fold(1u128, |a, c| a.saturating_mul(c.len() as u128))
    }

    /// Per objective: the decisions taking each RP's best and worst candidate
    /// on that metric give the normalization range.
    fn normalization_bounds(&self) -> Vec<(f64, f64)> {
        self.model
            .objectives
            .iter()
            .map(|o| {
                let pick = |worst: bool| -> Vec<usize> {
                    self.candidates
                        .iter()
                        .map(|cs| {
                            let mut best = 0;
                            for (i, c) in cs.iter().enumerate() {
                                let (v, b) = (orient(o, c.metric(o.metric)), orient(o, cs[best].metric(o.metric)));
                                if (worst && v > b) || (!worst && v < b) {
                                    best = i;
                                }
                            }
                            best
                        })
                        .collect()
                };
                let lo = orient(o, metric_value(&self.fast_metrics(&pick(false)), o.metric));
                let hi = orient(o, metric_value(&self.fast_metrics(&pick(true)), o.metric));
                let (lo, hi) = (lo.min(hi), lo.max(hi));
                let span = hi - lo;
                (lo, if span > 1e-12 { span } else { 1.0 })
            })
            .collect()
    }

    fn check(&self, d: &[usize]) -> Result<()> {
        if d.len() != self.candidates.len() || d.iter().zip(&self.candidates).any(|(&i, c)| i >= c.len()) {
            return Err(Error::InvalidConfig("decision vector does not fit the problem".into()));
        }
        Ok(())
    }

    /// Metrics composed algebraically from per-candidate aggregates.
    fn fast_metrics(&self, d: &[usize]) -> Metrics {
        let mut total = Acc::EMPTY;
        let (mut reserved, mut activities) = (0, 0);
        let (mut max_act, mut min_spot) = (0.0f64, 1.0f64);
        for layer in &self.layers {
            let mut layer_time = 0.0f64;
            for &r in layer {
                let c = &self.candidates[r][d[r]];
                total.cost += c.acc.cost;
                total.availability *= c.acc.availability;
                total.rating_sum += c.acc.rating_sum;
                total.count += c.acc.count;
                layer_time = layer_time.max(c.acc.time);
                reserved += c.reserved;
                activities += c.activities;
                max_act = max_act.max(c.max_activity_time);
                min_spot = min_spot.min(c.min_spot_availability);
            }
            total.time += layer_time;
        }
        Metrics {
            qos: total.qos(),
            resource_utilization: ratio(reserved, activities),
            max_activity_time: max_act,
            min_spot_availability: min_spot,
        }
    }

    fn score(&self, d: &[usize], m: &Metrics) -> Evaluation {
        let objectives: Vec<f64> = self.model.objectives.iter().map(|o| metric_value(m, o.metric)).collect();
        let scalarized = self
            .model
            .objectives
            .iter()
            .zip(&objectives)
            .zip(&self.bounds)
            .zip(&self.model.weights)
            .map(|(((o, &v), &(lo, span)), &w)| w * (orient(o, v) - lo) / span)
            .sum();
        let mut constraints = Vec::with_capacity(self.model.inequalities.len() + self.model.equalities.len());
        let mut violation = 0.0;
        let mut feasible = true;
        for g in &self.model.inequalities {
            let v = g.value(m);
            if v > 0.0 {
                feasible = false;
                violation += v / g.scale();
            }
            constraints.push(v);
        }
        for Equality::FixedBinding { rp_id, sp_id } in &self.model.equalities {
            let r = self.model.rps.iter().position(|x| x == rp_id).expect("validated");
            let v = if &self.candidates[r][d[r]].sp_id == sp_id { 0.0 } else { 1.0 };
            if v != 0.0 {
                feasible = false;
                violation += v;
            }
            constraints.push(v);
        }
        Evaluation { objectives, constraints, violation, scalarized, feasible }
    }

    /// Scores a decision vector without building its process graph.
    pub fn evaluate(&self, d: &[usize]) -> Evaluation {
        self.score(d, &self.fast_metrics(d))
    }

    /// Materializes a decision: stitches the chosen SP processes, binds
    /// services and measures the composed process.
    pub fn solution(&self, d: &[usize], strategy: Strategy) -> Result<Solution> {
        self.check(d)?;
        let mut binding = BTreeMap::new();
        let mut rp_of_activity = BTreeMap::new();
        let mut per_rp = BTreeMap::new();
        let mut blocks: Vec<Option<Block<(String, String)>>> = vec![None; d.len()];
        for (r, &ci) in d.iter().enumerate() {
            let c = &self.candidates[r][ci];
            let sp = &self.sps[&c.sp_id];
            let inst = &sp.instances[c.instance];
            let prefix = format!("r{r}.");
            let block = sp.process.to_labeled_block()?.map(&mut |(id, class): &(String, String)| {
                (format!("{prefix}{id}"), class.clone())
            });
            for (act, svc) in &inst.binding {
                binding.insert(format!("{prefix}{act}"), svc.clone());
                rp_of_activity.insert(format!("{prefix}{act}"), self.model.rps[r].clone());
            }
            blocks[r] = Some(block);
            per_rp.insert(
                self.model.rps[r].clone(),
                RpChoice { sp_id: c.sp_id.clone(), instance_index: c.instance, instance: inst.clone(), prob: c.prob },
            );
        }
        let seq: Vec<Block<(String, String)>> = self
            .layers
            .iter()
            .map(|layer| {
                let mut branches: Vec<_> = layer.iter().map(|&r| blocks[r].take().expect("each RP once")).collect();
                if branches.len() == 1 {
                    branches.pop().unwrap()
                } else {
                    Block::Parallel(branches.into_iter().map(|b| Block::Seq(vec![b])).collect())
                }
            })
            .collect();
        let composed = ProcessGraph::from_block(&Block::Seq(seq).normalized());
        let aggregate = aggregate_qos(&composed, &binding, &self.services)?;
        let fast = self.fast_metrics(d);
        let metrics = Metrics { qos: aggregate.clone(), ..fast };
        let eval = self.score(d, &metrics);
        Ok(Solution {
            strategy,
            context: self.model.context.clone(),
            per_rp,
            composed_process: composed,
            binding,
            rp_of_activity,
            aggregate,
            feasible: eval.feasible,
            objective_values: eval.objectives,
            constraint_values: eval.constraints,
            violation: eval.violation,
            scalarized: eval.scalarized,
            decision: d.to_vec(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn candidate(
    sp: &ServicePattern,
    instance: usize,
    inst: &SpInstance,
    block: &Block<String>,
    prob: f64,
    sp_rank: usize,
    services: &BTreeMap<String, ServiceSpec>,
    used: &mut BTreeMap<String, ServiceSpec>,
) -> Result<Candidate> {
    let mut missing = None;
    let (mut reserved, mut max_act, mut min_spot) = (0, 0.0f64, 1.0f64);
    let bound = block.map(&mut |act: &String| {
        match inst.binding.get(act).and_then(|s| services.get(s)) {
            Some(s) => {
                let q = effective_qos(s);
                max_act = max_act.max(q.time);
                match s.supply_mode {
                    SupplyMode::Reserved => reserved += 1,
                    SupplyMode::Spot => min_spot = min_spot.min(s.qos.availability),
                    SupplyMode::OnDemand => {}
                }
                used.entry(s.id.clone()).or_insert_with(|| s.clone());
                q
            }
            None => {
                missing.get_or_insert_with(|| format!("{}:{act}", sp.id));
                QosVector::new(0.0, 0.0, 1.0, 0.0)
            }
        }
    });
    if let Some(m) = missing {
        return Err(Error::UnboundActivity(m));
    }
    Ok(Candidate {
        sp_id: sp.id.clone(),
        instance,
        prob,
        sp_rank,
        acc: acc(&bound),
        activities: block.activity_count(),
        reserved,
        max_activity_time: max_act,
        min_spot_availability: min_spot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RpChoice {
    pub sp_id: String,
    pub instance_index: usize,
    pub instance: SpInstance,
    /// Matching probability of the SP for the RP in this context.
    pub prob: f64,
}

/// A constructed ISS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Solution {
    pub strategy: Strategy,
    pub context: Context,
    pub per_rp: BTreeMap<String, RpChoice>,
    pub composed_process: ProcessGraph,
    /// Composed activity id to service id.
    pub binding: BTreeMap<String, String>,
    pub rp_of_activity: BTreeMap<String, String>,
    pub aggregate: QosVector,
    pub feasible: bool,
    pub objective_values: Vec<f64>,
    /// Inequality values followed by equality residuals.
    pub constraint_values: Vec<f64>,
    pub violation: f64,
    pub scalarized: f64,
    pub decision: Vec<usize>,
}

#[cfg(test)]
mod tests;
