//! Simulated execution of a constructed ISS.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Solution;
use crate::error::{Error, Result};
use crate::model::ServiceSpec;
use crate::pmm::MatchOutcome;
use crate::qos::effective_qos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanStep {
    pub activity: String,
    pub rp_id: String,
    pub service_id: String,
    pub service_class: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Plan {
    /// Activities in topological order.
    pub steps: Vec<PlanStep>,
    pub makespan: f64,
    /// One successful outcome per (RP, SP) pair, stamped `now`.
    pub outcomes: Vec<MatchOutcome>,
}

/// Earliest-start schedule of the composed process; every activity lasts
/// its service's effective time, gateways take no time.
pub fn instantiate(solution: &Solution, services: &BTreeMap<String, ServiceSpec>, now: u64) -> Result<Plan> {
    if !solution.feasible {
        return Err(Error::InfeasibleSolution);
    }
    let g = &solution.composed_process;
    let mut nodes: BTreeSet<&str> = g.activities.keys().chain(g.gateways.keys()).map(String::as_str).collect();
    nodes.insert(&g.start);
    nodes.insert(&g.end);
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (*n, 0)).collect();
    for (a, b) in &g.edges {
        succ.entry(a).or_default().push(b);
        *indeg.get_mut(b.as_str()).ok_or_else(|| Error::MalformedProcess(format!("unknown node `{b}`")))? += 1;
    }
    let mut ready: BTreeSet<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut start_at: BTreeMap<&str, f64> = BTreeMap::new();
    let mut finish: BTreeMap<&str, f64> = BTreeMap::new();
    let mut steps = Vec::new();
    while let Some(v) = ready.pop_first() {
        let s = start_at.get(v).copied().unwrap_or(0.0);
        let dur = match g.activities.get(v) {
            Some(act) => {
                let sid = solution.binding.get(v).ok_or_else(|| Error::UnboundActivity(v.to_string()))?;
                let svc = services.get(sid).ok_or_else(|| Error::NotFound(sid.clone()))?;
                let t = effective_qos(svc).time;
                steps.push(PlanStep {
                    activity: v.to_string(),
                    rp_id: solution.rp_of_activity.get(v).cloned().unwrap_or_default(),
                    service_id: sid.clone(),
                    service_class: act.service_class.clone(),
                    start: s,
                    end: s + t,
                });
                t
            }
            None => 0.0,
        };
        finish.insert(v, s + dur);
        for &w in succ.get(v).map(Vec::as_slice).unwrap_or(&[]) {
            let e = start_at.entry(w).or_insert(0.0);
            *e = e.max(s + dur);
            let d = indeg.get_mut(w).expect("known node");
            *d -= 1;
            if *d == 0 {
                ready.insert(w);
            }
        }
    }
    if finish.len() != nodes.len() {
        return Err(Error::MalformedProcess("composed process has a cycle".into()));
    }
    let makespan = finish.values().copied().fold(0.0, f64::max);
    let outcomes = solution
        .per_rp
        .iter()
        .map(|(rp, c)| MatchOutcome {
            rp_id: rp.clone(),
            sp_id: c.sp_id.clone(),
            context: solution.context.clone(),
            success: true,
            quality_score: 1.0,
            difficulty: (1.0 - c.prob).clamp(0.0, 1.0),
            timestamp: now,
        })
        .collect();
    Ok(Plan { steps, makespan, outcomes })
}
