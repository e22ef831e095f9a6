use std::collections::BTreeMap;

use super::*;
use crate::fixtures::{chain_sp, default_context, pattern, service};
use crate::model::{DecompositionKind, Intention};
use crate::pmm::Cell;

fn services(list: &[(&str, f64, f64, SupplyMode)]) -> BTreeMap<String, ServiceSpec> {
    list.iter()
        .map(|&(id, cost, time, mode)| {
            (id.to_string(), service(id, "f", "p", QosVector::new(cost, time, 0.95, 4.0), mode))
        })
        .collect()
}

fn matrix(entries: &[(&str, &str, f64)]) -> MatchingMatrix {
    let key = default_context().key();
    let mut cells: Vec<Cell> = entries
        .iter()
        .map(|&(rp, sp, prob)| Cell {
            rp_id: rp.into(),
            sp_id: sp.into(),
            context_key: key.clone(),
            uses: 0,
            quality_sum: 0.0,
            difficulty_sum: 0.0,
            prob,
        })
        .collect();
    cells.sort_by(|a, b| (&a.rp_id, &a.sp_id).cmp(&(&b.rp_id, &b.sp_id)));
    MatchingMatrix { cells, ..MatchingMatrix::new() }
}

fn model(rps: &[&str], inequalities: Vec<Inequality>) -> OptimizationModel {
    OptimizationModel {
        rps: rps.iter().map(|s| s.to_string()).collect(),
        objectives: vec![OptObjective::natural(Metric::Cost)],
        weights: vec![1.0],
        inequalities,
        equalities: Vec::new(),
        precedence: Vec::new(),
        context: default_context(),
    }
}

fn selection(chosen: &[&str], map: &[(&str, &str)]) -> SelectionResult {
    SelectionResult {
        chosen: chosen.iter().map(|s| s.to_string()).collect(),
        coverage_map: map.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        uncovered: Default::default(),
        coverage_ratio: 1.0,
        achievable: Default::default(),
        rationale: Vec::new(),
    }
}

fn none() -> SearchOptions {
    SearchOptions::default()
}

#[test]
fn model_objectives_and_budget() {
    let mut t = ITree::new(Intention::new("w", "wedding").with_objective(Metric::Cost));
    t.add_child("w", DecompositionKind::And, Intention::new("a", "inviting"));
    t.add_child("w", DecompositionKind::And, Intention::new("b", "pick-up").with_objective(Metric::Time));
    let sel = selection(&["rp1", "rp2"], &[("a", "rp1"), ("b", "rp2")]);
    let m = build_model(&sel, &t, &default_context(), &UserConstraints { budget: Some(100.0), ..Default::default() })
        .unwrap();
    assert_eq!(m.objectives[0], OptObjective::natural(Metric::Cost));
    assert_eq!(m.objectives[1], OptObjective::natural(Metric::Time));
    assert_eq!(m.inequalities[0], Inequality::Budget { limit: 100.0 });

    let plain = ITree::new(Intention::new("w", "wedding"));
    let m = build_model(&selection(&["rp1"], &[]), &plain, &default_context(), &UserConstraints::default()).unwrap();
    assert_eq!(m.objectives, vec![OptObjective::natural(Metric::Cost)]);

    let err = build_model(&selection(&[], &[]), &plain, &default_context(), &UserConstraints::default()).unwrap_err();
    assert!(matches!(err, Error::EmptySelection));
}

#[test]
fn budget_constraint_value() {
    let svc = services(&[("s1", 120.0, 1.0, SupplyMode::OnDemand)]);
    let sp = chain_sp("sp1", &["f"], &[vec!["s1"]], &svc).unwrap();
    let m = model(&["rp1"], vec![Inequality::Budget { limit: 100.0 }]);
    let p = Problem::new(&m, &matrix(&[("rp1", "sp1", 1.0)]), &[sp], &svc).unwrap();
    let e = p.evaluate(&[0]);
    assert_eq!(e.constraints, vec![20.0]);
    assert!(!e.feasible);
    assert!(matches!(construct_exact(&p, DEFAULT_MAX_SPACE, &none()), Err(Error::NoFeasibleSolution)));
}

#[test]
fn dependencies_become_precedence() {
    let mut t = ITree::new(Intention::new("w", "wedding"));
    t.add_child("w", DecompositionKind::And, Intention::new("b", "banquet"));
    t.add_child("b", DecompositionKind::And, Intention::new("f", "food"));
    t.add_child("w", DecompositionKind::And, Intention::new("i", "inviting"));
    t.add_dependency("b", "i");
    let sel = selection(&["rpB", "rpI"], &[("f", "rpB"), ("i", "rpI")]);
    let m = build_model(&sel, &t, &default_context(), &UserConstraints::default()).unwrap();
    assert_eq!(m.precedence, vec![("rpI".to_string(), "rpB".to_string())]);
    assert_eq!(m.layers().unwrap(), vec![vec![1], vec![0]]);

    let mut cyclic = m.clone();
    cyclic.precedence.push(("rpB".into(), "rpI".into()));
    assert!(matches!(cyclic.layers(), Err(Error::CyclicPrecedence)));
}

#[test]
fn forced_single_binding() {
    let svc = services(&[("s1", 3.0, 1.0, SupplyMode::OnDemand)]);
    let sp = chain_sp("sp1", &["f"], &[vec!["s1"]], &svc).unwrap();
    let p = Problem::new(&model(&["rp1"], vec![]), &matrix(&[("rp1", "sp1", 1.0)]), &[sp], &svc).unwrap();
    let c = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap();
    assert_eq!(c.solution.per_rp["rp1"].sp_id, "sp1");
    assert_eq!(c.solution.aggregate.cost, 3.0);
    assert!(c.solution.feasible);
}

/// 2 RPs x 3 SPs x 2 instances; every SP is a single activity so the cost
/// of a decision is just the sum of two effective service costs.
fn two_by_three(budget: f64) -> (Problem, BTreeMap<String, ServiceSpec>, Vec<ServicePattern>) {
    let costs = [[12.0, 9.0], [7.0, 15.0], [11.0, 10.0], [8.0, 13.0], [20.0, 6.0], [9.0, 9.0]];
    let modes = [SupplyMode::OnDemand, SupplyMode::Spot, SupplyMode::Reserved];
    let mut list = Vec::new();
    for (k, cs) in costs.iter().enumerate() {
        for (i, c) in cs.iter().enumerate() {
            list.push((format!("s{k}{i}"), *c, 1.0 + i as f64, modes[(k + i) % 3]));
        }
    }
    let svc: BTreeMap<String, ServiceSpec> = list
        .iter()
        .map(|(id, c, t, m)| (id.clone(), service(id, "f", "p", QosVector::new(*c, *t, 0.95, 4.0), *m)))
        .collect();
    let mut sps = Vec::new();
    let mut entries = Vec::new();
    for k in 0..6 {
        let (a, b) = (format!("s{k}0"), format!("s{k}1"));
        sps.push(chain_sp(&format!("sp{k}"), &["f"], &[vec![a.as_str()], vec![b.as_str()]], &svc).unwrap());
        entries.push((if k < 3 { "rp1" } else { "rp2" }, format!("sp{k}"), 0.5 - 0.1 * (k % 3) as f64));
    }
    let entries: Vec<(&str, &str, f64)> = entries.iter().map(|(r, s, p)| (*r, s.as_str(), *p)).collect();
    let p = Problem::new(
        &model(&["rp1", "rp2"], vec![Inequality::Budget { limit: budget }]),
        &matrix(&entries),
        &sps,
        &svc,
    )
    .unwrap();
    (p, svc, sps)
}

/// Independent enumeration straight from the service table.
fn naive_min_cost(svc: &BTreeMap<String, ServiceSpec>, budget: f64) -> Option<f64> {
    let eff = |id: &str| {
        let s = &svc[id];
        if s.supply_mode == SupplyMode::Spot { s.qos.cost * 0.5 } else { s.qos.cost }
    };
    let mut best: Option<f64> = None;
    for a in 0..3 {
        for ai in 0..2 {
            for b in 3..6 {
                for bi in 0..2 {
                    let c = eff(&format!("s{a}{ai}")) + eff(&format!("s{b}{bi}"));
                    if c <= budget && best.is_none_or(|x| c < x) {
                        best = Some(c);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn exact_matches_naive_enumeration() {
    for budget in [5.0, 10.0, 14.0, 18.0, 40.0] {
        let (p, svc, _) = two_by_three(budget);
        let got = construct_exact(&p, DEFAULT_MAX_SPACE, &none());
        match naive_min_cost(&svc, budget) {
            Some(c) => assert_eq!(got.unwrap().solution.aggregate.cost, c, "budget {budget}"),
            None => assert!(matches!(got, Err(Error::NoFeasibleSolution)), "budget {budget}"),
        }
    }
}

#[test]
fn search_space_limit() {
    let (p, _, _) = two_by_three(40.0);
    assert_eq!(p.space_size(), 36);
    assert!(matches!(construct_exact(&p, 35, &none()), Err(Error::SearchSpaceTooLarge { size: 36, max: 35 })));
}

#[test]
fn rule_takes_top_sp_then_cheapest_instance() {
    let svc = services(&[
        ("x10", 10.0, 1.0, SupplyMode::OnDemand),
        ("x8", 8.0, 1.0, SupplyMode::OnDemand),
        ("y", 1.0, 1.0, SupplyMode::OnDemand),
    ]);
    let sp1 = chain_sp("SP1", &["f"], &[vec!["x10"], vec!["x8"]], &svc).unwrap();
    let sp2 = chain_sp("SP2", &["f"], &[vec!["y"]], &svc).unwrap();
    let p = Problem::new(
        &model(&["rp"], vec![]),
        &matrix(&[("rp", "SP1", 0.7), ("rp", "SP2", 0.3)]),
        &[sp1, sp2],
        &svc,
    )
    .unwrap();
    let r = construct_rule_based(&p).unwrap().solution;
    assert_eq!(r.per_rp["rp"].sp_id, "SP1");
    assert_eq!(r.aggregate.cost, 8.0);
    let e = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution;
    assert!(r.scalarized >= e.scalarized);
    assert_eq!(e.per_rp["rp"].sp_id, "SP2");

    let unknown = Problem::new(&model(&["rp", "other"], vec![]), &matrix(&[("rp", "SP1", 1.0)]), &[], &svc);
    assert!(matches!(unknown, Err(Error::UnknownRp(r)) if r == "rp"));
}

#[test]
fn heuristic_properties() {
    let (p, _, _) = two_by_three(40.0);
    let rule = construct_rule_based(&p).unwrap().solution;
    let h0 = construct_heuristic(&p, 0, &none()).unwrap().solution;
    assert_eq!(h0.decision, rule.decision);
    let h = construct_heuristic(&p, 100, &none()).unwrap().solution;
    let e = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution;
    assert!(h.scalarized <= rule.scalarized);
    assert!(e.scalarized <= h.scalarized + 1e-12);
    // Already optimal start stays put.
    let again = construct_heuristic(&p, 100, &none()).unwrap().solution;
    assert_eq!(again.decision, h.decision);
}

#[test]
fn heuristic_swap_restores_feasibility() {
    let svc = services(&[
        ("a-top", 50.0, 1.0, SupplyMode::OnDemand),
        ("a-alt", 5.0, 1.0, SupplyMode::OnDemand),
        ("b-top", 5.0, 1.0, SupplyMode::OnDemand),
    ]);
    let a1 = chain_sp("A1", &["f"], &[vec!["a-top"]], &svc).unwrap();
    let a2 = chain_sp("A2", &["f"], &[vec!["a-alt"]], &svc).unwrap();
    let b1 = chain_sp("B1", &["f"], &[vec!["b-top"]], &svc).unwrap();
    let p = Problem::new(
        &model(&["ra", "rb"], vec![Inequality::Budget { limit: 20.0 }]),
        &matrix(&[("ra", "A1", 0.8), ("ra", "A2", 0.2), ("rb", "B1", 1.0)]),
        &[a1, a2, b1],
        &svc,
    )
    .unwrap();
    assert!(!construct_rule_based(&p).unwrap().solution.feasible);
    let h = construct_heuristic(&p, 10, &none()).unwrap().solution;
    assert!(h.feasible);
    assert_eq!(h.per_rp["ra"].sp_id, "A2");
}

#[test]
fn fixed_binding_equality() {
    let (mut p, _, _) = two_by_three(40.0);
    p.model.equalities.push(Equality::FixedBinding { rp_id: "rp1".into(), sp_id: "sp2".into() });
    let e = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution;
    assert_eq!(e.per_rp["rp1"].sp_id, "sp2");
    assert_eq!(*e.constraint_values.last().unwrap(), 0.0);
}

#[test]
fn metaheuristic_determinism_and_degenerate_case() {
    let (p, _, _) = two_by_three(14.0);
    let cfg = GaConfig { population_size: 10, generations: 20, mutation_rate: 0.2, seed: 7 };
    let a = construct_metaheuristic(&p, &cfg, &none()).unwrap();
    let b = construct_metaheuristic(&p, &cfg, &none()).unwrap();
    assert_eq!(a, b);

    let one = |generations| GaConfig { population_size: 1, generations, mutation_rate: 0.0, seed: 3 };
    let start = construct_metaheuristic(&p, &one(0), &none()).unwrap().solution;
    let end = construct_metaheuristic(&p, &one(50), &none()).unwrap().solution;
    assert_eq!(start, end);
    assert_eq!(start.scalarized, p.evaluate(&start.decision).scalarized);
}

#[test]
fn multi_objective_front_is_nondominated() {
    let (p, svc, sps) = two_by_three(40.0);
    let mut m = p.model.clone();
    m.objectives.push(OptObjective::natural(Metric::Time));
    m.weights.push(1.0);
    let entries: Vec<(String, String, f64)> = p
        .candidates
        .iter()
        .zip(&m.rps)
        .flat_map(|(cs, rp)| cs.iter().filter(|c| c.instance == 0).map(move |c| (rp.clone(), c.sp_id.clone(), c.prob)))
        .collect();
    let entries: Vec<(&str, &str, f64)> = entries.iter().map(|(r, s, x)| (r.as_str(), s.as_str(), *x)).collect();
    let p = Problem::new(&m, &matrix(&entries), &sps, &svc).unwrap();
    for c in [
        construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap(),
        construct_metaheuristic(&p, &GaConfig { seed: 1, ..GaConfig::default() }, &none()).unwrap(),
    ] {
        assert!(!c.pareto.is_empty());
        for a in &c.pareto {
            for b in &c.pareto {
                let (x, y) = (&a.objective_values, &b.objective_values);
                let dom = x.iter().zip(y).all(|(u, v)| u <= v) && x.iter().zip(y).any(|(u, v)| u < v);
                assert!(!dom, "front member dominates another");
            }
        }
        let mut ds: Vec<_> = c.pareto.iter().map(|s| s.decision.clone()).collect();
        ds.dedup();
        assert_eq!(ds.len(), c.pareto.len());
    }
}

#[test]
fn aggregate_recomputes_exactly() {
    let (p, _, _) = two_by_three(40.0);
    let s = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution;
    let again = aggregate_qos(&s.composed_process, &s.binding, &p.services).unwrap();
    assert_eq!(again, s.aggregate);
}

fn two_step_plan(parallel: bool) -> (Solution, BTreeMap<String, ServiceSpec>) {
    let svc = services(&[("s2", 1.0, 2.0, SupplyMode::OnDemand), ("s3", 1.0, 3.0, SupplyMode::OnDemand)]);
    let block = if parallel {
        Block::Parallel(vec![
            Block::Seq(vec![Block::Activity(("a1".to_string(), "f".to_string()))]),
            Block::Seq(vec![Block::Activity(("a2".to_string(), "f".to_string()))]),
        ])
    } else {
        Block::Seq(vec![
            Block::Activity(("a1".to_string(), "f".to_string())),
            Block::Activity(("a2".to_string(), "f".to_string())),
        ])
    };
    let sp = pattern("sp", ProcessGraph::from_block(&block), &[vec!["s2", "s3"]], &svc).unwrap();
    let p = Problem::new(&model(&["rp"], vec![]), &matrix(&[("rp", "sp", 1.0)]), &[sp], &svc).unwrap();
    (construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution, svc)
}

#[test]
fn instantiate_schedules() {
    let (s, svc) = two_step_plan(false);
    let plan = instantiate(&s, &svc, 9).unwrap();
    let stamps: Vec<(f64, f64)> = plan.steps.iter().map(|x| (x.start, x.end)).collect();
    assert_eq!(stamps, vec![(0.0, 2.0), (2.0, 5.0)]);
    assert_eq!(plan.makespan, 5.0);
    assert_eq!(plan.outcomes.len(), 1);
    assert_eq!(plan.outcomes[0].timestamp, 9);

    let (s, svc) = two_step_plan(true);
    let plan = instantiate(&s, &svc, 0).unwrap();
    assert!(plan.steps.iter().all(|x| x.start == 0.0));
    assert_eq!(plan.makespan, 3.0);

    let mut bad = s.clone();
    bad.feasible = false;
    assert!(matches!(instantiate(&bad, &svc, 0), Err(Error::InfeasibleSolution)));
}

#[test]
fn instantiate_respects_precedence() {
    let (mut p, svc, _) = two_by_three(40.0);
    p.model.precedence = vec![("rp2".into(), "rp1".into())];
    p.layers = p.model.layers().unwrap();
    let s = construct_exact(&p, DEFAULT_MAX_SPACE, &none()).unwrap().solution;
    let plan = instantiate(&s, &svc, 0).unwrap();
    let end_rp2 = plan.steps.iter().filter(|x| x.rp_id == "rp2").map(|x| x.end).fold(0.0, f64::max);
    let start_rp1 = plan.steps.iter().filter(|x| x.rp_id == "rp1").map(|x| x.start).fold(f64::INFINITY, f64::min);
    assert!(end_rp2 <= start_rp1);
}
