//! The four construction strategies: exhaustive, PMM rule, hill climbing
//! and a genetic algorithm (NSGA-II style for several objectives).

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Evaluation, Problem, Solution};
use crate::error::{Error, Result};
use crate::model::Direction;

/// Default limit on the number of decision vectors `construct_exact` visits.
pub const DEFAULT_MAX_SPACE: u128 = 1_000_000;
/// Hill-climbing moves only consider this many top-ranked SPs per RP.
pub const HEURISTIC_TOP_SPS: usize = 5;
/// Fitness penalty per unit of normalized constraint violation.
pub const PENALTY: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Strategy {
    Exact,
    Rule,
    Heuristic,
    Meta,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Strategy::Exact),
            "rule" | "rule-based" => Ok(Strategy::Rule),
            "heuristic" => Ok(Strategy::Heuristic),
            "meta" | "metaheuristic" => Ok(Strategy::Meta),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Satisfactory mode stops at the first feasible decision found; the time
/// budget caps any search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchOptions {
    #[serde(default)]
    pub satisfactory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_ms: Option<u64>,
}

struct Clock(Option<(Instant, Duration)>);

impl Clock {
    fn new(opts: &SearchOptions) -> Clock {
        Clock(opts.time_budget_ms.map(|ms| (Instant::now(), Duration::from_millis(ms))))
    }

    fn expired(&self) -> bool {
        self.0.is_some_and(|(t, d)| t.elapsed() >= d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig { population_size: 40, generations: 100, mutation_rate: 0.2, seed: 0 }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::InvalidConfig("populationSize must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::InvalidConfig("mutationRate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Construction {
    pub solution: Solution,
    /// Nondominated feasible solutions; empty when the strategy does not
    /// produce a front.
    pub pareto: Vec<Solution>,
    pub evaluations: u64,
}

/// Dispatches to a strategy with its default parameters.
pub fn construct(
    problem: &Problem,
    strategy: Strategy,
    seed: u64,
    heuristic_iters: usize,
    opts: &SearchOptions,
) -> Result<Construction> {
    match strategy {
        Strategy::Exact => construct_exact(problem, DEFAULT_MAX_SPACE, opts),
        Strategy::Rule => construct_rule_based(problem),
        Strategy::Heuristic => construct_heuristic(problem, heuristic_iters, opts),
        Strategy::Meta => construct_metaheuristic(problem, &GaConfig { seed, ..GaConfig::default() }, opts),
    }
}

fn oriented(problem: &Problem, e: &Evaluation) -> Vec<f64> {
    problem
        .model
        .objectives
        .iter()
        .zip(&e.objectives)
        .map(|(o, &v)| if o.direction == Direction::Minimize { v } else { -v })
        .collect()
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Visits every decision vector in lexicographic order and keeps the best
/// by (violation, scalarized); ties keep the earlier vector.
pub fn construct_exact(problem: &Problem, max_space: u128, opts: &SearchOptions) -> Result<Construction> {
    let size = problem.space_size();
    if size > max_space {
        return Err(Error::SearchSpaceTooLarge { size, max: max_space });
    }
    let clock = Clock::new(opts);
    let multi = problem.model.objectives.len() > 1;
    let n = problem.candidates.len();
    let mut d = vec![0usize; n];
    let mut best: Option<(Vec<usize>, Evaluation)> = None;
    let mut front: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut evaluations = 0u64;
    'outer: loop {
        let e = problem.evaluate(&d);
        evaluations += 1;
        if e.feasible {
            if multi {
                let o = oriented(problem, &e);
                if !front.iter().any(|(_, f)| dominates(f, &o)) {
                    front.retain(|(_, f)| !dominates(&o, f));
                    front.push((d.clone(), o));
                }
            }
            if best.as_ref().is_none_or(|(_, b)| e.better_than(b)) {
                best = Some((d.clone(), e));
            }
            if opts.satisfactory {
                break;
            }
        }
        if clock.expired() {
            break;
        }
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            d[i] += 1;
            if d[i] < problem.candidates[i].len() {
                break;
            }
            d[i] = 0;
        }
    }
    let (bd, _) = best.ok_or(Error::NoFeasibleSolution)?;
    let solution = problem.solution(&bd, Strategy::Exact)?;
    let pareto = if multi {
        front.sort_by(|a, b| a.0.cmp(&b.0));
        front.iter().map(|(d, _)| problem.solution(d, Strategy::Exact)).collect::<Result<_>>()?
    } else {
        vec![solution.clone()]
    };
    Ok(Construction { solution, pareto, evaluations })
}

fn rule_decision(problem: &Problem) -> Vec<usize> {
    let first = &problem.model.objectives[0];
    problem
        .candidates
        .iter()
        .map(|cs| {
            let mut best = 0;
            for (i, c) in cs.iter().enumerate().filter(|(_, c)| c.sp_rank == 0) {
                let v = |c: &super::Candidate| {
                    let m = c.metric(first.metric);
                    if first.direction == Direction::Minimize { m } else { -m }
                };
                if v(c) < v(&cs[best]) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Per RP: the top-ranked SP, then its instance best on the first objective.
pub fn construct_rule_based(problem: &Problem) -> Result<Construction> {
    let d = rule_decision(problem);
    let solution = problem.solution(&d, Strategy::Rule)?;
    Ok(Construction { solution, pareto: Vec::new(), evaluations: 1 })
}

/// Best-improvement hill climbing from the rule-based decision. A move
/// replaces one RP's candidate with another whose SP ranks within the top
/// [`HEURISTIC_TOP_SPS`]; that covers both SP swaps and instance changes.
pub fn construct_heuristic(problem: &Problem, iters: usize, opts: &SearchOptions) -> Result<Construction> {
    let clock = Clock::new(opts);
    let mut d = rule_decision(problem);
    let mut cur = problem.evaluate(&d);
    let mut evaluations = 1u64;
    for _ in 0..iters {
        if (opts.satisfactory && cur.feasible) || clock.expired() {
            break;
        }
        let mut best: Option<(usize, usize, Evaluation)> = None;
        for r in 0..d.len() {
            let keep = d[r];
            for (ci, c) in problem.candidates[r].iter().enumerate() {
                if ci == keep || c.sp_rank >= HEURISTIC_TOP_SPS {
                    continue;
                }
                d[r] = ci;
                let e = problem.evaluate(&d);
                evaluations += 1;
                if best.as_ref().is_none_or(|(_, _, b)| e.better_than(b)) {
                    best = Some((r, ci, e));
                }
            }
            d[r] = keep;
        }
        match best {
            Some((r, ci, e)) if e.better_than(&cur) => {
                d[r] = ci;
                cur = e;
            }
            _ => break,
        }
    }
    let solution = problem.solution(&d, Strategy::Heuristic)?;
    Ok(Construction { solution, pareto: Vec::new(), evaluations })
}

/// Per RP: SP groups as `(first candidate index, instance count, weight)`.
fn sampling_table(problem: &Problem) -> Vec<Vec<(usize, usize, f64)>> {
    problem
        .candidates
        .iter()
        .map(|cs| {
            let mut groups: Vec<(usize, usize, f64)> = Vec::new();
            for (i, c) in cs.iter().enumerate() {
                match groups.last_mut() {
                    Some(g) if cs[g.0].sp_id == c.sp_id => g.1 += 1,
                    _ => groups.push((i, 1, c.prob.max(0.0))),
                }
            }
            if groups.iter().all(|g| g.2 == 0.0) {
                groups.iter_mut().for_each(|g| g.2 = 1.0);
            }
            groups
        })
        .collect()
}

fn sample(table: &[(usize, usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = table.iter().map(|g| g.2).sum();
    let mut x = rng.random::<f64>() * total;
    let mut pick = table.len() - 1;
    for (i, g) in table.iter().enumerate() {
        if x < g.2 {
            pick = i;
            break;
        }
        x -= g.2;
    }
    let (start, count, _) = table[pick];
    start + rng.random_range(0..count)
}

struct Individual {
    d: Vec<usize>,
    e: Evaluation,
    fitness: f64,
    objectives: Vec<f64>,
    rank: usize,
    crowding: f64,
}

fn individual(problem: &Problem, d: Vec<usize>) -> Individual {
    let e = problem.evaluate(&d);
    let fitness = e.scalarized + PENALTY * e.violation;
    let objectives = oriented(problem, &e);
    Individual { d, e, fitness, objectives, rank: 0, crowding: 0.0 }
}

/// Constraint domination: feasible beats infeasible, lower violation beats
/// higher, and feasible points compare by Pareto dominance.
fn c_dominates(a: &Individual, b: &Individual) -> bool {
    match (a.e.feasible, b.e.feasible) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.e.violation < b.e.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

/// Assigns front ranks and crowding distances; returns the fronts.
fn rank_population(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && c_dominates(&pop[i], &pop[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            pop[i].rank = fronts.len();
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    for front in &fronts {
        for &i in front {
            pop[i].crowding = 0.0;
        }
        let m = pop[front[0]].objectives.len();
        for k in 0..m {
            let mut idx = front.clone();
            idx.sort_by(|&a, &b| pop[a].objectives[k].total_cmp(&pop[b].objectives[k]).then(a.cmp(&b)));
            let (lo, hi) = (pop[idx[0]].objectives[k], pop[idx[idx.len() - 1]].objectives[k]);
            pop[idx[0]].crowding = f64::INFINITY;
            pop[idx[idx.len() - 1]].crowding = f64::INFINITY;
            if hi > lo {
                for w in 1..idx.len().saturating_sub(1) {
                    let gap = (pop[idx[w + 1]].objectives[k] - pop[idx[w - 1]].objectives[k]) / (hi - lo);
                    pop[idx[w]].crowding += gap;
                }
            }
        }
    }
    fronts
}

fn nsga_better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

/// Genetic search over decision vectors. Initial genes and mutations
/// sample an SP by its matching probability, then one of its instances
/// uniformly. With one objective, parents and children compete on penalized
/// fitness; with several, survivors are ranked by constraint-aware
/// nondominated sorting and crowding distance.
pub fn construct_metaheuristic(problem: &Problem, cfg: &GaConfig, opts: &SearchOptions) -> Result<Construction> {
    cfg.validate()?;
    let clock = Clock::new(opts);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let table = sampling_table(problem);
    let n = problem.candidates.len();
    let multi = problem.model.objectives.len() > 1;
    let mut evaluations = 0u64;

    let mut pop: Vec<Individual> = (0..cfg.population_size)
        .map(|_| {
            let d = table.iter().map(|t| sample(t, &mut rng)).collect();
            evaluations += 1;
            individual(problem, d)
        })
        .collect();
    if multi {
        rank_population(&mut pop);
    }

    let fitness_cmp = |a: &Individual, b: &Individual| a.fitness.total_cmp(&b.fitness);
    for _ in 0..cfg.generations {
        if (opts.satisfactory && pop.iter().any(|i| i.e.feasible)) || clock.expired() {
            break;
        }
        let pick = |rng: &mut ChaCha8Rng, pop: &[Individual]| -> usize {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            let a_wins = if multi { !nsga_better(&pop[b], &pop[a]) } else { fitness_cmp(&pop[a], &pop[b]) != Ordering::Greater };
            if a_wins { a } else { b }
        };
        let mut children = Vec::with_capacity(cfg.population_size);
        while children.len() < cfg.population_size {
            let (a, b) = (pick(&mut rng, &pop), pick(&mut rng, &pop));
            let mut d = Vec::with_capacity(n);
            for r in 0..n {
                let gene = if rng.random_bool(0.5) { pop[a].d[r] } else { pop[b].d[r] };
                d.push(gene);
            }
            for (r, gene) in d.iter_mut().enumerate() {
                if cfg.mutation_rate > 0.0 && rng.random::<f64>() < cfg.mutation_rate {
                    *gene = sample(&table[r], &mut rng);
                }
            }
            evaluations += 1;
            children.push(individual(problem, d));
        }
        if multi {
            pop.extend(children);
            let fronts = rank_population(&mut pop);
            let mut keep = Vec::with_capacity(cfg.population_size);
            for mut front in fronts {
                if keep.len() + front.len() <= cfg.population_size {
                    keep.extend(front);
                } else {
                    front.sort_by(|&a, &b| pop[b].crowding.total_cmp(&pop[a].crowding).then(a.cmp(&b)));
                    keep.extend(front.into_iter().take(cfg.population_size - keep.len()));
                }
                if keep.len() == cfg.population_size {
                    break;
                }
            }
            keep.sort_unstable();
            let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
            pop = keep.into_iter().map(|i| slots[i].take().expect("kept once")).collect();
            rank_population(&mut pop);
        } else {
            // Parents and children compete; the fittest population_size survive.
            let want = pop.len();
            pop.extend(children);
            let mut idx: Vec<usize> = (0..pop.len()).collect();
            idx.sort_by(|&a, &b| fitness_cmp(&pop[a], &pop[b]).then(a.cmp(&b)));
            idx.truncate(want);
            idx.sort_unstable();
            let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
            pop = idx.into_iter().map(|i| slots[i].take().expect("kept once")).collect();
        }
    }

    let best = (0..pop.len())
        .min_by(|&a, &b| {
            let (x, y) = (&pop[a], &pop[b]);
            let ord = if multi {
                x.e.violation.total_cmp(&y.e.violation).then(x.e.scalarized.total_cmp(&y.e.scalarized))
            } else {
                fitness_cmp(x, y)
            };
            ord.then(a.cmp(&b))
        })
        .expect("non-empty");
    let solution = problem.solution(&pop[best].d, Strategy::Meta)?;
    let mut pareto = Vec::new();
    if multi {
        let mut seen: Vec<&Vec<usize>> = Vec::new();
        let mut front: Vec<&Individual> = pop.iter().filter(|i| i.rank == 0 && i.e.feasible).collect();
        front.sort_by(|a, b| a.d.cmp(&b.d));
        for ind in front {
            if !seen.contains(&&ind.d) {
                seen.push(&ind.d);
                pareto.push(problem.solution(&ind.d, Strategy::Meta)?);
            }
        }
    }
    Ok(Construction { solution, pareto, evaluations })
}
