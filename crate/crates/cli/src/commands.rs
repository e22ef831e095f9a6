//! Subcommands.

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bilateral_core::bpmn;
use bilateral_core::construction::{
    build_model, construct, instantiate, Problem, SearchOptions, Solution, Strategy, UserConstraints,
};
use bilateral_core::fixtures::{wedding_tree, travel_log, travel_services, wedding_scenario, write_scenario};
use bilateral_core::kgr::{build_kgr, propose_revisions, recommend};
use bilateral_core::model::{
    Context, DecompositionKind, ITree, Intention, RequirementPattern, ServicePattern, ServiceSpec,
};
use bilateral_core::persistence::{RepoKind, Store};
use bilateral_core::pmm::{outcomes_from_log, MatchingMatrix, DEFAULT_SMOOTHING};
use bilateral_core::requirement_mining::{derive_rps, MiningConfig};
use bilateral_core::selection::{select_rps_exact, select_rps_greedy, SelectionResult, DEFAULT_MAX_REPO};
use bilateral_core::sp_mining::{abstract_sps, group_services, mine_frequent_segments, HistoricalIss};
use bilateral_server::{AppState, ServerConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::io;

/// Domain failures exit with 1; clap reports usage errors itself with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] bilateral_core::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Domain(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        1
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Repository root.
    #[arg(long = "repo", global = true, env = "BILATERAL_REPO_ROOT", default_value = "repo")]
    pub repo_root: PathBuf,
    /// Repeat for more progress output on stderr.
    #[arg(short, long = "verbose", global = true, action = clap::ArgAction::Count)]
    pub verbosity: u8,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl CliConfig {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bilateral", version, about = "Requirement and service pattern matching")]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine requirement patterns from a corpus of intention trees.
    MineRp {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_support: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine service patterns from a historical log and seed the matching matrix.
    MineSp {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        services: PathBuf,
        /// Number of service classes; defaults to ceil(sqrt(services / 2)).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 2)]
        min_support: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the recommendation graph of a corpus.
    BuildKgr {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matching matrix maintenance.
    Pmm {
        #[command(subcommand)]
        command: PmmCommand,
    },
    /// Select requirement patterns covering a tree.
    SelectRp {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        rp_repo: PathBuf,
        #[arg(long)]
        exact: bool,
    },
    /// Construct a service solution for a tree.
    Construct(ConstructArgs),
    /// Serve the HTTP API over the repository.
    Serve {
        #[arg(long, env = "BILATERAL_ADDR", default_value = "127.0.0.1")]
        addr: IpAddr,
        #[arg(long, env = "BILATERAL_PORT", default_value_t = 8080)]
        port: u16,
    },
    /// Write the synthetic wedding and travel fixtures.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the wedding scenario end to end.
    Demo {
        #[arg(long, value_parser = parse_strategy, default_value = "meta")]
        strategy: Strategy,
    },
}

#[derive(Debug, Subcommand)]
pub enum PmmCommand {
    /// Re-derive every probability from the accumulated statistics.
    Recompute {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        /// A `.json` file, or a repository whose matrix is replaced.
        out: PathBuf,
        #[arg(long)]
        smoothing: Option<f64>,
        /// Recompute stamp; defaults to the previous one.
        #[arg(long)]
        as_of: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    rp_repo: PathBuf,
    #[arg(long)]
    sp_repo: PathBuf,
    /// Service repository; defaults to the one beside the SP repository.
    #[arg(long)]
    services: Option<PathBuf>,
    /// Matrix file or repository.
    #[arg(long)]
    pmm: PathBuf,
    /// Context as JSON, a JSON file, or `userClass|environment|objective`.
    #[arg(long, value_parser = io::read_context)]
    context: Context,
    #[arg(long, value_parser = parse_strategy, default_value = "meta")]
    strategy: Strategy,
    /// Use exact rather than greedy selection.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    deadline: Option<f64>,
    #[arg(long)]
    heuristic_iters: Option<usize>,
    /// Write `solution.json` and `solution.bpmn` here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: bilateral_core::Error| e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config;
    match cli.command {
        Command::MineRp { corpus, min_support, out } => mine_rp(&cfg, &corpus, min_support, &out),
        Command::MineSp { log, services, k, min_support, out } => mine_sp(&cfg, &log, &services, k, min_support, &out),
        Command::BuildKgr { corpus, out } => {
            let trees = io::read_corpus(&corpus)?;
            let g = build_kgr(&trees)?;
            io::write_json(&out, &g)?;
            emit(&cfg, &json!({ "nodes": g.nodes.len(), "edges": g.edges.len(), "out": out }), || {
                format!("{} labels, {} edges -> {}", g.nodes.len(), g.edges.len(), out.display())
            })
        }
        Command::Pmm { command: PmmCommand::Recompute { input, out, smoothing, as_of } } => {
            let mut m = io::read_matrix(&input)?;
            m.recompute(smoothing.unwrap_or(m.smoothing), as_of.unwrap_or(m.last_recompute))?;
            io::write_matrix(&out, &m)?;
            emit(&cfg, &json!({ "version": m.version, "cells": m.cells.len(), "out": out }), || {
                format!("version {} with {} cells -> {}", m.version, m.cells.len(), out.display())
            })
        }
        Command::SelectRp { tree, rp_repo, exact } => {
            let tree = io::read_tree(&tree)?;
            let repo: Vec<RequirementPattern> = io::list(&rp_repo)?;
            let sel = select(&tree, &repo, exact)?;
            emit(&cfg, &sel, || selection_table(&sel))
        }
        Command::Construct(args) => construct_cmd(&cfg, args),
        Command::Serve { addr, port } => {
            let state = AppState::open(&cfg.repo_root, ServerConfig::default())?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(bilateral_server::serve(Arc::new(state), SocketAddr::new(addr, port)))?;
            Ok(())
        }
        Command::GenFixtures { out } => gen_fixtures(&cfg, &out),
        Command::Demo { strategy } => demo(&cfg, strategy),
    }
}

fn emit<T: Serialize>(cfg: &CliConfig, v: &T, table: impl FnOnce() -> String) -> Result<()> {
    match cfg.format {
        Format::Json => print_line(&serde_json::to_string_pretty(v).map_err(bilateral_core::Error::from)?),
        Format::Table => print_line(&table()),
    }
}

/// A closed downstream pipe (`| head`) is not an error.
fn print_line(s: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{s}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(bilateral_core::Error::from(e).into()),
        _ => Ok(()),
    }
}

fn select(tree: &ITree, repo: &[RequirementPattern], exact: bool) -> Result<SelectionResult> {
    Ok(if exact { select_rps_exact(tree, repo, DEFAULT_MAX_REPO)? } else { select_rps_greedy(tree, repo) })
}

fn selection_table(sel: &SelectionResult) -> String {
    let mut out = format!("chosen: {}\ncoverage: {:.3}\n", sel.chosen.join(", "), sel.coverage_ratio);
    for (node, rp) in &sel.coverage_map {
        out.push_str(&format!("  {node:<20} {rp}\n"));
    }
    let uncovered: Vec<&str> = sel.uncovered.iter().map(String::as_str).collect();
    out.push_str(&format!("uncovered: {}", uncovered.join(", ")));
    out
}

fn mine_rp(cfg: &CliConfig, corpus: &Path, min_support: usize, out: &Path) -> Result<()> {
    let trees = io::read_corpus(corpus)?;
    cfg.info(format!("mining {} trees", trees.len()));
    let rps = derive_rps(&trees, &MiningConfig { min_support, ..MiningConfig::default() })?;
    let repo = io::create::<RequirementPattern>(out)?;
    for rp in &rps {
        repo.put(rp)?;
    }
    let ids: Vec<&str> = rps.iter().map(|r| r.id.as_str()).collect();
    emit(cfg, &json!({ "written": ids, "out": repo.dir() }), || format!("{} patterns -> {}", rps.len(), repo.dir().display()))
}

fn default_k(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().ceil() as usize).max(1)
}

fn mine_sp(cfg: &CliConfig, log: &Path, services: &Path, k: Option<usize>, min_support: usize, out: &Path) -> Result<()> {
    let log: Vec<HistoricalIss> = io::list(log)?;
    let services: Vec<ServiceSpec> = io::list(services)?;
    let k = k.unwrap_or_else(|| default_k(services.len()));
    cfg.info(format!("{} solutions, {} services, k = {k}", log.len(), services.len()));
    let svc_map: BTreeMap<String, ServiceSpec> = services.iter().map(|s| (s.id.clone(), s.clone())).collect();
    let groups = group_services(&services, k, cfg.seed, &log)?;
    let segments = mine_frequent_segments(&log, &groups, min_support)?;
    let mined = abstract_sps(&segments, &log, &groups, &svc_map)?;
    let pmm = MatchingMatrix::from_outcomes(&[], &outcomes_from_log(&log, &mined), DEFAULT_SMOOTHING)?;
    let mut sps: Vec<ServicePattern> = mined.into_iter().map(|m| m.sp).collect();
    pmm.apply_verifying_degree(&mut sps);
    let repo = io::create::<ServicePattern>(out)?;
    for sp in &sps {
        repo.put(sp)?;
    }
    let pmm_repo = io::create::<MatchingMatrix>(&io::root_for(out, RepoKind::Sp))?;
    pmm_repo.put(&pmm)?;
    let ids: Vec<&str> = sps.iter().map(|s| s.id.as_str()).collect();
    emit(cfg, &json!({ "k": k, "written": ids, "pmmCells": pmm.cells.len(), "out": repo.dir() }), || {
        format!("{} patterns over {k} classes -> {}", sps.len(), repo.dir().display())
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ConstructOutput<'a> {
    selection: &'a SelectionResult,
    solution: &'a Solution,
    /// Present whenever the solution violates a constraint.
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasible: Option<bool>,
    bpmn: &'a str,
}

fn construct_cmd(cfg: &CliConfig, a: ConstructArgs) -> Result<()> {
    let tree = io::read_tree(&a.tree)?;
    let rps: Vec<RequirementPattern> = io::list(&a.rp_repo)?;
    let sps: Vec<ServicePattern> = io::list(&a.sp_repo)?;
    let services_path = a.services.unwrap_or_else(|| io::root_for(&a.sp_repo, RepoKind::Sp));
    let services: BTreeMap<String, ServiceSpec> =
        io::list::<ServiceSpec>(&services_path)?.into_iter().map(|s| (s.id.clone(), s)).collect();
    let pmm = io::read_matrix(&a.pmm)?;
    let sel = select(&tree, &rps, a.exact)?;
    let user = UserConstraints { budget: a.budget, deadline: a.deadline, ..UserConstraints::default() };
    let model = build_model(&sel, &tree, &a.context, &user)?;
    let problem = Problem::new(&model, &pmm, &sps, &services)?;
    cfg.info(format!("search space {}", problem.space_size()));
    let iters = a.heuristic_iters.unwrap_or(ServerConfig::default().heuristic_iters);
    let c = construct(&problem, a.strategy, cfg.seed, iters, &SearchOptions::default())?;
    let xml = bpmn::to_xml("solution", &c.solution.composed_process);
    let out = ConstructOutput {
        selection: &sel,
        solution: &c.solution,
        infeasible: (!c.solution.feasible).then_some(true),
        bpmn: &xml,
    };
    if let Some(dir) = a.out {
        io::write_json(&dir.join("solution.json"), &out.solution)?;
        std::fs::write(dir.join("solution.bpmn"), &xml)?;
        return emit(cfg, &json!({ "out": dir, "feasible": c.solution.feasible }), || solution_table(&c.solution));
    }
    emit(cfg, &out, || solution_table(&c.solution))
}

fn solution_table(s: &Solution) -> String {
    let mut out = format!(
        "strategy: {:?}\nfeasible: {}\ncost: {:.4}  time: {:.4}  availability: {:.4}\n",
        s.strategy, s.feasible, s.aggregate.cost, s.aggregate.time, s.aggregate.availability
    );
    for (rp, ch) in &s.per_rp {
        out.push_str(&format!("  {rp:<28} {} (instance {}, p = {:.4})\n", ch.sp_id, ch.instance_index, ch.prob));
    }
    out.trim_end().to_string()
}

fn gen_fixtures(cfg: &CliConfig, out: &Path) -> Result<()> {
    let sc = wedding_scenario(cfg.seed)?;
    write_scenario(&Store::create(out)?, &sc)?;
    io::write_json(&out.join("wedding-tree.json"), &sc.user_tree)?;
    io::write_json(&out.join("context.json"), &sc.context)?;
    let travel = Store::create(&out.join("travel"))?;
    for s in travel_services() {
        travel.services.put(&s)?;
    }
    let log = travel_log(cfg.seed, 30)?;
    for iss in &log {
        travel.logs.put(iss)?;
    }
    emit(
        cfg,
        &json!({
            "out": out,
            "trees": sc.corpus.len(),
            "rps": sc.rps.len(),
            "services": sc.services.len(),
            "sps": sc.sps.len(),
            "log": sc.log.len(),
            "travelLog": log.len(),
        }),
        || {
            format!(
                "{} trees, {} RPs, {} services, {} SPs, {} wedding and {} travel solutions -> {}",
                sc.corpus.len(),
                sc.rps.len(),
                sc.services.len(),
                sc.sps.len(),
                sc.log.len(),
                log.len(),
                out.display()
            )
        },
    )
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Feedback {
    rp_id: String,
    sp_id: String,
    context: String,
    before: f64,
    after: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DemoReport {
    recommendations: Vec<String>,
    revisions: usize,
    selected_rps: Vec<(String, Vec<String>)>,
    uncovered: Vec<String>,
    chosen_sps: BTreeMap<String, String>,
    cost: f64,
    time: f64,
    feasible: bool,
    feedback: Vec<Feedback>,
}

/// Elicitation, selection, construction and outcome feedback on the
/// wedding fixture. Fails unless the solution is feasible and feedback
/// raises every used matrix cell.
fn demo(cfg: &CliConfig, strategy: Strategy) -> Result<()> {
    let sc = wedding_scenario(cfg.seed)?;
    let kgr = build_kgr(&sc.corpus)?;

    // The user has typed everything but the guest pick-up.
    let full = wedding_tree();
    let mut tree = ITree::new(full.nodes["wedding"].clone());
    tree.owner = full.owner.clone();
    let and = DecompositionKind::And;
    tree.add_child("wedding", and, full.nodes["banquet"].clone());
    tree.add_child("banquet", and, full.nodes["venue-layout"].clone());
    tree.add_child("banquet", and, full.nodes["food"].clone());
    tree.add_child("wedding", and, full.nodes["planning"].clone());
    tree.add_child("wedding", and, full.nodes["inviting"].clone());
    let recs = recommend(&kgr, &tree, "wedding", "pick", 5)?;
    let label = recs
        .first()
        .map(|r| r.label.clone())
        .ok_or_else(|| bilateral_core::Error::NotFound("recommendation for `pick`".into()))?;
    cfg.info(format!("recommended `{label}`"));
    tree.add_child("wedding", and, Intention::new("pick-up", label));
    tree.add_dependency("pick-up", "inviting");
    tree.validate()?;
    let revisions = propose_revisions(&tree, &sc.rps, 5);

    let sel = select_rps_greedy(&tree, &sc.rps);
    let model = build_model(&sel, &tree, &sc.context, &UserConstraints::default())?;
    let services: BTreeMap<String, ServiceSpec> = sc.services.iter().map(|s| (s.id.clone(), s.clone())).collect();
    let problem = Problem::new(&model, &sc.pmm, &sc.sps, &services)?;
    let sol = construct(&problem, strategy, cfg.seed, ServerConfig::default().heuristic_iters, &SearchOptions::default())?
        .solution;
    if !sol.feasible {
        return Err(bilateral_core::Error::InfeasibleSolution.into());
    }

    let now = sc.pmm.last_recompute + 1;
    let plan = instantiate(&sol, &services, now)?;
    let mut pmm = sc.pmm.clone();
    let before: Vec<f64> = plan
        .outcomes
        .iter()
        .map(|o| pmm.cell(&o.rp_id, &o.sp_id, &o.context).map_or(0.0, |c| c.prob))
        .collect();
    for o in &plan.outcomes {
        pmm.record_outcome(o)?;
    }
    pmm.recompute(pmm.smoothing, now)?;
    let mut feedback = Vec::new();
    for (o, b) in plan.outcomes.iter().zip(before) {
        let after = pmm.cell(&o.rp_id, &o.sp_id, &o.context).map_or(0.0, |c| c.prob);
        if after <= b {
            return Err(bilateral_core::Error::Range(format!(
                "feedback did not raise ({}, {}): {b} -> {after}",
                o.rp_id, o.sp_id
            ))
            .into());
        }
        feedback.push(Feedback { rp_id: o.rp_id.clone(), sp_id: o.sp_id.clone(), context: o.context.key(), before: b, after });
    }

    let labels = |id: &str| -> Vec<String> {
        sc.rps
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.forest.iter().flat_map(|t| t.preorder().into_iter().map(|n| t.nodes[n].label.clone())).collect())
            .unwrap_or_default()
    };
    let report = DemoReport {
        recommendations: recs.iter().map(|r| r.label.clone()).collect(),
        revisions: revisions.len(),
        selected_rps: sel.chosen.iter().map(|id| (id.clone(), labels(id))).collect(),
        uncovered: sel.uncovered.iter().cloned().collect(),
        chosen_sps: sol.per_rp.iter().map(|(rp, c)| (rp.clone(), c.sp_id.clone())).collect(),
        cost: sol.aggregate.cost,
        time: sol.aggregate.time,
        feasible: sol.feasible,
        feedback,
    };
    emit(cfg, &report, || {
        let mut out = String::from("selected requirement patterns:\n");
        for (id, l) in &report.selected_rps {
            out.push_str(&format!("  {id}: {}\n", l.join(", ")));
        }
        out.push_str(&format!("uncovered: {}\nchosen service patterns:\n", report.uncovered.join(", ")));
        for (rp, sp) in &report.chosen_sps {
            out.push_str(&format!("  {rp} -> {sp}\n"));
        }
        out.push_str(&format!("cost: {:.2}  time: {:.2}  feasible: {}\nfeedback:\n", report.cost, report.time, report.feasible));
        for f in &report.feedback {
            out.push_str(&format!("  {} / {}: {:.4} -> {:.4}\n", f.rp_id, f.sp_id, f.before, f.after));
        }
        out.trim_end().to_string()
    })
}
