use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constraint kind mismatch: {0}")]
    KindMismatch(String),
    #[error("invalid intention tree ({} violation(s))", .0.len())]
    InvalidTree(Vec<Violation>),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown focus node `{0}`")]
    UnknownFocusNode(String),
    #[error("repository holds {size} patterns, exact selection is limited to {max}")]
    RepoTooLarge { size: usize, max: usize },
    #[error("k = {k} exceeds the number of services ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("historical log is empty")]
    EmptyLog,
    #[error("value out of range: {0}")]
    Range(String),
    #[error("activity `{0}` has no bound service")]
    UnboundActivity(String),
    #[error("malformed process: {0}")]
    MalformedProcess(String),
    #[error("selection is empty")]
    EmptySelection,
    #[error("search space of {size} exceeds limit {max}")]
    SearchSpaceTooLarge { size: u128, max: u128 },
    #[error("no feasible solution")]
    NoFeasibleSolution,
    #[error("unknown requirement pattern `{0}`")]
    UnknownRp(String),
    #[error("solution is infeasible")]
    InfeasibleSolution,
    #[error("precedence between requirement patterns is cyclic")]
    CyclicPrecedence,
    #[error("directory does not exist: {}", .0.display())]
    MissingDir(PathBuf),
    #[error("corrupt document {}: {reason}", .path.display())]
    CorruptDocument { path: PathBuf, reason: String },
    #[error("`{0}` not found")]
    NotFound(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("xml: {0}")]
    Xml(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::KindMismatch(_) => "kind_mismatch",
            Error::InvalidTree(_) => "invalid_tree",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptyCluster => "empty_cluster",
            Error::InvalidConfig(_) => "invalid_config",
            Error::UnknownFocusNode(_) => "unknown_focus_node",
            Error::RepoTooLarge { .. } => "repo_too_large",
            Error::KTooLarge { .. } => "k_too_large",
            Error::EmptyLog => "empty_log",
            Error::Range(_) => "range",
            Error::UnboundActivity(_) => "unbound_activity",
            Error::MalformedProcess(_) => "malformed_process",
            Error::EmptySelection => "empty_selection",
            Error::SearchSpaceTooLarge { .. } => "search_space_too_large",
            Error::NoFeasibleSolution => "no_feasible_solution",
            Error::UnknownRp(_) => "unknown_rp",
            Error::InfeasibleSolution => "infeasible_solution",
            Error::CyclicPrecedence => "cyclic_precedence",
            Error::MissingDir(_) => "missing_dir",
            Error::CorruptDocument { .. } => "corrupt_document",
            Error::NotFound(_) => "not_found",
            Error::InvalidDocument(_) => "invalid_document",
            Error::Xml(_) => "xml",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
