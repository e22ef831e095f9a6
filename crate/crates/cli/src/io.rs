//! Reading and writing repositories and loose files.

use std::fs;
use std::path::{Path, PathBuf};

use bilateral_core::model::ITree;
use bilateral_core::persistence::{Document, RepoKind, Repository, RequirementDoc, PMM_ID};
use bilateral_core::pmm::MatchingMatrix;
use bilateral_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// The store root for a path naming either a root or the kind's own
/// directory inside one.
pub fn root_for(path: &Path, kind: RepoKind) -> PathBuf {
    let dir = Path::new(kind.dir_name());
    if path.ends_with(dir) {
        let mut root = path.to_path_buf();
        for _ in dir.components() {
            root.pop();
        }
        if root.as_os_str().is_empty() {
            root.push(".");
        }
        root
    } else {
        path.to_path_buf()
    }
}

pub fn open<T: Document + Serialize + DeserializeOwned>(path: &Path) -> Result<Repository<T>> {
    Repository::open(&root_for(path, T::KIND))
}

pub fn create<T: Document + Serialize + DeserializeOwned>(path: &Path) -> Result<Repository<T>> {
    Repository::create(&root_for(path, T::KIND))
}

pub fn list<T: Document + Serialize + DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    open::<T>(path)?.list()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::InvalidDocument(format!("{}: {e}", path.display())))
}

/// A tree file holding either a bare tree or a stored requirement.
pub fn read_tree(path: &Path) -> Result<ITree> {
    let v: serde_json::Value = read_json(path)?;
    let tree = if v.get("tree").is_some() {
        serde_json::from_value::<RequirementDoc>(v).map(|d| d.tree)
    } else {
        serde_json::from_value::<ITree>(v)
    }
    .map_err(|e| Error::InvalidDocument(format!("{}: {e}", path.display())))?;
    tree.validate()?;
    Ok(tree)
}

/// Trees of a requirement repository, or of every `*.json` file directly in
/// `dir`, in file-name order.
pub fn read_corpus(dir: &Path) -> Result<Vec<ITree>> {
    let root = root_for(dir, RepoKind::Requirement);
    if root.join(RepoKind::Requirement.dir_name()).is_dir() {
        return Ok(Repository::<RequirementDoc>::open(&root)?.list()?.into_iter().map(|d| d.tree).collect());
    }
    if !dir.is_dir() {
        return Err(Error::MissingDir(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    files.sort();
    files.iter().map(|p| read_tree(p)).collect()
}

/// A matrix file, or the matrix of a repository.
pub fn read_matrix(path: &Path) -> Result<MatchingMatrix> {
    let m = if path.is_file() {
        read_json::<MatchingMatrix>(path)?
    } else {
        open::<MatchingMatrix>(path)?.get(PMM_ID)?
    };
    m.validate()?;
    Ok(m)
}

/// Writes a `.json` file, or otherwise the matrix of a repository.
pub fn write_matrix(path: &Path, m: &MatchingMatrix) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        write_json(path, m)
    } else {
        create::<MatchingMatrix>(path)?.put(m).map(|_| ())
    }
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_context(arg: &str) -> std::result::Result<bilateral_core::model::Context, String> {
    let arg = arg.trim();
    if !arg.starts_with('{') && !arg.contains('|') && Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?;
        return serde_json::from_str(&text).map_err(|e| format!("invalid context JSON in {arg}: {e}"));
    }
    if arg.starts_with('{') {
        serde_json::from_str(arg).map_err(|e| format!("invalid context JSON: {e}"))
    } else {
        bilateral_core::model::Context::from_key(arg)
            .ok_or_else(|| "context must be JSON, a JSON file, or `userClass|environment|objective`".to_string())
    }
}
