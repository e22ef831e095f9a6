//! File-backed repositories: one document per entity, one directory per
//! kind, ids as file stems.
//!
//! Writes go to a temp file that is synced and renamed into place. Writers
//! hold an exclusive lock on `<dir>/.lock`, readers a shared one, so a
//! reader sees a whole old or a whole new document.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bpmn;
use crate::error::{Error, Result};
use crate::model::{ITree, RequirementPattern, ServicePattern, ServiceSpec};
use crate::pmm::MatchingMatrix;
use crate::sp_mining::HistoricalIss;

/// Environment variable overriding the repository root.
pub const ROOT_ENV: &str = "BILATERAL_REPO_ROOT";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RepoKind {
    Requirement,
    Rp,
    Service,
    Sp,
    Log,
    Pmm,
    /// Server sessions, kept inside the log repository.
    Session,
    /// Stored responses for idempotent request replay.
    Request,
}

impl RepoKind {
    pub const ALL: [RepoKind; 8] = [
        RepoKind::Requirement,
        RepoKind::Rp,
        RepoKind::Service,
        RepoKind::Sp,
        RepoKind::Log,
        RepoKind::Pmm,
        RepoKind::Session,
        RepoKind::Request,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            RepoKind::Requirement => "requirements",
            RepoKind::Rp => "rps",
            RepoKind::Service => "services",
            RepoKind::Sp => "sps",
            RepoKind::Log => "logs",
            RepoKind::Pmm => "pmm",
            RepoKind::Session => "logs/sessions",
            RepoKind::Request => "logs/requests",
        }
    }
}

/// Root from an explicit path, else [`ROOT_ENV`], else `./repo`.
pub fn resolve_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("repo"))
}

/// A stored user requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementDoc {
    pub id: String,
    pub tree: ITree,
}

/// Encoded files of one document: `(extension, bytes)`, primary first.
pub type Files = Vec<(&'static str, Vec<u8>)>;

pub trait Document: Sized + Clone {
    const KIND: RepoKind;
    /// Extensions making up one document; the first is the primary file.
    const EXTENSIONS: &'static [&'static str] = &["json"];

    fn id(&self) -> String;
    fn validate(&self) -> Result<()>;

    fn encode(&self) -> Result<Files>
    where
        Self: Serialize,
    {
        Ok(vec![("json", json_bytes(self)?)])
    }

    fn decode(files: &[Vec<u8>]) -> std::result::Result<Self, String>
    where
        Self: DeserializeOwned,
    {
        serde_json::from_slice(&files[0]).map_err(|e| e.to_string())
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

impl Document for RequirementDoc {
    const KIND: RepoKind = RepoKind::Requirement;
    fn id(&self) -> String {
        self.id.clone()
    }
    fn validate(&self) -> Result<()> {
        self.tree.validate()
    }
}

impl Document for RequirementPattern {
    const KIND: RepoKind = RepoKind::Rp;
    fn id(&self) -> String {
        self.id.clone()
    }
    fn validate(&self) -> Result<()> {
        RequirementPattern::validate(self)
    }
}

impl Document for ServiceSpec {
    const KIND: RepoKind = RepoKind::Service;
    fn id(&self) -> String {
        self.id.clone()
    }
    fn validate(&self) -> Result<()> {
        ServiceSpec::validate(self)
    }
}

impl Document for HistoricalIss {
    const KIND: RepoKind = RepoKind::Log;
    fn id(&self) -> String {
        self.id.clone()
    }
    fn validate(&self) -> Result<()> {
        HistoricalIss::validate(self, None)
    }
}

/// The matrix is a singleton document.
pub const PMM_ID: &str = "matrix";

impl Document for MatchingMatrix {
    const KIND: RepoKind = RepoKind::Pmm;
    fn id(&self) -> String {
        PMM_ID.into()
    }
    fn validate(&self) -> Result<()> {
        MatchingMatrix::validate(self)
    }
}

/// SPs store their process as BPMN XML and everything else in a JSON
/// sidecar.
impl Document for ServicePattern {
    const KIND: RepoKind = RepoKind::Sp;
    const EXTENSIONS: &'static [&'static str] = &["json", "xml"];

    fn id(&self) -> String {
        self.id.clone()
    }

    fn validate(&self) -> Result<()> {
        ServicePattern::validate(self, None)
    }

    fn encode(&self) -> Result<Files> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("process");
        }
        Ok(vec![("json", json_bytes(&v)?), ("xml", bpmn::to_xml(&self.id, &self.process).into_bytes())])
    }

    fn decode(files: &[Vec<u8>]) -> std::result::Result<Self, String> {
        let mut v: serde_json::Value = serde_json::from_slice(&files[0]).map_err(|e| e.to_string())?;
        let xml = std::str::from_utf8(&files[1]).map_err(|e| e.to_string())?;
        let (_, process) = bpmn::from_xml(xml).map_err(|e| e.to_string())?;
        let obj = v.as_object_mut().ok_or("sidecar is not an object")?;
        obj.insert("process".into(), serde_json::to_value(process).map_err(|e| e.to_string())?);
        serde_json::from_value(v).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexEntry {
    pub path: PathBuf,
    /// SHA-256 over the document's files, in extension order.
    pub sha256: String,
}

pub fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.len() <= 200
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidDocument(format!("`{id}` is not a valid document id")))
    }
}

fn hash(files: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    for f in files {
        h.update(f);
    }
    hex::encode(h.finalize())
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("doc");
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let res = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

/// Repository of one document kind under `<root>/<kind dir>`.
#[derive(Debug)]
pub struct Repository<T> {
    dir: PathBuf,
    index: RwLock<BTreeMap<String, IndexEntry>>,
    _doc: PhantomData<fn() -> T>,
}

impl<T> Repository<T>
where
    T: Document + Serialize + DeserializeOwned,
{
    /// Opens an existing directory, validating every document in it.
    pub fn open(root: &Path) -> Result<Self> {
        let dir = root.join(T::KIND.dir_name());
        if !dir.is_dir() {
            return Err(Error::MissingDir(dir));
        }
        let repo = Repository { dir, index: RwLock::new(BTreeMap::new()), _doc: PhantomData };
        repo.refresh()?;
        Ok(repo)
    }

    /// Creates the directory if needed, then opens it.
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join(T::KIND.dir_name()))?;
        Self::open(root)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self, exclusive: bool) -> Result<File> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(self.dir.join(LOCK_FILE))?;
        if exclusive {
            f.lock()?;
        } else {
            f.lock_shared()?;
        }
        Ok(f)
    }

    fn path(&self, id: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{id}.{ext}"))
    }

    fn read_files(&self, id: &str) -> Result<Option<Vec<Vec<u8>>>> {
        let mut files = Vec::new();
        for (i, ext) in T::EXTENSIONS.iter().enumerate() {
            let p = self.path(id, ext);
            match fs::read(&p) {
                Ok(b) => files.push(b),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound && i == 0 => return Ok(None),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(Error::CorruptDocument { path: p, reason: format!("missing companion .{ext} file") });
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Some(files))
    }

    fn load(&self, id: &str, files: &[Vec<u8>]) -> Result<T> {
        let path = self.path(id, T::EXTENSIONS[0]);
        let corrupt = |reason: String| Error::CorruptDocument { path: path.clone(), reason };
        let doc = T::decode(files).map_err(corrupt)?;
        doc.validate().map_err(|e| corrupt(e.to_string()))?;
        if doc.id() != id {
            return Err(corrupt(format!("document id `{}` does not match file name", doc.id())));
        }
        Ok(doc)
    }

    /// Re-scans the directory and rebuilds the index.
    pub fn refresh(&self) -> Result<()> {
        let _guard = self.lock(false)?;
        let mut index = BTreeMap::new();
        let primary = T::EXTENSIONS[0];
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            if name.starts_with('.') || !path.is_file() {
                continue;
            }
            if let Some(id) = name.strip_suffix(&format!(".{primary}")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        for id in ids {
            let path = self.path(&id, primary);
            check_id(&id).map_err(|e| Error::CorruptDocument { path: path.clone(), reason: e.to_string() })?;
            let files = self.read_files(&id)?.ok_or_else(|| Error::NotFound(id.clone()))?;
            self.load(&id, &files)?;
            index.insert(id, IndexEntry { path, sha256: hash(&files) });
        }
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = index;
        Ok(())
    }

    /// Validates and writes the document, replacing any previous version.
    pub fn put(&self, doc: &T) -> Result<IndexEntry> {
        let id = doc.id();
        check_id(&id)?;
        doc.validate()?;
        let files = doc.encode()?;
        let _guard = self.lock(true)?;
        // Companion files first, so the primary file only appears once the
        // document is complete.
        for (ext, bytes) in files.iter().rev() {
            write_atomic(&self.path(&id, ext), bytes)?;
        }
        let bytes: Vec<Vec<u8>> = files.into_iter().map(|(_, b)| b).collect();
        let entry = IndexEntry { path: self.path(&id, T::EXTENSIONS[0]), sha256: hash(&bytes) };
        self.index.write().unwrap_or_else(|e| e.into_inner()).insert(id, entry.clone());
        Ok(entry)
    }

    /// Reads the current version from disk.
    pub fn get(&self, id: &str) -> Result<T> {
        check_id(id).map_err(|_| Error::NotFound(id.to_string()))?;
        let files = {
            let _guard = self.lock(false)?;
            self.read_files(id)?
        };
        let files = files.ok_or_else(|| Error::NotFound(id.to_string()))?;
        self.load(id, &files)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.read().unwrap_or_else(|e| e.into_inner()).contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn index(&self) -> BTreeMap<String, IndexEntry> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All indexed documents in id order.
    pub fn list(&self) -> Result<Vec<T>> {
        self.ids().iter().map(|id| self.get(id)).collect()
    }

    /// Documents passing `filter`.
    pub fn list_where(&self, filter: impl Fn(&T) -> bool) -> Result<Vec<T>> {
        Ok(self.list()?.into_iter().filter(|d| filter(d)).collect())
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        check_id(id).map_err(|_| Error::NotFound(id.to_string()))?;
        let _guard = self.lock(true)?;
        let primary = self.path(id, T::EXTENSIONS[0]);
        if !primary.exists() {
            return Err(Error::NotFound(id.to_string()));
        }
        fs::remove_file(&primary)?;
        for ext in &T::EXTENSIONS[1..] {
            let _ = fs::remove_file(self.path(id, ext));
        }
        self.index.write().unwrap_or_else(|e| e.into_inner()).remove(id);
        Ok(())
    }
}

/// The core repositories under one root.
#[derive(Debug)]
pub struct Store {
    pub root: PathBuf,
    pub requirements: Repository<RequirementDoc>,
    pub rps: Repository<RequirementPattern>,
    pub services: Repository<ServiceSpec>,
    pub sps: Repository<ServicePattern>,
    pub logs: Repository<HistoricalIss>,
    pub pmm: Repository<MatchingMatrix>,
}

impl Store {
    pub fn open(root: &Path) -> Result<Store> {
        Ok(Store {
            root: root.to_path_buf(),
            requirements: Repository::open(root)?,
            rps: Repository::open(root)?,
            services: Repository::open(root)?,
            sps: Repository::open(root)?,
            logs: Repository::open(root)?,
            pmm: Repository::open(root)?,
        })
    }

    /// Creates any missing directories, then opens.
    pub fn create(root: &Path) -> Result<Store> {
        for k in RepoKind::ALL {
            fs::create_dir_all(root.join(k.dir_name()))?;
        }
        Self::open(root)
    }

    pub fn service_map(&self) -> Result<BTreeMap<String, ServiceSpec>> {
        Ok(self.services.list()?.into_iter().map(|s| (s.id.clone(), s)).collect())
    }

    /// The stored matrix, or an empty one.
    pub fn matrix(&self) -> Result<MatchingMatrix> {
        match self.pmm.get(PMM_ID) {
            Ok(m) => Ok(m),
            Err(Error::NotFound(_)) => Ok(MatchingMatrix::new()),
            Err(e) => Err(e),
        }
    }
}
