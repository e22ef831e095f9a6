//! Router, shared state and handlers.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, PoisonError};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use bilateral_core::bpmn;
use bilateral_core::construction::{build_model, construct, Problem, SearchOptions, Strategy, UserConstraints};
use bilateral_core::kgr::{build_kgr, propose_revisions, recommend, KgrGraph};
use bilateral_core::model::{validate_itree, Context, ITree, Intention};
use bilateral_core::persistence::{Document, RepoKind, Repository, Store};
use bilateral_core::pmm::{MatchOutcome, SharedMatrix};
use bilateral_core::selection::{select_rps_exact, select_rps_greedy, DEFAULT_MAX_REPO};
use bilateral_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::session::Session;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Hill-climbing iterations for the heuristic strategy.
    pub heuristic_iters: usize,
    /// Revisions proposed per request when the body gives no limit.
    pub revision_limit: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { heuristic_iters: 100, revision_limit: 5 }
    }
}

/// A stored response, replayed for a repeated idempotency key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub id: String,
    pub method: String,
    pub path: String,
    pub key: String,
    pub body_sha256: String,
    pub status: u16,
    pub response: String,
}

impl Document for RequestRecord {
    const KIND: RepoKind = RepoKind::Request;
    fn id(&self) -> String {
        self.id.clone()
    }
    fn validate(&self) -> Result<()> {
        StatusCode::from_u16(self.status).map_err(|e| Error::InvalidDocument(e.to_string()))?;
        Ok(())
    }
}

pub struct AppState {
    pub store: Store,
    pub sessions: Repository<Session>,
    pub requests: Repository<RequestRecord>,
    pub pmm: SharedMatrix,
    pub kgr: KgrGraph,
    pub config: ServerConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    /// Opens (creating if needed) the repositories under `root` and builds
    /// the recommendation graph from the stored requirement trees.
    pub fn open(root: &Path, config: ServerConfig) -> Result<AppState> {
        let store = Store::create(root)?;
        let corpus: Vec<ITree> = store.requirements.list()?.into_iter().map(|d| d.tree).collect();
        let kgr = if corpus.is_empty() { KgrGraph::default() } else { build_kgr(&corpus)? };
        let pmm = SharedMatrix::new(store.matrix()?);
        Ok(AppState {
            sessions: Repository::create(root)?,
            requests: Repository::create(root)?,
            store,
            pmm,
            kgr,
            config,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn lock_for(&self, scope: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(PoisonError::into_inner);
        map.entry(scope.to_string()).or_default().clone()
    }

    fn session(&self, id: &str) -> Result<Session, ApiError> {
        match self.sessions.get(id) {
            Ok(s) => Ok(s),
            Err(Error::NotFound(_)) => Err(ApiError::UnknownSession(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/tree", get(get_tree).put(put_tree))
        .route("/sessions/{id}/recommendations", post(recommendations))
        .route("/sessions/{id}/revisions", post(revisions))
        .route("/sessions/{id}/revisions/{n}/{action}", post(decide))
        .route("/sessions/{id}/select", post(select))
        .route("/sessions/{id}/construct", post(construct_solution))
        .route("/sessions/{id}/bpmn", get(solution_bpmn))
        .route("/outcomes", post(outcomes))
        .route("/patterns/{kind}", get(patterns))
        .route("/pmm/slice", get(slice))
        .route("/pmm/recompute", post(recompute))
        .fallback(|uri: Uri| async move { error_response(&ApiError::NoRoute(uri.path().to_string())) })
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

// ---------------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------------

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

struct Reply {
    status: StatusCode,
    body: String,
}

impl Reply {
    fn json<T: Serialize>(status: StatusCode, v: &T) -> Reply {
        match serde_json::to_string(v) {
            Ok(body) => Reply { status, body },
            Err(e) => Reply::error(&ApiError::Domain(e.into())),
        }
    }

    fn error(e: &ApiError) -> Reply {
        Reply { status: e.status(), body: e.body().to_string() }
    }

    fn into_response(self, replayed: bool) -> Response {
        let mut r = (self.status, self.body).into_response();
        r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
        if replayed {
            r.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        }
        r
    }
}

fn error_response(e: &ApiError) -> Response {
    Reply::error(e).into_response(false)
}

fn ok<T: Serialize>(v: &T) -> Result<Reply, ApiError> {
    Ok(Reply::json(StatusCode::OK, v))
}

/// Parses a JSON body, reporting the offending field path on failure. An
/// empty body reads as `{}`.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ApiError::schema(
            inner.to_string(),
            json!({ "path": path, "line": inner.line(), "column": inner.column() }),
        )
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs a mutation on a blocking thread, serialized per `scope`, honouring
/// the idempotency key: a repeated key with the same body replays the
/// stored response, with a different body it is rejected.
async fn mutation<F>(st: Arc<AppState>, method: Method, uri: Uri, headers: HeaderMap, scope: String, body: Bytes, f: F) -> Response
where
    F: FnOnce(&AppState, &[u8]) -> Result<Reply, ApiError> + Send + 'static,
{
    let key = match headers.get(IDEMPOTENCY_HEADER).map(|v| v.to_str()) {
        None => None,
        Some(Ok(k)) if !k.is_empty() => Some(k.to_string()),
        Some(_) => {
            return error_response(&ApiError::schema(
                "idempotency key must be non-empty visible ASCII",
                json!({ "header": IDEMPOTENCY_HEADER }),
            ))
        }
    };
    let task = tokio::task::spawn_blocking(move || {
        let lock = st.lock_for(&scope);
        let _guard = lock.lock().unwrap_or_else(PoisonError::into_inner);
        let path = uri.path().to_string();
        let body_hash = sha256_hex(&body);
        let record_id = key.as_ref().map(|k| sha256_hex(format!("{method} {path}\n{k}").as_bytes()));
        if let Some(id) = &record_id {
            match st.requests.get(id) {
                Ok(rec) if rec.body_sha256 == body_hash => {
                    return (Reply { status: StatusCode::from_u16(rec.status).unwrap_or(StatusCode::OK), body: rec.response }, true);
                }
                Ok(_) => return (Reply::error(&ApiError::KeyReused), false),
                Err(Error::NotFound(_)) => {}
                Err(e) => return (Reply::error(&e.into()), false),
            }
        }
        let reply = f(&st, &body).unwrap_or_else(|e| Reply::error(&e));
        if let (Some(id), Some(key)) = (record_id, key) {
            if !reply.status.is_server_error() {
                let rec = RequestRecord {
                    id,
                    method: method.to_string(),
                    path,
                    key,
                    body_sha256: body_hash,
                    status: reply.status.as_u16(),
                    response: reply.body.clone(),
                };
                if let Err(e) = st.requests.put(&rec) {
                    return (Reply::error(&e.into()), false);
                }
            }
        }
        (reply, false)
    });
    match task.await {
        Ok((reply, replayed)) => reply.into_response(replayed),
        Err(e) => error_response(&ApiError::Domain(Error::Io(std::io::Error::other(e.to_string())))),
    }
}

/// Runs a read-only request on a blocking thread.
async fn read<F>(st: Arc<AppState>, f: F) -> Response
where
    F: FnOnce(&AppState) -> Result<Reply, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&st)).await {
        Ok(r) => r.unwrap_or_else(|e| Reply::error(&e)).into_response(false),
        Err(e) => error_response(&ApiError::Domain(Error::Io(std::io::Error::other(e.to_string())))),
    }
}

fn session_scope(id: &str) -> String {
    format!("session:{id}")
}

/// Loads, mutates and stores one session.
fn update_session(
    st: &AppState,
    id: &str,
    f: impl FnOnce(&AppState, &mut Session, u64) -> Result<(), ApiError>,
) -> Result<Session, ApiError> {
    let mut s = st.session(id)?;
    f(st, &mut s, now_ms())?;
    st.sessions.put(&s)?;
    Ok(s)
}

fn check_tree(tree: &ITree) -> Result<(), ApiError> {
    let v = validate_itree(tree);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidTree(v).into())
    }
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateBody {
    #[serde(default)]
    tree: Option<ITree>,
}

async fn create_session(State(st): State<Arc<AppState>>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    mutation(st, method, uri, headers, "create".into(), body, |st, body| {
        let b: CreateBody = parse(body)?;
        let tree = b.tree.unwrap_or_else(|| ITree::new(Intention::new("root", "requirement")));
        check_tree(&tree)?;
        let id = format!("s-{}", uuid::Uuid::new_v4().simple());
        let s = Session::new(id, tree, now_ms());
        st.sessions.put(&s)?;
        Ok(Reply::json(StatusCode::CREATED, &s))
    })
    .await
}

async fn get_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    read(st, move |st| ok(&st.session(&id)?)).await
}

async fn get_tree(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    read(st, move |st| ok(&st.session(&id)?.tree)).await
}

async fn put_tree(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    mutation(st, method, uri, headers, session_scope(&id), body, move |st, body| {
        let current = st.session(&id)?;
        let tree: ITree = parse(body)?;
        current.check_tree_editable()?;
        check_tree(&tree)?;
        ok(&update_session(st, &id, |_, s, now| s.set_tree(tree, now))?)
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RecommendBody {
    focus_node: String,
    #[serde(default)]
    prefix: String,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    10
}

async fn recommendations(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Response {
    read(st, move |st| {
        let s = st.session(&id)?;
        let b: RecommendBody = parse(&body)?;
        s.check_recommendable()?;
        let recs = recommend(&st.kgr, &s.tree, &b.focus_node, &b.prefix, b.limit)?;
        ok(&json!({ "session": s, "recommendations": recs }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RevisionsBody {
    #[serde(default)]
    limit: Option<usize>,
}

async fn revisions(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    mutation(st, method, uri, headers, session_scope(&id), body, move |st, body| {
        st.session(&id)?;
        let b: RevisionsBody = parse(body)?;
        let s = update_session(st, &id, |st, s, now| {
            s.check_can_revise()?;
            let repo = st.store.rps.list()?;
            let revs = propose_revisions(&s.tree, &repo, b.limit.unwrap_or(st.config.revision_limit));
            s.start_revising(revs, now)
        })?;
        ok(&s)
    })
    .await
}

async fn decide(
    State(st): State<Arc<AppState>>,
    UrlPath((id, n, action)): UrlPath<(String, String, String)>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let accept = match action.as_str() {
        "accept" => true,
        "reject" => false,
        _ => return error_response(&ApiError::NoRoute(uri.path().to_string())),
    };
    let Ok(n) = n.parse::<usize>() else {
        return error_response(&ApiError::schema("revision index must be a non-negative integer", json!({ "index": n })));
    };
    mutation(st, method, uri, headers, session_scope(&id), body, move |st, _| {
        ok(&update_session(st, &id, |_, s, now| if accept { s.accept(n, now) } else { s.reject(n, now) })?)
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SelectBody {
    #[serde(default)]
    exact: bool,
}

async fn select(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    mutation(st, method, uri, headers, session_scope(&id), body, move |st, body| {
        st.session(&id)?;
        let b: SelectBody = parse(body)?;
        ok(&update_session(st, &id, |st, s, now| {
            s.check_can_select()?;
            let repo = st.store.rps.list()?;
            let sel = if b.exact { select_rps_exact(&s.tree, &repo, DEFAULT_MAX_REPO)? } else { select_rps_greedy(&s.tree, &repo) };
            s.set_selection(sel, now)
        })?)
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ConstructBody {
    context: Context,
    #[serde(default = "default_strategy")]
    strategy: Strategy,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    constraints: UserConstraints,
    #[serde(default)]
    options: SearchOptions,
}

fn default_strategy() -> Strategy {
    Strategy::Meta
}

async fn construct_solution(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    mutation(st, method, uri, headers, session_scope(&id), body, move |st, body| {
        st.session(&id)?;
        let b: ConstructBody = parse(body)?;
        ok(&update_session(st, &id, |st, s, now| {
            let selection = s.check_can_construct()?;
            let model = build_model(selection, &s.tree, &b.context, &b.constraints)?;
            let sps = st.store.sps.list()?;
            let services = st.store.service_map()?;
            let pmm = st.pmm.snapshot();
            let problem = Problem::new(&model, &pmm, &sps, &services)?;
            let c = construct(&problem, b.strategy, b.seed, st.config.heuristic_iters, &b.options)?;
            s.set_solution(c.solution, now)
        })?)
    })
    .await
}

async fn solution_bpmn(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let res = tokio::task::spawn_blocking(move || -> Result<String, ApiError> {
        let s = st.session(&id)?;
        let sol = s.solution.ok_or(ApiError::IllegalTransition { action: "export a solution", state: s.state })?;
        Ok(bpmn::to_xml(&id, &sol.composed_process))
    })
    .await;
    match res {
        Ok(Ok(xml)) => ([(header::CONTENT_TYPE, "application/xml")], xml).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ApiError::Domain(Error::Io(std::io::Error::other(e.to_string())))),
    }
}

// ---------------------------------------------------------------------------
// Patterns and matrix
// ---------------------------------------------------------------------------

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutcomeQuery {
    #[serde(default)]
    recompute: bool,
}

async fn outcomes(
    State(st): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    mutation(st, method, uri, headers, "pmm".into(), body, move |st, body| {
        let q: OutcomeQuery = parse(&serde_json::to_vec(&query_json(&q)).unwrap_or_default())?;
        let o: MatchOutcome = parse(body)?;
        o.validate()?;
        let m = st.pmm.update(|m| {
            m.record_outcome(&o)?;
            if q.recompute {
                m.recompute(m.smoothing, o.timestamp)?;
            }
            st.store.pmm.put(m)?;
            Ok(m.clone())
        })?;
        let cell = m.cell(&o.rp_id, &o.sp_id, &o.context);
        ok(&json!({ "version": m.version, "lastRecompute": m.last_recompute, "cell": cell }))
    })
    .await
}

/// Query strings carry text only; booleans are spelled `true`/`false`.
fn query_json(q: &HashMap<String, String>) -> Value {
    Value::Object(
        q.iter()
            .map(|(k, v)| {
                let v = match v.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => Value::String(v.clone()),
                };
                (k.clone(), v)
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecomputeBody {
    #[serde(default)]
    smoothing: Option<f64>,
    #[serde(default)]
    as_of: Option<u64>,
}

async fn recompute(State(st): State<Arc<AppState>>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    mutation(st, method, uri, headers, "pmm".into(), body, |st, body| {
        let b: RecomputeBody = parse(body)?;
        let m = st.pmm.update(|m| {
            m.recompute(b.smoothing.unwrap_or(m.smoothing), b.as_of.unwrap_or(m.last_recompute))?;
            st.store.pmm.put(m)?;
            Ok(m.clone())
        })?;
        ok(&m)
    })
    .await
}

async fn patterns(State(st): State<Arc<AppState>>, UrlPath(kind): UrlPath<String>, uri: Uri) -> Response {
    read(st, move |st| match kind.as_str() {
        "rp" => ok(&st.store.rps.list()?),
        "sp" => ok(&st.store.sps.list()?),
        _ => Err(ApiError::NoRoute(uri.path().to_string())),
    })
    .await
}

async fn slice(State(st): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    read(st, move |st| {
        let rp = q.get("rp").ok_or_else(|| ApiError::schema("missing query parameter `rp`", json!({ "path": "rp" })))?;
        let raw = q
            .get("context")
            .ok_or_else(|| ApiError::schema("missing query parameter `context`", json!({ "path": "context" })))?;
        let ctx = Context::from_key(raw).ok_or_else(|| {
            ApiError::schema("context must be `userClass|environment|objective`", json!({ "path": "context", "value": raw }))
        })?;
        let m = st.pmm.snapshot();
        let top_k = match q.get("topK") {
            Some(k) => k.parse().map_err(|_| ApiError::schema("topK must be an integer", json!({ "path": "topK" })))?,
            None => usize::MAX,
        };
        let l = m.lookup(rp, &ctx, top_k);
        ok(&json!({ "rp": rp, "context": ctx, "version": m.version, "entries": l.entries, "fallback": l.fallback }))
    })
    .await
}
