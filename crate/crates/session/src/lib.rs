//! Interactive synthesis over HTTP.
//!
//! A session holds a matrix, optional domain knowledge and the answers given
//! so far. After every answer synthesis is replayed from the start with a
//! [`ScriptedProvider`]; it either stops at the next open question or
//! completes with a model. Because replay is deterministic, a finished
//! session yields exactly the model batch synthesis produces from the same
//! transcript.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use afm_forge::knowledge::{Decision, DecisionKind, DomainKnowledge, Question, ScriptedProvider};
use afm_forge::model::{AttributedFeatureModel, HierarchyEdge, Provenance};
use afm_forge::pipeline::{ingest, synthesize, SynthesisOptions};
use afm_forge::{load_dk, ConfigurationMatrix, DecisionProvider};
use axum::extract::{FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

/// Error body: which stage failed, a machine-readable code and a message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub stage: String,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, stage: &str, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), stage: stage.into(), code: code.into(), message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session", "unknown-session", format!("no session {id:?}"))
    }

    fn bad_input(stage: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, stage, "invalid-input", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Synthesis options as they travel over the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireOptions {
    pub phi: bool,
    pub or_groups_ms: Option<u64>,
    pub textual_equality: bool,
}

impl Default for WireOptions {
    fn default() -> Self {
        WireOptions { phi: true, or_groups_ms: None, textual_equality: true }
    }
}

impl From<WireOptions> for SynthesisOptions {
    fn from(w: WireOptions) -> Self {
        SynthesisOptions {
            or_groups: w.or_groups_ms.map(Duration::from_millis),
            phi: w.phi,
            textual_equality: w.textual_equality,
        }
    }
}

/// Everything needed to rebuild a session: inputs plus the answers given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub matrix_csv: String,
    pub dk: DomainKnowledge,
    pub options: WireOptions,
    pub script: Vec<Decision>,
}

#[derive(Clone, Debug)]
enum Progress {
    Pending(Question),
    Completed(Box<AttributedFeatureModel>),
    Failed(ApiError),
}

#[derive(Clone, Debug)]
pub struct Session {
    id: String,
    record: SessionRecord,
    matrix: ConfigurationMatrix,
    transcript: Vec<Decision>,
    progress: Progress,
}

/// Read-only view of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    /// `pending`, `completed` or `failed`.
    pub state: String,
    pub question: Option<Question>,
    /// Answers given through the session (not counting the file's).
    pub answered: usize,
    /// Every decision taken in the latest replay.
    pub transcript: Vec<Decision>,
    /// Parent choices made so far.
    pub hierarchy: Vec<HierarchyEdge>,
    /// For a parent question, the implication edges from the feature to its
    /// candidates; for a placement question, the legal hosts.
    pub relevant_edges: Vec<(String, String)>,
    pub provenance: Option<Provenance>,
    pub error: Option<ApiError>,
}

impl Session {
    pub fn new(id: String, record: SessionRecord) -> Result<Self, ApiError> {
        let matrix = ingest(&record.matrix_csv, &record.dk).map_err(|e| ApiError::bad_input("matrix", e.to_string()))?;
        let mut s = Session { id, record, matrix, transcript: Vec::new(), progress: Progress::Pending(dummy_question()) };
        s.replay();
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn model(&self) -> Option<&AttributedFeatureModel> {
        match &self.progress {
            Progress::Completed(m) => Some(m),
            _ => None,
        }
    }

    pub fn question(&self) -> Option<&Question> {
        match &self.progress {
            Progress::Pending(q) => Some(q),
            _ => None,
        }
    }

    fn replay(&mut self) {
        let mut provider = ScriptedProvider::new(self.record.dk.clone(), self.record.script.clone());
        let result = synthesize(&self.matrix, &mut provider, &self.record.options.into());
        self.transcript = provider.transcript().to_vec();
        self.progress = match result {
            Ok(m) => Progress::Completed(Box::new(m)),
            Err(e) => match e.pending() {
                Some(q) => Progress::Pending(q.clone()),
                None => Progress::Failed(ApiError::new(StatusCode::CONFLICT, e.stage(), e.code(), e.to_string())),
            },
        };
    }

    /// Checks the answer against the pending question, then replays. An
    /// answer the synthesis rejects is withdrawn.
    pub fn answer(&mut self, answer: Vec<String>) -> Result<(), ApiError> {
        let q = match &self.progress {
            Progress::Pending(q) => q.clone(),
            Progress::Completed(_) => {
                return Err(ApiError::new(StatusCode::CONFLICT, "session", "completed", "session is already completed"))
            }
            Progress::Failed(e) => return Err(e.clone()),
        };
        let illegal = |msg: String| ApiError::new(StatusCode::CONFLICT, stage_of(q.kind), "illegal-answer", msg);
        if let Some(bad) = answer.iter().find(|a| !q.candidates.contains(a)) {
            return Err(illegal(format!("{bad:?} is not a candidate for {} {:?}", q.kind.as_str(), q.subject)));
        }
        if answer.is_empty() || !q.kind.multi() && answer.len() != 1 {
            return Err(illegal(format!("{} {:?} takes exactly one answer", q.kind.as_str(), q.subject)));
        }
        self.record.script.push(Decision { kind: q.kind, subject: q.subject.clone(), candidates: q.candidates.clone(), answer });
        self.replay();
        if let Progress::Failed(e) = &self.progress {
            let e = e.clone();
            self.record.script.pop();
            self.replay();
            return Err(illegal(e.message));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let hierarchy = self
            .transcript
            .iter()
            .filter(|d| d.kind == DecisionKind::ChooseParent)
            .map(|d| HierarchyEdge { child: d.subject.clone(), parent: d.answer[0].clone() })
            .collect();
        let (state, question, provenance, error) = match &self.progress {
            Progress::Pending(q) => ("pending", Some(q.clone()), None, None),
            Progress::Completed(m) => ("completed", None, Some(m.provenance.clone()), None),
            Progress::Failed(e) => ("failed", None, None, Some(e.clone())),
        };
        let relevant_edges = match &question {
            Some(q) if matches!(q.kind, DecisionKind::ChooseParent | DecisionKind::ChoosePlace) => {
                q.candidates.iter().map(|c| (q.subject.clone(), c.clone())).collect()
            }
            _ => Vec::new(),
        };
        Snapshot {
            id: self.id.clone(),
            state: state.into(),
            question,
            answered: self.record.script.len(),
            transcript: self.transcript.clone(),
            hierarchy,
            relevant_edges,
            provenance,
            error,
        }
    }
}

fn dummy_question() -> Question {
    Question { kind: DecisionKind::ClassifyColumn, subject: String::new(), candidates: Vec::new() }
}

fn stage_of(kind: DecisionKind) -> &'static str {
    match kind {
        DecisionKind::ClassifyColumn => "variables",
        DecisionKind::ChooseParent => "hierarchy",
        DecisionKind::ChoosePlace => "placement",
        DecisionKind::ChooseGroup => "groups",
        DecisionKind::ConfirmBounds => "constraints",
    }
}

type Shared = Arc<RwLock<Session>>;

/// All sessions, optionally mirrored to a directory (one JSON file each).
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    store: Option<PathBuf>,
}

impl AppState {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Sessions persisted under `dir`; existing files are replayed.
    pub fn persistent(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let state = AppState { sessions: Default::default(), store: Some(dir.clone()) };
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let text = std::fs::read_to_string(&path)?;
                match serde_json::from_str::<SessionRecord>(&text).map_err(|e| e.to_string()).and_then(|r| {
                    Session::new(id.clone(), r).map_err(|e| e.message)
                }) {
                    Ok(s) => {
                        state.sessions.write().unwrap().insert(id, Arc::new(RwLock::new(s)));
                    }
                    Err(e) => log::warn!("skipping stored session {}: {e}", path.display()),
                }
            }
        }
        Ok(state)
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, s: &Session) {
        if let Some(dir) = &self.store {
            let path = dir.join(format!("{}.json", s.id));
            let text = serde_json::to_string_pretty(&s.record).expect("record serializes");
            if let Err(e) = write_atomic(&path, &text) {
                log::warn!("could not persist session {}: {e}", s.id);
            }
        }
    }

    pub fn create(&self, record: SessionRecord) -> Result<Snapshot, ApiError> {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::new(id.clone(), record)?;
        self.persist(&session);
        let snap = session.snapshot();
        self.sessions.write().unwrap().insert(id, Arc::new(RwLock::new(session)));
        Ok(snap)
    }

    pub fn answer(&self, id: &str, answer: Vec<String>) -> Result<Snapshot, ApiError> {
        let shared = self.get(id)?;
        let mut s = shared.write().unwrap();
        s.answer(answer)?;
        self.persist(&s);
        Ok(s.snapshot())
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot, ApiError> {
        Ok(self.get(id)?.read().unwrap().snapshot())
    }

    pub fn model(&self, id: &str) -> Result<AttributedFeatureModel, ApiError> {
        let shared = self.get(id)?;
        let s = shared.read().unwrap();
        s.model().cloned().ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "session", "not-completed", "session has open questions")
        })
    }
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, path)
}

/// JSON form of the upload.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateJson {
    matrix: String,
    #[serde(default)]
    dk: Option<serde_json::Value>,
    #[serde(default)]
    options: Option<WireOptions>,
}

fn parse_dk_value(v: Option<serde_json::Value>) -> Result<DomainKnowledge, ApiError> {
    match v {
        None | Some(serde_json::Value::Null) => Ok(DomainKnowledge::default()),
        Some(serde_json::Value::String(s)) => load_dk(&s).map_err(|e| ApiError::bad_input("knowledge", e.to_string())),
        Some(other) => load_dk(&other.to_string()).map_err(|e| ApiError::bad_input("knowledge", e.to_string())),
    }
}

async fn read_upload(req: Request) -> Result<SessionRecord, ApiError> {
    let is_json = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        let Json(body) = Json::<CreateJson>::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_input("upload", e.body_text()))?;
        return Ok(SessionRecord {
            matrix_csv: body.matrix,
            dk: parse_dk_value(body.dk)?,
            options: body.options.unwrap_or_default(),
            script: Vec::new(),
        });
    }
    let mut mp = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_input("upload", e.body_text()))?;
    let mut matrix = None;
    let mut dk = DomainKnowledge::default();
    let mut options = WireOptions::default();
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_input("upload", e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| ApiError::bad_input("upload", e.body_text()))?;
        match name.as_str() {
            "matrix" => matrix = Some(text),
            "dk" => dk = load_dk(&text).map_err(|e| ApiError::bad_input("knowledge", e.to_string()))?,
            "options" => {
                options = serde_json::from_str(&text).map_err(|e| ApiError::bad_input("upload", e.to_string()))?
            }
            other => return Err(ApiError::bad_input("upload", format!("unexpected field {other:?}"))),
        }
    }
    let matrix_csv = matrix.ok_or_else(|| ApiError::bad_input("upload", "missing field \"matrix\""))?;
    Ok(SessionRecord { matrix_csv, dk, options, script: Vec::new() })
}

async fn create_session(State(app): State<AppState>, req: Request) -> Result<Response, ApiError> {
    let record = read_upload(req).await?;
    let snap = app.create(record)?;
    Ok((StatusCode::CREATED, Json(snap)).into_response())
}

async fn get_state(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Snapshot>, ApiError> {
    app.snapshot(&id).map(Json)
}

/// `{"answer": "x"}` or `{"answer": ["x", "y"]}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AnswerValue {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    answer: AnswerValue,
}

async fn answer(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Snapshot>, ApiError> {
    app.get(&id)?;
    let Json(body) = body.map_err(|e| ApiError::bad_input("answer", e.body_text()))?;
    let answer = match body.answer {
        AnswerValue::One(s) => vec![s],
        AnswerValue::Many(v) => v,
    };
    app.answer(&id, answer).map(Json)
}

async fn get_model(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<AttributedFeatureModel>, ApiError> {
    app.model(&id).map(Json)
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let m = app.model(&id)?;
    match q.format.as_deref().unwrap_or("afm-json") {
        "afm-json" => Ok(([(header::CONTENT_TYPE, "application/json")], m.to_json()).into_response()),
        "text" => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], m.render_text()).into_response()),
        other => Err(ApiError::bad_input("export", format!("unknown format {other:?}"))),
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/afm", get(get_model))
        .route("/sessions/{id}/export", get(export))
        .with_state(app)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, app: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
