use afm_forge::knowledge::{DefaultProvider, DomainKnowledge};
use afm_forge::pipeline::{ingest, synthesize, synthesize_with_knowledge, SynthesisOptions};
use afm_forge::{load_dk, DecisionProvider};
use afm_forge_session::{router, AppState, Snapshot};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const WIKI_CSV: &str = include_str!("../../../docs/examples/wiki.csv");
const WIKI_DK: &str = include_str!("../../../docs/examples/wiki.dk.json");

fn root_only_dk() -> DomainKnowledge {
    let full = load_dk(WIKI_DK).unwrap();
    DomainKnowledge { columns: full.columns, root: full.root, attributes: full.attributes, ..Default::default() }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn post_json(uri: &str, v: Value) -> Request<Body> {
    Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())).unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

async fn create(app: &axum::Router, dk: &DomainKnowledge) -> Snapshot {
    let (status, body) = call(app, post_json("/sessions", json!({ "matrix": WIKI_CSV, "dk": dk }))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

/// Answers every question the way the full knowledge file would.
async fn answer_all(app: &axum::Router, mut snap: Snapshot) -> Snapshot {
    let matrix = ingest(WIKI_CSV, &load_dk(WIKI_DK).unwrap()).unwrap();
    let mut oracle = DefaultProvider::new(load_dk(WIKI_DK).unwrap());
    synthesize(&matrix, &mut oracle, &SynthesisOptions::default()).unwrap();
    while let Some(q) = snap.question.clone() {
        let d = oracle
            .transcript()
            .iter()
            .find(|d| d.kind == q.kind && d.subject == q.subject)
            .unwrap_or_else(|| panic!("no recorded answer for {q:?}"));
        let uri = format!("/sessions/{}/answer", snap.id);
        let (status, body) = call(app, post_json(&uri, json!({ "answer": d.answer }))).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        snap = serde_json::from_slice(&body).unwrap();
    }
    snap
}

#[tokio::test]
async fn full_knowledge_completes_without_questions() {
    let app = router(AppState::in_memory());
    let snap = create(&app, &load_dk(WIKI_DK).unwrap()).await;
    assert_eq!(snap.state, "completed");
    assert!(snap.question.is_none());
    let (status, body) = call(&app, get(&format!("/sessions/{}/afm", snap.id))).await;
    assert_eq!(status, StatusCode::OK);
    let model: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(model["root"], "Wiki engine");
}

#[tokio::test]
async fn answered_session_matches_batch_output() {
    let app = router(AppState::in_memory());
    let snap = create(&app, &root_only_dk()).await;
    assert_eq!(snap.state, "pending");
    assert!(snap.hierarchy.is_empty());
    assert!(!snap.relevant_edges.is_empty());
    let done = answer_all(&app, snap).await;
    assert_eq!(done.state, "completed");
    assert_eq!(done.hierarchy.len(), 6);

    let (status, body) = call(&app, get(&format!("/sessions/{}/export?format=afm-json", done.id))).await;
    assert_eq!(status, StatusCode::OK);
    let full = load_dk(WIKI_DK).unwrap();
    let matrix = ingest(WIKI_CSV, &full).unwrap();
    let batch = synthesize_with_knowledge(&matrix, &full, &SynthesisOptions::default()).unwrap();
    assert_eq!(String::from_utf8(body).unwrap(), batch.to_json());

    let (status, text) = call(&app, get(&format!("/sessions/{}/export?format=text", done.id))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(text).unwrap(), batch.render_text());
}

#[tokio::test]
async fn illegal_answer_is_rejected_and_withdrawn() {
    let app = router(AppState::in_memory());
    let snap = create(&app, &root_only_dk()).await;
    let uri = format!("/sessions/{}/answer", snap.id);
    let (status, body) = call(&app, post_json(&uri, json!({ "answer": "NotAFeature" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let err: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["code"], "illegal-answer");
    let after: Snapshot =
        serde_json::from_slice(&call(&app, get(&format!("/sessions/{}", snap.id))).await.1).unwrap();
    assert_eq!(after.answered, 0);
    assert_eq!(after.question, snap.question);
}

#[tokio::test]
async fn answer_after_completion_conflicts() {
    let app = router(AppState::in_memory());
    let snap = create(&app, &load_dk(WIKI_DK).unwrap()).await;
    let (status, body) = call(&app, post_json(&format!("/sessions/{}/answer", snap.id), json!({ "answer": "x" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let err: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["code"], "completed");
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let app = router(AppState::in_memory());
    let (status, body) = call(&app, get("/sessions/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["stage"], "session");
    let (status, _) = call(&app, post_json("/sessions/nope/answer", json!({ "answer": "x" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn model_of_pending_session_conflicts() {
    let app = router(AppState::in_memory());
    let snap = create(&app, &root_only_dk()).await;
    let (status, _) = call(&app, get(&format!("/sessions/{}/afm", snap.id))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn multipart_upload_is_accepted() {
    let app = router(AppState::in_memory());
    let boundary = "XBOUNDARYX";
    let mut body = String::new();
    for (name, value) in [("matrix", WIKI_CSV), ("dk", WIKI_DK), ("options", r#"{"phi": false}"#)] {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n"
        ));
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    let req = Request::post("/sessions")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, body) = call(&app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let snap: Snapshot = serde_json::from_slice(&body).unwrap();
    assert_eq!(snap.state, "completed");
    assert!(!snap.provenance.unwrap().options.phi);
}

#[tokio::test]
async fn bad_matrix_is_a_client_error() {
    let app = router(AppState::in_memory());
    let (status, body) = call(&app, post_json("/sessions", json!({ "matrix": "" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&body));
}

#[tokio::test]
async fn persisted_session_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    {
        let app = router(AppState::persistent(dir.path()).unwrap());
        let snap = create(&app, &root_only_dk()).await;
        id = snap.id.clone();
        let q = snap.question.unwrap();
        let uri = format!("/sessions/{id}/answer");
        let (status, _) = call(&app, post_json(&uri, json!({ "answer": q.candidates[0] }))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let app = router(AppState::persistent(dir.path()).unwrap());
    let (status, body) = call(&app, get(&format!("/sessions/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    let snap: Snapshot = serde_json::from_slice(&body).unwrap();
    assert_eq!(snap.answered, 1);
    assert_eq!(snap.state, "pending");
}
