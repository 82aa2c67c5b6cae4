use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use glossforge::corpus::{Corpus, SentenceGlossPair};
use glossforge::validation::{build_report, read_journal, AnnotationJournal, Weighting};
use glossforge_review::{router, Progress, ReportPayload, ReviewItem, ReviewState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn samples(n: usize) -> Corpus {
    Corpus::new(
        (1..=n)
            .map(|i| SentenceGlossPair::manual(format!("s{i}"), &format!("আমি বই{i} পড়ি।"), &["আমি", "বই", "পড়"]))
            .collect(),
    )
}

fn app(dir: &Path, n: usize) -> Router {
    let journal = AnnotationJournal::open(&dir.join("journal.jsonl")).unwrap();
    router(Arc::new(ReviewState::new(&samples(n), journal, Weighting::None).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<Value>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).ok())
}

#[tokio::test]
async fn next_walks_samples_in_order_then_204() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2);
    let (s, body) = call(&app, "GET", "/api/review/next?rater=a", None).await;
    assert_eq!(s, StatusCode::OK);
    let item: ReviewItem = serde_json::from_value(body.unwrap()).unwrap();
    assert_eq!(item.sample_id, "s1");
    for id in ["s1", "s2"] {
        let (s, _) = call(&app, "POST", &format!("/api/review/{id}"), Some(json!({"rater": "a", "understandable": true, "quality": 4}))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (s, _) = call(&app, "GET", "/api/review/next?rater=a", None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    // The other rater's queue is independent.
    let (s, body) = call(&app, "GET", "/api/review/next?rater=b", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body.unwrap()["sample_id"], "s1");
}

#[tokio::test]
async fn invalid_submissions_are_422_and_unknown_samples_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    for bad in [
        json!({"rater": "a", "understandable": true, "quality": 6}),
        json!({"rater": "a", "understandable": true, "quality": 0}),
        json!({"rater": "", "understandable": true, "quality": 3}),
        json!({"rater": "a", "quality": 3}),
        json!({"rater": "a", "understandable": "yes", "quality": 3}),
    ] {
        let (s, body) = call(&app, "POST", "/api/review/s1", Some(bad.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
        assert!(body.unwrap()["error"].is_string());
    }
    let (s, _) = call(&app, "POST", "/api/review/nope", Some(json!({"rater": "a", "understandable": true, "quality": 3}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(std::fs::read_to_string(dir.path().join("journal.jsonl")).unwrap(), "");
}

#[tokio::test]
async fn progress_counts_latest_judgments_once() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 3);
    for q in [2, 5] {
        call(&app, "POST", "/api/review/s2", Some(json!({"rater": "a", "understandable": true, "quality": q}))).await;
    }
    let (_, body) = call(&app, "GET", "/api/progress?rater=a", None).await;
    let p: Progress = serde_json::from_value(body.unwrap()).unwrap();
    assert_eq!(p, Progress { done: 1, total: 3 });
    assert_eq!(read_journal(&dir.path().join("journal.jsonl")).unwrap().len(), 2);
}

#[tokio::test]
async fn report_is_409_until_two_raters_finish() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2);
    let (s, _) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    for id in ["s1", "s2"] {
        call(&app, "POST", &format!("/api/review/{id}"), Some(json!({"rater": "a", "understandable": true, "quality": 4}))).await;
    }
    let (s, body) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(body.unwrap()["error"].as_str().unwrap().contains("two raters"));
    call(&app, "POST", "/api/review/s1", Some(json!({"rater": "b", "understandable": false, "quality": 2}))).await;
    let (s, _) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    call(&app, "POST", "/api/review/s2", Some(json!({"rater": "b", "understandable": true, "quality": 4}))).await;
    let (s, body) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(s, StatusCode::OK);
    let payload: ReportPayload = serde_json::from_value(body.unwrap()).unwrap();
    assert_eq!(payload.report.samples, 2);
}

/// Two simulated raters replay the Table-1 fixture through the API; the
/// resulting journal yields the same report as the fixture itself.
#[tokio::test]
async fn replayed_fixture_reproduces_direct_report() {
    let records = read_journal(&fixture("table1_journal.jsonl")).unwrap();
    let mut ids: Vec<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let corpus = Corpus::new(
        ids.iter()
            .map(|id| SentenceGlossPair::manual(id.clone(), &format!("বাক্য {id}"), &["শব্দ"]))
            .collect(),
    );
    let dir = tempfile::tempdir().unwrap();
    let journal = AnnotationJournal::open(&dir.path().join("j.jsonl")).unwrap();
    let app = router(Arc::new(ReviewState::new(&corpus, journal, Weighting::None).unwrap()));
    for r in &records {
        let (s, _) = call(
            &app,
            "POST",
            &format!("/api/review/{}", r.sample_id),
            Some(json!({"rater": r.rater_id, "understandable": r.understandable, "quality": r.quality})),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }
    let direct = build_report(&records, Weighting::None).unwrap();
    let (s, body) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(s, StatusCode::OK);
    let payload: ReportPayload = serde_json::from_value(body.unwrap()).unwrap();
    assert_eq!(payload.report, direct);
    assert_eq!(payload.summary_rows, direct.summary_rows());
    assert_eq!(payload.kappa_rows, direct.kappa_rows());
    let replayed = build_report(&read_journal(&dir.path().join("j.jsonl")).unwrap(), Weighting::None).unwrap();
    assert_eq!(replayed.render(), direct.render());
}
