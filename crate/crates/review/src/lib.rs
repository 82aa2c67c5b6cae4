//! JSON API used by the browser review client.
//!
//! - `GET /api/review/next?rater=<id>`: next sample the rater has not judged,
//!   in sampled order, or 204 when they are done.
//! - `POST /api/review/{sample_id}`: record `{rater, understandable, quality}`.
//! - `GET /api/report`: the agreement report, or 409 while it cannot be built.
//! - `GET /api/progress?rater=<id>`: `{done, total}` for one rater.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use glossforge::corpus::{load_corpus, Corpus, CorpusFormat};
use glossforge::validation::{build_report, AnnotationJournal, AnnotationRecord, ValidationReport, Weighting};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Corpus(#[from] glossforge::corpus::CorpusError),
    #[error(transparent)]
    Journal(#[from] glossforge::validation::ValidationError),
    #[error("sample file has no pairs")]
    NoSamples,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sample_id: String,
    pub sentence: String,
    pub gloss: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub rater: String,
    pub understandable: bool,
    pub quality: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

/// Report payload: the structured report plus its rendered rows, so clients
/// display exactly what the command line prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPayload {
    pub report: ValidationReport,
    pub summary_rows: Vec<String>,
    pub kappa_rows: Vec<String>,
}

pub struct ReviewState {
    samples: Vec<ReviewItem>,
    journal: Mutex<AnnotationJournal>,
    weighting: Weighting,
}

impl ReviewState {
    pub fn new(samples: &Corpus, journal: AnnotationJournal, weighting: Weighting) -> Result<Self, ServiceError> {
        if samples.is_empty() {
            return Err(ServiceError::NoSamples);
        }
        Ok(ReviewState {
            samples: samples
                .pairs
                .iter()
                .map(|p| ReviewItem {
                    sample_id: p.id.clone(),
                    sentence: p.sentence.clone(),
                    gloss: p.gloss.clone(),
                })
                .collect(),
            journal: Mutex::new(journal),
            weighting,
        })
    }

    /// Samples from a JSONL corpus file, judgments in a journal file that is
    /// created if absent.
    pub fn open(samples: &Path, journal: &Path, weighting: Weighting) -> Result<Self, ServiceError> {
        let corpus = load_corpus(samples, CorpusFormat::from_path(samples))?;
        Self::new(&corpus, AnnotationJournal::open(journal)?, weighting)
    }

    fn journal(&self) -> MutexGuard<'_, AnnotationJournal> {
        // A panic while holding the lock cannot leave a half-written record
        // in memory, so the data is still usable.
        self.journal.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn report(&self) -> Result<ValidationReport, String> {
        let records = self.journal().records();
        if records.is_empty() {
            return Err("no judgments have been recorded yet".into());
        }
        build_report(&records, self.weighting).map_err(|e| e.to_string())
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: String,
}

async fn next(State(state): State<Arc<ReviewState>>, Query(q): Query<RaterQuery>) -> Response {
    if q.rater.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "rater must not be empty");
    }
    let journal = state.journal();
    match state.samples.iter().find(|s| journal.get(&s.sample_id, &q.rater).is_none()) {
        Some(item) => Json(item.clone()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit(
    State(state): State<Arc<ReviewState>>,
    UrlPath(sample_id): UrlPath<String>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Response {
    let Json(sub) = match body {
        Ok(b) => b,
        Err(rej) => return error(StatusCode::UNPROCESSABLE_ENTITY, rej.body_text()),
    };
    if !state.samples.iter().any(|s| s.sample_id == sample_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown sample {sample_id:?}"));
    }
    let record = AnnotationRecord {
        sample_id,
        rater_id: sub.rater.trim().to_string(),
        understandable: sub.understandable,
        quality: sub.quality,
        created_at: Utc::now(),
    };
    if let Err(reason) = record.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, reason);
    }
    match state.journal().append(record.clone()) {
        Ok(()) => {
            tracing::info!(id = %record.sample_id, rater = %record.rater_id, action = "review", outcome = "ok");
            Json(serde_json::json!({ "status": "ok" })).into_response()
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn report(State(state): State<Arc<ReviewState>>) -> Response {
    match state.report() {
        Ok(report) => Json(ReportPayload {
            summary_rows: report.summary_rows(),
            kappa_rows: report.kappa_rows(),
            report,
        })
        .into_response(),
        Err(reason) => error(StatusCode::CONFLICT, reason),
    }
}

async fn progress(State(state): State<Arc<ReviewState>>, Query(q): Query<RaterQuery>) -> Json<Progress> {
    let journal = state.journal();
    let done = state
        .samples
        .iter()
        .filter(|s| journal.get(&s.sample_id, &q.rater).is_some())
        .count();
    Json(Progress {
        done,
        total: state.samples.len(),
    })
}

pub fn router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/api/review/next", get(next))
        .route("/api/review/{sample_id}", post(submit))
        .route("/api/report", get(report))
        .route("/api/progress", get(progress))
        .with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(state: Arc<ReviewState>, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
