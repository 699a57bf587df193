//! HTTP and WebSocket session service.
//!
//! Sessions are created from a manifest, fed batches of frame rows in seq
//! order, and closed set by set. Every set-end produces one `SetFeedback`,
//! returned to the caller and pushed to stream subscribers in set order.
//! With a data directory, each session is persisted as a plain session
//! directory that `wrlab analyze` can read back.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, Mutex};

use wrlab_core::analysis::{FEEDBACK_FILE, FRAMES_FILE, MANIFEST_FILE};
use wrlab_core::feedback::{SetFeedback, Verdicts};
use wrlab_core::io::{append_frames, validate_row, write_frames, FormatError, FrameAssembler, FrameRow};
use wrlab_core::manifest::SessionManifest;
use wrlab_core::markers::{FrameRecord, MarkerFrame};
use wrlab_core::session::{Progress, SessionError, SessionProcessor};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::OutOfOrder { .. } | SessionError::Complete | SessionError::EmptySet { .. } => {
                ApiError::Conflict(e.to_string())
            }
            SessionError::Manifest(_) => ApiError::Unprocessable(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            tracing::error!("{self}");
        }
        (
            self.status(),
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

// ---------------------------------------------------------------------------
// Session state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Ingesting,
    BetweenSets,
    Complete,
}

/// Pushed on the stream socket after every set-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub set_index: usize,
    pub verdicts: Verdicts,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub subject_id: String,
    pub group: wrlab_core::protocol::Group,
    pub state: SessionState,
    pub last_seq: Option<u64>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesAccepted {
    pub frames: usize,
    pub last_seq: Option<u64>,
    pub state: SessionState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SetEndRequest {
    /// Sequence number of the set-end record; the next free one when absent.
    #[serde(default)]
    pub seq: Option<u64>,
}

/// Plain-file persistence of one session.
struct SessionFiles {
    frames: BufWriter<File>,
    feedback: BufWriter<File>,
}

struct Session {
    id: String,
    processor: SessionProcessor,
    state: SessionState,
    /// Compact JSON of each feedback event, kept so every response and
    /// replay carries the same bytes.
    feedback_json: Vec<String>,
    last_t: f64,
    files: Option<SessionFiles>,
}

impl Session {
    fn summary(&self) -> SessionSummary {
        let m = self.processor.manifest();
        SessionSummary {
            session_id: self.id.clone(),
            subject_id: m.subject_id.clone(),
            group: m.group,
            state: self.state,
            last_seq: self.processor.last_seq(),
            progress: self.processor.progress(),
        }
    }

    fn persist(&mut self, records: &[FrameRecord]) -> Result<(), ApiError> {
        if let Some(files) = &mut self.files {
            append_frames(&mut files.frames, records).map_err(|e| ApiError::Internal(e.to_string()))?;
        }
        Ok(())
    }
}

struct SessionEntry {
    session: Mutex<Session>,
    events: broadcast::Sender<String>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<StdMutex<HashMap<String, Arc<SessionEntry>>>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(data_dir: Option<PathBuf>) -> Self {
        Self {
            sessions: Arc::default(),
            data_dir,
        }
    }

    fn get(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }
}

/// Largest accepted request body. A full set at 480 Hz is a few tens of MB of JSON.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/frames", post(post_frames))
        .route("/sessions/{id}/set-end", post(post_set_end))
        .route("/sessions/{id}/feedback", get(get_feedback))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/sessions/{id}/stream", get(stream))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Unprocessable(e.to_string()))
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn open_files(dir: &std::path::Path, manifest: &SessionManifest) -> Result<SessionFiles, FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    wrlab_core::io::write_json(&dir.join(MANIFEST_FILE), manifest)?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| FormatError::io(&path, e))
    };
    let mut frames = create(FRAMES_FILE)?;
    write_frames(&mut frames, &[]).map_err(|e| FormatError::io(dir, e))?;
    Ok(SessionFiles {
        frames,
        feedback: create(FEEDBACK_FILE)?,
    })
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let manifest: SessionManifest = parse_json(&body)?;
    let processor = SessionProcessor::new(manifest)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let files = match &app.data_dir {
        Some(root) => Some(open_files(&root.join(&id), processor.manifest())?),
        None => None,
    };
    let (events, _) = broadcast::channel(256);
    let session = Session {
        id: id.clone(),
        processor,
        state: SessionState::Created,
        feedback_json: Vec::new(),
        last_t: 0.0,
        files,
    };
    let entry = Arc::new(SessionEntry {
        session: Mutex::new(session),
        events,
    });
    app.sessions.lock().expect("session map lock").insert(id.clone(), entry);
    tracing::info!(session = %id, "session created");
    let body = CreatedSession {
        session_id: id,
        state: SessionState::Created,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

/// Groups a batch into frames. Schema problems are 422; a batch whose frames
/// do not strictly follow `last_seq` is 409. Nothing is applied on error.
fn assemble_batch(rows: &[FrameRow], last_seq: Option<u64>) -> Result<Vec<MarkerFrame>, ApiError> {
    for (i, row) in rows.iter().enumerate() {
        validate_row(row).map_err(|m| ApiError::Unprocessable(format!("row {i}: {m}")))?;
    }
    let mut prev = last_seq;
    let mut current = None;
    for row in rows {
        if current == Some(row.seq) {
            continue;
        }
        if let Some(p) = prev {
            if row.seq <= p {
                return Err(ApiError::Conflict(format!("seq {} does not follow {p}", row.seq)));
            }
        }
        prev = Some(row.seq);
        current = Some(row.seq);
    }
    let mut asm = FrameAssembler::new();
    let mut frames = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(f) = asm
            .push_row(row, i as u64)
            .map_err(|e| ApiError::Unprocessable(e.to_string()))?
        {
            frames.push(f);
        }
    }
    frames.extend(asm.finish());
    Ok(frames)
}

async fn post_frames(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<FramesAccepted>, ApiError> {
    let entry = app.get(&id)?;
    let rows: Vec<FrameRow> = parse_json(&body)?;
    let mut s = entry.session.lock().await;
    if s.state == SessionState::Complete {
        return Err(SessionError::Complete.into());
    }
    let frames = assemble_batch(&rows, s.processor.last_seq())?;
    let count = frames.len();
    let records: Vec<FrameRecord> = frames.into_iter().map(FrameRecord::Frame).collect();
    s.persist(&records)?;
    for r in records {
        let FrameRecord::Frame(f) = r else {
            unreachable!("only frames are assembled")
        };
        s.last_t = f.t;
        s.processor.push_frame(f)?;
    }
    if count > 0 {
        s.state = SessionState::Ingesting;
    }
    Ok(Json(FramesAccepted {
        frames: count,
        last_seq: s.processor.last_seq(),
        state: s.state,
    }))
}

async fn post_set_end(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let entry = app.get(&id)?;
    let req: SetEndRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SetEndRequest::default()
    } else {
        parse_json(&body)?
    };
    let mut s = entry.session.lock().await;
    let seq = req.seq.unwrap_or_else(|| s.processor.last_seq().map_or(0, |l| l + 1));
    let feedback: SetFeedback = s.processor.end_set(seq)?.clone();
    let json = serde_json::to_string(&feedback).map_err(|e| ApiError::Internal(e.to_string()))?;
    s.state = if s.processor.is_complete() {
        SessionState::Complete
    } else {
        SessionState::BetweenSets
    };
    let last_t = s.last_t;
    if let Some(files) = &mut s.files {
        let io = |e: std::io::Error| ApiError::Internal(e.to_string());
        append_frames(&mut files.frames, &[FrameRecord::SetEnd { t: last_t, seq }]).map_err(io)?;
        files.frames.flush().map_err(io)?;
        writeln!(files.feedback, "{json}").map_err(io)?;
        files.feedback.flush().map_err(io)?;
    }
    s.feedback_json.push(json.clone());
    let event = StreamEvent {
        set_index: feedback.set_index,
        verdicts: feedback.verdicts,
        progress: s.processor.progress(),
    };
    // Sent under the session lock so subscribers see events in set order.
    let _ = entry
        .events
        .send(serde_json::to_string(&event).map_err(|e| ApiError::Internal(e.to_string()))?);
    tracing::info!(session = %s.id, set = feedback.set_index, "set closed");
    Ok(json_response(StatusCode::OK, json))
}

async fn get_feedback(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = app.get(&id)?;
    let s = entry.session.lock().await;
    let body = format!("[{}]", s.feedback_json.join(","));
    Ok(json_response(StatusCode::OK, body))
}

async fn get_summary(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let entry = app.get(&id)?;
    let s = entry.session.lock().await;
    Ok(Json(s.summary()))
}

#[derive(Debug, Default, Deserialize)]
pub struct StreamQuery {
    /// Send one event per already-closed set before live events.
    #[serde(default)]
    pub replay: bool,
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let entry = app.get(&id)?;
    Ok(ws.on_upgrade(move |socket| run_stream(socket, entry, q.replay)))
}

async fn run_stream(mut socket: WebSocket, entry: Arc<SessionEntry>, replay: bool) {
    // Subscribe and snapshot under the session lock so no event is missed
    // or repeated between the replay and the live feed.
    let (mut rx, backlog) = {
        let s = entry.session.lock().await;
        let rx = entry.events.subscribe();
        let backlog: Vec<String> = if replay {
            let p = &s.processor;
            p.feedback()
                .iter()
                .enumerate()
                .map(|(i, fb)| {
                    let event = StreamEvent {
                        set_index: fb.set_index,
                        verdicts: fb.verdicts,
                        progress: Progress::at(p.manifest(), i + 1, 0),
                    };
                    serde_json::to_string(&event).expect("event serializes")
                })
                .collect()
        } else {
            Vec::new()
        };
        (rx, backlog)
    };
    for msg in backlog {
        if socket.send(Message::Text(msg.into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(msg) => {
                    if socket.send(Message::Text(msg.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "stream subscriber lagged");
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Serves until ctrl-c.
pub async fn serve(port: u16, data_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(data_dir)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
