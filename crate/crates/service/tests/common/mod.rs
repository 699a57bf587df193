#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use wrlab_core::io::{frame_rows, FrameRow};
use wrlab_core::markers::FrameRecord;

pub async fn send(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub async fn create(app: &Router, manifest: &wrlab_core::manifest::SessionManifest) -> String {
    let (status, body) = send(
        app,
        Method::POST,
        "/sessions",
        Some(serde_json::to_string(manifest).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    v["session_id"].as_str().unwrap().to_string()
}

/// One set of a recorded stream: its frame rows and the set-end seq.
pub struct SetBatch {
    pub rows: Vec<FrameRow>,
    pub set_end_seq: u64,
}

pub fn set_batches(records: &[FrameRecord]) -> Vec<SetBatch> {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for r in records {
        match r {
            FrameRecord::Frame(f) => rows.extend(frame_rows(f)),
            FrameRecord::SetEnd { seq, .. } => out.push(SetBatch {
                rows: std::mem::take(&mut rows),
                set_end_seq: *seq,
            }),
        }
    }
    out
}

/// Streams a recorded session into the service in `chunk`-row batches and
/// returns the body of every set-end response.
pub async fn stream_session(app: &Router, id: &str, records: &[FrameRecord], chunk_frames: usize) -> Vec<String> {
    let mut responses = Vec::new();
    for batch in set_batches(records) {
        for chunk in batch.rows.chunks(20 * chunk_frames) {
            let (status, body) = send(
                app,
                Method::POST,
                &format!("/sessions/{id}/frames"),
                Some(serde_json::to_string(chunk).unwrap()),
            )
            .await;
            assert_eq!(status, StatusCode::OK, "{body}");
        }
        let (status, body) = send(
            app,
            Method::POST,
            &format!("/sessions/{id}/set-end"),
            Some(format!("{{\"seq\": {}}}", batch.set_end_seq)),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        responses.push(body);
    }
    responses
}
