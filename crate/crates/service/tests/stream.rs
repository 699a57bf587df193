mod common;

use std::time::Duration;

use futures::StreamExt;
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

use common::{create, stream_session};
use wrlab_core::feedback::SetFeedback;
use wrlab_core::simulator::{synthesize, ExerciseKind, ExerciseSpec, Form};
use wrlab_service::server::StreamEvent;
use wrlab_service::{router, AppState};

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn listen(state: AppState) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    addr
}

async fn next_event(ws: &mut Socket) -> StreamEvent {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("event within 10 s")
            .expect("socket open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

fn squat(sets: usize, form: Form) -> wrlab_core::simulator::Synthesis {
    let mut spec = ExerciseSpec::new(ExerciseKind::Squat, form);
    spec.reps = 5 * sets;
    spec.reps_per_set = Some(5);
    spec.capture.capture_rate_hz = 30.0;
    synthesize(&spec).unwrap()
}

#[tokio::test]
async fn subscribers_receive_one_event_per_set() {
    let state = AppState::default();
    let addr = listen(state.clone()).await;
    let app = router(state);
    let s = squat(3, Form::Poor);
    let id = create(&app, &s.manifest).await;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream"))
        .await
        .unwrap();
    let responses = stream_session(&app, &id, &s.records, 40).await;
    assert_eq!(responses.len(), 3);
    for (i, body) in responses.iter().enumerate() {
        let fb: SetFeedback = serde_json::from_str(body).unwrap();
        let ev = next_event(&mut ws).await;
        assert_eq!(ev.set_index, i + 1);
        assert_eq!(ev.verdicts, fb.verdicts);
        assert_eq!(ev.progress.sets_closed, i + 1);
        assert_eq!(ev.progress.complete, i == 2);
    }
}

#[tokio::test]
async fn late_subscribers_can_replay_the_backlog() {
    let state = AppState::default();
    let addr = listen(state.clone()).await;
    let app = router(state);
    let s = squat(2, Form::Good);
    let id = create(&app, &s.manifest).await;
    stream_session(&app, &id, &s.records, 40).await;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream?replay=true"))
        .await
        .unwrap();
    for i in 0..2 {
        let ev = next_event(&mut ws).await;
        assert_eq!(ev.set_index, i + 1);
        assert_eq!(ev.progress.sets_closed, i + 1);
    }
}

#[tokio::test]
async fn unknown_session_refuses_the_upgrade() {
    let addr = listen(AppState::default()).await;
    let err = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/missing/stream"))
        .await
        .unwrap_err();
    match err {
        tokio_tungstenite::tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 404),
        other => panic!("unexpected error {other}"),
    }
}
