//! A scripted WebSocket client plays through whole sessions against a live
//! gateway on a loopback port.

use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use purrfect_core::audio::StimulusTiming;
use purrfect_core::session::{Condition, Event, PhaseKind, SessionPlan};
use purrfect_gateway::{start, GatewayConfig, GatewayHandle, MessageType, SharedSimulator, WireMessage};
use purrfect_stats::Q2Item;
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};
use tower::ServiceExt;

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn fast_plan(condition: Condition) -> SessionPlan {
    let mut plan = SessionPlan::with_training_ms("mock", condition, 42, 1_200);
    plan.timing = StimulusTiming { note_ms: 60, gap_ms: 30, ramp_ms: 5 };
    plan.feedback_ms = 60;
    plan
}

struct Server {
    addr: SocketAddr,
    handle: GatewayHandle,
    device: SharedSimulator,
    router: axum::Router,
}

async fn launch(plan: SessionPlan, record: Option<std::path::PathBuf>) -> Server {
    let device = SharedSimulator::default();
    let mut config = GatewayConfig::new(plan);
    config.record_path = record;
    let gw = start(config, Box::new(device.clone())).unwrap();
    let listener = purrfect_gateway::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = gw.router.clone();
    tokio::spawn(purrfect_gateway::serve(listener, gw.router));
    Server { addr, handle: gw.handle, device, router }
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws/session")).await.unwrap().0
}

struct Client {
    ws: Ws,
    seq: u64,
    last_server_seq: u64,
    log: Vec<WireMessage>,
}

impl Client {
    fn new(ws: Ws) -> Self {
        Client { ws, seq: 0, last_server_seq: 0, log: Vec::new() }
    }

    async fn recv(&mut self) -> Option<WireMessage> {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(10), self.ws.next()).await.expect("server went quiet");
            match msg {
                Some(Ok(Message::Text(t))) => {
                    let m: WireMessage = serde_json::from_str(&t).unwrap();
                    assert!(m.seq > self.last_server_seq, "server seq must increase");
                    self.last_server_seq = m.seq;
                    self.log.push(m.clone());
                    return Some(m);
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
                Some(Ok(_)) => {}
            }
        }
    }

    async fn send(&mut self, kind: &str, payload: Value) -> u64 {
        self.seq += 1;
        let text = json!({ "type": kind, "seq": self.seq, "payload": payload }).to_string();
        self.ws.send(Message::Text(text.into())).await.unwrap();
        self.seq
    }

    /// Sends until the server acknowledges; early answers are refused while the
    /// stimulus is still playing. Returns the messages that followed the ack.
    async fn answer(&mut self, kind: &str, payload: Value) -> Vec<WireMessage> {
        loop {
            let seq = self.send(kind, payload.clone()).await;
            let reply = self.recv().await.expect("reply");
            assert_eq!(reply.payload["ref"], json!(seq), "{reply:?}");
            match reply.kind {
                MessageType::Ack => return Vec::new(),
                MessageType::Error if reply.payload["code"] == "ignored" => {
                    tokio::time::sleep(Duration::from_millis(15)).await;
                }
                other => panic!("unexpected reply {other:?}: {}", reply.payload),
            }
        }
    }
}

fn q2_answers() -> Value {
    let map: serde_json::Map<String, Value> = Q2Item::ALL.iter().map(|i| (i.key().to_string(), json!(5))).collect();
    Value::Object(map)
}

/// Plays the protocol from whatever point the server is at until
/// `session_done`, or until `stop` returns true for a message.
async fn play(client: &mut Client, handle: &GatewayHandle, mut stop: impl FnMut(&WireMessage) -> bool) -> bool {
    let mut phase = None;
    while let Some(m) = client.recv().await {
        if stop(&m) {
            return false;
        }
        match m.kind {
            MessageType::SessionDone => return true,
            MessageType::PhaseChange => {
                phase = serde_json::from_value::<PhaseKind>(m.payload["phase"].clone()).ok();
                if phase == Some(PhaseKind::Break) {
                    handle.operator(Event::Continue).unwrap();
                }
            }
            MessageType::QuestionnairePrompt => {
                let answers = if m.payload["id"] == "q2" { q2_answers() } else { json!({ "age": 30 }) };
                let id = m.payload["id"].clone();
                client.answer("questionnaire_answer", json!({ "id": id, "answers": answers })).await;
            }
            MessageType::SpatialPrompt => {
                client.answer("spatial_answer", json!({ "value": 2.5 })).await;
            }
            MessageType::PlayStimulus => {
                assert_ne!(phase, Some(PhaseKind::SpatialTest));
                client.answer("response", json!({ "key": "5" })).await;
            }
            _ => {}
        }
    }
    false
}

fn assert_no_haptic_leak(log: &[WireMessage]) {
    for m in log {
        let text = m.payload.to_string();
        assert!(!text.contains("module") && !text.contains("commands") && !text.contains("intensity"), "{text}");
    }
}

/// Messages tagged with the phase announced before them.
fn tagged(log: &[WireMessage]) -> Vec<(Option<PhaseKind>, &WireMessage)> {
    let mut phase = None;
    log.iter()
        .map(|m| {
            if m.kind == MessageType::PhaseChange {
                phase = serde_json::from_value(m.payload["phase"].clone()).ok();
            }
            (phase, m)
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn haptic_session_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mock.jsonl");
    let server = launch(fast_plan(Condition::AudioHaptic), Some(path.clone())).await;
    let mut client = Client::new(connect(server.addr).await);
    assert!(play(&mut client, &server.handle, |_| false).await);
    assert_no_haptic_leak(&client.log);

    let tags = tagged(&client.log);
    let feedback_phases: Vec<_> = tags.iter().filter(|(_, m)| m.kind == MessageType::Feedback).map(|(p, _)| *p).collect();
    assert!(!feedback_phases.is_empty());
    assert!(feedback_phases.iter().all(|p| *p == Some(PhaseKind::Training)));
    // In training the feedback follows the ack directly.
    for (i, (p, m)) in tags.iter().enumerate() {
        if *p == Some(PhaseKind::Training) && m.kind == MessageType::Ack {
            assert_eq!(tags[i + 1].1.kind, MessageType::Feedback);
        }
    }

    let records = server.handle.records();
    let count = |k| records.iter().filter(|r| r.phase == k).count();
    assert_eq!(count(PhaseKind::PreTest), 20);
    assert_eq!(count(PhaseKind::PostTest), 20);
    assert_eq!(count(PhaseKind::SpatialTest), 8);

    // Frames arrive after their scheduled onsets; wait for the last one.
    tokio::time::sleep(Duration::from_millis(200)).await;
    let log = server.device.log();
    assert_eq!(log.error_count(), 0);
    let frames: Vec<_> = log.vibrations().collect();
    let spatial_and_training = records.iter().filter(|r| matches!(r.phase, PhaseKind::SpatialTest | PhaseKind::Training)).count();
    let replays: u32 = records.iter().map(|r| r.repeats).sum();
    assert_eq!(frames.len(), 2 * (spatial_and_training + replays as usize));
    assert!(frames.windows(2).all(|w| w[0].0 <= w[1].0));

    let stored = purrfect_core::datastore::read_session(&path).unwrap();
    assert_eq!(stored.records, records);
    assert!(stored.end.is_some());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn audio_only_session_sends_no_frames() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let mut client = Client::new(connect(server.addr).await);
    assert!(play(&mut client, &server.handle, |_| false).await);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert!(server.device.log().entries.is_empty());
    assert!(!client.log.iter().any(|m| m.kind == MessageType::SpatialPrompt));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pretest_response_gets_ack_only() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let mut client = Client::new(connect(server.addr).await);
    let reached = play(&mut client, &server.handle, |m| m.kind == MessageType::PlayStimulus).await;
    assert!(!reached);
    client.answer("response", json!({ "key": "5" })).await;
    // The next message is the following trial, not feedback.
    let next = client.recv().await.unwrap();
    assert_eq!(next.kind, MessageType::TrialStart);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_client_refused() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let mut first = Client::new(connect(server.addr).await);
    assert_eq!(first.recv().await.unwrap().kind, MessageType::PhaseChange);
    let mut second = Client::new(connect(server.addr).await);
    let m = second.recv().await.unwrap();
    assert_eq!(m.kind, MessageType::Error);
    assert_eq!(m.payload["code"], "session_busy");
    assert!(second.recv().await.is_none(), "refused socket is closed");
    // The first client is unaffected.
    assert_eq!(first.recv().await.unwrap().kind, MessageType::QuestionnairePrompt);
    assert!(server.handle.status().client_connected);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reconnect_resumes_without_duplicates() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let mut client = Client::new(connect(server.addr).await);
    let mut answered = 0;
    play(&mut client, &server.handle, |m| {
        if m.kind == MessageType::PlayStimulus {
            answered += 1;
        }
        answered > 5
    })
    .await;
    drop(client);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert!(!server.handle.status().client_connected);
    let before = server.handle.records().len();
    // Paused: nothing advances while disconnected.
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(server.handle.records().len(), before);

    let mut client = Client::new(connect(server.addr).await);
    let first = client.recv().await.unwrap();
    assert_eq!(first.kind, MessageType::PhaseChange);
    assert_eq!(first.payload["resumed"], true);
    assert_eq!(first.payload["phase"], "pre_test");
    assert!(play(&mut client, &server.handle, |_| false).await);
    let records = server.handle.records();
    let pre: Vec<u32> = records.iter().filter(|r| r.phase == PhaseKind::PreTest).map(|r| r.trial_index).collect();
    assert_eq!(pre, (0..20).collect::<Vec<_>>());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn protocol_violations_close_the_connection() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let mut client = Client::new(connect(server.addr).await);
    client.recv().await.unwrap();
    client.recv().await.unwrap();
    client.ws.send(Message::Text("{not json".into())).await.unwrap();
    let m = client.recv().await.unwrap();
    assert_eq!((m.kind, m.payload["code"].as_str()), (MessageType::Error, Some("protocol_violation")));
    assert!(client.recv().await.is_none());

    // Non-increasing sequence numbers are violations too.
    let mut client = Client::new(connect(server.addr).await);
    client.recv().await.unwrap();
    client.recv().await.unwrap();
    client.seq = 10;
    client.send("replay", json!({})).await;
    client.recv().await.unwrap();
    client.seq = 9;
    client.send("replay", json!({})).await;
    let m = client.recv().await.unwrap();
    assert_eq!(m.payload["code"], "protocol_violation");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_routes() {
    let server = launch(fast_plan(Condition::AudioOnly), None).await;
    let get = |uri: &str| {
        let router = server.router.clone();
        let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
        async move { router.oneshot(req).await.unwrap() }
    };
    let health = get("/health").await;
    assert_eq!(health.status(), StatusCode::OK);
    let body: Value = serde_json::from_slice(&health.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(get("/audio/nope.wav").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(get("/").await.status(), StatusCode::OK);

    let mut client = Client::new(connect(server.addr).await);
    let mut url = None;
    play(&mut client, &server.handle, |m| {
        if m.kind == MessageType::PlayStimulus {
            url = m.payload["wav_url"].as_str().map(str::to_string);
            true
        } else {
            false
        }
    })
    .await;
    let wav = get(&url.unwrap()).await;
    assert_eq!(wav.status(), StatusCode::OK);
    let bytes = wav.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[0..4], b"RIFF");
    // 60 + 30 + 60 ms at 44.1 kHz.
    assert_eq!(bytes.len(), 44 + 2 * 6_615);
}

#[tokio::test]
async fn port_in_use_is_a_clean_error() {
    let taken = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let err = purrfect_gateway::bind(taken.local_addr().unwrap()).await.unwrap_err();
    assert!(err.to_string().contains("cannot listen"));
}
