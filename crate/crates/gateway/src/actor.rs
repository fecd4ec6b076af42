//! The task that owns the session engine. Everything that touches the engine
//! goes through its command queue, so events are applied one at a time.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use purrfect_core::audio::StimulusDescriptor;
use purrfect_core::datastore::SessionWriter;
use purrfect_core::haptic::{HapticSink, VibrationFrame};
use purrfect_core::session::{Awaiting, Effect, Event, PhaseKind, Session, TrialRecord};
use serde::Serialize;
use serde_json::Value;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio::time::Instant;

use crate::wire::{self, ClientInput, MessageType, WireMessage};

#[derive(Debug)]
pub(crate) enum Outbound {
    Text(String),
    Close,
}

#[derive(Debug)]
pub(crate) enum Command {
    Connect { conn: u64, out: UnboundedSender<Outbound> },
    Client { conn: u64, text: String },
    Disconnect { conn: u64 },
    Operator(Event),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Status {
    pub phase: Option<PhaseKind>,
    pub phase_index: usize,
    pub finished: bool,
    pub client_connected: bool,
    pub records: usize,
}

/// State readable from HTTP handlers.
#[derive(Default)]
pub(crate) struct Shared {
    pub stimuli: Mutex<BTreeMap<String, StimulusDescriptor>>,
    pub records: Mutex<Vec<TrialRecord>>,
    pub status: Mutex<Status>,
    pub next_conn: AtomicU64,
}

impl Shared {
    pub fn conn_id(&self) -> u64 {
        self.next_conn.fetch_add(1, Ordering::Relaxed) + 1
    }
}

struct Conn {
    id: u64,
    out: UnboundedSender<Outbound>,
    next_seq: u64,
    last_client_seq: Option<u64>,
}

impl Conn {
    fn send(&mut self, (kind, payload): (MessageType, Value)) {
        self.next_seq += 1;
        let text = WireMessage::new(kind, self.next_seq, payload).to_text();
        let _ = self.out.send(Outbound::Text(text));
    }
}

pub(crate) struct Actor {
    session: Session,
    conn: Option<Conn>,
    ever_connected: bool,
    writer: Option<SessionWriter>,
    haptics: UnboundedSender<(Instant, u64, VibrationFrame)>,
    shared: Arc<Shared>,
    last_tick: Instant,
    current_stimulus: Option<(String, StimulusDescriptor)>,
    tick: Duration,
}

impl Actor {
    pub fn new(
        session: Session,
        initial: Vec<Effect>,
        writer: Option<SessionWriter>,
        sink: Box<dyn HapticSink>,
        shared: Arc<Shared>,
        tick: Duration,
    ) -> Self {
        let (haptics, rx) = unbounded_channel();
        tokio::spawn(haptic_writer(rx, sink));
        let mut actor = Actor {
            session,
            conn: None,
            ever_connected: false,
            writer,
            haptics,
            shared,
            last_tick: Instant::now(),
            current_stimulus: None,
            tick,
        };
        actor.apply(initial, None);
        actor
    }

    pub async fn run(mut self, mut commands: UnboundedReceiver<Command>) {
        let mut ticker = tokio::time::interval(self.tick);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                cmd = commands.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                _ = ticker.tick() => self.flush_clock(),
            }
        }
    }

    fn running(&self) -> bool {
        self.conn.is_some() && !self.session.is_finished()
    }

    /// Advances the engine clock to real time while a client is attached.
    fn flush_clock(&mut self) {
        if !self.running() {
            return;
        }
        let elapsed = self.last_tick.elapsed().as_millis() as u64;
        if elapsed == 0 {
            return;
        }
        self.last_tick += Duration::from_millis(elapsed);
        let fx = self.session.advance(Event::Tick { ms: elapsed });
        self.apply(fx, None);
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Connect { conn, out } => self.connect(conn, out),
            Command::Client { conn, text } => {
                if self.conn.as_ref().is_some_and(|c| c.id == conn) {
                    self.client(text);
                }
            }
            Command::Disconnect { conn } => {
                if self.conn.as_ref().is_some_and(|c| c.id == conn) {
                    self.flush_clock();
                    self.conn = None;
                    tracing::info!(conn, "client disconnected, session paused");
                    self.publish_status();
                }
            }
            Command::Operator(event) => {
                self.flush_clock();
                let fx = self.session.advance(event);
                self.apply(fx, None);
            }
        }
    }

    fn connect(&mut self, id: u64, out: UnboundedSender<Outbound>) {
        let mut conn = Conn { id, out, next_seq: 0, last_client_seq: None };
        if self.conn.is_some() {
            tracing::warn!(conn = id, "second client refused");
            conn.send(wire::error("session_busy", "a client is already connected to this session", None));
            let _ = conn.out.send(Outbound::Close);
            return;
        }
        let resumed = self.ever_connected;
        self.ever_connected = true;
        self.last_tick = Instant::now();
        self.conn = Some(conn);
        tracing::info!(conn = id, resumed, "client connected");
        self.send_snapshot(resumed);
        self.publish_status();
    }

    /// Brings a fresh connection up to the current point of the protocol.
    fn send_snapshot(&mut self, resumed: bool) {
        let state = self.session.state();
        let spec = self.session.current_phase().cloned();
        let trial = state.current_trial;
        let stimulus = self.current_stimulus.clone();
        let conn = self.conn.as_mut().expect("connected");
        let Some(spec) = spec else {
            conn.send((MessageType::SessionDone, serde_json::json!({})));
            return;
        };
        conn.send(wire::phase_change(state.current_phase, spec.kind, resumed));
        if let Some(id) = spec.questionnaire {
            conn.send(wire::questionnaire_prompt(id));
        }
        if let Some(index) = trial {
            conn.send((MessageType::TrialStart, serde_json::json!({ "phase": spec.kind, "trial_index": index })));
            match state.awaiting {
                Awaiting::StimulusPlaying | Awaiting::Response if spec.audio => {
                    if let Some((id, desc)) = &stimulus {
                        conn.send(wire::play_stimulus(id, desc));
                    }
                }
                Awaiting::Response if spec.kind == PhaseKind::SpatialTest => {
                    conn.send((MessageType::SpatialPrompt, serde_json::json!({ "trial_index": index })));
                }
                _ => {}
            }
        }
    }

    fn violation(&mut self, reason: String) {
        tracing::warn!(%reason, "protocol violation, closing connection");
        if let Some(mut conn) = self.conn.take() {
            conn.send(wire::error("protocol_violation", &reason, None));
            let _ = conn.out.send(Outbound::Close);
        }
        self.publish_status();
    }

    fn client(&mut self, text: String) {
        let (seq, input) = match wire::parse_client(&text) {
            Ok(x) => x,
            Err(e) => return self.violation(e.to_string()),
        };
        let conn = self.conn.as_mut().expect("checked by caller");
        if conn.last_client_seq.is_some_and(|last| seq <= last) {
            return self.violation(format!("sequence number {seq} does not increase"));
        }
        conn.last_client_seq = Some(seq);
        self.flush_clock();
        let event = match input {
            ClientInput::Response(key) => Event::Key { key },
            ClientInput::Replay => Event::ReplayRequested,
            ClientInput::SpatialAnswer(value) => Event::SpatialAnswer { value },
            ClientInput::QuestionnaireAnswer { id, answers } => Event::QuestionnaireAnswer { id, answers },
        };
        let ignored_before = self.session.ignored_events().len();
        let fx = self.session.advance(event);
        let ignored = self.session.ignored_events().get(ignored_before).map(|e| e.reason.clone());
        let rejected = fx.iter().any(|e| matches!(e, Effect::Rejected { .. }));
        if let Some(conn) = self.conn.as_mut() {
            match ignored {
                Some(reason) => conn.send(wire::error("ignored", &reason, Some(seq))),
                None if !rejected => conn.send(wire::ack(seq)),
                None => {}
            }
        }
        self.apply(fx, Some(seq));
    }

    fn apply(&mut self, effects: Vec<Effect>, ref_seq: Option<u64>) {
        for effect in effects {
            match &effect {
                Effect::SendHaptics { commands } => {
                    let now = Instant::now();
                    let clock = self.session.clock_ms();
                    for c in commands {
                        let due = now + Duration::from_millis(c.onset_ms as u64);
                        let _ = self.haptics.send((due, clock + c.onset_ms as u64, c.frame()));
                    }
                }
                Effect::PlayAudio { stimulus_id, descriptor } => {
                    self.shared.stimuli.lock().unwrap().insert(stimulus_id.clone(), *descriptor);
                    self.current_stimulus = Some((stimulus_id.clone(), *descriptor));
                }
                Effect::RecordTrial { record } => {
                    if let Some(w) = self.writer.as_mut() {
                        if let Err(e) = w.append_record(record) {
                            tracing::error!(%e, "failed to persist trial record");
                        }
                    }
                    self.shared.records.lock().unwrap().push(record.clone());
                }
                Effect::RecordQuestionnaire { id, answers } => {
                    if let Some(w) = self.writer.as_mut() {
                        if let Err(e) = w.append_questionnaire(*id, answers) {
                            tracing::error!(%e, "failed to persist questionnaire");
                        }
                    }
                }
                Effect::EndSession => {
                    if let Some(w) = self.writer.take() {
                        match w.finish(chrono::Utc::now()) {
                            Ok(path) => tracing::info!(path = %path.display(), "session file complete"),
                            Err(e) => tracing::error!(%e, "failed to close session file"),
                        }
                    }
                }
                _ => {}
            }
            if let (Some(conn), Some(msg)) = (self.conn.as_mut(), wire::from_effect(&effect, ref_seq)) {
                conn.send(msg);
            }
        }
        self.publish_status();
    }

    fn publish_status(&self) {
        let state = self.session.state();
        let mut s = self.shared.status.lock().unwrap();
        s.phase = state.phase_kind;
        s.phase_index = state.current_phase;
        s.finished = state.finished;
        s.client_connected = self.conn.is_some();
        s.records = self.shared.records.lock().unwrap().len();
    }
}

/// Single ordered writer to the device channel.
async fn haptic_writer(mut rx: UnboundedReceiver<(Instant, u64, VibrationFrame)>, mut sink: Box<dyn HapticSink>) {
    while let Some((due, time_ms, frame)) = rx.recv().await {
        tokio::time::sleep_until(due).await;
        if let Err(e) = sink.send(time_ms, &frame) {
            tracing::error!(%e, "haptic device write failed");
        }
    }
}
