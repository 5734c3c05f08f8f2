//! The session server: a local HTTP service between a blocked engine and
//! the tester's browser.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/status` | [`SessionSnapshot`] |
//! | GET | `/api/pending` | [`PendingView`] |
//! | POST | `/api/interactions/{id}/scores` | [`ScoreResponse`] in, [`SubmitReply`] out |
//! | GET | `/api/preference` | list of [`PreferenceView`] |
//! | GET | `/api/suite` | final suite text, 404 until the run ends |
//! | GET | `/api/events?since=N` | server-sent events, one per engine event |
//!
//! Score submissions return 200 when accepted (and for an identical
//! repeat), 422 when the map does not fit the request, 409 when the
//! interaction was already scored differently or has expired, and 404
//! when no such interaction is waiting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::convert::Infallible;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use rtgen_core::events::{Event, EventKind, EventSink, PreferenceView};
use rtgen_core::scoring::{ScoreRequest, ScoreResponse, Scorer, ScorerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Searching,
    /// An interaction is waiting for scores.
    Waiting,
    Finished,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub run_id: String,
    pub status: SessionStatus,
    pub generation: u32,
    pub coverage: f64,
    pub covered: usize,
    pub interactions_done: u32,
    #[serde(rename = "Max_times")]
    pub max_times: u32,
    pub moments_done: u32,
    /// Absent whenever the engine is searching.
    pub pending: Option<ScoreRequest>,
    pub preference: Vec<PreferenceView>,
    /// Sequence number of the last event applied.
    pub last_seq: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub status: SessionStatus,
    pub interaction: Option<ScoreRequest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReply {
    pub accepted: bool,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

struct Inner {
    snapshot: SessionSnapshot,
    history: Vec<Event>,
    accepted: BTreeMap<u32, ScoreResponse>,
    expired: BTreeSet<u32>,
    suite: Option<String>,
    scores: Option<mpsc::Sender<ScoreResponse>>,
}

struct Shared {
    inner: Mutex<Inner>,
    events: broadcast::Sender<Event>,
}

/// Handle on the state one run shares with its HTTP clients.
#[derive(Clone)]
pub struct Session(Arc<Shared>);

impl Session {
    /// A session and the scorer the engine should use with it.
    pub fn new(run_id: impl Into<String>, max_times: u32) -> (Session, ChannelScorer) {
        let (tx, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(1024);
        let session = Session(Arc::new(Shared {
            inner: Mutex::new(Inner {
                snapshot: SessionSnapshot {
                    run_id: run_id.into(),
                    status: SessionStatus::Searching,
                    generation: 0,
                    coverage: 0.0,
                    covered: 0,
                    interactions_done: 0,
                    max_times,
                    moments_done: 0,
                    pending: None,
                    preference: Vec::new(),
                    last_seq: 0,
                    error: None,
                },
                history: Vec::new(),
                accepted: BTreeMap::new(),
                expired: BTreeSet::new(),
                suite: None,
                scores: Some(tx),
            }),
            events,
        }));
        let scorer = ChannelScorer {
            session: session.clone(),
            rx,
            timeout: None,
        };
        (session, scorer)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.0.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        self.lock().snapshot.clone()
    }

    /// The sink the engine should publish to.
    pub fn sink(&self) -> ServerSink {
        ServerSink(self.clone())
    }

    /// Marks the run done and makes the suite downloadable.
    pub fn finish(&self, suite_text: String) {
        let mut inner = self.lock();
        inner.snapshot.status = SessionStatus::Finished;
        inner.snapshot.pending = None;
        inner.suite = Some(suite_text);
        inner.scores = None;
    }

    pub fn abort(&self, reason: String) {
        let mut inner = self.lock();
        inner.snapshot.status = SessionStatus::Aborted;
        inner.snapshot.pending = None;
        inner.snapshot.error = Some(reason);
        inner.scores = None;
    }

    fn publish(&self, event: &Event) {
        let mut inner = self.lock();
        let s = &mut inner.snapshot;
        s.last_seq = event.seq;
        match &event.kind {
            EventKind::GenerationProgress {
                generation,
                coverage,
                covered,
                interactions_done,
                moments_done,
                ..
            } => {
                s.generation = *generation;
                s.coverage = *coverage;
                s.covered = *covered;
                s.interactions_done = *interactions_done;
                s.moments_done = *moments_done;
            }
            EventKind::InteractionReady { request } => {
                s.status = SessionStatus::Waiting;
                s.pending = Some(request.clone());
            }
            EventKind::ScoresApplied { update, .. } => {
                s.interactions_done += 1;
                if let Some(view) = update {
                    s.preference.retain(|p| p.target != view.target);
                    s.preference.push(view.clone());
                    s.preference.sort_by_key(|p| p.target);
                }
            }
            EventKind::MomentClosed { moment, preference, .. } => {
                s.moments_done = *moment;
                s.preference = preference.clone();
            }
            EventKind::RunAborted { reason } => {
                s.status = SessionStatus::Aborted;
                s.error = Some(reason.clone());
                s.pending = None;
            }
            EventKind::MomentOpened { .. } | EventKind::InteractionSkipped { .. } | EventKind::RunFinished { .. } => {}
        }
        inner.history.push(event.clone());
        // Sent under the lock so that a subscriber's backlog and live feed
        // never overlap or leave a gap.
        let _ = self.0.events.send(event.clone());
    }

    fn submit(&self, id: u32, response: ScoreResponse) -> Result<SubmitReply, (StatusCode, String)> {
        let mut inner = self.lock();
        if let Some(previous) = inner.accepted.get(&id) {
            return if *previous == response {
                Ok(SubmitReply {
                    accepted: true,
                    duplicate: true,
                })
            } else {
                Err((StatusCode::CONFLICT, format!("interaction {id} was already scored differently")))
            };
        }
        if inner.expired.contains(&id) {
            return Err((StatusCode::CONFLICT, format!("interaction {id} expired without scores")));
        }
        let request = match &inner.snapshot.pending {
            Some(r) if r.interaction_id == id => r,
            _ => return Err((StatusCode::NOT_FOUND, format!("interaction {id} is not waiting for scores"))),
        };
        request
            .validate(&response)
            .map_err(|e| (StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let sent = inner.scores.as_ref().is_some_and(|tx| tx.send(response.clone()).is_ok());
        if !sent {
            return Err((StatusCode::CONFLICT, "the run is no longer accepting scores".into()));
        }
        inner.accepted.insert(id, response);
        inner.snapshot.pending = None;
        inner.snapshot.status = SessionStatus::Searching;
        Ok(SubmitReply {
            accepted: true,
            duplicate: false,
        })
    }
}

/// Forwards engine events to the session.
pub struct ServerSink(Session);

impl EventSink for ServerSink {
    fn emit(&mut self, event: &Event) {
        self.0.publish(event);
    }
}

/// Blocks the engine until a valid submission for the pending
/// interaction arrives over HTTP.
pub struct ChannelScorer {
    session: Session,
    rx: mpsc::Receiver<ScoreResponse>,
    timeout: Option<Duration>,
}

impl ChannelScorer {
    /// Gives up on an interaction after `timeout`, ending its moment.
    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Scorer for ChannelScorer {
    fn score(&mut self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let Some(limit) = self.timeout else {
            return self.rx.recv().map_err(|_| ScorerError::Closed);
        };
        match self.rx.recv_timeout(limit) {
            Ok(r) => Ok(r),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(ScorerError::Closed),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                let mut inner = self.session.lock();
                // A submission may have landed while the lock was free.
                if let Ok(r) = self.rx.try_recv() {
                    return Ok(r);
                }
                inner.expired.insert(request.interaction_id);
                inner.snapshot.pending = None;
                inner.snapshot.status = SessionStatus::Searching;
                Err(ScorerError::Timeout)
            }
        }
    }
}

pub fn router(session: Session) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/pending", get(pending))
        .route("/api/interactions/{id}/scores", post(submit))
        .route("/api/preference", get(preference))
        .route("/api/suite", get(suite))
        .route("/api/events", get(events))
        .with_state(session)
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(ErrorReply { error: message })).into_response()
}

async fn status(State(s): State<Session>) -> Json<SessionSnapshot> {
    Json(s.snapshot())
}

async fn pending(State(s): State<Session>) -> Json<PendingView> {
    let snap = s.snapshot();
    Json(PendingView {
        status: snap.status,
        interaction: snap.pending,
    })
}

async fn submit(State(s): State<Session>, Path(id): Path<u32>, Json(body): Json<ScoreResponse>) -> Response {
    match s.submit(id, body) {
        Ok(reply) => Json(reply).into_response(),
        Err((code, message)) => error(code, message),
    }
}

async fn preference(State(s): State<Session>) -> Json<Vec<PreferenceView>> {
    Json(s.snapshot().preference)
}

async fn suite(State(s): State<Session>) -> Response {
    match s.lock().suite.clone() {
        Some(text) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response(),
        None => error(StatusCode::NOT_FOUND, "the run has not finished".into()),
    }
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

struct Feed {
    session: Session,
    backlog: VecDeque<Event>,
    rx: broadcast::Receiver<Event>,
    last: u64,
    done: bool,
}

fn is_terminal(e: &Event) -> bool {
    matches!(e.kind, EventKind::RunFinished { .. } | EventKind::RunAborted { .. })
}

fn to_sse(e: &Event) -> SseEvent {
    let data = serde_json::to_value(e).expect("events serialize");
    let name = data["type"].as_str().unwrap_or("event").to_string();
    SseEvent::default().id(e.seq.to_string()).event(name).data(data.to_string())
}

impl Feed {
    async fn next(&mut self) -> Option<Event> {
        if let Some(e) = self.backlog.pop_front() {
            return Some(e);
        }
        loop {
            match self.rx.recv().await {
                Ok(e) if e.seq <= self.last => continue,
                Ok(e) => return Some(e),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let last = self.last;
                    self.backlog = self.session.lock().history.iter().filter(|e| e.seq > last).cloned().collect();
                    if let Some(e) = self.backlog.pop_front() {
                        return Some(e);
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

/// Replays every event after `since` (or the `Last-Event-ID` header),
/// then follows the live feed until the run ends.
async fn events(
    State(s): State<Session>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let since = q
        .since
        .or_else(|| headers.get("last-event-id")?.to_str().ok()?.parse().ok())
        .unwrap_or(0);
    let feed = {
        let inner = s.lock();
        Feed {
            backlog: inner.history.iter().filter(|e| e.seq > since).cloned().collect(),
            rx: s.0.events.subscribe(),
            session: s.clone(),
            last: since,
            done: false,
        }
    };
    let stream = stream::unfold(feed, |mut feed| async move {
        if feed.done {
            return None;
        }
        let e = feed.next().await?;
        feed.last = e.seq;
        feed.done = is_terminal(&e);
        Some((Ok(to_sse(&e)), feed))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
