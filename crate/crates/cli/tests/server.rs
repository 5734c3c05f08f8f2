//! The session server against a live engine.

use std::thread;
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};

use rtgen_cli::server::{router, PendingView, Session, SessionSnapshot, SessionStatus, SubmitReply};
use rtgen_core::interaction::{run_interactive, InteractionConfig, RunOptions};
use rtgen_core::scoring::ScoreRequest;
use rtgen_core::search::SearchConfig;
use rtgen_core::subject::{extract_targets, SubjectClass, ARRAY_INT_LIST};

fn short_run() -> (SearchConfig, InteractionConfig) {
    let search = SearchConfig {
        population_size: 20,
        max_generations: 40,
        seed: 5,
        ..SearchConfig::default()
    };
    let interaction = InteractionConfig {
        revise_frequency: Some(10),
        revise_after_percentage_coverage: 0.0,
        max_times: 3,
        max_targets_interaction_moment: 2,
        ..InteractionConfig::default()
    };
    (search, interaction)
}

struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    async fn get<T: serde::de::DeserializeOwned>(&self, path: &str) -> T {
        self.http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }

    async fn post(&self, id: u32, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}/api/interactions/{id}/scores", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn wait_pending(&self) -> Option<ScoreRequest> {
        for _ in 0..2000 {
            let p: PendingView = self.get("/api/pending").await;
            if let Some(r) = p.interaction {
                assert_eq!(p.status, SessionStatus::Waiting);
                return Some(r);
            }
            if p.status == SessionStatus::Finished || p.status == SessionStatus::Aborted {
                return None;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("no interaction became pending");
    }
}

fn full_scores(r: &ScoreRequest, value: i64) -> Value {
    let scores: serde_json::Map<String, Value> = r.unseen.iter().map(|c| (c.id.clone(), json!(value))).collect();
    json!({ "scores": scores })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scores_flow_from_http_to_engine() {
    let (session, scorer) = Session::new("server-test", 3);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(std::future::IntoFuture::into_future(axum::serve(listener, router(session.clone()))));
    let client = Client {
        base: format!("http://{addr}"),
        http: reqwest::Client::new(),
    };

    let p: PendingView = client.get("/api/pending").await;
    assert!(p.interaction.is_none());
    let r = client.http.get(format!("{}/api/suite", client.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);

    let engine_session = session.clone();
    let engine = thread::spawn(move || {
        let subject = SubjectClass::parse(ARRAY_INT_LIST).unwrap();
        let targets = extract_targets(&subject);
        let (search, interaction) = short_run();
        let mut scorer = scorer;
        let mut sink = engine_session.sink();
        let result = run_interactive(&subject, &targets, &search, &interaction, &mut scorer, &mut sink, &RunOptions::default())
            .expect("run completes");
        engine_session.finish(result.suite_text.clone());
        result
    });

    let first = client.wait_pending().await.expect("an interaction opens");
    let snap: SessionSnapshot = client.get("/api/status").await;
    assert_eq!(snap.status, SessionStatus::Waiting);
    assert_eq!(snap.pending.as_ref().map(|p| p.interaction_id), Some(first.interaction_id));
    assert_eq!(snap.max_times, 3);
    let raw: Value = client.get("/api/status").await;
    assert!(raw.get("Max_times").is_some());

    // Rejected submissions leave the engine waiting.
    let id = first.interaction_id;
    let (code, _) = client.post(id, full_scores(&first, 11)).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, _) = client.post(id, json!({ "scores": {} })).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, _) = client.post(id + 100, full_scores(&first, 5)).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let again = client.wait_pending().await.unwrap();
    assert_eq!(again.interaction_id, id);

    let (code, body) = client.post(id, full_scores(&first, 8)).await;
    assert_eq!(code, StatusCode::OK);
    let reply: SubmitReply = serde_json::from_value(body).unwrap();
    assert!(reply.accepted && !reply.duplicate);
    let (code, body) = client.post(id, full_scores(&first, 8)).await;
    assert_eq!(code, StatusCode::OK);
    assert!(serde_json::from_value::<SubmitReply>(body).unwrap().duplicate);
    let (code, _) = client.post(id, full_scores(&first, 2)).await;
    assert_eq!(code, StatusCode::CONFLICT);

    // The engine moved on: either searching or at a later interaction.
    let p: PendingView = client.get("/api/pending").await;
    assert!(p.interaction.is_none_or(|r| r.interaction_id > id));

    let mut answered = 1;
    while let Some(r) = client.wait_pending().await {
        let (code, _) = client.post(r.interaction_id, full_scores(&r, 6)).await;
        assert_eq!(code, StatusCode::OK);
        answered += 1;
    }
    let result = tokio::task::spawn_blocking(move || engine.join().unwrap()).await.unwrap();
    assert_eq!(answered, result.interactions);

    let snap: SessionSnapshot = client.get("/api/status").await;
    assert_eq!(snap.status, SessionStatus::Finished);
    assert!(snap.pending.is_none());
    let text = client.http.get(format!("{}/api/suite", client.base)).send().await.unwrap().text().await.unwrap();
    assert_eq!(text, result.suite_text);
    let pref: Vec<Value> = client.get("/api/preference").await;
    assert_eq!(pref.len(), result.preference.len());
    assert!(!pref.is_empty(), "score 8 passes the threshold");

    // The event stream replays everything and ends with the run.
    let sse = client.http.get(format!("{}/api/events?since=0", client.base)).send().await.unwrap().text().await.unwrap();
    let ids: Vec<u64> = sse.lines().filter_map(|l| l.strip_prefix("id: ")).map(|v| v.parse().unwrap()).collect();
    assert!(ids.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(ids.first(), Some(&1));
    let names: Vec<&str> = sse.lines().filter_map(|l| l.strip_prefix("event: ")).collect();
    for expected in ["generation_progress", "moment_opened", "interaction_ready", "scores_applied", "moment_closed"] {
        assert!(names.contains(&expected), "missing {expected}");
    }
    assert_eq!(names.last(), Some(&"run_finished"));
    let applied: Value = sse
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str::<Value>(d).unwrap())
        .find(|v| v["type"] == "scores_applied" && !v["update"].is_null())
        .expect("a scores_applied event carries the new preference entry");
    assert!(applied["update"]["rendered"].as_str().unwrap().contains("ArrayIntList"));

    // Resuming from a sequence number skips what the client has seen.
    let tail = client
        .http
        .get(format!("{}/api/events", client.base))
        .header("Last-Event-ID", ids[ids.len() - 2].to_string())
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    let tail_ids: Vec<&str> = tail.lines().filter_map(|l| l.strip_prefix("id: ")).collect();
    assert_eq!(tail_ids, vec![ids.last().unwrap().to_string()]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unanswered_interaction_expires() {
    let (session, scorer) = Session::new("timeout-test", 1);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(std::future::IntoFuture::into_future(axum::serve(listener, router(session.clone()))));
    let client = Client {
        base: format!("http://{addr}"),
        http: reqwest::Client::new(),
    };
    let engine_session = session.clone();
    let engine = thread::spawn(move || {
        let subject = SubjectClass::parse(ARRAY_INT_LIST).unwrap();
        let targets = extract_targets(&subject);
        let (search, interaction) = short_run();
        let interaction = InteractionConfig {
            max_times: 1,
            max_targets_interaction_moment: 1,
            ..interaction
        };
        let mut scorer = scorer.with_timeout(Some(Duration::from_millis(200)));
        let mut sink = engine_session.sink();
        run_interactive(&subject, &targets, &search, &interaction, &mut scorer, &mut sink, &RunOptions::default()).unwrap()
    });
    let first = client.wait_pending().await.expect("an interaction opens");
    let result = tokio::task::spawn_blocking(move || engine.join().unwrap()).await.unwrap();
    // Timeouts end the moment without counting as an interaction.
    assert_eq!(result.interactions, 0);
    let (code, _) = client.post(first.interaction_id, full_scores(&first, 5)).await;
    assert_eq!(code, StatusCode::CONFLICT);
}
