use std::net::SocketAddr;
use std::time::Duration;

use futures::StreamExt;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tempfile::tempdir;
use tokio_tungstenite::tungstenite::Message;

use swarmchat_core::analytics::{ModuleId, SatisfactionLevel};
use swarmchat_core::bus::BusClient;
use swarmchat_core::config::Config;
use swarmchat_core::domain::{FeedbackStatus, Modality};
use swarmchat_core::orchestrator::{http, DispatchRequest, DispatchResult, LocalSwarm, Orchestrator};

fn config() -> Config {
    let mut cfg = Config::default();
    cfg.robot.time_scale = 0.0;
    cfg
}

async fn orchestrator(swarm: &LocalSwarm, data_dir: Option<&std::path::Path>) -> Orchestrator {
    let bus = BusClient::connect(&swarm.broker_addr().to_string()).await.unwrap();
    let mut b = Orchestrator::builder(config());
    if let Some(d) = data_dir {
        b = b.data_dir(d);
    }
    b.start(bus).await.unwrap()
}

struct Api {
    base: String,
    addr: SocketAddr,
    http: reqwest::Client,
    orch: Orchestrator,
    _swarm: LocalSwarm,
}

async fn api() -> Api {
    let swarm = LocalSwarm::start(&config(), None).await.unwrap();
    let orch = orchestrator(&swarm, None).await;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(http::serve(orch.clone(), listener, std::future::pending()));
    Api { base: format!("http://{addr}"), addr, http: reqwest::Client::new(), orch, _swarm: swarm }
}

impl Api {
    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn session(&self) -> String {
        let (s, body) = self.post("/sessions", json!({})).await;
        assert_eq!(s, StatusCode::CREATED);
        body["session_id"].as_str().unwrap().to_string()
    }

    async fn suggested(&self, keywords: &str) -> String {
        let id = self.session().await;
        let (s, _) = self.post(&format!("/sessions/{id}/keywords"), json!({"text": keywords})).await;
        assert_eq!(s, StatusCode::OK);
        id
    }
}

#[tokio::test]
async fn keywords_return_ranked_candidates() {
    let api = api().await;
    let id = api.session().await;
    let (s, body) = api.post(&format!("/sessions/{id}/keywords"), json!({"text": "Patrol the AREA"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["keywords"], json!(["patrol", "the", "area"]));
    let cands = body["candidates"].as_array().unwrap();
    assert!(!cands.is_empty());
    let scores: Vec<f64> = cands.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(scores.iter().all(|s| (0.6..=1.0).contains(s)));
    assert!(cands[0]["suggestion"]["suggested"].is_string());

    let (_, session) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(session["status"], "Suggested");
}

#[tokio::test]
async fn dispatch_publishes_and_robot_acknowledges() {
    let api = api().await;
    let id = api.suggested("patrol area").await;
    let (s, body) = api
        .post(
            &format!("/sessions/{id}/dispatch"),
            json!({"candidate": 0, "modality": "Teleop", "teleop_key": "P", "robot_id": "TurtleBot 1"}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let result: DispatchResult = serde_json::from_value(body).unwrap();
    assert_eq!(result.envelope.target, "TurtleBot 1");
    assert_eq!(result.envelope.modality, Modality::Teleop);
    assert!(result.envelope.command.ends_with("key:P"));
    assert_eq!(result.satisfaction, SatisfactionLevel::VeryHigh);
    assert_eq!(result.evaluations.len(), ModuleId::ALL.len());

    let done = api.orch.wait_for_terminal(result.envelope.sequence, Duration::from_secs(5)).await.unwrap();
    assert_eq!(done.status, FeedbackStatus::Completed);
    let (_, session) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(session["status"], "Acknowledged");

    let (_, published) = api.get("/logs/published").await;
    assert_eq!(published.as_array().unwrap().len(), 1);
    let (_, received) = api.get("/logs/received").await;
    assert_eq!(received["TurtleBot 1"], published);
    assert!(received.get("TurtleBot 2").is_none());

    let (_, robots) = api.get("/robots").await;
    assert!(robots["TurtleBot 1"]["state"]["battery"].as_f64().unwrap() < 100.0);
    assert_eq!(robots["TurtleBot 2"]["state"]["battery"], 100.0);
}

#[tokio::test]
async fn error_statuses() {
    let api = api().await;
    let (s, body) = api.get("/sessions/s999").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_session");

    let id = api.session().await;
    let (s, body) = api.post(&format!("/sessions/{id}/keywords"), json!({"text": "  ,; !  "})).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("empty_keywords")));

    // Dispatch before keywords.
    let req = json!({"candidate": 0, "modality": "Text", "robot_id": "TurtleBot 1"});
    let (s, body) = api.post(&format!("/sessions/{id}/dispatch"), req.clone()).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::CONFLICT, Some("invalid_state")));
    // Comment before dispatch.
    let (s, _) = api.post(&format!("/sessions/{id}/comment"), json!({"text": "hi"})).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let id = api.suggested("move forward").await;
    let path = format!("/sessions/{id}/dispatch");
    let cases = [
        (json!({"candidate": 0, "modality": "Teleop", "robot_id": "TurtleBot 1"}), "missing_teleop_key"),
        (json!({"candidate": 0, "modality": "Teleop", "teleop_key": "?", "robot_id": "TurtleBot 1"}), "unknown_key"),
        (json!({"candidate": 0, "modality": "Text", "robot_id": "TurtleBot 7"}), "unknown_robot"),
        (json!({"candidate": 99, "modality": "Text", "robot_id": "TurtleBot 1"}), "bad_selection"),
        (json!({"candidate": 0, "modality": "Smoke", "robot_id": "TurtleBot 1"}), ""),
        (json!({"candidate": 0, "robot_id": "TurtleBot 1"}), "malformed"),
        (json!({"candidate": 0, "custom": "go", "modality": "Text", "robot_id": "TurtleBot 1"}), "malformed"),
        (json!({"transcript": "go", "modality": "Text", "robot_id": "TurtleBot 1"}), "malformed"),
    ];
    for (req, kind) in cases {
        let (s, body) = api.post(&path, req.clone()).await;
        assert!(s.is_client_error(), "{req} -> {s}");
        if !kind.is_empty() {
            assert_eq!(body["error"], kind, "{req}");
            assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
        }
    }
    // Nothing was published and the session can still dispatch.
    assert!(api.orch.published_log().is_empty());
    let (s, _) = api.post(&path, req_ok()).await;
    assert_eq!(s, StatusCode::OK);
    // A second dispatch needs new keywords.
    let (s, _) = api.post(&path, req_ok()).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

fn req_ok() -> Value {
    json!({"candidate": 0, "modality": "Text", "robot_id": "TurtleBot 2"})
}

#[tokio::test]
async fn custom_command_and_transcript_travel_verbatim() {
    let api = api().await;
    let id = api.suggested("move forward").await;
    let (_, body) = api
        .post(
            &format!("/sessions/{id}/dispatch"),
            json!({"transcript": "  run right ", "modality": "Voice", "robot_id": "TurtleBot 3"}),
        )
        .await;
    let r: DispatchResult = serde_json::from_value(body).unwrap();
    assert_eq!(r.envelope.command, "run right");
    assert_eq!(r.selected_context, "run right");
    assert_eq!(r.base_score, 0.6);

    let id = api.suggested("patrol perimeter").await;
    let (_, body) = api
        .post(
            &format!("/sessions/{id}/dispatch"),
            json!({"custom": "Patrol perimeter", "modality": "Text", "robot_id": "TurtleBot 1"}),
        )
        .await;
    let r: DispatchResult = serde_json::from_value(body).unwrap();
    assert_eq!(r.envelope.command, "Patrol perimeter");
    assert_eq!(r.base_score, 1.0);
}

#[tokio::test]
async fn comments_reach_analytics_last_write_wins() {
    let api = api().await;
    let id = api.suggested("move forward").await;
    let (_, body) = api.post(&format!("/sessions/{id}/dispatch"), req_ok()).await;
    let seq = body["envelope"]["sequence"].as_u64().unwrap();
    for text in ["meh", "good", "   "] {
        let (s, _) = api.post(&format!("/sessions/{id}/comment"), json!({"text": text})).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, analytics) = api.get("/analytics").await;
    let rec = &analytics["interactions"][0]["record"];
    assert_eq!(rec["sequence"].as_u64(), Some(seq));
    assert_eq!(rec["comment"], "good");
    assert_eq!(analytics["snapshot"]["interactions"], 1);
    assert_eq!(analytics["modality_histogram"]["Text"], 1);
    for m in ["TP", "IR", "MS", "CG"] {
        assert_eq!(analytics["score_series"][m].as_array().unwrap().len(), 1);
    }
    let (_, session) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(session["comment"], "good");
}

#[tokio::test]
async fn event_stream_follows_the_session() {
    let api = api().await;
    let id = api.session().await;
    let other = api.session().await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/events?session={id}", api.addr))
        .await
        .unwrap();
    // Give the upgrade a moment to subscribe before events start.
    tokio::time::sleep(Duration::from_millis(50)).await;

    api.post(&format!("/sessions/{other}/keywords"), json!({"text": "stop"})).await;
    api.post(&format!("/sessions/{id}/keywords"), json!({"text": "turn left"})).await;
    api.post(&format!("/sessions/{id}/dispatch"), req_ok()).await;

    let mut kinds = Vec::new();
    let mut statuses = Vec::new();
    while !statuses.contains(&"Completed".to_string()) {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        let Message::Text(text) = msg else { continue };
        let ev: Value = serde_json::from_str(&text).unwrap();
        if let Some(s) = ev.get("session") {
            assert_eq!(s["session_id"], id.as_str());
        }
        if ev["type"] == "feedback" {
            assert_eq!(ev["session_id"], id.as_str());
            statuses.push(ev["feedback"]["status"].as_str().unwrap().to_string());
        }
        kinds.push(ev["type"].as_str().unwrap().to_string());
    }
    assert_eq!(statuses, ["Received", "Executing", "Completed"]);
    for k in ["session", "published", "analytics", "feedback"] {
        assert!(kinds.iter().any(|x| x == k), "missing {k} in {kinds:?}");
    }
    let published = kinds.iter().position(|k| k == "published").unwrap();
    let first_fb = kinds.iter().position(|k| k == "feedback").unwrap();
    assert!(published < first_fb);
}

#[tokio::test]
async fn restart_rebuilds_analytics_and_resumes_sequence() {
    let dir = tempdir().unwrap();
    let swarm = LocalSwarm::start(&config(), None).await.unwrap();
    let before = {
        let orch = orchestrator(&swarm, Some(dir.path())).await;
        for kw in ["patrol area", "move forward"] {
            let s = orch.create_session();
            orch.submit_keywords(&s.session_id, kw).await.unwrap();
            let r = orch
                .dispatch(
                    &s.session_id,
                    DispatchRequest {
                        candidate: Some(0),
                        modality: Some(Modality::Text),
                        robot_id: "TurtleBot 1".into(),
                        ..Default::default()
                    },
                )
                .await
                .unwrap();
            orch.wait_for_terminal(r.envelope.sequence, Duration::from_secs(5)).await.unwrap();
            orch.submit_comment(&s.session_id, "ok").await.unwrap();
        }
        (orch.analytics(), orch.published_log(), orch.received_log())
    };

    let orch = orchestrator(&swarm, Some(dir.path())).await;
    let after = orch.analytics();
    assert_eq!(after, before.0);
    assert_eq!(orch.published_log(), before.1);
    assert_eq!(orch.received_log(), before.2);
    assert!(after.interactions.iter().all(|i| i.record.comment.as_deref() == Some("ok")));

    let s = orch.create_session();
    orch.submit_keywords(&s.session_id, "stop").await.unwrap();
    let r = orch
        .dispatch(
            &s.session_id,
            DispatchRequest {
                candidate: Some(0),
                modality: Some(Modality::Voice),
                robot_id: "TurtleBot 2".into(),
                ..Default::default()
            },
        )
        .await
        .unwrap();
    assert_eq!(r.envelope.sequence, before.1.last().unwrap().sequence + 1);
}
