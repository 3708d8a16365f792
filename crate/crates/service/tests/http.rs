use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

use emotrans_core::bws::{aggregate_scores, generate_tuples, Judgment, Reliability, ScoreTable, Tuple4};
use emotrans_core::data::Emotion;
use emotrans_service::*;

fn campaign(tuples: Vec<Tuple4>) -> Campaign {
    let mut ids: Vec<String> = tuples.iter().flat_map(|t| t.item_ids.iter().cloned()).collect();
    ids.sort();
    ids.dedup();
    Campaign::new("c1", ids.into_iter().map(|i| (i.clone(), format!("text of {i}"))), tuples).unwrap()
}

fn tuple(id: &str, items: [&str; 4]) -> Tuple4 {
    Tuple4::new(id, Emotion::Anger, items.map(String::from)).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    app: axum::Router,
    handle_log: std::path::PathBuf,
}

fn fixture(tuples: Vec<Tuple4>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("judgments.jsonl");
    let (handle, _) = CampaignHandle::open(campaign(tuples), &log).unwrap();
    Fixture {
        app: router(AppState::new([handle])),
        _dir: dir,
        handle_log: log,
    }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &axum::Router, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/campaigns/c1/judgments")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(app, req).await
}

fn parse<T: DeserializeOwned>(v: Value) -> T {
    serde_json::from_value(v).unwrap()
}

fn judgment(tuple: &str, annotator: &str, best: &str, worst: &str) -> Value {
    json!({"tuple_id": tuple, "annotator_id": annotator, "best": best, "worst": worst, "timestamp": 5})
}

#[tokio::test]
async fn fresh_campaign_serves_lowest_id() {
    let f = fixture(vec![tuple("t2", ["e", "f", "g", "h"]), tuple("t1", ["a", "b", "c", "d"])]);
    let (status, body) = get(&f.app, "/campaigns/c1/next?annotator=ann&emotion=anger").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "assigned");
    let NextTuple::Assigned(a) = parse::<NextTuple>(body) else {
        panic!("expected an assignment")
    };
    assert_eq!(a.tuple.tuple_id, "t1");
    assert_eq!(a.items[2].text, "text of c");
}

#[tokio::test]
async fn least_judged_first_and_done_marker() {
    let f = fixture(vec![tuple("tA", ["a", "b", "c", "d"]), tuple("tB", ["e", "f", "g", "h"])]);
    for who in ["x", "y", "z"] {
        assert_eq!(post(&f.app, judgment("tA", who, "a", "b")).await.0, StatusCode::OK);
    }
    assert_eq!(post(&f.app, judgment("tB", "x", "e", "f")).await.0, StatusCode::OK);
    let (_, body) = get(&f.app, "/campaigns/c1/next?annotator=fresh&emotion=anger").await;
    assert_eq!(body["tuple"]["tuple_id"], "tB");
    // x has judged both
    let (_, body) = get(&f.app, "/campaigns/c1/next?annotator=x&emotion=ANGER").await;
    assert_eq!(body["status"], "done");
    // y only has tB left
    let (_, body) = get(&f.app, "/campaigns/c1/next?annotator=y&emotion=anger").await;
    assert_eq!(body["tuple"]["tuple_id"], "tB");
}

#[tokio::test]
async fn request_errors() {
    let f = fixture(vec![tuple("t1", ["a", "b", "c", "d"])]);
    let (s, body) = get(&f.app, "/campaigns/c1/next?annotator=a&emotion=boredom").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "validation");
    let (s, _) = get(&f.app, "/campaigns/c1/next?annotator=a&emotion=joy").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, body) = get(&f.app, "/campaigns/nope/next?annotator=a&emotion=anger").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(body["message"].as_str().unwrap().contains("nope"));
    let (s, _) = post(&f.app, json!({"tuple_id": "t1"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn submit_rules() {
    let tuples: Vec<Tuple4> = (0..10)
        .map(|i| {
            let base = i * 4;
            Tuple4::new(format!("t{i:02}"), Emotion::Anger, [0, 1, 2, 3].map(|k| format!("i{}", base + k))).unwrap()
        })
        .collect();
    let f = fixture(tuples);
    let (s, body) = post(&f.app, judgment("t00", "ann", "i0", "i1")).await;
    assert_eq!(s, StatusCode::OK);
    let ack: Acknowledgment = parse(body);
    assert_eq!((ack.progress.judged, ack.progress.total), (1, 10));

    let (s, body) = post(&f.app, judgment("t01", "ann", "i4", "i4")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "validation");
    let (s, _) = post(&f.app, judgment("t01", "ann", "i4", "i0")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&f.app, judgment("t99", "ann", "i4", "i5")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let before = std::fs::read_to_string(&f.handle_log).unwrap();
    let (s, body) = post(&f.app, judgment("t00", "ann", "i2", "i3")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["code"], "conflict");
    assert_eq!(std::fs::read_to_string(&f.handle_log).unwrap(), before);
    assert_eq!(before.lines().count(), 1);

    let (_, body) = get(&f.app, "/campaigns/c1/progress?annotator=ann").await;
    let p: Vec<Progress> = parse(body);
    assert_eq!(p, vec![Progress { emotion: Emotion::Anger, judged: 1, total: 10 }]);
}

#[tokio::test]
async fn scores_and_reliability() {
    let t1 = tuple("t1", ["a", "b", "c", "d"]);
    let t2 = tuple("t2", ["c", "d", "e", "f"]);
    let t3 = tuple("t3", ["a", "c", "e", "f"]);
    let f = fixture(vec![t1.clone(), t2.clone(), t3.clone()]);

    let (s, body) = get(&f.app, "/campaigns/c1/scores?emotion=anger").await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");

    let js = [
        judgment("t1", "p", "a", "d"),
        judgment("t2", "p", "e", "d"),
        judgment("t3", "p", "a", "c"),
    ];
    for j in &js {
        assert_eq!(post(&f.app, j.clone()).await.0, StatusCode::OK);
    }
    let (s, body) = get(&f.app, "/campaigns/c1/scores?emotion=anger").await;
    assert_eq!(s, StatusCode::OK);
    let table: ScoreTable = parse(body);
    let expected: Vec<Judgment> = js.iter().map(|v| parse(v.clone())).collect();
    assert_eq!(table, aggregate_scores(&[t1, t2, t3], &expected).unwrap());

    // a single annotator cannot be split in halves
    let (s, body) = get(&f.app, "/campaigns/c1/reliability?emotion=anger").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("t1"), "{body}");

    for j in [
        judgment("t1", "q", "a", "d"),
        judgment("t2", "q", "e", "d"),
        judgment("t3", "q", "a", "c"),
    ] {
        post(&f.app, j).await;
    }
    let (s, body) = get(&f.app, "/campaigns/c1/reliability?emotion=anger&iterations=10&seed=3").await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let r: Reliability = parse(body);
    assert_eq!((r.pearson.mean, r.pearson.std, r.iterations, r.seed), (1.0, 0.0, 10, 3));
}

#[tokio::test]
async fn log_is_the_judgment_file_format() {
    let items: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let tuples = generate_tuples(&items, 2, Emotion::Joy, 1).unwrap();
    let f = fixture(tuples.clone());
    for t in &tuples {
        let body = json!({"tuple_id": t.tuple_id, "annotator_id": "a", "best": t.item_ids[0], "worst": t.item_ids[3]});
        assert_eq!(post(&f.app, body).await.0, StatusCode::OK);
    }
    let js: Vec<Judgment> = emotrans_core::data::read_jsonl(&f.handle_log).unwrap();
    assert_eq!(js.len(), tuples.len());
    assert!(js.iter().all(|j| j.timestamp > 0));
    let (_, body) = get(&f.app, "/campaigns/c1/scores?emotion=joy").await;
    assert_eq!(parse::<ScoreTable>(body), aggregate_scores(&tuples, &js).unwrap());
}
