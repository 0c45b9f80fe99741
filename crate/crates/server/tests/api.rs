//! HTTP API over a store built from the fixtures, driven in-process.

mod common;

use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use tutorviz::api::router_for;
use tutorviz::Store;
use tutorviz_core::layout::default_layout;
use tutorviz_core::replay::parse_corpus_path;
use tutorviz_core::views::{filtered_layout, FilterSpec};
use tutorviz_core::{build_automaton, group_super_states, AssignmentConfig};

fn fixture() -> &'static common::Fixture {
    static F: OnceLock<common::Fixture> = OnceLock::new();
    F.get_or_init(common::build)
}

fn app() -> Router {
    router_for(&Store::open(fixture().dir.path()).unwrap()).unwrap()
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(app, uri).await;
    (status, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn graph_bytes_equal_the_library_output() {
    let f = fixture();
    let app = app();
    let store = Store::open(f.dir.path()).unwrap();
    let a = store.automaton(&f.whole, 0).unwrap();
    let layout = store.layout(&f.whole, 0).unwrap();

    // the same graph computed from the raw fixture, without the store
    let config = AssignmentConfig::from_json(&std::fs::read_to_string(common::fixture("demo_config.json")).unwrap()).unwrap();
    let logs = parse_corpus_path(&common::fixture("corpus87/events.jsonl")).unwrap().logs;
    let mut fresh = group_super_states(&build_automaton(&logs, &config).unwrap());
    fresh.cluster_id = Some(0);
    assert_eq!(fresh, a);
    let mut fresh_layout = default_layout(&fresh, &config.correct_flow);
    fresh_layout.cluster_id = layout.cluster_id;
    assert_eq!(fresh_layout, layout);

    for (node, edge) in [(0.0, 0.0), (5.0, 5.0), (20.0, 10.0), (64.3, 0.0), (100.0, 100.0)] {
        let spec = FilterSpec::new(node, edge).unwrap();
        let library = serde_json::to_vec(&filtered_layout(&fresh_layout, &fresh, &spec)).unwrap();
        let (status, body) = get(&app, &format!("/models/{}/clusters/0/graph?min_node_freq={node}&min_edge_freq={edge}", f.whole)).await;
        assert_eq!(status, StatusCode::OK);
        assert!(body == library, "graph bytes differ at {node}/{edge}");
    }
}

#[tokio::test]
async fn filters_shrink_the_graph() {
    let f = fixture();
    let app = app();
    let (_, all) = get_json(&app, &format!("/models/{}/clusters/0/graph", f.whole)).await;
    let (_, some) = get_json(&app, &format!("/models/{}/clusters/0/graph?min_node_freq=10&min_edge_freq=10", f.whole)).await;
    let count = |v: &Value, k: &str| v[k].as_array().unwrap().len();
    assert!(count(&some, "nodes") < count(&all, "nodes"));
    assert!(count(&some, "edges") < count(&all, "edges"));
    assert_eq!(all["n_students"], 87);
    // filtering keeps positions
    let pos = |v: &Value| -> std::collections::BTreeMap<String, (f64, f64)> {
        v["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| (n["id"].as_str().unwrap().to_string(), (n["x"].as_f64().unwrap(), n["y"].as_f64().unwrap())))
            .collect()
    };
    let (p_all, p_some) = (pos(&all), pos(&some));
    assert!(p_some.iter().all(|(id, xy)| p_all[id] == *xy));
}

#[tokio::test]
async fn listings() {
    let f = fixture();
    let app = app();
    let (status, models) = get_json(&app, "/models").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = models.as_array().unwrap().iter().map(|m| m["model_id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 2);
    assert!(ids.contains(&f.whole.as_str()) && ids.contains(&f.eras.as_str()));
    let (_, clusters) = get_json(&app, &format!("/models/{}/clusters", f.whole)).await;
    assert_eq!(clusters[0]["n_students"], 87);
}

#[tokio::test]
async fn errors_are_json_with_codes() {
    let f = fixture();
    let app = app();
    let cases = [
        ("/models/nope/clusters".to_string(), StatusCode::NOT_FOUND, "unknown_model"),
        (format!("/models/{}/clusters/9/graph", f.whole), StatusCode::NOT_FOUND, "unknown_cluster"),
        (format!("/models/{}/clusters/x/graph", f.whole), StatusCode::NOT_FOUND, "unknown_cluster"),
        (format!("/models/{}/clusters/0/states/correct_flow:5:nothing:-:none", f.whole), StatusCode::NOT_FOUND, "unknown_state"),
        (format!("/models/{}/clusters/0/states/garbage", f.whole), StatusCode::NOT_FOUND, "unknown_state"),
        (format!("/models/{}/clusters/0/graph?min_node_freq=150", f.whole), StatusCode::BAD_REQUEST, "invalid_params"),
        (format!("/models/{}/clusters/0/graph?min_edge_freq=lots", f.whole), StatusCode::BAD_REQUEST, "invalid_params"),
        (format!("/models/{}/clusters/0/search?q=f1&zone=nowhere", f.whole), StatusCode::BAD_REQUEST, "invalid_params"),
        (format!("/models/{}/date-view?from=2013-01-01", f.whole), StatusCode::BAD_REQUEST, "invalid_params"),
        (format!("/models/{}/date-view?from=2014-01-01&to=2013-01-01", f.whole), StatusCode::BAD_REQUEST, "invalid_params"),
        (format!("/models/{}/date-view?from=2001-01-01&to=2001-02-01", f.whole), StatusCode::BAD_REQUEST, "no_data"),
        (format!("/models/{}/students/nobody/trace", f.whole), StatusCode::NOT_FOUND, "unknown_student"),
        (
            format!("/models/{}/compare?from_a=2001-01-01&to_a=2001-12-31&from_b=2016-01-01&to_b=2016-12-31", f.eras),
            StatusCode::BAD_REQUEST,
            "no_data",
        ),
        ("/nothing/here".to_string(), StatusCode::NOT_FOUND, "not_found"),
    ];
    for (uri, status, code) in cases {
        let (got, body) = get_json(&app, &uri).await;
        assert_eq!(got, status, "{uri}: {body}");
        assert_eq!(body["error"]["code"], code, "{uri}");
        assert!(!body["error"]["message"].as_str().unwrap().is_empty());
    }
}

#[tokio::test]
async fn search_and_state_details() {
    let f = fixture();
    let app = app();
    let (_, hits) = get_json(&app, &format!("/models/{}/clusters/0/search?q=f3t61&zone=correct", f.whole)).await;
    let hits = hits.as_array().unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0]["id"], "correct_flow:99:f3t61:-:none");
    assert_eq!(hits[0]["count"], 1);
    let (_, inline) = get_json(&app, &format!("/models/{}/clusters/0/search?q=f3t61%20correct", f.whole)).await;
    assert_eq!(inline.as_array().unwrap().len(), 1);
    let (_, wide) = get_json(&app, &format!("/models/{}/clusters/0/search?q=f3t61", f.whole)).await;
    assert!(wide.as_array().unwrap().len() > 1);

    let (status, d) = get_json(&app, &format!("/models/{}/clusters/0/states/correct_flow:0::-:none", f.whole)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["type"], "state");
    assert_eq!(d["count"], 87);
    assert_eq!(d["frequency"], 100.0);
    assert!(d["incoming"].as_array().unwrap().is_empty());
    let out: u64 = d["outgoing"].as_array().unwrap().iter().map(|e| e["count"].as_u64().unwrap()).sum();
    assert!(out >= 87);
}

#[tokio::test]
async fn date_view_and_trace() {
    let f = fixture();
    let app = app();
    let (status, g) = get_json(&app, &format!("/models/{}/date-view?from=2016-01-01&to=2016-12-31", f.eras)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(g["n_students"], 17);
    let (_, g) = get_json(&app, &format!("/models/{}/date-view?from=2013-01-01&to=2015-12-31&cluster=0", f.eras)).await;
    assert_eq!(g["n_students"], 68);

    let (status, t) = get_json(&app, &format!("/models/{}/students/s022/trace", f.whole)).await;
    assert_eq!(status, StatusCode::OK);
    let steps = t["steps"].as_array().unwrap();
    assert!(steps.iter().all(|s| s["zone"] == "correct_flow"));
    assert_eq!(steps.last().unwrap()["id"], "correct_flow:99:f3t61:-:none");
    assert_eq!(t["nodes"].as_array().unwrap().len(), steps.len() + 1);
}

#[tokio::test]
async fn compare_over_the_api() {
    let f = fixture();
    let app = app();
    let (status, c) =
        get_json(&app, &format!("/models/{}/compare?from_a=2013-01-01&to_a=2015-12-31&from_b=2016-01-01&to_b=2016-12-31", f.eras)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((c["n_a"].as_u64(), c["n_b"].as_u64()), (Some(68), Some(17)));
    let row = c["rows"].as_array().unwrap().iter().find(|r| r["label"] == "f1t20_f1t16").unwrap();
    assert_eq!(row["difference"], 0.25);
    assert_eq!(row["change_id"], "2");

    let (_, same) =
        get_json(&app, &format!("/models/{}/compare?from_a=2013-01-01&to_a=2016-12-31&from_b=2013-01-01&to_b=2016-12-31", f.eras)).await;
    assert!(same["rows"].as_array().unwrap().iter().all(|r| r["difference"] == 0.0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_readers_see_identical_bytes() {
    let f = fixture();
    let app = app();
    let uri = format!("/models/{}/clusters/0/graph?min_node_freq=2", f.whole);
    let (_, expected) = get(&app, &uri).await;
    let tasks: Vec<_> = (0..50)
        .map(|_| {
            let (app, uri) = (app.clone(), uri.clone());
            tokio::spawn(async move { get(&app, &uri).await })
        })
        .collect();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert!(body == expected);
    }
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(64))]

    #[test]
    fn any_filter_matches_the_library(node in 0.0f64..=100.0, edge in 0.0f64..=100.0) {
        let f = fixture();
        let store = Store::open(f.dir.path()).unwrap();
        let (a, layout) = (store.automaton(&f.eras, 0).unwrap(), store.layout(&f.eras, 0).unwrap());
        let library = serde_json::to_vec(&filtered_layout(&layout, &a, &FilterSpec::new(node, edge).unwrap())).unwrap();
        let runtime = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let (status, body) = runtime.block_on(get(&app(), &format!("/models/{}/clusters/0/graph?min_node_freq={node}&min_edge_freq={edge}", f.eras)));
        proptest::prop_assert_eq!(status, StatusCode::OK);
        proptest::prop_assert!(body == library);
    }
}
