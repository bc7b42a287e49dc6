use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cylgames::atom_structure::fixtures;
use cylgames::games::*;
use cylgames::rainbow::RainbowParams;
use cylgames::rainbow_games::*;
use cylgames::service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(7, None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn upload(app: &Router, v: Value) -> String {
    let (st, r) = call(app, "POST", "/api/structures", Some(&v.to_string())).await;
    assert_eq!(st, StatusCode::CREATED, "{r}");
    r["id"].as_str().unwrap().to_string()
}

async fn new_game(app: &Router, v: Value) -> String {
    let (st, r) = call(app, "POST", "/api/games", Some(&v.to_string())).await;
    assert_eq!(st, StatusCode::CREATED, "{r}");
    r["gameId"].as_str().unwrap().to_string()
}

fn set_algebra() -> Value {
    fixtures::full_set_algebra(2, 2, "s").to_json().unwrap()
}

#[tokio::test]
async fn structures_are_listed() {
    let app = app();
    let a = upload(&app, fixtures::one_atom(3).to_json().unwrap()).await;
    let b = upload(&app, json!({"params": RainbowParams::minimal().to_json()})).await;
    let (st, v) = call(&app, "GET", "/api/structures", None).await;
    assert_eq!(st, StatusCode::OK);
    let ids: Vec<&str> = v["structures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, vec![a.as_str(), b.as_str()]);
    assert_eq!(v["structures"][1]["kind"], "rainbow");
}

#[tokio::test]
async fn human_abelard_sees_one_initial_move_per_atom() {
    let app = app();
    let s = set_algebra();
    let atoms = s["atoms"].as_array().unwrap().len();
    let sid = upload(&app, s).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "H", "humanRole": "A", "rounds": 2}),
    )
    .await;
    let (st, v) = call(&app, "GET", &format!("/api/games/{gid}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["round"], 0);
    assert_eq!(v["toMove"], "A");
    let legal = v["legal"].as_array().unwrap();
    assert_eq!(legal.len(), atoms);
    assert!(legal.iter().all(|m| m["type"] == "initial"));
}

#[tokio::test]
async fn errors_have_the_right_status() {
    let app = app();
    let (st, _) = call(&app, "GET", "/api/games/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(
        &app,
        "POST",
        "/api/games/nope/moves",
        Some(r#"{"move":{}}"#),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/api/structures", Some("{not json")).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/api/games", Some(r#"{"structureId":"s99"}"#)).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let sid = upload(&app, set_algebra()).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "F", "humanRole": "A", "rounds": 2}),
    )
    .await;
    let (st, _) = call(
        &app,
        "POST",
        &format!("/api/games/{gid}/moves"),
        Some(r#"{"move":{"type":"warp"}}"#),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn illegal_cylindrifier_gets_409_with_the_legal_list() {
    let app = app();
    let sid = upload(&app, set_algebra()).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "H", "humanRole": "A", "rounds": 3}),
    )
    .await;
    let (_, v) = call(&app, "GET", &format!("/api/games/{gid}"), None).await;
    let first = v["legal"][0].clone();
    let (st, v) = call(
        &app,
        "POST",
        &format!("/api/games/{gid}/moves"),
        Some(&json!({"move": first}).to_string()),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    // The engine answered inside the same response.
    assert_eq!(v["round"], 1);
    assert_eq!(v["toMove"], "A");
    let legal = v["legal"].as_array().unwrap().clone();
    let cyl = legal
        .iter()
        .find(|m| m["type"] == "cylindrifier")
        .unwrap()
        .clone();
    let atoms = set_algebra()["atoms"].as_array().unwrap().clone();
    // Some atom that is not a legal demand on this face.
    let bad = atoms
        .iter()
        .map(|a| {
            let mut m = cyl.clone();
            m["atom"] = a.clone();
            m
        })
        .find(|m| !legal.contains(m))
        .expect("an illegal demand");
    let (st, r) = call(
        &app,
        "POST",
        &format!("/api/games/{gid}/moves"),
        Some(&json!({"move": bad}).to_string()),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT, "{r}");
    assert_eq!(r["legal"].as_array().unwrap(), &legal);
}

#[tokio::test]
async fn human_eloise_answers_by_index() {
    let app = app();
    let sid = upload(&app, set_algebra()).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "H", "humanRole": "E", "rounds": 2}),
    )
    .await;
    for round in 0..2 {
        let (_, v) = call(&app, "GET", &format!("/api/games/{gid}"), None).await;
        assert_eq!(v["toMove"], "E", "{v}");
        assert!(!v["pending"].is_null());
        assert_eq!(v["round"], round);
        let n = v["legal"].as_array().unwrap().len();
        assert!(n > 0);
        let (st, _) = call(
            &app,
            "POST",
            &format!("/api/games/{gid}/moves"),
            Some(&json!({"move": {"response": n + 5}}).to_string()),
        )
        .await;
        assert_eq!(st, StatusCode::CONFLICT);
        let (st, v) = call(
            &app,
            "POST",
            &format!("/api/games/{gid}/moves"),
            Some(r#"{"move":{"response":0}}"#),
        )
        .await;
        assert_eq!(st, StatusCode::OK, "{v}");
    }
    let (_, v) = call(&app, "GET", &format!("/api/games/{gid}"), None).await;
    assert_eq!(v["winner"], "E");
    assert!(v["toMove"].is_null());
    let (st, _) = call(
        &app,
        "POST",
        &format!("/api/games/{gid}/moves"),
        Some(r#"{"move":{"response":0}}"#),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn scripted_abelard_through_the_api_matches_a_direct_run() {
    let p = RainbowParams::default();
    let game = RainbowGame::new(p, GameKind::F { m: 5 });
    let script = ScriptAbelard::new(&p, 4).unwrap();
    let (trace, _) = run_match(&game, "F5", &mut script.clone(), &mut FirstEloise, 4, true);
    let expected = trace.to_json();

    let app = app();
    let sid = upload(&app, json!({"params": p.to_json()})).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "F", "m": 5, "humanRole": "A", "rounds": 4}),
    )
    .await;
    for step in expected["moves"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["by"] == "A")
    {
        let (st, v) = call(
            &app,
            "POST",
            &format!("/api/games/{gid}/moves"),
            Some(&json!({"move": step["move"]}).to_string()),
        )
        .await;
        assert_eq!(st, StatusCode::OK, "{v}");
    }
    let (_, v) = call(&app, "GET", &format!("/api/games/{gid}"), None).await;
    assert_eq!(v["history"], expected["moves"]);
    assert_eq!(v["winner"], expected["winner"]);
    assert_eq!(v["haltReason"], expected["haltReason"]);
}

#[tokio::test]
async fn rainbow_h_engine_uses_the_strategy() {
    let p = RainbowParams {
        n: 3,
        green_low: -3,
        red_bound: 244,
        yellow_universe: 8,
    };
    let app = app();
    let sid = upload(&app, json!({"params": p.to_json()})).await;
    let gid = new_game(
        &app,
        json!({"structureId": sid, "kind": "H", "humanRole": "A", "rounds": 2}),
    )
    .await;
    let g = cylgames::rainbow_games::script_initial_graph(3);
    let mv = RMove::Initial(cylgames::rainbow::RainbowAtom::of_tuple(&g, &[0, 1, 2]));
    let game = RainbowGame::new(p, GameKind::H);
    let body = json!({"move": game.move_json(&mv)}).to_string();
    let (st, v) = call(
        &app,
        "POST",
        &format!("/api/games/{gid}/moves"),
        Some(&body),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["round"], 1);
    assert!(v["legalTruncated"].as_bool().unwrap());
    assert_eq!(v["state"]["nets"].as_array().unwrap().len(), 1);
}
