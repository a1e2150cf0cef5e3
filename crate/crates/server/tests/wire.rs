mod support;

use colex_server::{spawn, ExperimentConfig, Hub};
use serde_json::json;

fn config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        port: 0,
        admin_token: "s3cret".into(),
        data_dir: dir.to_path_buf(),
        seed: Some(11),
        ..Default::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn fifty_concurrent_dyads_replay_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Hub::open(config(dir.path())).unwrap()).await.unwrap();
    let outcomes = support::drive_dyads(server.addr, 50, 3, 0.2).await;
    assert_eq!(outcomes.len(), 100);
    assert!(outcomes.iter().all(|o| o.score.is_some()), "a client did not finish");
    assert!(outcomes.iter().map(|o| o.duplicates_sent).sum::<usize>() > 0);

    let http = reqwest::Client::new();
    let url = format!("http://{}/api/admin/export", server.addr);
    let res = http.get(&url).bearer_auth("s3cret").send().await.unwrap();
    assert_eq!(res.status(), 200);
    let bytes = res.bytes().await.unwrap();
    let check = support::check_archive(&bytes);
    assert!(check.has_config);
    assert_eq!(check.dyads, 50);
    assert_eq!(check.complete, 50);
    assert!(check.violations.is_empty(), "{:?}", check.violations);
    assert!(check.rounds.values().all(|&r| r == (135, 135)), "{:?}", check.rounds);

    let health: serde_json::Value = http
        .get(format!("http://{}/api/health", server.addr))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(health["dyads_total"], 50);
    assert_eq!(health["dyads_active"], 0);
}

#[tokio::test]
async fn http_errors() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Hub::open(config(dir.path())).unwrap()).await.unwrap();
    let http = reqwest::Client::new();
    let base = format!("http://{}", server.addr);

    let res = http.post(format!("{base}/api/join")).json(&json!({"consent": false})).send().await.unwrap();
    assert_eq!(res.status(), 400);

    let url = format!("{base}/api/admin/export");
    assert_eq!(http.get(&url).bearer_auth("wrong").send().await.unwrap().status(), 403);
    assert_eq!(http.get(&url).send().await.unwrap().status(), 403);

    let res = http
        .post(format!("{base}/api/feedback"))
        .json(&json!({"token": "nobody", "text": "hi", "took_notes": false}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 401);

    let joined: serde_json::Value = http
        .post(format!("{base}/api/join"))
        .json(&json!({"consent": true}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let token = joined["token"].as_str().unwrap();
    assert_eq!(token.len(), 32);
    assert!(joined["dyad"].is_null());
    let res = http
        .post(format!("{base}/api/feedback"))
        .json(&json!({"token": token, "text": "fun", "took_notes": true}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);

    let bad_ws = tokio_tungstenite::connect_async(format!("ws://{}/api/ws?token=nobody", server.addr)).await;
    assert!(bad_ws.is_err());
}
