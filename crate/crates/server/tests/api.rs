use std::path::Path;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use snowgt_core::api::{MutationAck, VideoDetail, VideoSummary};
use snowgt_core::dataset::{Dataset, VideoStatus};
use snowgt_core::lowrank::DesnowParams;
use snowgt_core::synth::{synth_snow_video, textured_background, SnowParams};
use snowgt_core::video::save_frames;
use snowgt_server::{router, AppState};
use tower::ServiceExt;

fn dataset(root: &Path, ids: &[&str]) -> Dataset {
    let mut ds = Dataset::open_or_create(root).unwrap();
    let sources: Vec<_> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let dir = root.join("src").join(id);
            let bg = textured_background(24, 32, 1, 0.2, 0.7, i as u64);
            let sv = synth_snow_video(&bg, 6, &SnowParams::default(), 100 + i as u64).unwrap();
            save_frames(&sv.video, &dir).unwrap();
            dir
        })
        .collect();
    ds.ingest(&sources, false).unwrap();
    for id in ids {
        ds.generate_candidates(id, &[DesnowParams::default()])
            .unwrap();
    }
    ds
}

fn app(ds: Dataset) -> Router {
    router(AppState::new(ds), None)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Option<String>, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let ctype = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, ctype, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Option<String>, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, _, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn lists_ingested_videos() {
    let root = tempfile::tempdir().unwrap();
    let app = app(dataset(root.path(), &["beta", "alpha"]));
    let (status, ctype, body) = get(&app, "/api/videos").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("application/json"));
    let list: Vec<VideoSummary> = serde_json::from_slice(&body).unwrap();
    let ids: Vec<_> = list.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, vec!["alpha", "beta"]);
    assert_eq!(list[0].frames, 6);
    assert_eq!(
        (list[0].resolution.width, list[0].resolution.height),
        (32, 24)
    );
    assert_eq!(list[0].status, VideoStatus::Pending);

    let raw: Value = serde_json::from_slice(&body).unwrap();
    let keys: Vec<_> = raw[0].as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, vec!["frames", "id", "resolution", "status"]);
}

#[tokio::test]
async fn empty_dataset_lists_nothing() {
    let root = tempfile::tempdir().unwrap();
    let app = app(Dataset::open_or_create(root.path()).unwrap());
    let (status, _, body) = get(&app, "/api/videos").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"[]");
}

#[tokio::test]
async fn frames_and_overlays_are_png() {
    let root = tempfile::tempdir().unwrap();
    let ds = dataset(root.path(), &["a"]);
    let tag = DesnowParams::default().tag();
    let app = app(ds);
    for uri in [
        "/api/videos/a/frames/0".to_string(),
        "/api/videos/a/frames/5?kind=snowy".to_string(),
        format!("/api/videos/a/frames/2?kind=candidate&params={tag}"),
        "/api/videos/a/residual/1?tau=0.05".to_string(),
        "/api/videos/a/residual/1".to_string(),
    ] {
        let (status, ctype, body) = get(&app, &uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        assert_eq!(ctype.as_deref(), Some("image/png"));
        assert_eq!(&body[..8], b"\x89PNG\r\n\x1a\n");
    }
}

#[tokio::test]
async fn errors_have_structured_bodies() {
    let root = tempfile::tempdir().unwrap();
    let app = app(dataset(root.path(), &["a"]));
    let cases = [
        (
            "/api/videos/ghost/frames/0",
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        ("/api/videos/a/frames/6", StatusCode::NOT_FOUND, "bounds"),
        (
            "/api/videos/a/frames/x",
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        (
            "/api/videos/a/frames/0?kind=weird",
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        (
            "/api/videos/a/frames/0?kind=candidate&params=nope",
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "/api/videos/a/residual/0?tau=2",
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        ("/api/videos/ghost", StatusCode::NOT_FOUND, "not_found"),
        ("/api/nothing/here", StatusCode::NOT_FOUND, "not_found"),
    ];
    for (uri, want, code) in cases {
        let (status, _, body) = get(&app, uri).await;
        assert_eq!(status, want, "{uri}");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(v["code"], code, "{uri}");
        assert!(v["error"].as_str().is_some_and(|s| !s.is_empty()));
    }
}

#[tokio::test]
async fn malformed_selection_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let ds = dataset(root.path(), &["a"]);
    let before = std::fs::read(ds.manifest_path()).unwrap();
    let app = app(ds);
    let (status, body) = post(&app, "/api/videos/a/selection", json!({"note": "no frame"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");

    let raw = Request::post("/api/videos/a/selection")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(send(&app, raw).await.0, StatusCode::BAD_REQUEST);

    let (status, body) = post(&app, "/api/videos/a/selection", json!({"frame": 40})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    let (status, _) = post(&app, "/api/videos/ghost/selection", json!({"frame": 0})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(
        std::fs::read(root.path().join("manifest.json")).unwrap(),
        before
    );
}

#[tokio::test]
async fn selection_survives_restart() {
    let root = tempfile::tempdir().unwrap();
    let app1 = app(dataset(root.path(), &["a", "b"]));
    let (status, body) = post(
        &app1,
        "/api/videos/a/selection",
        json!({"frame": 3, "note": "sharp"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let ack: MutationAck = serde_json::from_value(body).unwrap();
    assert!(ack.ok);
    drop(app1);

    let app2 = app(Dataset::open(root.path()).unwrap());
    assert_eq!(
        Dataset::open(root.path()).unwrap().manifest().revision,
        ack.manifest_revision
    );
    let (_, _, body) = get(&app2, "/api/videos/a").await;
    let detail: VideoDetail = serde_json::from_slice(&body).unwrap();
    assert_eq!(detail.status, VideoStatus::Selected);
    let sel = detail.selection.unwrap();
    assert_eq!((sel.frame, sel.note.as_str()), (3, "sharp"));
    assert_eq!(detail.tags, vec![DesnowParams::default().tag()]);

    let (_, _, body) = get(&app2, "/api/videos").await;
    let list: Vec<VideoSummary> = serde_json::from_slice(&body).unwrap();
    assert_eq!(list[0].status, VideoStatus::Selected);
    assert_eq!(list[1].status, VideoStatus::Pending);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_selections_last_write_wins() {
    let root = tempfile::tempdir().unwrap();
    let ds = dataset(root.path(), &["a"]);
    let start = ds.manifest().revision;
    let app = app(ds);
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move {
                let frame = i % 6;
                let (status, body) = post(
                    &app,
                    "/api/videos/a/selection",
                    json!({"frame": frame, "note": format!("w{i}")}),
                )
                .await;
                assert_eq!(status, StatusCode::OK);
                let ack: MutationAck = serde_json::from_value(body).unwrap();
                (ack.manifest_revision, i)
            })
        })
        .collect();
    let mut acks = Vec::new();
    for t in tasks {
        acks.push(t.await.unwrap());
    }
    acks.sort();
    let revisions: Vec<u64> = acks.iter().map(|a| a.0).collect();
    assert_eq!(revisions, (start + 1..=start + 32).collect::<Vec<_>>());

    // the write acknowledged with the highest revision is the one on disk
    let (_, last) = *acks.last().unwrap();
    let reloaded = Dataset::open(root.path()).unwrap();
    reloaded.manifest().check_integrity().unwrap();
    let sel = &reloaded.manifest().selections["a"];
    assert_eq!(
        (sel.frame, sel.note.clone()),
        (last % 6, format!("w{last}"))
    );
    assert_eq!(reloaded.manifest().revision, start + 32);
}

#[tokio::test]
async fn rejection_then_selection_conflicts() {
    let root = tempfile::tempdir().unwrap();
    let app = app(dataset(root.path(), &["a"]));
    let (status, _) = post(&app, "/api/videos/a/rejection", json!({"note": "too dark"})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = post(&app, "/api/videos/a/selection", json!({"frame": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "invalid_transition");
    let (status, _) = post(&app, "/api/videos/a/rejection", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn export_writes_pairs() {
    let root = tempfile::tempdir().unwrap();
    let app = app(dataset(root.path(), &["a", "b"]));
    let (status, body) = post(&app, "/api/export", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "nothing_selected");

    post(&app, "/api/videos/b/selection", json!({"frame": 2})).await;
    let (status, body) = post(&app, "/api/export", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pairs"], 1);
    let report = body["report_path"].as_str().unwrap();
    assert!(Path::new(report).is_file());
    assert!(root.path().join("export/gt/pair_00000.png").is_file());

    let (status, _) = post(&app, "/api/export", json!([1, 2])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn serves_static_ui_next_to_api() {
    let root = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(
        ui.path().join("index.html"),
        "<!doctype html><title>ui</title>",
    )
    .unwrap();
    let app = router(AppState::new(dataset(root.path(), &["a"])), Some(ui.path()));
    let (status, ctype, body) = get(&app, "/").await;
    assert_eq!(status, StatusCode::OK);
    assert!(ctype.unwrap().starts_with("text/html"));
    assert!(String::from_utf8(body)
        .unwrap()
        .contains("<title>ui</title>"));
    assert_eq!(get(&app, "/api/videos").await.0, StatusCode::OK);
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let first = snowgt_server::bind("127.0.0.1:0").await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    let err = snowgt_server::bind(&addr).await.unwrap_err();
    assert!(matches!(err, snowgt_server::ServerError::Bind { .. }));
    assert!(err.to_string().contains(&addr));
}
