use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use keydeform::checkpoint::Checkpoint;
use keydeform::deformer::{KeypointDeformer, KeypointSet, ModelConfig};
use keydeform::geom::write_obj;
use keydeform::prior::{fit_pca, PcaPrior};
use keydeform::Rng;
use keydeform_service::ops::{builtin_mesh, Model};
use keydeform_service::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn model(k: usize) -> Model {
    let config = ModelConfig {
        num_keypoints: k,
        ..ModelConfig::default()
    };
    let mut net = KeypointDeformer::new(config, &mut Rng::new(1)).unwrap();
    // an untrained model deforms nothing; give it some reach
    let mut rng = Rng::new(3);
    for w in net.canonical_influence.values.iter_mut() {
        *w = rng.range(0.2, 1.0);
    }
    Model::new(Checkpoint::new(net, "winged", json!({ "points": 256 })))
}

/// Prior over mirror-symmetric keypoint pairs `(2i, 2i + 1)` about `x = 0`.
fn symmetric_prior(k: usize) -> PcaPrior {
    let mut rng = Rng::new(2);
    let sets: Vec<KeypointSet> = (0..40)
        .map(|_| {
            let mut points = Vec::new();
            for _ in 0..k / 2 {
                let (x, y, z) = (rng.range(0.05, 0.45), rng.range(-0.3, 0.3), rng.range(-0.4, 0.4));
                points.push([-x, y, z]);
                points.push([x, y, z]);
            }
            KeypointSet { points }
        })
        .collect();
    fit_pca(&sets, 8).unwrap()
}

fn app(prior: Option<PcaPrior>) -> Router {
    router(Arc::new(AppState::new(model(8), prior)), None, 2 * 1024 * 1024)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn points(v: &Value) -> Vec<[f64; 3]> {
    serde_json::from_value(v.clone()).unwrap()
}

async fn open_builtin(app: &Router) -> Value {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "builtin": "winged" }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

#[tokio::test]
async fn health_reports_the_model() {
    let (status, body) = call(&app(None), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["num_keypoints"], 8);
    assert_eq!(body["prior"], false);
}

#[tokio::test]
async fn unedited_deform_returns_the_uploaded_mesh() {
    let app = app(None);
    let mesh = builtin_mesh("table").unwrap();
    let (status, session) = call(&app, "POST", "/sessions", Some(json!({ "obj": write_obj(&mesh) }))).await;
    assert_eq!(status, StatusCode::OK, "{session}");
    assert_eq!(points(&session["keypoints"]).len(), 8);
    assert_eq!(points(&session["cage"]["vertices"]).len(), 42);
    let id = session["session_id"].as_str().unwrap();
    let (status, out) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/deform"),
        Some(json!({ "edited_keypoints": session["keypoints"], "sync": false })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    for (a, b) in points(&out["vertices"]).iter().zip(&mesh.vertices) {
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-5);
        }
    }
    assert!(out["obj"].as_str().unwrap().starts_with("v "));
}

#[tokio::test]
async fn raw_obj_bodies_are_accepted() {
    let app = app(None);
    let obj = write_obj(&builtin_mesh("box").unwrap());
    let req = Request::post("/sessions").header("content-type", "text/plain").body(Body::from(obj)).unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn deformation_is_absolute_not_chained() {
    let app = app(None);
    let session = open_builtin(&app).await;
    let id = session["session_id"].as_str().unwrap();
    let mut moved = points(&session["keypoints"]);
    moved[3][1] += 0.1;
    let uri = format!("/sessions/{id}/deform");
    let (_, first) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": moved }))).await;
    let mut other = moved.clone();
    other[0][2] -= 0.05;
    call(&app, "POST", &uri, Some(json!({ "edited_keypoints": other }))).await;
    let (_, again) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": moved }))).await;
    assert_eq!(first["obj"], again["obj"]);

    let (status, reset) = call(&app, "POST", &format!("/sessions/{id}/reset"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reset["keypoints"], session["keypoints"]);
    let (_, got) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(got["keypoints"], session["keypoints"]);
}

#[tokio::test]
async fn sessions_do_not_share_state() {
    let app = app(None);
    let a = open_builtin(&app).await;
    let b = open_builtin(&app).await;
    assert_ne!(a["session_id"], b["session_id"]);
    let mut moved = points(&a["keypoints"]);
    moved[0][0] += 0.2;
    let uri_a = format!("/sessions/{}/deform", a["session_id"].as_str().unwrap());
    let uri_b = format!("/sessions/{}/deform", b["session_id"].as_str().unwrap());
    let (ra, rb) = tokio::join!(
        call(&app, "POST", &uri_a, Some(json!({ "edited_keypoints": moved }))),
        call(&app, "POST", &uri_b, Some(json!({ "edited_keypoints": b["keypoints"] }))),
    );
    assert_eq!(ra.0, StatusCode::OK);
    assert_eq!(rb.0, StatusCode::OK);
    assert_ne!(ra.1["obj"], rb.1["obj"]);
    let (_, b_state) = call(&app, "GET", &format!("/sessions/{}", b["session_id"].as_str().unwrap()), None).await;
    assert_eq!(b_state["keypoints"], b["keypoints"]);
}

#[tokio::test]
async fn error_statuses() {
    let app = app(None);
    let (status, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions/nope/deform", Some(json!({ "edited_keypoints": [] }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "obj": "v 0 0 0\nf 1 2 3\n" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "builtin": "teapot" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let session = open_builtin(&app).await;
    let uri = format!("/sessions/{}/deform", session["session_id"].as_str().unwrap());
    let mut short = points(&session["keypoints"]);
    short.pop();
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": short }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": "nope" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // without a prior, synchronization and prior sampling conflict
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": session["keypoints"], "sync": true }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", "/prior", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn prior_with_the_wrong_k_conflicts() {
    let app = router(Arc::new(AppState::new(model(8), Some(symmetric_prior(6)))), None, 1 << 20);
    let session = open_builtin(&app).await;
    let uri = format!("/sessions/{}/deform", session["session_id"].as_str().unwrap());
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": session["keypoints"], "sync": true }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", "/prior", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn oversized_uploads_are_rejected() {
    let app = router(Arc::new(AppState::new(model(8), None)), None, 1000);
    let big = "v 0 0 0\n".repeat(500);
    let req = Request::post("/sessions").header("content-type", "text/plain").body(Body::from(big)).unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn synchronized_edit_mirrors_the_partner() {
    let app = app(Some(symmetric_prior(8)));
    let session = open_builtin(&app).await;
    let uri = format!("/sessions/{}/deform", session["session_id"].as_str().unwrap());
    let mut kp = points(&session["keypoints"]);
    kp[3] = [0.35, 0.05, -0.1];
    let (status, out) = call(&app, "POST", &uri, Some(json!({ "edited_keypoints": kp, "sync": true }))).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    let got = points(&out["keypoints"]);
    assert_eq!(got[3], [0.35, 0.05, -0.1]);
    let partner = got[2];
    let mirror = [-0.35, 0.05, -0.1];
    let err = (0..3).map(|i| (partner[i] - mirror[i]).powi(2)).sum::<f64>().sqrt();
    assert!(err < 0.05, "partner {partner:?}");

    let (status, prior) = call(&app, "GET", "/prior", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(prior["n_basis"], 8);
}

#[tokio::test]
async fn prior_coefficients_drive_a_deformation() {
    let app = app(Some(symmetric_prior(8)));
    let session = open_builtin(&app).await;
    let uri = format!("/sessions/{}/prior", session["session_id"].as_str().unwrap());
    let (status, zero) = call(&app, "POST", &uri, Some(json!({ "coefficients": vec![0.0; 8] }))).await;
    assert_eq!(status, StatusCode::OK, "{zero}");
    let (_, one) = call(&app, "POST", &uri, Some(json!({ "coefficients": [0.1, 0, 0, 0, 0, 0, 0, 0] }))).await;
    assert_ne!(zero["obj"], one["obj"]);
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "coefficients": vec![0.0; 3] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn static_files_are_served_alongside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>x</title>").unwrap();
    let app = router(Arc::new(AppState::new(model(8), None)), Some(dir.path().to_path_buf()), 1 << 20);
    let resp = app.clone().oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let resp = app.oneshot(Request::get("/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
