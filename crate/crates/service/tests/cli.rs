use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use keydeform::geom::write_obj;
use keydeform_service::ops::{builtin_mesh, Model};
use keydeform_service::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn keydeform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keydeform")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = keydeform(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_tiny(out: &Path) {
    ok(&[
        "train", "--synthetic", "winged", "--count", "4", "--keypoints", "4", "--iters", "4", "--points", "64",
        "--batch", "2", "--seed", "5", "--out", s(out),
    ]);
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn training_is_deterministic_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    train_tiny(&a);
    train_tiny(&b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let log = std::fs::read_to_string(dir.path().join("a.ckpt.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["iteration", "L_sim", "L_kpt", "L_inf", "total"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn keypoints_then_deform_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    train_tiny(&ckpt);
    let mesh = builtin_mesh("winged").unwrap();
    let mesh_path = dir.path().join("in.obj");
    std::fs::write(&mesh_path, write_obj(&mesh)).unwrap();
    let kp = dir.path().join("kp.json");
    ok(&["keypoints", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--out", s(&kp)]);
    assert_eq!(read_json(&kp)["keypoints"].as_array().unwrap().len(), 4);
    let out = dir.path().join("out.obj");
    ok(&["deform", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--target-keypoints", s(&kp), "--out", s(&out)]);
    let deformed = keydeform::geom::load_obj(&out).unwrap();
    assert_eq!(deformed.faces, mesh.faces);
    for (a, b) in deformed.vertices.iter().zip(&mesh.vertices) {
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-5);
        }
    }
}

/// The CLI and the HTTP service run the same code path and agree byte for byte.
#[tokio::test]
async fn cli_and_service_agree() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    train_tiny(&ckpt);
    let obj = write_obj(&builtin_mesh("table").unwrap());
    let mesh_path = dir.path().join("in.obj");
    std::fs::write(&mesh_path, &obj).unwrap();

    let app = router(Arc::new(AppState::new(Model::load(&ckpt).unwrap(), None)), None, 1 << 21);
    let post = |uri: String, body: Value| {
        let app = app.clone();
        async move {
            let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string()));
            let resp = app.oneshot(req.unwrap()).await.unwrap();
            assert_eq!(resp.status(), StatusCode::OK);
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            serde_json::from_slice::<Value>(&bytes).unwrap()
        }
    };
    let session = post("/sessions".into(), json!({ "obj": obj })).await;
    let mut target: Vec<[f64; 3]> = serde_json::from_value(session["keypoints"].clone()).unwrap();
    target[1][0] += 0.07;
    target[2][2] -= 0.04;
    let id = session["session_id"].as_str().unwrap();
    let http = post(format!("/sessions/{id}/deform"), json!({ "edited_keypoints": target })).await;

    let kp_path = dir.path().join("target.json");
    std::fs::write(&kp_path, json!({ "keypoints": target }).to_string()).unwrap();
    let out = dir.path().join("cli.obj");
    ok(&["deform", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--target-keypoints", s(&kp_path), "--out", s(&out)]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), http["obj"].as_str().unwrap());

    // the keypoints command reports what the service shows
    let kp = dir.path().join("kp.json");
    ok(&["keypoints", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--out", s(&kp)]);
    assert_eq!(read_json(&kp)["keypoints"], session["keypoints"]);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let cases: Vec<Vec<String>> = vec![
        vec!["train".into()],
        vec!["frobnicate".into()],
        vec!["train".into(), "--synthetic".into(), "teapot".into(), "--out".into(), "x".into()],
        vec!["keypoints".into(), "--ckpt".into(), s(&missing).into(), "--mesh".into(), "a.obj".into(), "--out".into(), "b".into()],
        vec!["eval".into(), "--ckpt".into(), "c".into(), "--protocol".into(), "nope".into(), "--annotations".into(), "a".into(), "--out".into(), "o".into()],
        vec!["amplify".into(), "--ckpt".into(), "c".into(), "--prior".into(), "p".into(), "--mesh".into(), "m".into(), "--sweep".into(), "basis:0,1".into(), "--out".into(), "o".into()],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = keydeform(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    let ckpt = dir.path().join("m.ckpt");
    train_tiny(&ckpt);
    let mesh_path = dir.path().join("in.obj");
    std::fs::write(&mesh_path, write_obj(&builtin_mesh("box").unwrap())).unwrap();
    let kp_path = dir.path().join("kp.json");
    std::fs::write(&kp_path, "[[0,0,0],[1,1,1]]").unwrap();
    let out = keydeform(&[
        "deform", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--target-keypoints", s(&kp_path), "--out",
        s(&dir.path().join("o.obj")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&mesh_path, "v 0 0 0\nf 1 2 9\n").unwrap();
    let out = keydeform(&["keypoints", "--ckpt", s(&ckpt), "--mesh", s(&mesh_path), "--out", s(&kp_path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(keydeform(&["--help"]).status.success());
}

#[test]
fn synth_eval_prior_and_amplify() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    train_tiny(&ckpt);
    let data: PathBuf = dir.path().join("data");
    ok(&["synth", "--family", "winged", "--count", "30", "--seed", "3", "--labelled-points", "256", "--out", s(&data)]);
    let annotations = data.join("annotations.json");
    assert_eq!(read_json(&annotations)["shapes"].as_array().unwrap().len(), 30);

    let pck = dir.path().join("pck.json");
    ok(&["eval", "--ckpt", s(&ckpt), "--protocol", "pck", "--annotations", s(&annotations), "--out", s(&pck)]);
    let report = read_json(&pck);
    assert_eq!(report["curve"].as_array().unwrap().len(), 10);
    assert_eq!(report["test_shapes"], 15);
    let csv = dir.path().join("parts.csv");
    ok(&["eval", "--ckpt", s(&ckpt), "--protocol", "parts", "--annotations", s(&annotations), "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("keypoint,part,score\n"));
    assert_eq!(text.lines().count(), 5);
    let align = dir.path().join("align.json");
    ok(&["eval", "--ckpt", s(&ckpt), "--protocol", "align", "--annotations", s(&annotations), "--out", s(&align)]);
    assert!(read_json(&align).is_object());

    let prior = dir.path().join("prior.json");
    ok(&["prior", "--ckpt", s(&ckpt), "--data", s(&data), "--n-basis", "4", "--out", s(&prior)]);
    let p = read_json(&prior);
    assert_eq!(p["basis"].as_array().unwrap().len(), 4);
    assert!(p["model_checksum"].is_string());
    let sweep = dir.path().join("sweep");
    ok(&[
        "amplify", "--ckpt", s(&ckpt), "--prior", s(&prior), "--mesh", s(&data.join("winged_0000.obj")), "--sweep",
        "basis:0,-2,2,5", "--out", s(&sweep),
    ]);
    for i in 0..5 {
        assert!(sweep.join(format!("amplify_{i:03}.obj")).exists());
    }
    assert!(sweep.join("sweep.json").exists());
}

#[test]
fn divergence_saves_the_checkpoint_and_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let base = ["train", "--synthetic", "box", "--count", "3", "--keypoints", "4", "--iters", "20", "--points", "64"];
    let run = |lr: &str| {
        let mut args = base.to_vec();
        args.extend(["--lr", lr, "--out", s(&out)]);
        keydeform(&args)
    };
    assert_eq!(run("nan").status.code(), Some(1));
    assert!(!out.exists());
    let diverged = run("1e300");
    assert_eq!(diverged.status.code(), Some(2), "{}", String::from_utf8_lossy(&diverged.stderr));
    assert!(out.exists());
    assert!(Model::load(&out).is_ok());
}
