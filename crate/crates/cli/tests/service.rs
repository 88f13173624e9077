use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vibnet::model::{Model, VibNetConfig};
use vibnet::tacton::{render_pipeline, TactonSpec};
use vibnet_cli::service::{router, PredictResponse, WaveformUpload, DEFAULT_MAX_BODY_BYTES, PREVIEW_MAX};

fn tiny_model() -> Model {
    Model::untrained(&VibNetConfig::tiny()).unwrap()
}

fn app(model: Option<Model>) -> Router {
    router(model, DEFAULT_MAX_BODY_BYTES, &[]).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
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

fn sine(amplitude: f64) -> TactonSpec {
    TactonSpec::Sinusoidal {
        amplitude,
        carrier_freq: 155.0,
        envelope_freq: 4.0,
        duration: 1.0,
    }
}

#[tokio::test]
async fn health_is_ok() {
    let (s, v) = call(&app(None), "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({ "status": "ok" }));
}

#[tokio::test]
async fn model_routes_need_a_model() {
    let a = app(None);
    let (s, v) = call(&a, "GET", "/model/info", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["code"], "model_not_loaded");
    let body = json!({ "spec": sine(1.0) }).to_string();
    let (s, _) = call(&a, "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn model_info_reports_config() {
    let (s, v) = call(&app(Some(tiny_model())), "GET", "/model/info", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["channels"], json!(["ra1", "ra2"]));
    assert_eq!(v["dtype"], "f64");
    assert_eq!(v["checkpoint_version"], 1);
    assert!(v["param_count"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn zero_amplitude_synthesizes_silence() {
    let body = serde_json::to_string(&sine(0.0)).unwrap();
    let (s, v) = call(&app(None), "POST", "/synthesize", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let w = v["waveform"].as_array().unwrap();
    assert_eq!(w.len(), 1000);
    assert!(w.iter().all(|x| x.as_f64() == Some(0.0)));
    assert_eq!(v["sample_rate"], 1000);
    let shape: Vec<usize> = serde_json::from_value(v["spectrogram"]["shape"].clone()).unwrap();
    assert_eq!(shape[0], 2);
    assert!(shape[1] <= PREVIEW_MAX && shape[2] <= PREVIEW_MAX);
    assert_eq!(v["spectrogram"]["full_resolution"], false);
}

#[tokio::test]
async fn full_resolution_behind_query_flag() {
    let body = serde_json::to_string(&sine(1.0)).unwrap();
    let (s, v) = call(&app(None), "POST", "/synthesize?full=true", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["spectrogram"]["shape"], json!([2, 251, 121]));
    assert_eq!(v["spectrogram"]["data"].as_array().unwrap().len(), 2 * 251 * 121);
}

#[tokio::test]
async fn out_of_range_spec_is_422_with_report() {
    let mut spec = serde_json::to_value(sine(1.0)).unwrap();
    spec["duration"] = json!(0.0);
    let (s, v) = call(&app(None), "POST", "/synthesize", Some(spec.to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["validation"]["valid"], false);
    assert!(!v["validation"]["violations"].as_array().unwrap().is_empty());

    let (s, v) = call(
        &app(Some(tiny_model())),
        "POST",
        "/predict",
        Some(json!({ "spec": spec }).to_string()),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "invalid_spec");
}

#[tokio::test]
async fn schema_violations_are_400() {
    let a = app(Some(tiny_model()));
    let (s, _) = call(&a, "POST", "/synthesize", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &a,
        "POST",
        "/synthesize",
        Some(json!({ "type": "sinusoidal" }).to_string()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let both = json!({ "spec": sine(1.0), "waveform": { "data": "", "sample_rate": 1000 } });
    let (s, _) = call(&a, "POST", "/predict", Some(both.to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let ragged = json!({ "waveform": { "data": "AAA=", "sample_rate": 1000 } });
    let (s, _) = call(&a, "POST", "/predict", Some(ragged.to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversize_body_is_413() {
    let a = router(None, 1024, &[]).unwrap();
    let big = json!({ "type": "sinusoidal", "pad": "x".repeat(4096) }).to_string();
    let (s, v) = call(&a, "POST", "/synthesize", Some(big)).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(v["error"]["code"], "too_large");
}

#[tokio::test]
async fn predict_is_deterministic_and_matches_library() {
    let model = tiny_model();
    let spec = sine(0.8);
    let direct = model.predict(&render_pipeline(&spec).unwrap()).unwrap();
    let a = app(Some(model));
    let body = json!({ "spec": spec }).to_string();
    let (s1, v1) = call(&a, "POST", "/predict", Some(body.clone())).await;
    let (s2, v2) = call(&a, "POST", "/predict", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(v1, v2);
    let r: PredictResponse = serde_json::from_value(v1).unwrap();
    assert_eq!(r.raw, direct.raw);
    assert_eq!(r.ratings, direct.clamped);
    assert!(r.validation.is_some());
}

#[tokio::test]
async fn waveform_upload_predicts_like_spec() {
    let spec = sine(0.6);
    // Uploads travel as f32, so compare against the quantized waveform.
    let w = render_pipeline(&spec).unwrap().quantized_f32();
    let model = tiny_model();
    let direct = model.predict(&w).unwrap();
    let a = app(Some(model));
    let body = json!({ "waveform": WaveformUpload::encode(&w) }).to_string();
    let (s, v) = call(&a, "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: PredictResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.raw, direct.raw);
    assert!(r.validation.is_none());
}

#[tokio::test]
async fn overlong_waveform_is_422() {
    let w = vibnet::tacton::Waveform::zeros(7000, 1000, vibnet::tacton::Units::G);
    let body = json!({ "waveform": WaveformUpload::encode(&w) }).to_string();
    let (s, v) = call(&app(Some(tiny_model())), "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "too_long");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_predictions_equal_serial() {
    let a = app(Some(tiny_model()));
    let bodies: Vec<String> = (0..8)
        .map(|i| json!({ "spec": sine(0.1 + 0.1 * i as f64) }).to_string())
        .collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(call(&a, "POST", "/predict", Some(b.clone())).await);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let a = a.clone();
            tokio::spawn(async move { call(&a, "POST", "/predict", Some(b)).await })
        })
        .collect();
    for (h, s) in handles.into_iter().zip(serial) {
        assert_eq!(h.await.unwrap(), s);
    }
}

#[tokio::test]
async fn cors_allow_list() {
    let a = router(None, DEFAULT_MAX_BODY_BYTES, &["http://localhost:5173".into()]).unwrap();
    let req = Request::builder()
        .uri("/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = a.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let req = Request::builder()
        .uri("/health")
        .header("origin", "http://evil.example")
        .body(Body::empty())
        .unwrap();
    let resp = a.oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}
