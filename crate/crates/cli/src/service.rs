//! Local HTTP service: synthesis, spectrogram previews and rating prediction
//! against one immutable model snapshot.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use vibnet::dsp::{mechano_spectrograms, ChannelSet};
use vibnet::model::{Model, Normalization, RatingTriple, CHECKPOINT_VERSION};
use vibnet::tacton::{
    downsample, render_pipeline, validate, zero_pad, TactonSpec, Units, ValidationReport, Waveform, MODEL_INPUT_LEN,
    PIPELINE_RATE_HZ,
};

/// Largest preview edge, in bins and frames.
pub const PREVIEW_MAX: usize = 64;
pub const DEFAULT_MAX_BODY_BYTES: usize = 2 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub model: Option<PathBuf>,
    pub max_body_bytes: usize,
    /// Allowed CORS origins; empty disables CORS headers.
    pub cors: Vec<String>,
}

#[derive(Clone)]
struct AppState {
    model: Option<Arc<Model>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    validation: Option<ValidationReport>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            validation: None,
        }
    }

    fn invalid_spec(report: ValidationReport) -> Self {
        Self {
            validation: Some(report.clone()),
            ..Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_spec",
                report.violations.join("; "),
            )
        }
    }
}

impl From<vibnet::Error> for ApiError {
    fn from(e: vibnet::Error) -> Self {
        use vibnet::Error as E;
        let status = match &e {
            E::InvalidSpec(_)
            | E::TooLong { .. }
            | E::SampleRate { .. }
            | E::UnsupportedRatio { .. }
            | E::BoundViolation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            E::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", r.body_text())
        } else {
            Self::new(StatusCode::BAD_REQUEST, "schema", r.body_text())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some(v) = self.validation {
            body["validation"] = json!(v);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: String,
    pub checkpoint_version: u32,
    pub dtype: vibnet::autodiff::Dtype,
    pub channels: ChannelSet,
    pub param_count: usize,
    pub config: vibnet::model::VibNetConfig,
    pub normalization: Normalization,
}

async fn model_info(State(st): State<AppState>) -> ApiResult<ModelInfo> {
    let m = loaded(&st)?;
    Ok(Json(ModelInfo {
        version: env!("CARGO_PKG_VERSION").into(),
        checkpoint_version: CHECKPOINT_VERSION,
        dtype: m.config().precision,
        channels: m.config().channels.clone(),
        param_count: m.param_count(),
        config: m.config().clone(),
        normalization: m.normalization().clone(),
    }))
}

fn loaded(st: &AppState) -> Result<Arc<Model>, ApiError> {
    st.model.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_not_loaded",
            "no model checkpoint is loaded",
        )
    })
}

#[derive(Debug, Default, Deserialize)]
pub struct PreviewQuery {
    /// Return the spectrogram at full resolution instead of a preview.
    #[serde(default)]
    pub full: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrogramPayload {
    pub channels: ChannelSet,
    /// `[channels, bins, frames]`, C order.
    pub shape: Vec<usize>,
    pub full_resolution: bool,
    pub data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesizeResponse {
    pub validation: ValidationReport,
    pub sample_rate: u32,
    pub units: Units,
    pub waveform: Vec<f32>,
    /// Absent when the Tacton is longer than the model window.
    pub spectrogram: Option<SpectrogramPayload>,
}

fn spec_checked(spec: &TactonSpec) -> Result<ValidationReport, ApiError> {
    let report = validate(spec);
    if report.valid {
        Ok(report)
    } else {
        Err(ApiError::invalid_spec(report))
    }
}

async fn synthesize(
    State(st): State<AppState>,
    Query(q): Query<PreviewQuery>,
    body: Result<Json<TactonSpec>, JsonRejection>,
) -> ApiResult<SynthesizeResponse> {
    let Json(spec) = body?;
    let validation = spec_checked(&spec)?;
    let channels = st
        .model
        .as_ref()
        .map_or_else(ChannelSet::two_channel, |m| m.config().channels.clone());
    let resp = blocking(move || {
        let w = render_pipeline(&spec)?;
        let spectrogram = if w.len() <= MODEL_INPUT_LEN {
            let s = mechano_spectrograms(&zero_pad(&w, MODEL_INPUT_LEN)?, &channels)?;
            let (shape, data) = if q.full {
                (s.shape().to_vec(), s.data().to_vec())
            } else {
                s.preview(PREVIEW_MAX, PREVIEW_MAX)
            };
            Some(SpectrogramPayload {
                channels,
                shape,
                full_resolution: q.full,
                data: data.into_iter().map(|v| v as f32).collect(),
            })
        } else {
            None
        };
        Ok(SynthesizeResponse {
            validation,
            sample_rate: w.sample_rate(),
            units: w.units(),
            waveform: w.samples().iter().map(|&v| v as f32).collect(),
            spectrogram,
        })
    })
    .await?;
    Ok(Json(resp))
}

/// Base64 little-endian f32 acceleration samples in G.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformUpload {
    pub data: String,
    pub sample_rate: u32,
}

impl WaveformUpload {
    pub fn encode(w: &Waveform) -> Self {
        let bytes: Vec<u8> = w.samples().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        Self {
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
            sample_rate: w.sample_rate(),
        }
    }

    fn decode(&self) -> Result<Waveform, ApiError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.data)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", format!("waveform data: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "schema",
                "waveform data is not a whole number of f32 values",
            ));
        }
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let w = Waveform::new(samples, self.sample_rate, Units::G)?;
        if w.sample_rate() == PIPELINE_RATE_HZ {
            Ok(w)
        } else {
            Ok(downsample(&w, PIPELINE_RATE_HZ)?)
        }
    }
}

/// Exactly one of `spec` or `waveform`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<TactonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<WaveformUpload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    /// Clamped to the rating scale.
    pub ratings: RatingTriple,
    pub raw: RatingTriple,
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

async fn predict(
    State(st): State<AppState>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<PredictResponse> {
    let Json(req) = body?;
    let model = loaded(&st)?;
    let (validation, w) = match (req.spec, req.waveform) {
        (Some(spec), None) => {
            let v = spec_checked(&spec)?;
            (Some(v), Source::Spec(spec))
        }
        (None, Some(up)) => (None, Source::Wave(up.decode()?)),
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "schema",
                "body must contain exactly one of `spec` or `waveform`",
            ))
        }
    };
    let resp = blocking(move || {
        let w = match w {
            Source::Spec(spec) => render_pipeline(&spec)?,
            Source::Wave(w) => w,
        };
        let p = model.predict(&w)?;
        Ok(PredictResponse {
            ratings: p.clamped,
            raw: p.raw,
            normalization: model.normalization().clone(),
            validation,
        })
    })
    .await?;
    Ok(Json(resp))
}

enum Source {
    Spec(TactonSpec),
    Wave(Waveform),
}

pub fn router(model: Option<Model>, max_body_bytes: usize, cors: &[String]) -> vibnet::Result<Router> {
    let state = AppState {
        model: model.map(Arc::new),
    };
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/model/info", get(model_info))
        .route("/synthesize", post(synthesize))
        .route("/predict", post(predict))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state);
    if !cors.is_empty() {
        let origins = cors
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| vibnet::Error::Config(format!("bad CORS origin {o:?}"))))
            .collect::<vibnet::Result<Vec<_>>>()?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Loads the checkpoint (if any) and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> vibnet::Result<()> {
    let model = cfg.model.as_deref().map(Model::load).transpose()?;
    let app = router(model, cfg.max_body_bytes, &cfg.cors)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr)
        .await
        .map_err(|e| vibnet::Error::Config(format!("cannot bind {}: {e}", cfg.addr)))?;
    eprintln!("listening on http://{}", cfg.addr);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| vibnet::Error::Config(format!("server error: {e}")))
}
