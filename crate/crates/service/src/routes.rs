use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::services::ServeDir;

use gaitworks_core::classifier::{predict, predict_batch, GaitModel, Prediction};
use gaitworks_core::explain::{
    feature_map, feature_map_png, grad_cam, gray_png, last_conv_block, overlay_png, saliency, HeatMap, Method,
    DEFAULT_OVERLAY_ALPHA,
};
use gaitworks_core::gait_repr::{
    cycle_energy, cycle_records, resample_grid, EnergyImage, TARGET_FPS, ENERGY_SIZE,
};
use gaitworks_core::{GaitClass, Representation, NUM_CLASSES};

use crate::error::ApiError;
use crate::ingest::{self, PayloadKind};
use crate::mail;
use crate::session::{CycleResult, Session};
use crate::{model_pixels, AppState};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    let static_dir = state.config().static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/classify", post(classify))
        .route("/api/session/{id}", get(session_info))
        .route("/api/session/{id}/energy", get(session_energy))
        .route("/api/session/{id}/layers", get(layers))
        .route("/api/session/{id}/feature-map", get(feature_map_handler))
        .route("/api/session/{id}/explain", post(explain))
        .route("/api/session/{id}/report", post(report))
        .method_not_allowed_fallback(method_not_allowed);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    app.layer(DefaultBodyLimit::max(limit))
        .layer(CatchPanicLayer::custom(|_| {
            ApiError::internal("the request could not be processed").into_response()
        }))
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed here")
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn live_session(state: &AppState, id: &str) -> ApiResult<(Arc<Session>, Arc<GaitModel>)> {
    let session = state.sessions().get(id).ok_or_else(ApiError::session_not_found)?;
    let model = state
        .model(session.record.representation)
        .ok_or_else(|| ApiError::internal("the session's model is no longer loaded"))?;
    Ok((session, model))
}

fn prediction_json(p: &Prediction) -> Value {
    json!({
        "label": p.label.to_string(),
        "probabilities": p.probabilities,
        "class_names": GaitClass::names(),
    })
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let kinds: Vec<&str> = state.representations().iter().map(|r| r.name()).collect();
    Json(json!({
        "status": "ok",
        "model_loaded": !kinds.is_empty(),
        "representation_kinds": kinds,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

struct Upload {
    file: Vec<u8>,
    representation: Option<String>,
    fps: Option<String>,
}

async fn read_upload(mut multipart: Multipart, limit: usize) -> ApiResult<Upload> {
    let mut upload = Upload {
        file: Vec::new(),
        representation: None,
        fps: None,
    };
    let mut have_file = false;
    let field_error = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(limit)
        } else {
            ApiError::malformed(format!("multipart body: {}", e.body_text()))
        }
    };
    while let Some(field) = multipart.next_field().await.map_err(field_error)? {
        match field.name().unwrap_or_default() {
            "file" => {
                upload.file = field.bytes().await.map_err(field_error)?.to_vec();
                have_file = true;
            }
            "representation" => upload.representation = Some(field.text().await.map_err(field_error)?),
            "fps" => upload.fps = Some(field.text().await.map_err(field_error)?),
            _ => {
                field.bytes().await.map_err(field_error)?;
            }
        }
    }
    if !have_file {
        return Err(ApiError::malformed("the multipart body has no \"file\" field"));
    }
    Ok(upload)
}

struct Outcome {
    energy: EnergyImage,
    prediction: Prediction,
    cycles: Vec<CycleResult>,
    source: &'static str,
}

fn classify_frames(set: ingest::FrameSet, model: &GaitModel, representation: Representation, fps: f64) -> ApiResult<Outcome> {
    let input = ingest::pipeline_input(&set, representation, fps)?;
    let records = cycle_records(&input.masks)?;
    if records.is_empty() {
        return Err(ApiError::bad_request(
            "no_gait_cycle",
            "no complete gait cycle was found in the uploaded sequence",
        ));
    }
    let energies = records
        .iter()
        .map(|r| cycle_energy(&input, r))
        .collect::<Result<Vec<_>, _>>()?;
    let pixels: Vec<Vec<f32>> = energies.iter().map(|e| model_pixels(model, e)).collect();
    let refs: Vec<&[f32]> = pixels.iter().map(Vec::as_slice).collect();
    let predictions = predict_batch(&model.network, &refs)?;
    let cycles = records
        .iter()
        .zip(&predictions)
        .map(|(r, p)| CycleResult {
            index: r.index,
            start_frame: r.start_frame,
            end_frame: r.end_frame,
            label: p.label.to_string(),
            probabilities: p.probabilities.clone(),
        })
        .collect();
    Ok(Outcome {
        energy: energies.into_iter().next().expect("at least one cycle"),
        prediction: predictions.into_iter().next().expect("at least one cycle"),
        cycles,
        source: "archive",
    })
}

fn run_classification(
    bytes: Vec<u8>,
    model: &GaitModel,
    representation: Representation,
    fps: f64,
    max_inflated: usize,
    decoder: Option<&str>,
) -> ApiResult<Outcome> {
    match ingest::sniff(&bytes) {
        PayloadKind::Png => {
            let energy = ingest::energy_png(&bytes, representation)?;
            let prediction = predict(&model.network, &model_pixels(model, &energy))?;
            Ok(Outcome {
                energy,
                prediction,
                cycles: Vec::new(),
                source: "image",
            })
        }
        PayloadKind::Zip => {
            let set = ingest::read_zip(&bytes, max_inflated)?;
            classify_frames(set, model, representation, fps)
        }
        PayloadKind::Other => match decoder {
            Some(cmd) => {
                let set = ingest::run_decoder(cmd, &bytes)?;
                let mut out = classify_frames(set, model, representation, fps)?;
                out.source = "decoder";
                Ok(out)
            }
            None => Err(ApiError::unsupported(
                "upload a ZIP archive of PNG frames or a 224x224 grayscale PNG energy image",
            )),
        },
    }
}

async fn classify(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Json<Value>> {
    let multipart = multipart.map_err(|_| ApiError::unsupported("expected a multipart/form-data body"))?;
    let limit = state.config().max_upload_bytes;
    let upload = read_upload(multipart, limit).await?;
    let representation = match upload.representation.as_deref().map(str::trim) {
        Some(r) if !r.is_empty() => r
            .parse::<Representation>()
            .map_err(|_| ApiError::malformed(format!("representation must be gei or sei, got {r:?}")))?,
        _ => state.representations()[0],
    };
    let fps = match upload.fps.as_deref().map(str::trim) {
        Some(f) if !f.is_empty() => f
            .parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .ok_or_else(|| ApiError::malformed(format!("fps must be a positive number, got {f:?}")))?,
        _ => TARGET_FPS,
    };
    let model = state.model(representation).ok_or_else(|| {
        ApiError::bad_request(
            "model_unavailable",
            format!("no {representation} model is loaded"),
        )
    })?;
    let decoder = state.config().decoder_cmd.clone();
    let max_inflated = limit.saturating_mul(16);
    let worker_state = state.clone();
    let (session, outcome_source) = blocking(move || {
        let outcome = run_classification(upload.file, &model, representation, fps, max_inflated, decoder.as_deref())?;
        let session = worker_state
            .sessions()
            .create(representation, outcome.energy, outcome.prediction, outcome.cycles)
            .map_err(|e| ApiError::internal(format!("cannot store session: {e}")))?;
        Ok((session, outcome.source))
    })
    .await?;
    let r = &session.record;
    let mut body = prediction_json(&r.prediction);
    body["session_id"] = json!(r.id);
    body["representation"] = json!(r.representation);
    body["source"] = json!(outcome_source);
    body["provenance"] = json!(r.provenance);
    body["cycles"] = json!(r.cycles);
    body["expires_at_ms"] = json!(r.expires_at_ms);
    Ok(Json(body))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let (session, _) = live_session(&state, &id)?;
    let r = &session.record;
    let mut body = prediction_json(&r.prediction);
    body["session_id"] = json!(r.id);
    body["representation"] = json!(r.representation);
    body["provenance"] = json!(r.provenance);
    body["cycles"] = json!(r.cycles);
    body["created_at_ms"] = json!(r.created_at_ms);
    body["expires_at_ms"] = json!(r.expires_at_ms);
    Ok(Json(body))
}

async fn session_energy(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (session, _) = live_session(&state, &id)?;
    Ok(png_response(session.energy.to_png_bytes()?))
}

async fn layers(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let (_, model) = live_session(&state, &id)?;
    let list: Vec<Value> = model
        .network
        .conv_blocks()
        .iter()
        .map(|b| {
            json!({
                "index": b.index,
                "kind": "conv2d",
                "channels": b.channels,
                "spatial_dims": [b.height, b.width],
            })
        })
        .collect();
    Ok(Json(Value::Array(list)))
}

fn query_index(query: &HashMap<String, String>, key: &str) -> ApiResult<usize> {
    let raw = query
        .get(key)
        .ok_or_else(|| ApiError::bad_request("out_of_range", format!("missing query parameter {key}")))?;
    raw.trim()
        .parse()
        .map_err(|_| ApiError::bad_request("out_of_range", format!("{key} must be a non-negative integer, got {raw:?}")))
}

async fn feature_map_handler(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let (session, model) = live_session(&state, &id)?;
    let layer = query_index(&query, "layer")?;
    let channel = query_index(&query, "channel")?;
    let blocks = model.network.conv_blocks();
    let block = blocks.get(layer).ok_or_else(|| {
        ApiError::bad_request("out_of_range", format!("layer {layer} out of range 0..{}", blocks.len()))
    })?;
    if channel >= block.channels {
        return Err(ApiError::bad_request(
            "out_of_range",
            format!("channel {channel} out of range 0..{} for layer {layer}", block.channels),
        ));
    }
    let png = blocking(move || {
        let pixels = model_pixels(&model, &session.energy);
        let map = feature_map(&model.network, &pixels, layer, channel)?;
        Ok(feature_map_png(&map)?)
    })
    .await?;
    Ok(png_response(png))
}

#[derive(Debug, Deserialize)]
struct ExplainRequest {
    method: String,
    layer: Option<usize>,
    target_class: Option<usize>,
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| match e {
        JsonRejection::MissingJsonContentType(_) => ApiError::unsupported("expected an application/json body"),
        JsonRejection::BytesRejection(b) if b.status() == StatusCode::PAYLOAD_TOO_LARGE => {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", b.body_text())
        }
        other => ApiError::malformed(other.body_text()),
    })
}

/// A heatmap at the energy image's resolution.
fn to_energy_resolution(heat: HeatMap) -> HeatMap {
    if heat.width == ENERGY_SIZE && heat.height == ENERGY_SIZE {
        return heat;
    }
    let values = resample_grid(&heat.values, heat.width, heat.height, ENERGY_SIZE, ENERGY_SIZE);
    HeatMap {
        width: ENERGY_SIZE,
        height: ENERGY_SIZE,
        values,
        ..heat
    }
}

struct Explanation {
    heat: HeatMap,
    overlay: Vec<u8>,
    heatmap: Vec<u8>,
}

fn compute_explanation(
    model: &GaitModel,
    session: &Session,
    method: Method,
    layer: Option<usize>,
    target: Option<usize>,
) -> ApiResult<Explanation> {
    let pixels = model_pixels(model, &session.energy);
    let heat = match method {
        Method::Saliency => saliency(&model.network, &pixels, target)?,
        Method::Gradcam => {
            let block = match layer {
                Some(l) => l,
                None => last_conv_block(&model.network)?,
            };
            grad_cam(&model.network, &pixels, block, target)?
        }
    };
    let heat = to_energy_resolution(heat);
    let overlay = overlay_png(session.energy.data(), &heat, DEFAULT_OVERLAY_ALPHA)?;
    let heatmap = gray_png(&heat.values, heat.width, heat.height)?;
    Ok(Explanation { heat, overlay, heatmap })
}

fn wants_png(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("image/png") && !v.contains("application/json"))
}

async fn explain(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let (session, model) = live_session(&state, &id)?;
    let req = json_body(body)?;
    let method: Method = req
        .method
        .parse()
        .map_err(|e: gaitworks_core::Error| ApiError::bad_request("bad_method", e.to_string()))?;
    let n_blocks = model.network.conv_blocks().len();
    if let Some(l) = req.layer.filter(|&l| l >= n_blocks) {
        return Err(ApiError::bad_request("out_of_range", format!("layer {l} out of range 0..{n_blocks}")));
    }
    if let Some(t) = req.target_class.filter(|&t| t >= NUM_CLASSES) {
        return Err(ApiError::bad_request(
            "out_of_range",
            format!("target_class {t} out of range 0..{NUM_CLASSES}"),
        ));
    }
    let (layer, target) = (req.layer, req.target_class);
    let ex = blocking(move || compute_explanation(&model, &session, method, layer, target)).await?;
    let class_name = GaitClass::names()[ex.heat.target_class];
    if wants_png(&headers) {
        let mut response = png_response(ex.overlay);
        let h = response.headers_mut();
        h.insert("x-gaitworks-method", HeaderValue::from_static(if method == Method::Saliency { "saliency" } else { "gradcam" }));
        h.insert("x-gaitworks-target-class", HeaderValue::from(ex.heat.target_class));
        if let Some(l) = ex.heat.source_layer {
            h.insert("x-gaitworks-layer", HeaderValue::from(l));
        }
        return Ok(response);
    }
    Ok(Json(json!({
        "method": method,
        "layer": ex.heat.source_layer,
        "target_class": ex.heat.target_class,
        "target_class_name": class_name,
        "width": ex.heat.width,
        "height": ex.heat.height,
        "lower_half_mass": ex.heat.lower_half_mass(),
        "overlay_png": BASE64.encode(&ex.overlay),
        "heatmap_png": BASE64.encode(&ex.heatmap),
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
struct ReportRequest {
    email: String,
}

async fn report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReportRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let (session, model) = live_session(&state, &id)?;
    let mailer = state.0.mailer.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_IMPLEMENTED,
            "reporting_disabled",
            "no outbound mail gateway is configured",
        )
    })?;
    let req = json_body(body)?;
    let to = mail::parse_address(&req.email).ok_or_else(|| {
        ApiError::bad_request("invalid_address", format!("{:?} is not a valid e-mail address", req.email))
    })?;
    let from = state.config().mail_from.clone();
    let recipient = to.to_string();
    let message = blocking(move || {
        let ex = compute_explanation(&model, &session, Method::Gradcam, None, None)?;
        mail::build_report(&from, to, &session, session.energy.to_png_bytes()?, ex.overlay)
            .map_err(ApiError::internal)
    })
    .await?;
    tokio::task::spawn_blocking(move || {
        if let Err(e) = mailer.send(&message) {
            tracing::warn!("report delivery failed: {e}");
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "status": "queued", "to": recipient })),
    )
        .into_response())
}
