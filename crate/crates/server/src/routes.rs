use std::convert::Infallible;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use stormnet_core::datastore::AckOutcome;
use stormnet_core::gateway::ConfigRequest;
use stormnet_core::telemetry::Credentials;
use stormnet_core::time::Timestamp;
use stormnet_core::SeriesKey;

use crate::{AppState, HttpError};

type Result<T> = std::result::Result<T, HttpError>;

/// Body of `POST /ack`. Not `deny_unknown_fields`: serde cannot combine it
/// with the flattened outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckRequest {
    pub node_id: String,
    pub command_id: u64,
    #[serde(flatten)]
    pub outcome: AckOutcome,
}

/// Body of `POST /nodes/{id}/valve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValveRequest {
    pub opening: f64,
}

#[derive(Deserialize)]
struct CommandsParams {
    #[serde(default)]
    peek: bool,
}

#[derive(Deserialize)]
struct QueryParams {
    series: String,
    start: Option<Timestamp>,
    end: Option<Timestamp>,
}

#[derive(Deserialize)]
struct AlertParams {
    since: Option<Timestamp>,
}

pub(crate) fn api(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/write", post(write))
        .route("/commands/{node}", get(commands))
        .route("/ack", post(ack))
        .route("/query", get(query))
        .route("/nodes", get(nodes))
        .route("/nodes/{id}/config", post(config))
        .route("/nodes/{id}/valve", post(valve))
        .route("/alerts", get(alerts))
        .route("/stream", get(stream));
    Router::new().nest("/api/v1", v1).with_state(state)
}

fn credentials(headers: &HeaderMap) -> Option<Credentials> {
    headers.get(header::AUTHORIZATION)?.to_str().ok().and_then(Credentials::from_basic_header)
}

/// Checks credentials before anything else looks at the request.
fn auth(state: &AppState, headers: &HeaderMap) -> Result<Option<Credentials>> {
    let c = credentials(headers);
    state.gateway.authenticate(c.as_ref())?;
    Ok(c)
}

fn json_body<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| HttpError::bad_request(format!("invalid JSON body: {e}")))
}

/// Query parameters, parsed only after authentication so a bad query string
/// cannot mask a 401.
fn params<T: DeserializeOwned>(uri: &Uri) -> Result<T> {
    Query::try_from_uri(uri).map(|Query(p)| p).map_err(|e| HttpError::bad_request(e.body_text()))
}

async fn write(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|_| HttpError::bad_request("body is not UTF-8"))?;
    let written = s.gateway.write(c.as_ref(), text)?;
    Ok(Json(json!({ "written": written })))
}

async fn commands(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(node): Path<String>,
    uri: Uri,
) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let p: CommandsParams = params(&uri)?;
    if p.peek {
        Ok(Json(serde_json::to_value(s.gateway.list_commands(c.as_ref(), &node)?).unwrap_or_default()))
    } else {
        let now = s.clock.now();
        Ok(Json(serde_json::to_value(s.gateway.fetch_commands(c.as_ref(), &node, now)?).unwrap_or_default()))
    }
}

async fn ack(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let req: AckRequest = json_body(&body)?;
    let r = s.gateway.ack(c.as_ref(), &req.node_id, req.command_id, req.outcome, s.clock.now())?;
    Ok(Json(json!({ "command_id": req.command_id, "state": r.state, "transitioned": r.transitioned })))
}

async fn query(State(s): State<AppState>, headers: HeaderMap, uri: Uri) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let p: QueryParams = params(&uri)?;
    let series: SeriesKey = p.series.parse().map_err(HttpError::bad_request)?;
    let points = s.gateway.query(c.as_ref(), &series, p.start.unwrap_or(i64::MIN), p.end.unwrap_or(i64::MAX))?;
    let points: Vec<_> = points.iter().map(|p| json!({ "timestamp": p.timestamp, "value": p.value })).collect();
    Ok(Json(json!({ "series": series, "points": points })))
}

async fn nodes(State(s): State<AppState>, headers: HeaderMap) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    Ok(Json(s.gateway.nodes(c.as_ref(), s.clock.now())?))
}

async fn config(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let req: ConfigRequest = json_body(&body)?;
    let ids = s.gateway.set_config(c.as_ref(), &id, &req, s.clock.now())?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "command_ids": ids }))))
}

async fn valve(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let req: ValveRequest = json_body(&body)?;
    let command_id = s.gateway.set_valve(c.as_ref(), &id, req.opening, s.clock.now())?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "command_id": command_id }))))
}

async fn alerts(State(s): State<AppState>, headers: HeaderMap, uri: Uri) -> Result<impl IntoResponse> {
    let c = auth(&s, &headers)?;
    let p: AlertParams = params(&uri)?;
    Ok(Json(s.gateway.alerts_since(c.as_ref(), p.since.unwrap_or(i64::MIN))?))
}

async fn stream(
    State(s): State<AppState>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = std::result::Result<Event, Infallible>>>> {
    auth(&s, &headers)?;
    let rx = s.hub.subscribe();
    let events = futures::stream::unfold(rx, |mut rx| async move {
        let e = rx.recv().await?;
        let event = Event::default().event(e.name()).json_data(&e).unwrap_or_default();
        Some((Ok(event), rx))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
