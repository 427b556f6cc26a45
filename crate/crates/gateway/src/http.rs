//! JSON routes over [`Gateway`].

use std::future::Future;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Query, Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::HeaderMap;
use axum::http::request::Parts;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ehrguard::ledger::{AccessEvent, EventFilter};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::service::{Caller, Gateway, NewParticipant};
use crate::vitals::SensorReading;

/// Header carrying the administrator credential.
pub const ADMIN_HEADER: &str = "x-admin-credential";

type Shared = Arc<Gateway>;

pub fn router(gateway: Shared) -> Router {
    Router::new()
        .route("/participants", post(register))
        .route("/sessions", post(login))
        .route("/readings", post(ingest).get(pending))
        .route("/records", post(finalize))
        .route("/requests", post(request))
        .route("/fetch", get(fetch))
        .route("/events", get(events))
        .route("/blacklist", post(blacklist))
        .layer(middleware::from_fn(log_requests))
        .with_state(gateway)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    // The query of /fetch holds a one-time URL, so only the path is logged.
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = resp.status().as_u16(),
        elapsed_ms = started.elapsed().as_secs_f64() * 1000.0,
        "request"
    );
    resp
}

/// `Json` whose rejections come back in the `{code, message}` shape.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = GatewayError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(GatewayError::BadRequest(rejection_text(&e))),
        }
    }
}

fn rejection_text(e: &JsonRejection) -> String {
    e.body_text()
}

/// A bearer token, required.
pub struct Bearer(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Bearer {
    type Rejection = GatewayError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        bearer(&parts.headers).map(Bearer).ok_or(GatewayError::Unauthenticated)
    }
}

/// A bearer token, if one was sent.
pub struct MaybeBearer(pub Option<String>);

impl<S: Send + Sync> FromRequestParts<S> for MaybeBearer {
    type Rejection = GatewayError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        Ok(MaybeBearer(bearer(&parts.headers)))
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(AUTHORIZATION)?.to_str().ok()?;
    let token = v.strip_prefix("Bearer ").or_else(|| v.strip_prefix("bearer "))?;
    Some(token.trim().to_string())
}

fn admin(headers: &HeaderMap) -> Option<String> {
    headers.get(ADMIN_HEADER)?.to_str().ok().map(str::to_string)
}

/// Administrator credential from its header, required.
pub struct Admin(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Admin {
    type Rejection = GatewayError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        admin(&parts.headers)
            .map(Admin)
            .ok_or_else(|| GatewayError::Forbidden(format!("missing {ADMIN_HEADER} header")))
    }
}

async fn register(State(g): State<Shared>, Body(p): Body<NewParticipant>) -> Result<Response, GatewayError> {
    let view = g.register(&p)?;
    Ok((axum::http::StatusCode::CREATED, Json(view)).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginBody {
    pub participant_id: String,
    pub credential_id: String,
}

async fn login(State(g): State<Shared>, Body(b): Body<LoginBody>) -> Result<Response, GatewayError> {
    Ok(Json(g.login(&b.participant_id, &b.credential_id)?).into_response())
}

async fn ingest(State(g): State<Shared>, Bearer(t): Bearer, Body(r): Body<SensorReading>) -> Result<Response, GatewayError> {
    Ok(Json(g.ingest_reading(&t, &r)?).into_response())
}

async fn pending(State(g): State<Shared>, Bearer(t): Bearer) -> Result<Response, GatewayError> {
    Ok(Json(g.pending(&t)?).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FinalizeBody {
    #[serde(default)]
    pub policy: String,
}

async fn finalize(State(g): State<Shared>, Bearer(t): Bearer, Body(b): Body<FinalizeBody>) -> Result<Response, GatewayError> {
    let done = g.finalize_record(&t, &b.policy)?;
    Ok((axum::http::StatusCode::CREATED, Json(done)).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestBody {
    pub target_patient_id: String,
}

async fn request(State(g): State<Shared>, Bearer(t): Bearer, Body(b): Body<RequestBody>) -> Result<Response, GatewayError> {
    Ok(Json(g.request_ehr(&t, &b.target_patient_id)?).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchQuery {
    pub url: String,
}

async fn fetch(
    State(g): State<Shared>,
    MaybeBearer(t): MaybeBearer,
    q: Result<Query<FetchQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, GatewayError> {
    let Query(q) = q.map_err(|e| GatewayError::BadRequest(e.body_text()))?;
    Ok(Json(g.fetch_ehr(&q.url, t.as_deref())?).into_response())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventsQuery {
    pub requester_id: Option<String>,
    pub target_patient_id: Option<String>,
    pub from: Option<u64>,
    pub until: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventsBody {
    pub events: Vec<AccessEvent>,
}

async fn events(
    State(g): State<Shared>,
    headers: HeaderMap,
    q: Result<Query<EventsQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, GatewayError> {
    let Query(q) = q.map_err(|e| GatewayError::BadRequest(e.body_text()))?;
    let filter = EventFilter {
        requester_id: q.requester_id,
        target_patient_id: q.target_patient_id,
        from: q.from,
        until: q.until,
    };
    let (cred, token) = (admin(&headers), bearer(&headers));
    let caller = match (&cred, &token) {
        (Some(c), _) => Caller::Admin(c),
        (None, Some(t)) => Caller::Session(t),
        (None, None) => return Err(GatewayError::Unauthenticated),
    };
    Ok(Json(EventsBody {
        events: g.events(caller, &filter)?,
    })
    .into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlacklistBody {
    pub participant_id: String,
    #[serde(default = "yes")]
    pub blacklisted: bool,
}

fn yes() -> bool {
    true
}

async fn blacklist(State(g): State<Shared>, Admin(cred): Admin, Body(b): Body<BlacklistBody>) -> Result<Response, GatewayError> {
    Ok(Json(g.set_blacklist(&cred, &b.participant_id, b.blacklisted)?).into_response())
}
