//! The two ways of reaching a gateway: direct calls, or JSON over loopback.

use std::sync::Arc;

use ehrguard::clock::SystemClock;
use ehrguard::ledger::AccessEvent;
use ehrguard_gateway::http::{self, EventsBody, FinalizeBody, LoginBody, RequestBody, ADMIN_HEADER};
use ehrguard_gateway::{ErrorBody, Fetched, Gateway, GatewayOptions, Granted, NewParticipant, SensorReading, Session};
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use thiserror::Error;
use tokio::runtime::Runtime;
use tokio::sync::oneshot;

/// Credential the harness installs as the gateway administrator.
pub const BENCH_ADMIN: &str = "bench-admin";

/// A gateway refusal, or a transport failure under code `Transport`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ClientError {
    pub code: String,
    pub message: String,
    pub event_id: Option<String>,
}

impl ClientError {
    fn transport(e: impl std::fmt::Display) -> Self {
        ClientError {
            code: "Transport".into(),
            message: e.to_string(),
            event_id: None,
        }
    }
}

impl From<ErrorBody> for ClientError {
    fn from(b: ErrorBody) -> Self {
        ClientError {
            code: b.code,
            message: b.message,
            event_id: b.event_id,
        }
    }
}

impl From<ehrguard_gateway::GatewayError> for ClientError {
    fn from(e: ehrguard_gateway::GatewayError) -> Self {
        e.body().into()
    }
}

pub trait Client: Send + Sync {
    fn register(&self, p: &NewParticipant) -> Result<(), ClientError>;
    fn login(&self, participant_id: &str, credential_id: &str) -> Result<Session, ClientError>;
    fn ingest(&self, token: &str, reading: &SensorReading) -> Result<(), ClientError>;
    fn finalize(&self, token: &str, policy: &str) -> Result<(), ClientError>;
    fn request(&self, token: &str, target_patient_id: &str) -> Result<Granted, ClientError>;
    fn fetch(&self, url: &str, token: &str) -> Result<Fetched, ClientError>;
    /// Every access event, through the administrator view.
    fn events(&self) -> Result<Vec<AccessEvent>, ClientError>;
}

/// Calls a [`Gateway`] directly; timings exclude any network stack.
pub struct InProcess {
    gateway: Arc<Gateway>,
}

impl InProcess {
    /// A fresh in-memory gateway on the wall clock.
    pub fn fresh(seed: u64) -> Result<Self, ClientError> {
        Ok(InProcess::over(Arc::new(fresh_gateway(seed)?)))
    }

    pub fn over(gateway: Arc<Gateway>) -> Self {
        InProcess { gateway }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }
}

pub fn fresh_gateway(seed: u64) -> Result<Gateway, ClientError> {
    let mut o = GatewayOptions::in_memory(Arc::new(SystemClock), Some(seed));
    o.admin_credential = Some(BENCH_ADMIN.into());
    Ok(Gateway::new(o)?)
}

impl Client for InProcess {
    fn register(&self, p: &NewParticipant) -> Result<(), ClientError> {
        self.gateway.register(p)?;
        Ok(())
    }

    fn login(&self, participant_id: &str, credential_id: &str) -> Result<Session, ClientError> {
        Ok(self.gateway.login(participant_id, credential_id)?)
    }

    fn ingest(&self, token: &str, reading: &SensorReading) -> Result<(), ClientError> {
        self.gateway.ingest_reading(token, reading)?;
        Ok(())
    }

    fn finalize(&self, token: &str, policy: &str) -> Result<(), ClientError> {
        self.gateway.finalize_record(token, policy)?;
        Ok(())
    }

    fn request(&self, token: &str, target_patient_id: &str) -> Result<Granted, ClientError> {
        Ok(self.gateway.request_ehr(token, target_patient_id)?)
    }

    fn fetch(&self, url: &str, token: &str) -> Result<Fetched, ClientError> {
        Ok(self.gateway.fetch_ehr(url, Some(token))?)
    }

    fn events(&self) -> Result<Vec<AccessEvent>, ClientError> {
        let caller = ehrguard_gateway::Caller::Admin(BENCH_ADMIN);
        Ok(self.gateway.events(caller, &Default::default())?)
    }
}

/// Talks JSON to a gateway at `base`, optionally one it started itself.
pub struct HttpClient {
    rt: Runtime,
    base: String,
    http: reqwest::Client,
    admin: String,
    stop: Option<oneshot::Sender<()>>,
}

impl HttpClient {
    /// Serves `gateway` on an ephemeral loopback port and connects to it.
    pub fn spawn(gateway: Arc<Gateway>) -> std::io::Result<Self> {
        let rt = runtime()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        rt.spawn(http::serve(listener, gateway, async {
            let _ = rx.await;
        }));
        let mut c = HttpClient::with_runtime(rt, &format!("http://{addr}"), BENCH_ADMIN);
        c.stop = Some(tx);
        Ok(c)
    }

    /// Connects to a gateway someone else runs.
    pub fn connect(base: &str, admin_credential: &str) -> std::io::Result<Self> {
        Ok(HttpClient::with_runtime(runtime()?, base, admin_credential))
    }

    fn with_runtime(rt: Runtime, base: &str, admin: &str) -> Self {
        HttpClient {
            rt,
            base: base.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
            admin: admin.to_string(),
            stop: None,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        self.rt.block_on(async {
            let resp = req.send().await.map_err(ClientError::transport)?;
            let status = resp.status();
            if status.is_success() {
                resp.json::<T>().await.map_err(ClientError::transport)
            } else {
                match resp.json::<ErrorBody>().await {
                    Ok(b) => Err(b.into()),
                    Err(_) => Err(unreadable(status)),
                }
            }
        })
    }
}

fn unreadable(status: StatusCode) -> ClientError {
    ClientError::transport(format!("HTTP {status} without an error body"))
}

fn runtime() -> std::io::Result<Runtime> {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()
}

impl Drop for HttpClient {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

impl Client for HttpClient {
    fn register(&self, p: &NewParticipant) -> Result<(), ClientError> {
        self.send::<serde::de::IgnoredAny>(self.http.post(self.url("/participants")).json(p))?;
        Ok(())
    }

    fn login(&self, participant_id: &str, credential_id: &str) -> Result<Session, ClientError> {
        let body = LoginBody {
            participant_id: participant_id.into(),
            credential_id: credential_id.into(),
        };
        self.send(self.http.post(self.url("/sessions")).json(&body))
    }

    fn ingest(&self, token: &str, reading: &SensorReading) -> Result<(), ClientError> {
        self.send::<serde::de::IgnoredAny>(self.http.post(self.url("/readings")).bearer_auth(token).json(reading))?;
        Ok(())
    }

    fn finalize(&self, token: &str, policy: &str) -> Result<(), ClientError> {
        let body = FinalizeBody { policy: policy.into() };
        self.send::<serde::de::IgnoredAny>(self.http.post(self.url("/records")).bearer_auth(token).json(&body))?;
        Ok(())
    }

    fn request(&self, token: &str, target_patient_id: &str) -> Result<Granted, ClientError> {
        let body = RequestBody {
            target_patient_id: target_patient_id.into(),
        };
        self.send(self.http.post(self.url("/requests")).bearer_auth(token).json(&body))
    }

    fn fetch(&self, url: &str, token: &str) -> Result<Fetched, ClientError> {
        self.send(self.http.get(self.url("/fetch")).bearer_auth(token).query(&[("url", url)]))
    }

    fn events(&self) -> Result<Vec<AccessEvent>, ClientError> {
        let b: EventsBody = self.send(self.http.get(self.url("/events")).header(ADMIN_HEADER, &self.admin))?;
        Ok(b.events)
    }
}
