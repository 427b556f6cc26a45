//! The workflow itself, callable in process or through [`crate::http`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ehrguard::clock::Clock;
use ehrguard::edge::{EdgeError, EdgeNode, EdgeOptions, Integrity};
use ehrguard::lang::{self, PolicyDocument};
use ehrguard::ledger::{AccessEvent, EventFilter, Ledger};
use ehrguard::model::{ParticipantKind, ParticipantRecord};
use ehrguard::pdp::{AccessRequest, Category};
use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::{self, Config, ConfigError};
use crate::error::GatewayError;
use crate::vitals::SensorReading;

/// Id of the policy installed when a patient submits an empty policy text.
pub const DEFAULT_DENY_POLICY: &str = "DefaultDeny";

#[derive(Clone)]
pub struct GatewayOptions {
    pub ledger_path: Option<PathBuf>,
    pub edge: EdgeOptions,
    pub seed: Option<u64>,
    pub admin_credential: Option<String>,
}

impl GatewayOptions {
    pub fn in_memory(clock: Arc<dyn Clock>, seed: Option<u64>) -> Self {
        GatewayOptions {
            ledger_path: None,
            edge: EdgeOptions {
                seed: seed.map(|s| s ^ 0x5eed),
                clock,
                ..EdgeOptions::default()
            },
            seed,
            admin_credential: None,
        }
    }

    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        let master_key = match &c.edge_master_key_file {
            Some(path) if c.edge_dir.is_some() => Some(config::load_or_create_key(path)?),
            _ => None,
        };
        Ok(GatewayOptions {
            ledger_path: c.ledger_path.clone(),
            edge: EdgeOptions {
                node_id: c.node_id.clone(),
                token_ttl_ms: c.token_ttl_secs.saturating_mul(1000),
                directory: c.edge_dir.clone(),
                master_key,
                seed: c.seed.map(|s| s ^ 0x5eed),
                clock: c.clock.build(),
            },
            seed: c.seed,
            admin_credential: c.admin_credential.clone(),
        })
    }
}

/// What a caller learns about a participant. The credential stays private.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantView {
    pub id: String,
    pub kind: ParticipantKind,
    pub first_name: String,
    pub last_name: String,
    pub role: String,
    pub organization: String,
    pub blacklisted: bool,
}

impl From<&ParticipantRecord> for ParticipantView {
    fn from(p: &ParticipantRecord) -> Self {
        ParticipantView {
            id: p.id.clone(),
            kind: p.kind,
            first_name: p.first_name.clone(),
            last_name: p.last_name.clone(),
            role: p.role.clone(),
            organization: p.organization.clone(),
            blacklisted: p.blacklisted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NewParticipant {
    pub id: String,
    pub kind: ParticipantKind,
    pub first_name: String,
    pub last_name: String,
    /// Defaults to the kind name.
    #[serde(default)]
    pub role: Option<String>,
    pub organization: String,
    pub credential_id: String,
    /// Doctors to assign a new patient to.
    #[serde(default)]
    pub doctors: Vec<String>,
}

impl NewParticipant {
    pub fn record(&self) -> ParticipantRecord {
        let p = ParticipantRecord::new(
            &self.id,
            self.kind,
            &self.first_name,
            &self.last_name,
            &self.organization,
            &self.credential_id,
        );
        match &self.role {
            Some(r) => p.with_role(r),
            None => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub token: String,
    pub participant: ParticipantView,
    /// A doctor's assigned patients; empty for patients.
    pub patients: Vec<ParticipantView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Pending {
    pub patient_id: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finalized {
    pub record_ref: String,
    pub digest_hex: String,
    pub asset_id: String,
    /// False when the record replaced an earlier one.
    pub created: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Granted {
    pub url: String,
    pub event_id: String,
    pub timestamp: u64,
    pub patient_id: String,
    pub digest_hex: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fetched {
    pub record_ref: String,
    pub patient_id: String,
    pub content_type: String,
    /// `utf8` or `base64`.
    pub encoding: String,
    pub payload: String,
    /// Digest of the bytes returned.
    pub digest_hex: String,
    /// Digest registered on chain for this record.
    pub chain_digest_hex: String,
    pub integrity: Integrity,
    pub obligations: Vec<String>,
}

impl Fetched {
    pub fn payload_bytes(&self) -> Vec<u8> {
        match self.encoding.as_str() {
            "base64" => STANDARD.decode(&self.payload).unwrap_or_default(),
            _ => self.payload.clone().into_bytes(),
        }
    }
}

pub struct Gateway {
    ledger: Arc<Ledger>,
    edge: EdgeNode,
    sessions: RwLock<HashMap<String, String>>,
    pending: Mutex<HashMap<String, Vec<String>>>,
    admin_credential: Option<String>,
    rng: Mutex<ChaCha20Rng>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("ledger", &self.ledger)
            .field("edge", &self.edge)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(options: GatewayOptions) -> Result<Self, GatewayError> {
        let clock = options.edge.clock.clone();
        let ledger = Arc::new(match &options.ledger_path {
            Some(p) => Ledger::open(p, clock)?,
            None => Ledger::new(clock),
        });
        let edge = EdgeNode::open(options.edge, ledger.clone())?;
        let rng = match options.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_os_rng(),
        };
        Ok(Gateway {
            ledger,
            edge,
            sessions: RwLock::new(HashMap::new()),
            pending: Mutex::new(HashMap::new()),
            admin_credential: options.admin_credential,
            rng: Mutex::new(rng),
        })
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn edge(&self) -> &EdgeNode {
        &self.edge
    }

    pub fn register(&self, p: &NewParticipant) -> Result<ParticipantView, GatewayError> {
        let id = self.ledger.register_participant_with(p.record(), &p.doctors)?;
        let rec = self.ledger.participant(&id).ok_or(GatewayError::UnknownParticipant(id))?;
        Ok(ParticipantView::from(&rec))
    }

    /// Checks the presented ID card and opens a session.
    pub fn login(&self, participant_id: &str, credential_id: &str) -> Result<Session, GatewayError> {
        let p = self
            .ledger
            .participant(participant_id)
            .filter(|p| p.credential_id == credential_id)
            .ok_or(GatewayError::Unauthenticated)?;
        let mut bytes = [0u8; 16];
        self.rng.lock().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        self.sessions.write().insert(token.clone(), p.id.clone());
        Ok(Session {
            token,
            patients: self.patients_of(&p),
            participant: ParticipantView::from(&p),
        })
    }

    pub fn logout(&self, token: &str) {
        self.sessions.write().remove(token);
    }

    fn patients_of(&self, p: &ParticipantRecord) -> Vec<ParticipantView> {
        if p.kind != ParticipantKind::Doctor {
            return Vec::new();
        }
        self.ledger
            .patients_of(&p.id)
            .iter()
            .filter_map(|id| self.ledger.participant(id))
            .map(|q| ParticipantView::from(&q))
            .collect()
    }

    /// The participant behind a session token, as currently on chain.
    pub fn authenticate(&self, token: &str) -> Result<ParticipantRecord, GatewayError> {
        let id = self.sessions.read().get(token).cloned().ok_or(GatewayError::Unauthenticated)?;
        self.ledger.participant(&id).ok_or(GatewayError::Unauthenticated)
    }

    pub fn is_admin(&self, credential: &str) -> bool {
        self.admin_credential.as_deref() == Some(credential)
    }

    pub fn ingest_reading(&self, token: &str, reading: &SensorReading) -> Result<Pending, GatewayError> {
        let me = self.authenticate(token)?;
        if me.kind != ParticipantKind::Patient || me.id != reading.patient_id {
            return Err(GatewayError::WrongPatient);
        }
        let line = reading.render().map_err(GatewayError::BadParameter)?;
        let mut pending = self.pending.lock();
        let lines = pending.entry(me.id.clone()).or_default();
        lines.push(line);
        Ok(Pending {
            patient_id: me.id,
            lines: lines.clone(),
        })
    }

    pub fn pending(&self, token: &str) -> Result<Pending, GatewayError> {
        let me = self.authenticate(token)?;
        let lines = self.pending.lock().get(&me.id).cloned().unwrap_or_default();
        Ok(Pending {
            patient_id: me.id,
            lines,
        })
    }

    /// Stores the pending document on the edge node under `policy_source`
    /// and registers it on chain. Either both happen and the buffer is
    /// cleared, or neither happens and the buffer is kept.
    pub fn finalize_record(&self, token: &str, policy_source: &str) -> Result<Finalized, GatewayError> {
        let me = self.authenticate(token)?;
        if me.kind != ParticipantKind::Patient {
            return Err(GatewayError::Forbidden("only patients finalize records".into()));
        }
        let (doc, warning) = if policy_source.trim().is_empty() {
            let doc = lang::parse(&format!("policy {DEFAULT_DENY_POLICY} {{ }}")).expect("empty policy parses");
            (doc, Some("empty policy: nobody can open this record".to_string()))
        } else {
            (lang::parse(policy_source).map_err(GatewayError::PolicyRejected)?, None)
        };

        let lines = self.pending.lock().remove(&me.id).unwrap_or_default();
        if lines.is_empty() {
            return Err(GatewayError::EmptyDocument);
        }
        let restore = |lines: Vec<String>| {
            let mut pending = self.pending.lock();
            let slot = pending.entry(me.id.clone()).or_default();
            let newer = std::mem::replace(slot, lines);
            slot.extend(newer);
        };
        match self.store_and_register(&me.id, &lines, &doc) {
            Ok((record_ref, digest_hex, created)) => Ok(Finalized {
                record_ref,
                digest_hex,
                asset_id: me.id.clone(),
                created,
                warning,
            }),
            Err(e) => {
                restore(lines);
                Err(e)
            }
        }
    }

    fn store_and_register(
        &self,
        patient_id: &str,
        lines: &[String],
        doc: &PolicyDocument,
    ) -> Result<(String, String, bool), GatewayError> {
        let mut document = lines.join("\n");
        document.push('\n');
        let displaced = self.edge.policy(patient_id, &doc.id);
        let (record_ref, digest) = self
            .edge
            .store_record(patient_id, document.as_bytes(), "text/plain", doc)?;
        let created = self.ledger.asset(patient_id).is_none();
        let chained = if created {
            self.ledger.put_asset(patient_id, &record_ref, &digest)
        } else {
            self.ledger.update_asset(patient_id, patient_id, &record_ref, &digest)
        };
        if let Err(e) = chained {
            if let Err(undo) = self.edge.discard_record(&record_ref, displaced.as_deref()) {
                tracing::error!(%record_ref, error = %undo, "could not roll back edge store");
            }
            return Err(e.into());
        }
        Ok((record_ref, digest, created))
    }

    /// Runs the chain ACL and, on a grant, mints a one-time URL bound to the
    /// new event.
    pub fn request_ehr(&self, token: &str, target_patient_id: &str) -> Result<Granted, GatewayError> {
        let me = self.authenticate(token)?;
        let r = self.ledger.retrieve_ehr_address(&me.id, target_patient_id)?;
        let url = self.edge.mint_one_time_url(&r.capability_ref, &r.event_id)?;
        Ok(Granted {
            url,
            event_id: r.event_id,
            timestamp: r.timestamp,
            patient_id: target_patient_id.to_string(),
            digest_hex: r.digest_hex,
        })
    }

    /// Redeems a one-time URL with the session holder's attributes. Without
    /// a session the request carries no subject attributes.
    pub fn fetch_ehr(&self, url: &str, token: Option<&str>) -> Result<Fetched, GatewayError> {
        let subject = match token {
            Some(t) => Some(self.authenticate(t)?),
            None => None,
        };
        let request = subject.as_ref().map(subject_request).unwrap_or_default();
        match self.edge.redeem(url, &request) {
            Ok(rel) => {
                let chain = self
                    .ledger
                    .recorded_digest(&rel.record_ref)
                    .ok_or_else(|| GatewayError::NoRecord(rel.patient_id.clone()))?;
                let integrity = self.edge.verify_integrity(&rel.record_ref, &chain)?;
                Ok(fetched(
                    rel.record_ref,
                    rel.patient_id,
                    rel.content_type,
                    &rel.payload,
                    chain,
                    integrity,
                    rel.obligations.into_iter().map(|o| o.id).collect(),
                ))
            }
            Err(EdgeError::Tampered {
                record_ref,
                found: Some(bytes),
            }) => {
                let info = self.edge.record(&record_ref).ok_or(GatewayError::PayloadMissing)?;
                let chain = self.ledger.recorded_digest(&record_ref).unwrap_or(info.digest_hex);
                Ok(fetched(
                    record_ref,
                    info.patient_id,
                    info.content_type,
                    &bytes,
                    chain,
                    Integrity::Tampered,
                    Vec::new(),
                ))
            }
            Err(EdgeError::Tampered { found: None, .. }) => Err(GatewayError::PayloadMissing),
            Err(e) => Err(e.into()),
        }
    }

    /// The audit log. Administrators see everything; participants see the
    /// events they made or that concern them.
    pub fn events(&self, caller: Caller<'_>, filter: &EventFilter) -> Result<Vec<AccessEvent>, GatewayError> {
        let events = self.ledger.query_events(filter);
        match caller {
            Caller::Admin(cred) if self.is_admin(cred) => Ok(events),
            Caller::Admin(_) => Err(GatewayError::Unauthenticated),
            Caller::Session(token) => {
                let me = self.authenticate(token)?;
                Ok(events
                    .into_iter()
                    .filter(|e| e.requester_id == me.id || e.target_patient_id == me.id)
                    .collect())
            }
        }
    }

    pub fn set_blacklist(&self, admin_credential: &str, participant_id: &str, flag: bool) -> Result<ParticipantView, GatewayError> {
        if !self.is_admin(admin_credential) {
            return Err(GatewayError::Forbidden("blacklisting needs the administrator credential".into()));
        }
        self.ledger.set_blacklist(participant_id, flag)?;
        let p = self
            .ledger
            .participant(participant_id)
            .ok_or_else(|| GatewayError::UnknownParticipant(participant_id.to_string()))?;
        Ok(ParticipantView::from(&p))
    }
}

/// Who is asking for the audit log.
#[derive(Debug, Clone, Copy)]
pub enum Caller<'a> {
    Admin(&'a str),
    Session(&'a str),
}

/// Subject attributes the edge policy sees for a participant.
pub fn subject_request(p: &ParticipantRecord) -> AccessRequest {
    AccessRequest::default()
        .with(Category::Subject, "id", p.id.as_str())
        .with(Category::Subject, "kind", p.kind.name())
        .with(Category::Subject, "role", p.role.as_str())
        .with(Category::Subject, "organization", p.organization.as_str())
        .with(Category::Subject, "firstName", p.first_name.as_str())
        .with(Category::Subject, "lastName", p.last_name.as_str())
}

fn encode_payload(bytes: &[u8]) -> (&'static str, String) {
    match std::str::from_utf8(bytes) {
        Ok(s) => ("utf8", s.to_string()),
        Err(_) => ("base64", STANDARD.encode(bytes)),
    }
}

fn fetched(
    record_ref: String,
    patient_id: String,
    content_type: String,
    bytes: &[u8],
    chain_digest_hex: String,
    integrity: Integrity,
    obligations: Vec<String>,
) -> Fetched {
    let (encoding, payload) = encode_payload(bytes);
    Fetched {
        record_ref,
        patient_id,
        content_type,
        encoding: encoding.to_string(),
        payload,
        digest_hex: ehrguard::digest::compute_digest(bytes),
        chain_digest_hex,
        integrity,
        obligations,
    }
}
