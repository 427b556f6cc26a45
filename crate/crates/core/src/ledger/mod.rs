//! Single-node permissioned ledger.
//!
//! Every transaction is committed as one block by a single writer. Blocks are
//! hash-chained over their canonical payload bytes, and the in-memory state is
//! exactly what replaying those payloads in order produces.

mod block;
pub mod codec;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acl::{self, AclError, AclRule, Diagnostic, Verb};
use crate::clock::{Clock, SystemClock};
use crate::model::{AclObject, EhrAsset, ParticipantKind, ParticipantRecord};

pub use block::{block_hash, verify_chain, Block};
pub use codec::CodecError;
pub use store::{read_log, BlockLog};

pub const NETWORK_NAME: &str = "ehr-network";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AccessOutcome {
    Granted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccessEvent {
    pub event_id: String,
    pub timestamp: u64,
    pub requester_id: String,
    pub target_patient_id: String,
    pub outcome: AccessOutcome,
    pub detail: String,
}

/// One entry of a block payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainRecord {
    Genesis { network: String },
    ParticipantRegistered(ParticipantRecord),
    DoctorAssigned { patient_id: String, doctor_id: String },
    AssetStored { asset: EhrAsset, created: bool },
    BlacklistSet { participant_id: String, flag: bool },
    RulesInstalled { source: String },
    Access(AccessEvent),
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("participant {0:?} is already registered")]
    DuplicateId(String),
    #[error("credential is already bound to another participant")]
    DuplicateCredential,
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {0} may only contain letters, digits, '_' and '-'")]
    InvalidField(&'static str),
    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("{0:?} is not a doctor")]
    NotADoctor(String),
    #[error("patient {0:?} already has an EHR asset")]
    DuplicateAsset(String),
    #[error("patient {0:?} has no EHR asset")]
    NoAsset(String),
    #[error("digest must be 64 lowercase hex characters")]
    BadDigest,
    #[error("not authorized")]
    NotAuthorized { event_id: Option<String> },
    #[error("participant {participant_id:?} is blacklisted")]
    Blacklisted {
        participant_id: String,
        event_id: Option<String>,
    },
    #[error("rule set rejected: {}", join_diagnostics(.0))]
    InvalidRules(Vec<Diagnostic>),
    #[error(transparent)]
    Rules(#[from] AclError),
    #[error("chain verification failed at height {0}")]
    ChainBroken(u64),
    #[error("corrupt ledger: {0}")]
    Corrupt(String),
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// What a granted retrieval hands back to the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Retrieval {
    pub event_id: String,
    pub timestamp: u64,
    pub capability_ref: String,
    pub digest_hex: String,
}

/// All fields optional; time bounds are inclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventFilter {
    pub requester_id: Option<String>,
    pub target_patient_id: Option<String>,
    pub from: Option<u64>,
    pub until: Option<u64>,
}

impl EventFilter {
    pub fn requester(id: impl Into<String>) -> Self {
        EventFilter {
            requester_id: Some(id.into()),
            ..Self::default()
        }
    }

    pub fn target(id: impl Into<String>) -> Self {
        EventFilter {
            target_patient_id: Some(id.into()),
            ..Self::default()
        }
    }

    pub fn between(from: u64, until: u64) -> Self {
        EventFilter {
            from: Some(from),
            until: Some(until),
            ..Self::default()
        }
    }

    pub fn matches(&self, e: &AccessEvent) -> bool {
        self.requester_id.as_ref().is_none_or(|r| *r == e.requester_id)
            && self.target_patient_id.as_ref().is_none_or(|t| *t == e.target_patient_id)
            && self.from.is_none_or(|f| e.timestamp >= f)
            && self.until.is_none_or(|u| e.timestamp <= u)
    }
}

/// Read access to committed access events, used by the edge node to check
/// that a token request is backed by a grant.
pub trait EventLookup: Send + Sync {
    fn access_event(&self, event_id: &str) -> Option<AccessEvent>;
}

/// The state derived from the chain. Two ledgers with equal chains have equal
/// states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub participants: BTreeMap<String, ParticipantRecord>,
    /// patient id -> assigned doctor ids
    pub assignments: BTreeMap<String, BTreeSet<String>>,
    pub assets: BTreeMap<String, EhrAsset>,
    pub rules: Vec<AclRule>,
    pub events: Vec<AccessEvent>,
    event_index: BTreeMap<String, usize>,
    /// capability ref -> digest, for every version ever registered
    digests: BTreeMap<String, String>,
}

impl LedgerState {
    fn apply(&mut self, record: &ChainRecord) -> Result<(), LedgerError> {
        match record {
            ChainRecord::Genesis { .. } => {}
            ChainRecord::ParticipantRegistered(p) => {
                self.participants.insert(p.id.clone(), p.clone());
            }
            ChainRecord::DoctorAssigned {
                patient_id,
                doctor_id,
            } => {
                self.assignments
                    .entry(patient_id.clone())
                    .or_default()
                    .insert(doctor_id.clone());
                if let Some(a) = self.assets.get_mut(patient_id) {
                    a.assigned_doctor_ids.insert(doctor_id.clone());
                }
            }
            ChainRecord::AssetStored { asset, .. } => {
                self.digests
                    .insert(asset.capability_ref.clone(), asset.digest_hex.clone());
                self.assets.insert(asset.patient_id.clone(), asset.clone());
            }
            ChainRecord::BlacklistSet {
                participant_id,
                flag,
            } => {
                if let Some(p) = self.participants.get_mut(participant_id) {
                    p.blacklisted = *flag;
                }
            }
            ChainRecord::RulesInstalled { source } => {
                self.rules = acl::parse_rules(source)?;
            }
            ChainRecord::Access(e) => {
                self.event_index.insert(e.event_id.clone(), self.events.len());
                self.events.push(e.clone());
            }
        }
        Ok(())
    }

    fn patient(&self, id: &str) -> Option<&ParticipantRecord> {
        self.participants
            .get(id)
            .filter(|p| p.kind == ParticipantKind::Patient)
    }

    fn acl_object(&self, patient: &ParticipantRecord, asset: &EhrAsset) -> AclObject {
        AclObject {
            organization: patient.organization.clone(),
            patient_id: patient.id.clone(),
            assigned_doctor_ids: asset.assigned_doctor_ids.clone(),
        }
    }
}

struct Inner {
    state: LedgerState,
    blocks: Vec<Block>,
    log: Option<BlockLog>,
}

impl Inner {
    fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    /// Appends one block holding `records` and applies it. Nothing changes if
    /// the log write fails.
    fn commit(&mut self, records: Vec<ChainRecord>) -> Result<&Block, LedgerError> {
        assert!(!records.is_empty(), "empty block payload");
        let block = Block::next(self.blocks.last(), codec::encode_records(&records));
        if let Some(log) = &mut self.log {
            log.append(&block)?;
        }
        for r in &records {
            self.state.apply(r)?;
        }
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }
}

fn genesis_records() -> Vec<ChainRecord> {
    vec![
        ChainRecord::Genesis {
            network: NETWORK_NAME.to_string(),
        },
        ChainRecord::RulesInstalled {
            source: acl::DEFAULT_RULES.to_string(),
        },
    ]
}

fn check_token(value: &str, field: &'static str) -> Result<(), LedgerError> {
    if value.is_empty() {
        return Err(LedgerError::MissingField(field));
    }
    if !value
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(LedgerError::InvalidField(field));
    }
    Ok(())
}

fn check_digest(hex: &str) -> Result<(), LedgerError> {
    if hex.len() == 64 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        Ok(())
    } else {
        Err(LedgerError::BadDigest)
    }
}

pub struct Ledger {
    inner: RwLock<Inner>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("height", &self.height())
            .finish_non_exhaustive()
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(Arc::new(SystemClock))
    }
}

impl Ledger {
    /// In-memory ledger holding only the genesis block.
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        let mut inner = Inner {
            state: LedgerState::default(),
            blocks: Vec::new(),
            log: None,
        };
        inner.commit(genesis_records()).expect("genesis applies");
        Ledger {
            inner: RwLock::new(inner),
            clock,
        }
    }

    /// Opens a file-backed ledger, creating it with a genesis block if the
    /// file is missing or empty. An existing log is verified and replayed.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let blocks = if path.exists() { read_log(path)? } else { Vec::new() };
        let mut inner = if blocks.is_empty() {
            let mut inner = Inner {
                state: LedgerState::default(),
                blocks: Vec::new(),
                log: Some(BlockLog::create(path)?),
            };
            inner.commit(genesis_records())?;
            inner
        } else {
            let mut inner = replay(blocks)?;
            inner.log = Some(BlockLog::append_to(path)?);
            inner
        };
        inner.log.as_mut().expect("log set").sync()?;
        Ok(Ledger {
            inner: RwLock::new(inner),
            clock,
        })
    }

    /// Rebuilds an in-memory ledger from committed blocks.
    pub fn from_blocks(blocks: Vec<Block>, clock: Arc<dyn Clock>) -> Result<Self, LedgerError> {
        Ok(Ledger {
            inner: RwLock::new(replay(blocks)?),
            clock,
        })
    }

    pub fn register_participant(&self, p: ParticipantRecord) -> Result<String, LedgerError> {
        self.register_participant_with(p, &[])
    }

    /// Registers a participant and, for a patient, assigns `doctors` in the
    /// same block.
    pub fn register_participant_with(
        &self,
        p: ParticipantRecord,
        doctors: &[String],
    ) -> Result<String, LedgerError> {
        check_token(&p.id, "id")?;
        if p.first_name.trim().is_empty() {
            return Err(LedgerError::MissingField("firstName"));
        }
        if p.last_name.trim().is_empty() {
            return Err(LedgerError::MissingField("lastName"));
        }
        check_token(&p.role, "role")?;
        check_token(&p.organization, "organization")?;
        if p.credential_id.is_empty() {
            return Err(LedgerError::MissingField("credentialId"));
        }
        let mut inner = self.inner.write();
        let st = &inner.state;
        if st.participants.contains_key(&p.id) {
            return Err(LedgerError::DuplicateId(p.id));
        }
        if st.participants.values().any(|q| q.credential_id == p.credential_id) {
            return Err(LedgerError::DuplicateCredential);
        }
        let mut records = Vec::with_capacity(1 + doctors.len());
        for d in doctors {
            match st.participants.get(d) {
                Some(q) if q.kind == ParticipantKind::Doctor => {}
                Some(_) => return Err(LedgerError::NotADoctor(d.clone())),
                None => return Err(LedgerError::UnknownParticipant(d.clone())),
            }
            if p.kind != ParticipantKind::Patient {
                return Err(LedgerError::UnknownPatient(p.id));
            }
            records.push(ChainRecord::DoctorAssigned {
                patient_id: p.id.clone(),
                doctor_id: d.clone(),
            });
        }
        let id = p.id.clone();
        records.insert(0, ChainRecord::ParticipantRegistered(p));
        inner.commit(records)?;
        Ok(id)
    }

    /// Records that `doctor_id` treats `patient_id`. Re-assigning is a no-op.
    pub fn assign_doctor(&self, patient_id: &str, doctor_id: &str) -> Result<(), LedgerError> {
        let mut inner = self.inner.write();
        let st = &inner.state;
        if st.patient(patient_id).is_none() {
            return Err(LedgerError::UnknownPatient(patient_id.to_string()));
        }
        match st.participants.get(doctor_id) {
            Some(q) if q.kind == ParticipantKind::Doctor => {}
            Some(_) => return Err(LedgerError::NotADoctor(doctor_id.to_string())),
            None => return Err(LedgerError::UnknownParticipant(doctor_id.to_string())),
        }
        if st
            .assignments
            .get(patient_id)
            .is_some_and(|s| s.contains(doctor_id))
        {
            return Ok(());
        }
        inner.commit(vec![ChainRecord::DoctorAssigned {
            patient_id: patient_id.to_string(),
            doctor_id: doctor_id.to_string(),
        }])?;
        Ok(())
    }

    /// Creates the patient's single EHR asset. Returns the asset id, which is
    /// the patient id.
    pub fn put_asset(
        &self,
        patient_id: &str,
        capability_ref: &str,
        digest_hex: &str,
    ) -> Result<String, LedgerError> {
        check_digest(digest_hex)?;
        if capability_ref.is_empty() {
            return Err(LedgerError::MissingField("capabilityRef"));
        }
        let mut inner = self.inner.write();
        let st = &inner.state;
        let patient = st
            .patient(patient_id)
            .ok_or_else(|| LedgerError::UnknownPatient(patient_id.to_string()))?;
        if patient.blacklisted {
            return Err(LedgerError::Blacklisted {
                participant_id: patient_id.to_string(),
                event_id: None,
            });
        }
        if st.assets.contains_key(patient_id) {
            return Err(LedgerError::DuplicateAsset(patient_id.to_string()));
        }
        let asset = EhrAsset {
            patient_id: patient_id.to_string(),
            capability_ref: capability_ref.to_string(),
            digest_hex: digest_hex.to_string(),
            assigned_doctor_ids: st.assignments.get(patient_id).cloned().unwrap_or_default(),
        };
        inner.commit(vec![ChainRecord::AssetStored {
            asset,
            created: true,
        }])?;
        Ok(patient_id.to_string())
    }

    /// Replaces the reference and digest of an existing asset, subject to the
    /// UPDATE rules.
    pub fn update_asset(
        &self,
        requester_id: &str,
        patient_id: &str,
        capability_ref: &str,
        digest_hex: &str,
    ) -> Result<String, LedgerError> {
        check_digest(digest_hex)?;
        if capability_ref.is_empty() {
            return Err(LedgerError::MissingField("capabilityRef"));
        }
        let mut inner = self.inner.write();
        let st = &inner.state;
        let requester = st
            .participants
            .get(requester_id)
            .ok_or_else(|| LedgerError::UnknownParticipant(requester_id.to_string()))?;
        if requester.blacklisted {
            return Err(LedgerError::Blacklisted {
                participant_id: requester_id.to_string(),
                event_id: None,
            });
        }
        let patient = st
            .patient(patient_id)
            .ok_or_else(|| LedgerError::UnknownPatient(patient_id.to_string()))?;
        let current = st
            .assets
            .get(patient_id)
            .ok_or_else(|| LedgerError::NoAsset(patient_id.to_string()))?;
        let object = st.acl_object(patient, current);
        if acl::check(requester, Verb::Update, &object, &st.rules) != acl::AclAction::Allow {
            return Err(LedgerError::NotAuthorized { event_id: None });
        }
        let asset = EhrAsset {
            capability_ref: capability_ref.to_string(),
            digest_hex: digest_hex.to_string(),
            ..current.clone()
        };
        inner.commit(vec![ChainRecord::AssetStored {
            asset,
            created: false,
        }])?;
        Ok(patient_id.to_string())
    }

    /// The smart-contract retrieval. Every call appends exactly one access
    /// event, whatever the outcome.
    pub fn retrieve_ehr_address(
        &self,
        requester_id: &str,
        target_patient_id: &str,
    ) -> Result<Retrieval, LedgerError> {
        let mut inner = self.inner.write();
        let event_id = format!("{}-0", inner.next_height());
        let timestamp = self.clock.now_millis();
        let (outcome, detail, result) = decide_retrieval(&inner.state, requester_id, target_patient_id, &event_id, timestamp);
        let event = AccessEvent {
            event_id,
            timestamp,
            requester_id: requester_id.to_string(),
            target_patient_id: target_patient_id.to_string(),
            outcome,
            detail,
        };
        inner.commit(vec![ChainRecord::Access(event)])?;
        result
    }

    pub fn set_blacklist(&self, participant_id: &str, flag: bool) -> Result<(), LedgerError> {
        let mut inner = self.inner.write();
        if !inner.state.participants.contains_key(participant_id) {
            return Err(LedgerError::UnknownParticipant(participant_id.to_string()));
        }
        inner.commit(vec![ChainRecord::BlacklistSet {
            participant_id: participant_id.to_string(),
            flag,
        }])?;
        Ok(())
    }

    /// Atomically replaces the chain ACL after validating it.
    pub fn install_rules(&self, rules: &[AclRule]) -> Result<(), LedgerError> {
        acl::validate_rules(rules).map_err(LedgerError::InvalidRules)?;
        let source = acl::rules_to_source(rules);
        self.inner
            .write()
            .commit(vec![ChainRecord::RulesInstalled { source }])?;
        Ok(())
    }

    pub fn install_rules_source(&self, source: &str) -> Result<(), LedgerError> {
        self.install_rules(&acl::parse_rules(source)?)
    }

    pub fn query_events(&self, filter: &EventFilter) -> Vec<AccessEvent> {
        self.inner
            .read()
            .state
            .events
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    pub fn event(&self, event_id: &str) -> Option<AccessEvent> {
        let inner = self.inner.read();
        let i = *inner.state.event_index.get(event_id)?;
        inner.state.events.get(i).cloned()
    }

    pub fn participant(&self, id: &str) -> Option<ParticipantRecord> {
        self.inner.read().state.participants.get(id).cloned()
    }

    pub fn participant_by_credential(&self, credential_id: &str) -> Option<ParticipantRecord> {
        self.inner
            .read()
            .state
            .participants
            .values()
            .find(|p| p.credential_id == credential_id)
            .cloned()
    }

    pub fn participants(&self) -> Vec<ParticipantRecord> {
        self.inner.read().state.participants.values().cloned().collect()
    }

    pub fn asset(&self, patient_id: &str) -> Option<EhrAsset> {
        self.inner.read().state.assets.get(patient_id).cloned()
    }

    /// The digest registered alongside `capability_ref`, including refs a
    /// later update has since replaced.
    pub fn recorded_digest(&self, capability_ref: &str) -> Option<String> {
        self.inner.read().state.digests.get(capability_ref).cloned()
    }

    pub fn rules(&self) -> Vec<AclRule> {
        self.inner.read().state.rules.clone()
    }

    /// Patients assigned to `doctor_id`, in id order.
    pub fn patients_of(&self, doctor_id: &str) -> Vec<String> {
        self.inner
            .read()
            .state
            .assignments
            .iter()
            .filter(|(_, ds)| ds.contains(doctor_id))
            .map(|(p, _)| p.clone())
            .collect()
    }

    pub fn state(&self) -> LedgerState {
        self.inner.read().state.clone()
    }

    /// Number of committed blocks, including genesis.
    pub fn height(&self) -> u64 {
        self.inner.read().next_height()
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.inner.read().blocks.clone()
    }

    pub fn block(&self, height: u64) -> Option<Block> {
        self.inner.read().blocks.get(height as usize).cloned()
    }

    pub fn verify_chain(&self) -> Result<(), u64> {
        verify_chain(&self.inner.read().blocks)
    }
}

impl EventLookup for Ledger {
    fn access_event(&self, event_id: &str) -> Option<AccessEvent> {
        self.event(event_id)
    }
}

impl<T: EventLookup + ?Sized> EventLookup for Arc<T> {
    fn access_event(&self, event_id: &str) -> Option<AccessEvent> {
        (**self).access_event(event_id)
    }
}

fn decide_retrieval(
    st: &LedgerState,
    requester_id: &str,
    target_id: &str,
    event_id: &str,
    timestamp: u64,
) -> (AccessOutcome, String, Result<Retrieval, LedgerError>) {
    let reject = |detail: &str, err: LedgerError| (AccessOutcome::Rejected, detail.to_string(), Err(err));
    let Some(requester) = st.participants.get(requester_id) else {
        return reject(
            "unknown requester",
            LedgerError::UnknownParticipant(requester_id.to_string()),
        );
    };
    if requester.blacklisted {
        return reject(
            "requester is blacklisted",
            LedgerError::Blacklisted {
                participant_id: requester_id.to_string(),
                event_id: Some(event_id.to_string()),
            },
        );
    }
    let Some(patient) = st.patient(target_id) else {
        return reject("unknown patient", LedgerError::UnknownPatient(target_id.to_string()));
    };
    let Some(asset) = st.assets.get(target_id) else {
        return reject("patient has no EHR asset", LedgerError::NoAsset(target_id.to_string()));
    };
    let denied = || LedgerError::NotAuthorized {
        event_id: Some(event_id.to_string()),
    };
    // Patients never reach another patient's record, whatever the rules say.
    if requester.kind == ParticipantKind::Patient && requester.id != patient.id {
        return reject("patients may only retrieve their own record", denied());
    }
    let object = st.acl_object(patient, asset);
    match acl::decide(requester, Verb::Read, &object, &st.rules) {
        Some(rule) if rule.action == acl::AclAction::Allow => (
            AccessOutcome::Granted,
            format!("allowed by {}", rule.id),
            Ok(Retrieval {
                event_id: event_id.to_string(),
                timestamp,
                capability_ref: asset.capability_ref.clone(),
                digest_hex: asset.digest_hex.clone(),
            }),
        ),
        Some(rule) => reject(&format!("denied by {}", rule.id), denied()),
        None => reject("no rule allows READ", denied()),
    }
}

fn replay(blocks: Vec<Block>) -> Result<Inner, LedgerError> {
    verify_chain(&blocks).map_err(LedgerError::ChainBroken)?;
    let mut state = LedgerState::default();
    for b in &blocks {
        let records = codec::decode_records(&b.payload)
            .map_err(|e| LedgerError::Corrupt(format!("block {}: {e}", b.height)))?;
        if records.is_empty() {
            return Err(LedgerError::Corrupt(format!("block {} is empty", b.height)));
        }
        for r in &records {
            state.apply(r)?;
        }
    }
    Ok(Inner {
        state,
        blocks,
        log: None,
    })
}

#[cfg(test)]
mod tests;
