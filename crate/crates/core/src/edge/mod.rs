//! Off-chain EHR storage with attribute-based release through one-time URLs.
//!
//! Each record's payload lives under a random storage key; the payload file is
//! named after the key's digest. The key itself is only ever held sealed:
//! under the node master key in the record index, and under a split token key
//! inside each one-time token. Redeeming a URL removes its token before
//! anything else happens, so a URL yields at most one release.

mod seal;
mod store;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::digest::{compute_digest, Digest};
use crate::lang::{self, Obligation, ParseError, PolicyDocument};
use crate::ledger::{AccessOutcome, EventLookup};
use crate::pdp::{self, AccessRequest, Category, Decision, NoResolver, PolicyStore};

pub use seal::{OneTimeUrl, UrlError};
pub use store::{DirStore, MemoryStore, PayloadStore};

pub const DEFAULT_TOKEN_TTL_MS: u64 = 24 * 60 * 60 * 1000;
const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("payload is empty")]
    EmptyPayload,
    #[error("policy rejected: {0}")]
    PolicyRejected(#[from] ParseError),
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("event {0:?} is not a grant for this record")]
    UnknownEvent(String),
    /// Unknown, expired and already-redeemed tokens all look the same.
    #[error("this link is no longer valid")]
    TokenGone,
    #[error("access denied ({})", .0.value)]
    AccessDenied(Decision),
    /// The bytes on disk, if any, come back for inspection but are never
    /// handed out as a successful read.
    #[error("stored payload of {record_ref:?} no longer matches its digest")]
    Tampered {
        record_ref: String,
        found: Option<Vec<u8>>,
    },
    #[error("journal: {0}")]
    Journal(String),
    #[error("edge storage I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Integrity {
    Match,
    Tampered,
}

/// Public metadata of a stored record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordInfo {
    pub record_ref: String,
    pub patient_id: String,
    pub content_type: String,
    pub digest_hex: String,
    pub policy_id: String,
    /// Name of the payload slot (a digest of the storage key).
    pub slot: String,
}

/// What a successful redemption returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Released {
    pub record_ref: String,
    pub patient_id: String,
    pub content_type: String,
    pub payload: Vec<u8>,
    pub digest_hex: String,
    pub obligations: Vec<Obligation>,
}

#[derive(Clone)]
pub struct EdgeOptions {
    pub node_id: String,
    /// 0 disables expiry.
    pub token_ttl_ms: u64,
    /// Payload files and journal. `None` keeps everything in memory.
    pub directory: Option<PathBuf>,
    /// Needed to reopen a directory written by an earlier process.
    pub master_key: Option<[u8; 32]>,
    /// Seeds key and token generation; `None` draws from the OS.
    pub seed: Option<u64>,
    pub clock: Arc<dyn Clock>,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        EdgeOptions {
            node_id: "edge-1".to_string(),
            token_ttl_ms: DEFAULT_TOKEN_TTL_MS,
            directory: None,
            master_key: None,
            seed: None,
            clock: Arc::new(SystemClock),
        }
    }
}

struct RecordEntry {
    meta: RwLock<RecordMeta>,
}

#[derive(Clone)]
struct RecordMeta {
    info: RecordInfo,
    /// Storage key sealed under the master key, bound to the record ref.
    sealed_key: Vec<u8>,
}

struct Token {
    server_half: [u8; seal::KEY_LEN],
    /// Storage key sealed under the split token key, bound to the token id.
    sealed_key: Vec<u8>,
    bound_event_id: String,
    expires_at: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
enum JournalEntry {
    #[serde(rename_all = "camelCase")]
    Store {
        info: RecordInfo,
        sealed_key: String,
        policy: String,
    },
    #[serde(rename_all = "camelCase")]
    Replace { record_ref: String, digest_hex: String },
    /// Undoes a store. `policy` is the version to put back, if the store
    /// displaced one.
    #[serde(rename_all = "camelCase")]
    Discard { record_ref: String, policy: Option<String> },
}

struct Journal {
    file: File,
}

impl Journal {
    fn append(&mut self, entry: &JournalEntry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

pub struct EdgeNode {
    node_id: String,
    ttl_ms: u64,
    master_key: [u8; 32],
    records: RwLock<HashMap<String, Arc<RecordEntry>>>,
    slots: RwLock<HashMap<String, String>>,
    tokens: Mutex<HashMap<String, Token>>,
    policies: PolicyStore,
    payloads: Box<dyn PayloadStore>,
    journal: Option<Mutex<Journal>>,
    events: Arc<dyn EventLookup>,
    clock: Arc<dyn Clock>,
    rng: Mutex<ChaCha20Rng>,
}

impl std::fmt::Debug for EdgeNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeNode")
            .field("node_id", &self.node_id)
            .field("records", &self.records.read().len())
            .finish_non_exhaustive()
    }
}

fn policy_key(patient_id: &str, policy_id: &str) -> String {
    format!("{patient_id}/{policy_id}")
}

impl EdgeNode {
    /// In-memory node with default options.
    pub fn in_memory(events: Arc<dyn EventLookup>) -> Self {
        Self::with_store(EdgeOptions::default(), events, Box::new(MemoryStore::new()))
    }

    /// Node over a caller-supplied payload store; `options.directory` is
    /// ignored and no journal is kept.
    pub fn with_store(options: EdgeOptions, events: Arc<dyn EventLookup>, payloads: Box<dyn PayloadStore>) -> Self {
        let mut rng = match options.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_os_rng(),
        };
        let master_key = options.master_key.unwrap_or_else(|| {
            let mut k = [0u8; 32];
            rng.fill_bytes(&mut k);
            k
        });
        EdgeNode {
            node_id: options.node_id,
            ttl_ms: options.token_ttl_ms,
            master_key,
            records: RwLock::new(HashMap::new()),
            slots: RwLock::new(HashMap::new()),
            tokens: Mutex::new(HashMap::new()),
            policies: PolicyStore::new(),
            payloads,
            journal: None,
            events,
            clock: options.clock,
            rng: Mutex::new(rng),
        }
    }

    /// Builds a node from `options`, replaying the journal if the directory
    /// already holds one.
    pub fn open(options: EdgeOptions, events: Arc<dyn EventLookup>) -> Result<Self, EdgeError> {
        let Some(dir) = options.directory.clone() else {
            return Ok(Self::with_store(options, events, Box::new(MemoryStore::new())));
        };
        let payloads = DirStore::open(dir.join("payloads"))?;
        let journal_path = dir.join(JOURNAL_FILE);
        let had_key = options.master_key.is_some();
        let mut node = Self::with_store(options, events, Box::new(payloads));
        if journal_path.exists() && fs::metadata(&journal_path)?.len() > 0 {
            if !had_key {
                return Err(EdgeError::Journal(
                    "an existing journal can only be reopened with the node master key".into(),
                ));
            }
            node.replay_journal(&journal_path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        node.journal = Some(Mutex::new(Journal { file }));
        Ok(node)
    }

    fn replay_journal(&mut self, path: &Path) -> Result<(), EdgeError> {
        let reader = BufReader::new(File::open(path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| EdgeError::Journal(format!("line {}: {m}", n + 1));
            let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match entry {
                JournalEntry::Store {
                    info,
                    sealed_key,
                    policy,
                } => {
                    let sealed_key = STANDARD.decode(sealed_key).map_err(|e| bad(e.to_string()))?;
                    if seal::open(&self.master_key, &sealed_key, info.record_ref.as_bytes()).is_none() {
                        return Err(bad("master key does not open the record key".into()));
                    }
                    let doc = lang::parse(&policy).map_err(|e| bad(e.to_string()))?;
                    self.install_policy(&info.patient_id, doc);
                    self.slots.write().insert(info.slot.clone(), info.record_ref.clone());
                    self.records.write().insert(
                        info.record_ref.clone(),
                        Arc::new(RecordEntry {
                            meta: RwLock::new(RecordMeta { info, sealed_key }),
                        }),
                    );
                }
                JournalEntry::Replace {
                    record_ref,
                    digest_hex,
                } => {
                    let entry = self
                        .records
                        .read()
                        .get(&record_ref)
                        .cloned()
                        .ok_or_else(|| bad(format!("unknown record {record_ref}")))?;
                    entry.meta.write().info.digest_hex = digest_hex;
                }
                JournalEntry::Discard { record_ref, policy } => {
                    let previous = match policy {
                        Some(src) => Some(lang::parse(&src).map_err(|e| bad(e.to_string()))?),
                        None => None,
                    };
                    self.forget(&record_ref, previous)
                        .ok_or_else(|| bad(format!("unknown record {record_ref}")))?;
                }
            }
        }
        Ok(())
    }

    /// Drops a record from the in-memory maps and restores or removes its
    /// policy. Returns the dropped slot.
    fn forget(&self, record_ref: &str, previous: Option<PolicyDocument>) -> Option<String> {
        let entry = self.records.write().remove(record_ref)?;
        let info = entry.meta.read().info.clone();
        self.slots.write().remove(&info.slot);
        match previous {
            Some(doc) => self.install_policy(&info.patient_id, doc),
            None => {
                let _ = self.policies.remove(&policy_key(&info.patient_id, &info.policy_id));
            }
        }
        Some(info.slot)
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn master_key(&self) -> [u8; 32] {
        self.master_key
    }

    fn random<const N: usize>(&self) -> [u8; N] {
        let mut b = [0u8; N];
        self.rng.lock().fill_bytes(&mut b);
        b
    }

    fn journal(&self, entry: &JournalEntry) -> io::Result<()> {
        match &self.journal {
            Some(j) => j.lock().append(entry),
            None => Ok(()),
        }
    }

    fn install_policy(&self, patient_id: &str, doc: PolicyDocument) {
        let key = policy_key(patient_id, &doc.id);
        if self.policies.replace(&key, doc.clone()).is_err() {
            // Lost a race with another installer; either copy is current.
            let _ = self.policies.install(&key, doc);
        }
    }

    /// Stores a payload under `policy` and returns the stable record ref and
    /// the payload digest. Installing a policy whose id the patient already
    /// uses replaces the earlier version.
    pub fn store_record(
        &self,
        patient_id: &str,
        payload: &[u8],
        content_type: &str,
        policy: &PolicyDocument,
    ) -> Result<(String, String), EdgeError> {
        if payload.is_empty() {
            return Err(EdgeError::EmptyPayload);
        }
        // Going through the text form applies every check the parser makes.
        let source = lang::serialize(policy);
        let doc = lang::parse(&source)?;

        let record_ref = format!("rec-{}", hex::encode(self.random::<12>()));
        let storage_key: [u8; 32] = self.random();
        let slot = Digest::of(&storage_key).to_hex();
        let sealed_key = seal::seal(
            &self.master_key,
            &self.random(),
            &storage_key,
            record_ref.as_bytes(),
        );
        let info = RecordInfo {
            record_ref: record_ref.clone(),
            patient_id: patient_id.to_string(),
            content_type: content_type.to_string(),
            digest_hex: compute_digest(payload),
            policy_id: doc.id.clone(),
            slot: slot.clone(),
        };
        self.payloads.put(&slot, payload)?;
        self.journal(&JournalEntry::Store {
            info: info.clone(),
            sealed_key: STANDARD.encode(&sealed_key),
            policy: source,
        })?;
        self.install_policy(patient_id, doc);
        self.slots.write().insert(slot, record_ref.clone());
        let digest = info.digest_hex.clone();
        self.records.write().insert(
            record_ref.clone(),
            Arc::new(RecordEntry {
                meta: RwLock::new(RecordMeta { info, sealed_key }),
            }),
        );
        Ok((record_ref, digest))
    }

    /// Like [`store_record`](Self::store_record) with the policy given as
    /// source text.
    pub fn store_record_source(
        &self,
        patient_id: &str,
        payload: &[u8],
        content_type: &str,
        policy_source: &str,
    ) -> Result<(String, String), EdgeError> {
        if payload.is_empty() {
            return Err(EdgeError::EmptyPayload);
        }
        let doc = lang::parse(policy_source)?;
        self.store_record(patient_id, payload, content_type, &doc)
    }

    /// Overwrites a record's payload. Readers of the same record wait.
    pub fn replace_payload(&self, record_ref: &str, payload: &[u8]) -> Result<String, EdgeError> {
        if payload.is_empty() {
            return Err(EdgeError::EmptyPayload);
        }
        let entry = self.entry(record_ref)?;
        let mut meta = entry.meta.write();
        let digest_hex = compute_digest(payload);
        self.payloads.put(&meta.info.slot, payload)?;
        self.journal(&JournalEntry::Replace {
            record_ref: record_ref.to_string(),
            digest_hex: digest_hex.clone(),
        })?;
        meta.info.digest_hex = digest_hex.clone();
        Ok(digest_hex)
    }

    /// Rolls back a [`store_record`](Self::store_record) whose chain
    /// registration failed. `previous` is the policy the store displaced,
    /// as returned by [`policy`](Self::policy) beforehand.
    pub fn discard_record(&self, record_ref: &str, previous: Option<&PolicyDocument>) -> Result<(), EdgeError> {
        self.entry(record_ref)?;
        self.journal(&JournalEntry::Discard {
            record_ref: record_ref.to_string(),
            policy: previous.map(lang::serialize),
        })?;
        if let Some(slot) = self.forget(record_ref, previous.cloned()) {
            self.payloads.remove(&slot)?;
        }
        Ok(())
    }

    fn entry(&self, record_ref: &str) -> Result<Arc<RecordEntry>, EdgeError> {
        self.records
            .read()
            .get(record_ref)
            .cloned()
            .ok_or_else(|| EdgeError::UnknownRecord(record_ref.to_string()))
    }

    pub fn record(&self, record_ref: &str) -> Option<RecordInfo> {
        let entry = self.records.read().get(record_ref).cloned()?;
        let info = entry.meta.read().info.clone();
        Some(info)
    }

    pub fn policy(&self, patient_id: &str, policy_id: &str) -> Option<Arc<PolicyDocument>> {
        self.policies.get(&policy_key(patient_id, policy_id))
    }

    /// Issues a fresh one-time URL for `record_ref`, backed by a GRANTED
    /// chain event that targets the record's patient.
    pub fn mint_one_time_url(&self, record_ref: &str, granted_event_id: &str) -> Result<String, EdgeError> {
        let entry = self.entry(record_ref)?;
        let meta = entry.meta.read().clone();
        let granted = self.events.access_event(granted_event_id).is_some_and(|e| {
            e.outcome == AccessOutcome::Granted && e.target_patient_id == meta.info.patient_id
        });
        if !granted {
            return Err(EdgeError::UnknownEvent(granted_event_id.to_string()));
        }
        let storage_key = seal::open(&self.master_key, &meta.sealed_key, record_ref.as_bytes())
            .ok_or_else(|| EdgeError::Journal(format!("record key of {record_ref} does not open")))?;

        let token_id = seal::encode_token_id(&self.random());
        let server_half: [u8; 32] = self.random();
        let url_half: [u8; 32] = self.random();
        let key = seal::derive_token_key(&server_half, &url_half);
        let sealed_key = seal::seal(&key, &self.random(), &storage_key, token_id.as_bytes());
        let now = self.clock.now_millis();
        let token = Token {
            server_half,
            sealed_key,
            bound_event_id: granted_event_id.to_string(),
            expires_at: (self.ttl_ms > 0).then(|| now.saturating_add(self.ttl_ms)),
        };
        {
            let mut tokens = self.tokens.lock();
            if tokens.len() >= 4096 {
                tokens.retain(|_, t| t.expires_at.is_none_or(|e| e > now));
            }
            tokens.insert(token_id.clone(), token);
        }
        Ok(OneTimeUrl {
            node_id: self.node_id.clone(),
            token_id,
            key_part: url_half,
        }
        .to_string())
    }

    /// Consumes the URL's token, then releases the payload if the record's
    /// policy permits `request`. Any other decision burns the token anyway.
    ///
    /// The node fills in `resource.patientId`, `resource.recordRef`,
    /// `resource.contentType` and, unless given, `action.id = READ` and
    /// `environment.currentTime`.
    pub fn redeem(&self, url: &str, request: &AccessRequest) -> Result<Released, EdgeError> {
        let url: OneTimeUrl = url.parse().map_err(|_| EdgeError::TokenGone)?;
        if url.node_id != self.node_id {
            return Err(EdgeError::TokenGone);
        }
        let now = self.clock.now_millis();
        let token = self.tokens.lock().remove(&url.token_id).ok_or(EdgeError::TokenGone)?;
        if token.expires_at.is_some_and(|e| e <= now) {
            return Err(EdgeError::TokenGone);
        }
        let key = seal::derive_token_key(&token.server_half, &url.key_part);
        let storage_key =
            seal::open(&key, &token.sealed_key, url.token_id.as_bytes()).ok_or(EdgeError::TokenGone)?;
        drop(token);
        let slot = Digest::of(&storage_key).to_hex();
        let record_ref = self.slots.read().get(&slot).cloned().ok_or(EdgeError::TokenGone)?;
        let entry = self.entry(&record_ref).map_err(|_| EdgeError::TokenGone)?;
        let meta = entry.meta.read();
        let info = &meta.info;

        let doc = self
            .policy(&info.patient_id, &info.policy_id)
            .ok_or_else(|| EdgeError::AccessDenied(Decision::indeterminate("no policy installed")))?;
        let mut req = request.clone();
        let res = req.bag_mut(Category::Resource);
        res.insert("patientId", info.patient_id.as_str());
        res.insert("recordRef", info.record_ref.as_str());
        res.insert("contentType", info.content_type.as_str());
        if req.action.get("id").is_none() {
            req.action.insert("id", "READ");
        }
        if req.environment.get("currentTime").is_none() {
            req.environment.insert("currentTime", now as i64);
        }
        let decision = pdp::evaluate(&req, &doc, &NoResolver);
        if !decision.is_permit() {
            return Err(EdgeError::AccessDenied(decision));
        }
        let Some(payload) = self.payloads.get(&info.slot)? else {
            return Err(EdgeError::Tampered { record_ref, found: None });
        };
        if compute_digest(&payload) != info.digest_hex {
            return Err(EdgeError::Tampered {
                record_ref,
                found: Some(payload),
            });
        }
        Ok(Released {
            record_ref: info.record_ref.clone(),
            patient_id: info.patient_id.clone(),
            content_type: info.content_type.clone(),
            payload,
            digest_hex: info.digest_hex.clone(),
            obligations: decision.obligations,
        })
    }

    /// Recomputes the digest of the stored bytes and compares it with the
    /// digest recorded on chain.
    pub fn verify_integrity(&self, record_ref: &str, chain_digest_hex: &str) -> Result<Integrity, EdgeError> {
        let entry = self.entry(record_ref)?;
        let meta = entry.meta.read();
        let verdict = match self.payloads.get(&meta.info.slot)? {
            Some(bytes) if compute_digest(&bytes).eq_ignore_ascii_case(chain_digest_hex) => Integrity::Match,
            _ => Integrity::Tampered,
        };
        Ok(verdict)
    }

    /// Unredeemed, unexpired tokens.
    pub fn outstanding_tokens(&self) -> usize {
        let now = self.clock.now_millis();
        self.tokens
            .lock()
            .values()
            .filter(|t| t.expires_at.is_none_or(|e| e > now))
            .count()
    }

    /// The event a still-outstanding token was minted against.
    pub fn token_event(&self, url: &str) -> Option<String> {
        let url: OneTimeUrl = url.parse().ok()?;
        self.tokens.lock().get(&url.token_id).map(|t| t.bound_event_id.clone())
    }
}
