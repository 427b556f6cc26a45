//! Canonical byte encoding for chain payloads.
//!
//! Integers are big-endian and fixed width, strings and byte strings are
//! prefixed with a u32 length, records start with a one-byte tag and list
//! their fields in declaration order. The same input always yields the same
//! bytes on every platform, which is what makes payload hashes meaningful.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{EhrAsset, ParticipantKind, ParticipantRecord};

use super::{AccessEvent, AccessOutcome, ChainRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("invalid {what} tag {tag} at byte {at}")]
    BadTag { what: &'static str, tag: u8, at: usize },
    #[error("invalid UTF-8 at byte {0}")]
    Utf8(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CodecError::Truncated(self.pos)),
        }
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::BadTag { what: "bool", tag, at }),
        }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        let at = self.pos;
        let b = self.bytes()?;
        std::str::from_utf8(b)
            .map(str::to_string)
            .map_err(|_| CodecError::Utf8(at))
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

const TAG_GENESIS: u8 = 0;
const TAG_PARTICIPANT: u8 = 1;
const TAG_ASSIGNMENT: u8 = 2;
const TAG_ASSET: u8 = 3;
const TAG_BLACKLIST: u8 = 4;
const TAG_RULES: u8 = 5;
const TAG_ACCESS: u8 = 6;

fn put_participant(e: &mut Encoder, p: &ParticipantRecord) {
    e.str(&p.id)
        .u8(match p.kind {
            ParticipantKind::Patient => 0,
            ParticipantKind::Doctor => 1,
        })
        .str(&p.first_name)
        .str(&p.last_name)
        .str(&p.role)
        .str(&p.organization)
        .str(&p.credential_id)
        .bool(p.blacklisted);
}

fn get_participant(d: &mut Decoder) -> Result<ParticipantRecord, CodecError> {
    let id = d.string()?;
    let at = d.position();
    let kind = match d.u8()? {
        0 => ParticipantKind::Patient,
        1 => ParticipantKind::Doctor,
        tag => return Err(CodecError::BadTag { what: "participant kind", tag, at }),
    };
    Ok(ParticipantRecord {
        id,
        kind,
        first_name: d.string()?,
        last_name: d.string()?,
        role: d.string()?,
        organization: d.string()?,
        credential_id: d.string()?,
        blacklisted: d.bool()?,
    })
}

fn put_asset(e: &mut Encoder, a: &EhrAsset) {
    e.str(&a.patient_id)
        .str(&a.capability_ref)
        .str(&a.digest_hex)
        .u32(a.assigned_doctor_ids.len() as u32);
    for d in &a.assigned_doctor_ids {
        e.str(d);
    }
}

fn get_asset(d: &mut Decoder) -> Result<EhrAsset, CodecError> {
    let patient_id = d.string()?;
    let capability_ref = d.string()?;
    let digest_hex = d.string()?;
    let n = d.u32()?;
    let mut assigned_doctor_ids = BTreeSet::new();
    for _ in 0..n {
        assigned_doctor_ids.insert(d.string()?);
    }
    Ok(EhrAsset {
        patient_id,
        capability_ref,
        digest_hex,
        assigned_doctor_ids,
    })
}

fn put_event(e: &mut Encoder, ev: &AccessEvent) {
    e.str(&ev.event_id)
        .u64(ev.timestamp)
        .str(&ev.requester_id)
        .str(&ev.target_patient_id)
        .u8(match ev.outcome {
            AccessOutcome::Granted => 1,
            AccessOutcome::Rejected => 0,
        })
        .str(&ev.detail);
}

fn get_event(d: &mut Decoder) -> Result<AccessEvent, CodecError> {
    let event_id = d.string()?;
    let timestamp = d.u64()?;
    let requester_id = d.string()?;
    let target_patient_id = d.string()?;
    let at = d.position();
    let outcome = match d.u8()? {
        1 => AccessOutcome::Granted,
        0 => AccessOutcome::Rejected,
        tag => return Err(CodecError::BadTag { what: "outcome", tag, at }),
    };
    Ok(AccessEvent {
        event_id,
        timestamp,
        requester_id,
        target_patient_id,
        outcome,
        detail: d.string()?,
    })
}

pub fn encode_records(records: &[ChainRecord]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u32(records.len() as u32);
    for r in records {
        match r {
            ChainRecord::Genesis { network } => {
                e.u8(TAG_GENESIS).str(network);
            }
            ChainRecord::ParticipantRegistered(p) => {
                e.u8(TAG_PARTICIPANT);
                put_participant(&mut e, p);
            }
            ChainRecord::DoctorAssigned {
                patient_id,
                doctor_id,
            } => {
                e.u8(TAG_ASSIGNMENT).str(patient_id).str(doctor_id);
            }
            ChainRecord::AssetStored { asset, created } => {
                e.u8(TAG_ASSET).bool(*created);
                put_asset(&mut e, asset);
            }
            ChainRecord::BlacklistSet {
                participant_id,
                flag,
            } => {
                e.u8(TAG_BLACKLIST).str(participant_id).bool(*flag);
            }
            ChainRecord::RulesInstalled { source } => {
                e.u8(TAG_RULES).str(source);
            }
            ChainRecord::Access(ev) => {
                e.u8(TAG_ACCESS);
                put_event(&mut e, ev);
            }
        }
    }
    e.finish()
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<ChainRecord>, CodecError> {
    let mut d = Decoder::new(bytes);
    let n = d.u32()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let at = d.position();
        let r = match d.u8()? {
            TAG_GENESIS => ChainRecord::Genesis {
                network: d.string()?,
            },
            TAG_PARTICIPANT => ChainRecord::ParticipantRegistered(get_participant(&mut d)?),
            TAG_ASSIGNMENT => ChainRecord::DoctorAssigned {
                patient_id: d.string()?,
                doctor_id: d.string()?,
            },
            TAG_ASSET => {
                let created = d.bool()?;
                ChainRecord::AssetStored {
                    asset: get_asset(&mut d)?,
                    created,
                }
            }
            TAG_BLACKLIST => ChainRecord::BlacklistSet {
                participant_id: d.string()?,
                flag: d.bool()?,
            },
            TAG_RULES => ChainRecord::RulesInstalled {
                source: d.string()?,
            },
            TAG_ACCESS => ChainRecord::Access(get_event(&mut d)?),
            tag => return Err(CodecError::BadTag { what: "record", tag, at }),
        };
        out.push(r);
    }
    d.finish()?;
    Ok(out)
}
