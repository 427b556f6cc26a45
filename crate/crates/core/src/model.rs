//! Participant and asset records shared by the ledger, its ACL and the edge node.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParticipantKind {
    Patient,
    Doctor,
}

impl ParticipantKind {
    pub fn name(self) -> &'static str {
        match self {
            ParticipantKind::Patient => "Patient",
            ParticipantKind::Doctor => "Doctor",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "Patient" => Some(ParticipantKind::Patient),
            "Doctor" => Some(ParticipantKind::Doctor),
            _ => None,
        }
    }
}

impl fmt::Display for ParticipantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantRecord {
    pub id: String,
    pub kind: ParticipantKind,
    pub first_name: String,
    pub last_name: String,
    pub role: String,
    pub organization: String,
    /// Opaque digital-ID card value presented at login.
    pub credential_id: String,
    #[serde(default)]
    pub blacklisted: bool,
}

impl ParticipantRecord {
    /// A record whose role attribute mirrors its kind.
    pub fn new(
        id: impl Into<String>,
        kind: ParticipantKind,
        first_name: impl Into<String>,
        last_name: impl Into<String>,
        organization: impl Into<String>,
        credential_id: impl Into<String>,
    ) -> Self {
        ParticipantRecord {
            id: id.into(),
            kind,
            first_name: first_name.into(),
            last_name: last_name.into(),
            role: kind.name().to_string(),
            organization: organization.into(),
            credential_id: credential_id.into(),
            blacklisted: false,
        }
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = role.into();
        self
    }
}

/// On-chain pairing of a patient with the edge-node copy of their record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EhrAsset {
    pub patient_id: String,
    /// Stable edge-node reference; not itself a one-time URL.
    pub capability_ref: String,
    pub digest_hex: String,
    pub assigned_doctor_ids: BTreeSet<String>,
}

/// What the ACL sees of an asset when deciding a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclObject {
    pub organization: String,
    pub patient_id: String,
    pub assigned_doctor_ids: BTreeSet<String>,
}

impl AclObject {
    pub fn new(organization: impl Into<String>, patient_id: impl Into<String>) -> Self {
        AclObject {
            organization: organization.into(),
            patient_id: patient_id.into(),
            assigned_doctor_ids: BTreeSet::new(),
        }
    }

    /// `<organization>.patient#<id>.data`
    pub fn path(&self) -> String {
        format!("{}.{}", self.organization, self.local_path())
    }

    pub fn local_path(&self) -> String {
        format!("patient#{}.data", self.patient_id)
    }
}
