//! Chain-side ACL: who may run which ledger operation on which asset.
//!
//! Rules are scanned in declaration order. The first rule whose subject,
//! operation and object all match decides, except that a conditional rule
//! whose condition is false (or cannot be evaluated) is skipped. If nothing
//! decides, the answer is DENY.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{self, AttrRef, CondExpr, Effect, ParseError, RuleBlock, Selector, Value};
use crate::model::{AclObject, ParticipantKind, ParticipantRecord};
use crate::pdp::eval_condition_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verb {
    Read,
    Write,
    Update,
}

impl Verb {
    pub const ALL: [Verb; 3] = [Verb::Read, Verb::Write, Verb::Update];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Read => "READ",
            Verb::Write => "WRITE",
            Verb::Update => "UPDATE",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The operation named by a rule. Unrecognised verbs are kept so that
/// validation can report them; they never match a request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleOperation {
    Verb(Verb),
    Unknown(String),
}

impl fmt::Display for RuleOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleOperation::Verb(v) => write!(f, "{v}"),
            RuleOperation::Unknown(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AclAction {
    Allow,
    Deny,
}

impl From<Effect> for AclAction {
    fn from(e: Effect) -> Self {
        match e {
            Effect::Permit => AclAction::Allow,
            Effect::Deny => AclAction::Deny,
        }
    }
}

impl From<AclAction> for Effect {
    fn from(a: AclAction) -> Self {
        match a {
            AclAction::Allow => Effect::Permit,
            AclAction::Deny => Effect::Deny,
        }
    }
}

impl fmt::Display for AclAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AclAction::Allow => "ALLOW",
            AclAction::Deny => "DENY",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    NonConditional,
    Conditional,
}

/// `[Org.]Class` where class is a participant kind, or `ANY`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubjectSelector {
    pub organization: Option<String>,
    pub kind: Option<ParticipantKind>,
}

impl SubjectSelector {
    pub fn parse(pattern: &str) -> Result<Self, String> {
        let (org, class) = lang::ast::split_subject_pattern(pattern)
            .ok_or_else(|| format!("malformed subject selector {pattern:?}"))?;
        let kind = match class {
            None | Some("Participant") => None,
            Some(c) => Some(
                ParticipantKind::from_name(c)
                    .ok_or_else(|| format!("unknown participant class {c:?}"))?,
            ),
        };
        Ok(SubjectSelector {
            organization: org.map(str::to_string),
            kind,
        })
    }

    pub fn matches(&self, p: &ParticipantRecord) -> bool {
        self.kind.is_none_or(|k| k == p.kind)
            && self.organization.as_ref().is_none_or(|o| *o == p.organization)
    }

    fn covers(&self, other: &SubjectSelector) -> bool {
        (self.kind.is_none() || self.kind == other.kind)
            && (self.organization.is_none() || self.organization == other.organization)
    }
}

impl fmt::Display for SubjectSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let class = self.kind.map(ParticipantKind::name);
        match (&self.organization, class) {
            (None, None) => f.write_str("ANY"),
            (None, Some(c)) => f.write_str(c),
            (Some(o), None) => write!(f, "{o}.ANY"),
            (Some(o), Some(c)) => write!(f, "{o}.{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ObjectPattern {
    Any,
    /// Every EHR asset.
    EhrAsset,
    /// Glob over `<org>.patient#<id>.data`; `*` matches within one segment.
    /// A pattern without the organization prefix matches any organization.
    Path(String),
}

/// One asset or a union of assets, e.g. `"Christiana.patient#1.data | Christiana.patient#2.data"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectSelector {
    pub alternatives: Vec<ObjectPattern>,
}

impl ObjectSelector {
    pub fn parse(pattern: &str) -> Result<Self, String> {
        let alternatives = pattern
            .split('|')
            .map(|alt| match alt.trim() {
                "" => Err(format!("empty alternative in object selector {pattern:?}")),
                "ANY" => Ok(ObjectPattern::Any),
                "EhrAsset" => Ok(ObjectPattern::EhrAsset),
                p if p.chars().any(char::is_whitespace) => {
                    Err(format!("whitespace in object selector {p:?}"))
                }
                p => Ok(ObjectPattern::Path(p.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ObjectSelector { alternatives })
    }

    pub fn matches(&self, object: &AclObject) -> bool {
        let (full, local) = (object.path(), object.local_path());
        self.alternatives.iter().any(|alt| match alt {
            ObjectPattern::Any | ObjectPattern::EhrAsset => true,
            ObjectPattern::Path(p) => glob(p, &full) || glob(p, &local),
        })
    }

    fn covers(&self, other: &ObjectSelector) -> bool {
        if self
            .alternatives
            .iter()
            .any(|a| matches!(a, ObjectPattern::Any | ObjectPattern::EhrAsset))
        {
            return true;
        }
        other.alternatives.iter().all(|a| self.alternatives.contains(a))
    }
}

impl fmt::Display for ObjectSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .alternatives
            .iter()
            .map(|a| match a {
                ObjectPattern::Any => "ANY",
                ObjectPattern::EhrAsset => "EhrAsset",
                ObjectPattern::Path(p) => p.as_str(),
            })
            .collect();
        f.write_str(&parts.join(" | "))
    }
}

fn glob(pattern: &str, text: &str) -> bool {
    fn go(p: &[u8], t: &[u8]) -> bool {
        match p.split_first() {
            None => t.is_empty(),
            Some((b'*', rest)) => {
                let mut i = 0;
                loop {
                    if go(rest, &t[i..]) {
                        return true;
                    }
                    if i == t.len() || t[i] == b'.' {
                        return false;
                    }
                    i += 1;
                }
            }
            Some((c, rest)) => t.first() == Some(c) && go(rest, &t[1..]),
        }
    }
    go(pattern.as_bytes(), text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclRule {
    pub id: String,
    pub description: String,
    pub subject: SubjectSelector,
    pub subject_binding: Option<String>,
    pub operation: RuleOperation,
    pub object: ObjectSelector,
    pub object_binding: Option<String>,
    pub condition: Option<CondExpr>,
    pub action: AclAction,
}

impl AclRule {
    pub fn kind(&self) -> RuleKind {
        if self.condition.is_some() {
            RuleKind::Conditional
        } else {
            RuleKind::NonConditional
        }
    }

    pub fn from_block(block: &RuleBlock) -> Result<Self, AclError> {
        let bad = |message: String| AclError::Selector {
            rule: block.id.clone(),
            line: block.line,
            column: block.column,
            message,
        };
        let operation = match Verb::from_name(&block.operation) {
            Some(v) => RuleOperation::Verb(v),
            None => RuleOperation::Unknown(block.operation.clone()),
        };
        Ok(AclRule {
            id: block.id.clone(),
            description: block.description.clone(),
            subject: SubjectSelector::parse(&block.subject.pattern).map_err(bad)?,
            subject_binding: block.subject.binding.clone(),
            operation,
            object: ObjectSelector::parse(&block.object.pattern).map_err(bad)?,
            object_binding: block.object.binding.clone(),
            condition: block.condition.clone(),
            action: block.action.into(),
        })
    }

    pub fn to_block(&self) -> RuleBlock {
        RuleBlock {
            id: self.id.clone(),
            description: self.description.clone(),
            subject: Selector {
                pattern: self.subject.to_string(),
                binding: self.subject_binding.clone(),
            },
            operation: self.operation.to_string(),
            object: Selector {
                pattern: self.object.to_string(),
                binding: self.object_binding.clone(),
            },
            condition: self.condition.clone(),
            action: self.action.into(),
            line: 0,
            column: 0,
        }
    }

    fn selectors_match(&self, p: &ParticipantRecord, verb: Verb, object: &AclObject) -> bool {
        self.operation == RuleOperation::Verb(verb) && self.subject.matches(p) && self.object.matches(object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AclError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{line}:{column}: rule {rule}: {message}")]
    Selector {
        rule: String,
        line: u32,
        column: u32,
        message: String,
    },
}

/// Parses a rule file into ACL rules. Unknown verbs are accepted here and
/// reported by [`validate_rules`].
pub fn parse_rules(source: &str) -> Result<Vec<AclRule>, AclError> {
    lang::parse_rule_blocks(source)?
        .iter()
        .map(AclRule::from_block)
        .collect()
}

pub fn rules_to_source(rules: &[AclRule]) -> String {
    let blocks: Vec<RuleBlock> = rules.iter().map(AclRule::to_block).collect();
    lang::serialize_rule_blocks(&blocks)
}

/// Attributes a bound participant exposes to conditions.
pub fn participant_attribute(p: &ParticipantRecord, name: &str) -> Option<Value> {
    Some(Value::from(match name {
        "id" => p.id.as_str(),
        "kind" => p.kind.name(),
        "firstName" => p.first_name.as_str(),
        "lastName" => p.last_name.as_str(),
        "role" => p.role.as_str(),
        "organization" => p.organization.as_str(),
        _ => return None,
    }))
}

/// Attributes a bound asset exposes to conditions. `assignedToRequester` is
/// the doctor-patient relation evaluated against the requesting participant.
pub fn object_attribute(o: &AclObject, requester: &ParticipantRecord, name: &str) -> Option<Value> {
    Some(match name {
        "patientId" => Value::from(o.patient_id.as_str()),
        "organization" => Value::from(o.organization.as_str()),
        "path" => Value::from(o.path()),
        "assignedToRequester" => Value::Bool(o.assigned_doctor_ids.contains(&requester.id)),
        _ => return None,
    })
}

fn condition_holds(rule: &AclRule, p: &ParticipantRecord, object: &AclObject, cond: &CondExpr) -> bool {
    let source = |a: &AttrRef| {
        if rule.subject_binding.as_deref() == Some(a.category.as_str()) {
            participant_attribute(p, &a.name)
        } else if rule.object_binding.as_deref() == Some(a.category.as_str()) {
            object_attribute(object, p, &a.name)
        } else {
            None
        }
    };
    // Evaluation errors count as a non-match.
    eval_condition_with(cond, &source).unwrap_or(false)
}

/// Decides whether `participant` may perform `verb` on `object`.
pub fn check(participant: &ParticipantRecord, verb: Verb, object: &AclObject, rules: &[AclRule]) -> AclAction {
    decide(participant, verb, object, rules).map_or(AclAction::Deny, |r| r.action)
}

/// The rule that decides the request, or `None` when the default DENY applies.
pub fn decide<'a>(
    participant: &ParticipantRecord,
    verb: Verb,
    object: &AclObject,
    rules: &'a [AclRule],
) -> Option<&'a AclRule> {
    rules.iter().find(|rule| {
        rule.selectors_match(participant, verb, object)
            && rule
                .condition
                .as_ref()
                .is_none_or(|c| condition_holds(rule, participant, object, c))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticKind {
    DuplicateId,
    /// Shadowed by the rule at this 1-based position.
    Unreachable { shadowed_by: usize },
    UnknownVerb(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based position in the rule list.
    pub position: usize,
    pub rule_id: String,
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {} ({}): ", self.position, self.rule_id)?;
        match &self.kind {
            DiagnosticKind::DuplicateId => f.write_str("duplicate rule id"),
            DiagnosticKind::Unreachable { shadowed_by } => {
                write!(f, "unreachable, shadowed by rule {shadowed_by}")
            }
            DiagnosticKind::UnknownVerb(v) => {
                write!(f, "unknown verb {v:?} (expected READ, WRITE or UPDATE)")
            }
        }
    }
}

/// Reports duplicate ids, unknown verbs and rules that an earlier rule
/// always pre-empts.
pub fn validate_rules(rules: &[AclRule]) -> Result<(), Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, rule) in rules.iter().enumerate() {
        let position = i + 1;
        let diag = |kind| Diagnostic {
            position,
            rule_id: rule.id.clone(),
            kind,
        };
        if !ids.insert(rule.id.as_str()) {
            out.push(diag(DiagnosticKind::DuplicateId));
        }
        if let RuleOperation::Unknown(v) = &rule.operation {
            out.push(diag(DiagnosticKind::UnknownVerb(v.clone())));
            continue;
        }
        // An earlier rule with covering selectors pre-empts this one when it
        // is unconditional or carries the very same condition.
        let shadow = rules[..i].iter().position(|earlier| {
            earlier.operation == rule.operation
                && earlier.subject.covers(&rule.subject)
                && earlier.object.covers(&rule.object)
                && (earlier.condition.is_none()
                    || (earlier.condition == rule.condition
                        && earlier.subject_binding == rule.subject_binding
                        && earlier.object_binding == rule.object_binding))
        });
        if let Some(j) = shadow {
            out.push(diag(DiagnosticKind::Unreachable { shadowed_by: j + 1 }));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Rules installed on a fresh ledger: doctors read their assigned patients'
/// records, patients read and update only their own.
pub const DEFAULT_RULES: &str = r#"rule DoctorReadsAssignedPatient {
  description: "A doctor may retrieve the EHR address of an assigned patient"
  subject(v): "Doctor"
  operation: READ
  object(t): "EhrAsset"
  condition: "t.assignedToRequester == true"
  action: ALLOW
}
rule PatientReadsOwnRecord {
  description: "A patient may retrieve only their own EHR address"
  subject(v): "Patient"
  operation: READ
  object(t): "EhrAsset"
  condition: "v.id == t.patientId"
  action: ALLOW
}
rule PatientUpdatesOwnRecord {
  description: "A patient may replace the EHR address of their own record"
  subject(v): "Patient"
  operation: UPDATE
  object(t): "EhrAsset"
  condition: "v.id == t.patientId"
  action: ALLOW
}
"#;

pub fn default_rules() -> Vec<AclRule> {
    parse_rules(DEFAULT_RULES).expect("built-in rules parse")
}
