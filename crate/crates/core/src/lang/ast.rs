use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Literal attribute value. Only strings, integers and booleans exist.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
            Value::Str(_) => ValueKind::Str,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Bool,
    Int,
    Str,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Bool => "boolean",
            ValueKind::Int => "integer",
            ValueKind::Str => "string",
        })
    }
}

/// `<category>.<name>`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttrRef {
    pub category: String,
    pub name: String,
}

impl AttrRef {
    pub fn new(category: impl Into<String>, name: impl Into<String>) -> Self {
        AttrRef {
            category: category.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.category, self.name)
    }
}

/// Condition expression tree. Binary nodes keep source operand order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CondExpr {
    Lit(Value),
    Attr(AttrRef),
    Eq(Box<CondExpr>, Box<CondExpr>),
    Ne(Box<CondExpr>, Box<CondExpr>),
    And(Box<CondExpr>, Box<CondExpr>),
    Or(Box<CondExpr>, Box<CondExpr>),
    Not(Box<CondExpr>),
    If {
        cond: Box<CondExpr>,
        then: Box<CondExpr>,
        otherwise: Box<CondExpr>,
    },
}

impl CondExpr {
    pub fn attr(category: &str, name: &str) -> Self {
        CondExpr::Attr(AttrRef::new(category, name))
    }

    pub fn lit(v: impl Into<Value>) -> Self {
        CondExpr::Lit(v.into())
    }

    pub fn eq(a: CondExpr, b: CondExpr) -> Self {
        CondExpr::Eq(Box::new(a), Box::new(b))
    }

    pub fn ne(a: CondExpr, b: CondExpr) -> Self {
        CondExpr::Ne(Box::new(a), Box::new(b))
    }

    pub fn and(a: CondExpr, b: CondExpr) -> Self {
        CondExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: CondExpr, b: CondExpr) -> Self {
        CondExpr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: CondExpr) -> Self {
        CondExpr::Not(Box::new(a))
    }

    pub fn if_then_else(cond: CondExpr, then: CondExpr, otherwise: CondExpr) -> Self {
        CondExpr::If {
            cond: Box::new(cond),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        }
    }

    /// Visits every attribute reference, left to right.
    pub fn for_each_attr<'a>(&'a self, f: &mut impl FnMut(&'a AttrRef)) {
        match self {
            CondExpr::Lit(_) => {}
            CondExpr::Attr(a) => f(a),
            CondExpr::Eq(a, b) | CondExpr::Ne(a, b) | CondExpr::And(a, b) | CondExpr::Or(a, b) => {
                a.for_each_attr(f);
                b.for_each_attr(f);
            }
            CondExpr::Not(a) => a.for_each_attr(f),
            CondExpr::If {
                cond,
                then,
                otherwise,
            } => {
                cond.for_each_attr(f);
                then.for_each_attr(f);
                otherwise.for_each_attr(f);
            }
        }
    }

    /// Rewrites attribute categories through `rename`; unmapped categories are kept.
    pub fn rename_categories(&mut self, rename: &impl Fn(&str) -> Option<String>) {
        match self {
            CondExpr::Lit(_) => {}
            CondExpr::Attr(a) => {
                if let Some(c) = rename(&a.category) {
                    a.category = c;
                }
            }
            CondExpr::Eq(a, b) | CondExpr::Ne(a, b) | CondExpr::And(a, b) | CondExpr::Or(a, b) => {
                a.rename_categories(rename);
                b.rename_categories(rename);
            }
            CondExpr::Not(a) => a.rename_categories(rename),
            CondExpr::If {
                cond,
                then,
                otherwise,
            } => {
                cond.rename_categories(rename);
                then.rename_categories(rename);
                otherwise.rename_categories(rename);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrMatch {
    pub attr: AttrRef,
    pub value: Value,
}

/// Conjunction of equality matches. Empty matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TargetExpr {
    pub clauses: Vec<AttrMatch>,
}

impl TargetExpr {
    pub fn any() -> Self {
        TargetExpr::default()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn with(mut self, category: &str, name: &str, value: impl Into<Value>) -> Self {
        self.clauses.push(AttrMatch {
            attr: AttrRef::new(category, name),
            value: value.into(),
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Permit,
    Deny,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Permit => "permit",
            Effect::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CombiningAlgorithm {
    /// Fail-closed default when a policy names none.
    #[default]
    DenyOverrides,
    PermitOverrides,
    FirstApplicable,
}

impl CombiningAlgorithm {
    pub const ALL: [CombiningAlgorithm; 3] = [
        CombiningAlgorithm::DenyOverrides,
        CombiningAlgorithm::PermitOverrides,
        CombiningAlgorithm::FirstApplicable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CombiningAlgorithm::DenyOverrides => "deny-overrides",
            CombiningAlgorithm::PermitOverrides => "permit-overrides",
            CombiningAlgorithm::FirstApplicable => "first-applicable",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDef {
    pub id: String,
    pub effect: Effect,
    pub target: TargetExpr,
    pub condition: Option<CondExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub id: String,
    pub fulfill_on: Effect,
    pub parameters: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDocument {
    pub id: String,
    pub target: TargetExpr,
    pub combining: CombiningAlgorithm,
    pub rules: Vec<RuleDef>,
    pub obligations: Vec<Obligation>,
}

impl PolicyDocument {
    pub fn new(id: impl Into<String>, combining: CombiningAlgorithm) -> Self {
        PolicyDocument {
            id: id.into(),
            target: TargetExpr::any(),
            combining,
            rules: Vec::new(),
            obligations: Vec::new(),
        }
    }
}

/// `subject(v): "Christiana.Doctor"` style selector with its optional binding variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    pub pattern: String,
    pub binding: Option<String>,
}

/// One chain-side ACL rule in its source layout, before verb and selector
/// validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleBlock {
    pub id: String,
    pub description: String,
    pub subject: Selector,
    pub operation: String,
    pub object: Selector,
    pub condition: Option<CondExpr>,
    pub action: Effect,
    pub line: u32,
    pub column: u32,
}

/// The four request categories a policy document may reference.
pub const CATEGORIES: [&str; 4] = ["subject", "resource", "action", "environment"];

impl RuleBlock {
    /// Lowers the ACL layout onto the policy model: binding variables become
    /// `subject`/`resource` references, the subject selector and operation
    /// become target matches. The object selector stays a chain-side concern.
    pub fn to_rule_def(&self) -> RuleDef {
        let mut target = TargetExpr::any();
        if let Some((org, class)) = split_subject_pattern(&self.subject.pattern) {
            if let Some(org) = org {
                target = target.with("subject", "organization", org);
            }
            if let Some(class) = class {
                target = target.with("subject", "role", class);
            }
        }
        target = target.with("action", "id", self.operation.as_str());

        let condition = self.condition.clone().map(|mut c| {
            let subject_var = self.subject.binding.clone();
            let object_var = self.object.binding.clone();
            c.rename_categories(&|cat| {
                if subject_var.as_deref() == Some(cat) {
                    Some("subject".to_string())
                } else if object_var.as_deref() == Some(cat) {
                    Some("resource".to_string())
                } else {
                    None
                }
            });
            c
        });

        RuleDef {
            id: self.id.clone(),
            effect: self.action,
            target,
            condition,
        }
    }
}

/// Splits `Org.Class`, `Class` or `ANY` into optional organization and class.
/// Returns `None` for malformed patterns.
pub fn split_subject_pattern(pattern: &str) -> Option<(Option<&str>, Option<&str>)> {
    let pattern = pattern.trim();
    if pattern.is_empty() {
        return None;
    }
    if pattern == "ANY" {
        return Some((None, None));
    }
    match pattern.split_once('.') {
        None => Some((None, Some(pattern))),
        Some((org, class)) if !org.is_empty() && !class.is_empty() && !class.contains('.') => {
            Some((Some(org), (class != "ANY").then_some(class)))
        }
        Some(_) => None,
    }
}
