//! XACML-style policy decision point.
//!
//! The enforcement point builds an [`AccessRequest`], the decision point
//! evaluates it against a [`PolicyDocument`], consulting an
//! [`AttributeResolver`] (information point) for attributes the request does
//! not carry. Documents are administered through a [`PolicyStore`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::lang::{AttrRef, CombiningAlgorithm, CondExpr, Effect, Obligation, PolicyDocument, RuleDef, TargetExpr, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Subject,
    Resource,
    Action,
    Environment,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Subject,
        Category::Resource,
        Category::Action,
        Category::Environment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Subject => "subject",
            Category::Resource => "resource",
            Category::Action => "action",
            Category::Environment => "environment",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Single-valued attributes of one category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeBag {
    pub category: Category,
    pub entries: BTreeMap<String, Value>,
}

impl AttributeBag {
    pub fn new(category: Category) -> Self {
        AttributeBag {
            category,
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.entries.insert(name.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, name: &str, value: impl Into<Value>) {
        self.entries.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.entries.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub subject: AttributeBag,
    pub resource: AttributeBag,
    pub action: AttributeBag,
    pub environment: AttributeBag,
}

impl Default for AccessRequest {
    fn default() -> Self {
        AccessRequest {
            subject: AttributeBag::new(Category::Subject),
            resource: AttributeBag::new(Category::Resource),
            action: AttributeBag::new(Category::Action),
            environment: AttributeBag::new(Category::Environment),
        }
    }
}

impl AccessRequest {
    pub fn bag(&self, category: Category) -> &AttributeBag {
        match category {
            Category::Subject => &self.subject,
            Category::Resource => &self.resource,
            Category::Action => &self.action,
            Category::Environment => &self.environment,
        }
    }

    pub fn bag_mut(&mut self, category: Category) -> &mut AttributeBag {
        match category {
            Category::Subject => &mut self.subject,
            Category::Resource => &mut self.resource,
            Category::Action => &mut self.action,
            Category::Environment => &mut self.environment,
        }
    }

    pub fn with(mut self, category: Category, name: &str, value: impl Into<Value>) -> Self {
        self.bag_mut(category).insert(name, value);
        self
    }
}

/// Information point: supplies attributes missing from the request.
pub trait AttributeResolver {
    fn lookup(&self, category: Category, name: &str) -> Option<Value>;
}

/// Resolver that never finds anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoResolver;

impl AttributeResolver for NoResolver {
    fn lookup(&self, _: Category, _: &str) -> Option<Value> {
        None
    }
}

impl AttributeResolver for HashMap<(Category, String), Value> {
    fn lookup(&self, category: Category, name: &str) -> Option<Value> {
        self.get(&(category, name.to_string())).cloned()
    }
}

impl<F> AttributeResolver for F
where
    F: Fn(Category, &str) -> Option<Value>,
{
    fn lookup(&self, category: Category, name: &str) -> Option<Value> {
        self(category, name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionValue {
    Permit,
    Deny,
    NotApplicable,
    Indeterminate,
}

impl DecisionValue {
    pub const ALL: [DecisionValue; 4] = [
        DecisionValue::Permit,
        DecisionValue::Deny,
        DecisionValue::NotApplicable,
        DecisionValue::Indeterminate,
    ];
}

impl From<Effect> for DecisionValue {
    fn from(e: Effect) -> Self {
        match e {
            Effect::Permit => DecisionValue::Permit,
            Effect::Deny => DecisionValue::Deny,
        }
    }
}

impl fmt::Display for DecisionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub value: DecisionValue,
    /// Only populated for Permit and Deny.
    pub obligations: Vec<Obligation>,
    /// Diagnostic for Indeterminate results.
    pub reason: Option<String>,
}

impl Decision {
    pub fn of(value: DecisionValue) -> Self {
        Decision {
            value,
            obligations: Vec::new(),
            reason: None,
        }
    }

    pub fn indeterminate(reason: impl Into<String>) -> Self {
        Decision {
            value: DecisionValue::Indeterminate,
            obligations: Vec::new(),
            reason: Some(reason.into()),
        }
    }

    pub fn is_permit(&self) -> bool {
        self.value == DecisionValue::Permit
    }
}

/// Why a condition could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("attribute {0} could not be resolved")]
    Missing(AttrRef),
    #[error("type mismatch: {0}")]
    Type(String),
}

/// Attribute lookup as seen by the evaluator.
pub trait AttributeSource {
    fn resolve(&self, attr: &AttrRef) -> Option<Value>;
}

/// Request bags first, then the information point; first hit wins.
struct RequestSource<'a, R: ?Sized> {
    request: &'a AccessRequest,
    pip: &'a R,
}

impl<R: AttributeResolver + ?Sized> AttributeSource for RequestSource<'_, R> {
    fn resolve(&self, attr: &AttrRef) -> Option<Value> {
        let category = Category::from_name(&attr.category)?;
        self.request
            .bag(category)
            .get(&attr.name)
            .cloned()
            .or_else(|| self.pip.lookup(category, &attr.name))
    }
}

impl<F> AttributeSource for F
where
    F: Fn(&AttrRef) -> Option<Value>,
{
    fn resolve(&self, attr: &AttrRef) -> Option<Value> {
        self(attr)
    }
}

fn eval_value(expr: &CondExpr, src: &dyn AttributeSource) -> Result<Value, EvalError> {
    match expr {
        CondExpr::Lit(v) => Ok(v.clone()),
        CondExpr::Attr(a) => src.resolve(a).ok_or_else(|| EvalError::Missing(a.clone())),
        CondExpr::Eq(a, b) | CondExpr::Ne(a, b) => {
            let (x, y) = (eval_value(a, src)?, eval_value(b, src)?);
            if x.kind() != y.kind() {
                return Err(EvalError::Type(format!(
                    "cannot compare {} with {}",
                    x.kind(),
                    y.kind()
                )));
            }
            Ok(Value::Bool((x == y) == matches!(expr, CondExpr::Eq(..))))
        }
        CondExpr::And(a, b) => {
            if !eval_bool(a, src)? {
                return Ok(Value::Bool(false));
            }
            eval_bool(b, src).map(Value::Bool)
        }
        CondExpr::Or(a, b) => {
            if eval_bool(a, src)? {
                return Ok(Value::Bool(true));
            }
            eval_bool(b, src).map(Value::Bool)
        }
        CondExpr::Not(a) => eval_bool(a, src).map(|b| Value::Bool(!b)),
        CondExpr::If {
            cond,
            then,
            otherwise,
        } => {
            if eval_bool(cond, src)? {
                eval_value(then, src)
            } else {
                eval_value(otherwise, src)
            }
        }
    }
}

fn eval_bool(expr: &CondExpr, src: &dyn AttributeSource) -> Result<bool, EvalError> {
    match eval_value(expr, src)? {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::Type(format!(
            "expected boolean, found {}",
            other.kind()
        ))),
    }
}

/// Evaluates a condition with left-to-right short-circuit semantics over an
/// arbitrary attribute source.
pub fn eval_condition_with(expr: &CondExpr, src: &dyn AttributeSource) -> Result<bool, EvalError> {
    eval_bool(expr, src)
}

pub fn eval_condition(
    expr: &CondExpr,
    request: &AccessRequest,
    pip: &dyn AttributeResolver,
) -> Result<bool, EvalError> {
    eval_bool(expr, &RequestSource { request, pip })
}

enum TargetMatch {
    Match,
    NoMatch,
    Error(String),
}

// An absent attribute is a non-match; a present attribute of another kind
// is an error.
fn match_target(target: &TargetExpr, src: &dyn AttributeSource) -> TargetMatch {
    for clause in &target.clauses {
        match src.resolve(&clause.attr) {
            None => return TargetMatch::NoMatch,
            Some(v) if v.kind() != clause.value.kind() => {
                return TargetMatch::Error(format!(
                    "target {} expects {}, found {}",
                    clause.attr,
                    clause.value.kind(),
                    v.kind()
                ))
            }
            Some(v) if v != clause.value => return TargetMatch::NoMatch,
            Some(_) => {}
        }
    }
    TargetMatch::Match
}

fn rule_decision(rule: &RuleDef, src: &dyn AttributeSource) -> Decision {
    match match_target(&rule.target, src) {
        TargetMatch::NoMatch => return Decision::of(DecisionValue::NotApplicable),
        TargetMatch::Error(e) => return Decision::indeterminate(format!("rule {}: {e}", rule.id)),
        TargetMatch::Match => {}
    }
    match &rule.condition {
        None => Decision::of(rule.effect.into()),
        Some(c) => match eval_bool(c, src) {
            Ok(true) => Decision::of(rule.effect.into()),
            Ok(false) => Decision::of(DecisionValue::NotApplicable),
            Err(e) => Decision::indeterminate(format!("rule {}: {e}", rule.id)),
        },
    }
}

pub fn evaluate_rule(rule: &RuleDef, request: &AccessRequest, pip: &dyn AttributeResolver) -> Decision {
    rule_decision(rule, &RequestSource { request, pip })
}

/// Merges rule decisions. An empty list is NotApplicable under every algorithm.
pub fn combine(decisions: &[Decision], algorithm: CombiningAlgorithm) -> Decision {
    use DecisionValue::*;
    let find = |v: DecisionValue| decisions.iter().find(|d| d.value == v);
    let picked = match algorithm {
        CombiningAlgorithm::DenyOverrides => find(Deny).or_else(|| find(Indeterminate)).or_else(|| find(Permit)),
        CombiningAlgorithm::PermitOverrides => find(Permit).or_else(|| find(Indeterminate)).or_else(|| find(Deny)),
        CombiningAlgorithm::FirstApplicable => decisions.iter().find(|d| d.value != NotApplicable),
    };
    match picked {
        Some(d) => Decision {
            value: d.value,
            obligations: Vec::new(),
            reason: d.reason.clone(),
        },
        None => Decision::of(NotApplicable),
    }
}

pub fn evaluate(request: &AccessRequest, doc: &PolicyDocument, pip: &dyn AttributeResolver) -> Decision {
    let src = RequestSource { request, pip };
    match match_target(&doc.target, &src) {
        TargetMatch::NoMatch => return Decision::of(DecisionValue::NotApplicable),
        TargetMatch::Error(e) => return Decision::indeterminate(format!("policy {}: {e}", doc.id)),
        TargetMatch::Match => {}
    }

    let decisions: Vec<Decision> = match doc.combining {
        // Later rules are never consulted once one applies.
        CombiningAlgorithm::FirstApplicable => {
            let mut out = Vec::new();
            for rule in &doc.rules {
                let d = rule_decision(rule, &src);
                let applicable = d.value != DecisionValue::NotApplicable;
                out.push(d);
                if applicable {
                    break;
                }
            }
            out
        }
        _ => doc.rules.iter().map(|r| rule_decision(r, &src)).collect(),
    };

    let mut decision = combine(&decisions, doc.combining);
    let effect = match decision.value {
        DecisionValue::Permit => Some(Effect::Permit),
        DecisionValue::Deny => Some(Effect::Deny),
        _ => None,
    };
    if let Some(effect) = effect {
        decision.obligations = doc
            .obligations
            .iter()
            .filter(|o| o.fulfill_on == effect)
            .cloned()
            .collect();
    }
    decision
}

/// Administration point: the set of installed documents.
///
/// Documents are held behind `Arc` so a reader keeps the version it looked up
/// even if it is replaced mid-evaluation.
#[derive(Debug, Default)]
pub struct PolicyStore {
    docs: RwLock<HashMap<String, Arc<PolicyDocument>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyStoreError {
    #[error("policy {0} is already installed")]
    Exists(String),
    #[error("policy {0} is not installed")]
    Missing(String),
}

impl PolicyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn install(&self, key: &str, doc: PolicyDocument) -> Result<(), PolicyStoreError> {
        let mut docs = self.docs.write();
        if docs.contains_key(key) {
            return Err(PolicyStoreError::Exists(key.to_string()));
        }
        docs.insert(key.to_string(), Arc::new(doc));
        Ok(())
    }

    pub fn replace(&self, key: &str, doc: PolicyDocument) -> Result<Arc<PolicyDocument>, PolicyStoreError> {
        let mut docs = self.docs.write();
        match docs.get_mut(key) {
            Some(slot) => Ok(std::mem::replace(slot, Arc::new(doc))),
            None => Err(PolicyStoreError::Missing(key.to_string())),
        }
    }

    pub fn remove(&self, key: &str) -> Result<Arc<PolicyDocument>, PolicyStoreError> {
        self.docs
            .write()
            .remove(key)
            .ok_or_else(|| PolicyStoreError::Missing(key.to_string()))
    }

    pub fn get(&self, key: &str) -> Option<Arc<PolicyDocument>> {
        self.docs.read().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.docs.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
