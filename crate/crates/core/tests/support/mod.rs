//! Test-side models and reference interpreters.
//!
//! Nothing here calls into the library's evaluator, printer or matcher. Each
//! model is rendered to source text on its own and evaluated by its own
//! tree-walker, so agreement with the library is meaningful.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;

// ---------------------------------------------------------------- values

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OVal {
    B(bool),
    I(i64),
    S(String),
}

impl OVal {
    fn kind(&self) -> u8 {
        match self {
            OVal::B(_) => 0,
            OVal::I(_) => 1,
            OVal::S(_) => 2,
        }
    }

    pub fn render(&self) -> String {
        match self {
            OVal::B(b) => if *b { "true" } else { "false" }.to_string(),
            OVal::I(i) => i.to_string(),
            OVal::S(s) => {
                let mut out = String::from("\"");
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        '\r' => out.push_str("\\r"),
                        c => out.push(c),
                    }
                }
                out.push('"');
                out
            }
        }
    }
}

pub fn arb_val_of(kind: u8) -> BoxedStrategy<OVal> {
    match kind {
        0 => any::<bool>().prop_map(OVal::B).boxed(),
        1 => (-2i64..3).prop_map(OVal::I).boxed(),
        _ => prop::sample::select(vec!["Doctor", "Nurse", "Christiana", "a \"q\"\\n"])
            .prop_map(|s| OVal::S(s.to_string()))
            .boxed(),
    }
}

pub fn arb_val() -> BoxedStrategy<OVal> {
    (0u8..3).prop_flat_map(arb_val_of).boxed()
}

// ----------------------------------------------------------- expressions

/// The attribute universe: at most four attributes across categories.
pub const ATTRS: [(&str, &str); 4] = [
    ("subject", "role"),
    ("subject", "level"),
    ("resource", "owner"),
    ("environment", "flag"),
];

/// The usual kind of each attribute (0 bool, 1 int, 2 string). Generated
/// values stray from it now and then to exercise kind errors.
pub const HOME: [u8; 4] = [2, 1, 2, 0];

/// A universe of three boolean attributes.
pub const BOOLS: [u8; 3] = [0, 0, 0];

fn arb_home_val(i: usize) -> BoxedStrategy<OVal> {
    prop_oneof![9 => arb_val_of(HOME[i]), 1 => arb_val()].boxed()
}

fn arb_attr_of(kind: u8, kinds: &'static [u8]) -> BoxedStrategy<usize> {
    let homed: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == kind).collect();
    if homed.is_empty() {
        return (0..kinds.len()).boxed();
    }
    prop_oneof![9 => prop::sample::select(homed), 1 => 0..kinds.len()].boxed()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OExpr {
    Lit(OVal),
    Attr(usize),
    Eq(Box<OExpr>, Box<OExpr>),
    Ne(Box<OExpr>, Box<OExpr>),
    And(Box<OExpr>, Box<OExpr>),
    Or(Box<OExpr>, Box<OExpr>),
    Not(Box<OExpr>),
    If(Box<OExpr>, Box<OExpr>, Box<OExpr>),
}

impl OExpr {
    pub fn depth(&self) -> usize {
        match self {
            OExpr::Lit(_) | OExpr::Attr(_) => 0,
            OExpr::Not(a) => 1 + a.depth(),
            OExpr::Eq(a, b) | OExpr::Ne(a, b) | OExpr::And(a, b) | OExpr::Or(a, b) => {
                1 + a.depth().max(b.depth())
            }
            OExpr::If(c, t, e) => 1 + c.depth().max(t.depth()).max(e.depth()),
        }
    }

    /// Fully parenthesised source text.
    pub fn render_with(&self, names: &dyn Fn(usize) -> String) -> String {
        match self {
            OExpr::Lit(v) => v.render(),
            OExpr::Attr(i) => names(*i),
            OExpr::Eq(a, b) => format!("({} == {})", a.render_with(names), b.render_with(names)),
            OExpr::Ne(a, b) => format!("({} != {})", a.render_with(names), b.render_with(names)),
            OExpr::And(a, b) => format!("({} && {})", a.render_with(names), b.render_with(names)),
            OExpr::Or(a, b) => format!("({} || {})", a.render_with(names), b.render_with(names)),
            OExpr::Not(a) => format!("!({})", a.render_with(names)),
            OExpr::If(c, t, e) => format!(
                "(if ({}) then ({}) else ({}))",
                c.render_with(names),
                t.render_with(names),
                e.render_with(names)
            ),
        }
    }

    pub fn render(&self) -> String {
        self.render_with(&|i| format!("{}.{}", ATTRS[i].0, ATTRS[i].1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OErr {
    Missing,
    Type,
}

/// Reference interpreter: left-to-right, short-circuit, strict kinds.
pub fn oeval(e: &OExpr, env: &dyn Fn(usize) -> Option<OVal>) -> Result<OVal, OErr> {
    let as_bool = |v: OVal| match v {
        OVal::B(b) => Ok(b),
        _ => Err(OErr::Type),
    };
    match e {
        OExpr::Lit(v) => Ok(v.clone()),
        OExpr::Attr(i) => env(*i).ok_or(OErr::Missing),
        OExpr::Eq(a, b) | OExpr::Ne(a, b) => {
            let x = oeval(a, env)?;
            let y = oeval(b, env)?;
            if x.kind() != y.kind() {
                return Err(OErr::Type);
            }
            let same = x == y;
            Ok(OVal::B(if matches!(e, OExpr::Eq(..)) { same } else { !same }))
        }
        OExpr::And(a, b) => {
            if !as_bool(oeval(a, env)?)? {
                Ok(OVal::B(false))
            } else {
                Ok(OVal::B(as_bool(oeval(b, env)?)?))
            }
        }
        OExpr::Or(a, b) => {
            if as_bool(oeval(a, env)?)? {
                Ok(OVal::B(true))
            } else {
                Ok(OVal::B(as_bool(oeval(b, env)?)?))
            }
        }
        OExpr::Not(a) => Ok(OVal::B(!as_bool(oeval(a, env)?)?)),
        OExpr::If(c, t, f) => {
            if as_bool(oeval(c, env)?)? {
                oeval(t, env)
            } else {
                oeval(f, env)
            }
        }
    }
}

pub fn oeval_bool(e: &OExpr, env: &dyn Fn(usize) -> Option<OVal>) -> Result<bool, OErr> {
    match oeval(e, env)? {
        OVal::B(b) => Ok(b),
        _ => Err(OErr::Type),
    }
}

fn value_expr(kind: u8, depth: u32, kinds: &'static [u8]) -> BoxedStrategy<OExpr> {
    let leaf = prop_oneof![
        arb_val_of(kind).prop_map(OExpr::Lit),
        arb_attr_of(kind, kinds).prop_map(OExpr::Attr),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        3 => leaf,
        1 => (bool_expr_in(depth - 1, kinds), value_expr(kind, depth - 1, kinds), value_expr(kind, depth - 1, kinds))
            .prop_map(|(c, t, e)| OExpr::If(Box::new(c), Box::new(t), Box::new(e))),
    ]
    .boxed()
}

/// Well-typed boolean expressions of depth at most `depth` over the first
/// `attrs` attributes of [`ATTRS`].
pub fn bool_expr(depth: u32, attrs: usize) -> BoxedStrategy<OExpr> {
    bool_expr_in(depth, &HOME[..attrs])
}

/// Same, over attributes whose usual kinds are `kinds`.
pub fn bool_expr_in(depth: u32, kinds: &'static [u8]) -> BoxedStrategy<OExpr> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(|b| OExpr::Lit(OVal::B(b))),
        arb_attr_of(0, kinds).prop_map(OExpr::Attr),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let d = depth - 1;
    let cmp = (0u8..3, any::<bool>()).prop_flat_map(move |(k, eq)| {
        (value_expr(k, d, kinds), value_expr(k, d, kinds)).prop_map(move |(a, b)| {
            if eq {
                OExpr::Eq(Box::new(a), Box::new(b))
            } else {
                OExpr::Ne(Box::new(a), Box::new(b))
            }
        })
    });
    prop_oneof![
        1 => leaf,
        3 => cmp,
        2 => (bool_expr_in(d, kinds), bool_expr_in(d, kinds)).prop_map(|(a, b)| OExpr::And(Box::new(a), Box::new(b))),
        2 => (bool_expr_in(d, kinds), bool_expr_in(d, kinds)).prop_map(|(a, b)| OExpr::Or(Box::new(a), Box::new(b))),
        1 => bool_expr_in(d, kinds).prop_map(|a| OExpr::Not(Box::new(a))),
        1 => (bool_expr_in(d, kinds), bool_expr_in(d, kinds), bool_expr_in(d, kinds))
            .prop_map(|(c, t, e)| OExpr::If(Box::new(c), Box::new(t), Box::new(e))),
    ]
    .boxed()
}

// --------------------------------------------------------------- requests

/// Where each attribute lives for one evaluation. The request wins when an
/// attribute is in both places.
#[derive(Debug, Clone, Default)]
pub struct OEnv {
    pub request: BTreeMap<usize, OVal>,
    pub pip: BTreeMap<usize, OVal>,
}

impl OEnv {
    pub fn lookup(&self, i: usize) -> Option<OVal> {
        self.request.get(&i).or_else(|| self.pip.get(&i)).cloned()
    }
}

pub fn arb_env() -> BoxedStrategy<OEnv> {
    let slots: Vec<_> = (0..ATTRS.len())
        .map(|i| (0u8..8, arb_home_val(i), arb_home_val(i)))
        .collect();
    slots
        .prop_map(|slots| {
            let mut env = OEnv::default();
            for (i, (place, a, b)) in slots.into_iter().enumerate() {
                match place {
                    0 => {}
                    1..=4 => {
                        env.request.insert(i, a);
                    }
                    5 | 6 => {
                        env.pip.insert(i, a);
                    }
                    _ => {
                        env.request.insert(i, a);
                        env.pip.insert(i, b);
                    }
                }
            }
            env
        })
        .boxed()
}

// ---------------------------------------------------------------- decisions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ODec {
    Permit,
    Deny,
    NotApplicable,
    Indeterminate,
}

pub const ODECS: [ODec; 4] = [ODec::Permit, ODec::Deny, ODec::NotApplicable, ODec::Indeterminate];

/// Combining table written from the algorithm definitions. Algorithms:
/// 0 deny-overrides, 1 permit-overrides, 2 first-applicable.
pub fn ocombine(algorithm: u8, ds: &[ODec]) -> ODec {
    let has = |d: ODec| ds.contains(&d);
    match algorithm {
        0 if has(ODec::Deny) => ODec::Deny,
        0 if has(ODec::Indeterminate) => ODec::Indeterminate,
        0 if has(ODec::Permit) => ODec::Permit,
        1 if has(ODec::Permit) => ODec::Permit,
        1 if has(ODec::Indeterminate) => ODec::Indeterminate,
        1 if has(ODec::Deny) => ODec::Deny,
        2 => {
            for d in ds {
                if *d != ODec::NotApplicable {
                    return *d;
                }
            }
            ODec::NotApplicable
        }
        _ => ODec::NotApplicable,
    }
}

pub const ALG_NAMES: [&str; 3] = ["deny-overrides", "permit-overrides", "first-applicable"];

// ----------------------------------------------------------------- policies

#[derive(Debug, Clone)]
pub struct ORule {
    pub id: String,
    pub permit: bool,
    /// Spell the effect in the ACL vocabulary (ALLOW / DENY).
    pub acl_spelling: bool,
    pub target: Vec<(usize, OVal)>,
    pub cond: Option<OExpr>,
}

#[derive(Debug, Clone)]
pub struct OObligation {
    pub id: String,
    pub on_permit: bool,
    pub params: BTreeMap<String, OVal>,
}

#[derive(Debug, Clone)]
pub struct OPolicy {
    pub id: String,
    pub target: Vec<(usize, OVal)>,
    /// `None` leaves the algorithm implicit (deny-overrides).
    pub combining: Option<u8>,
    pub rules: Vec<ORule>,
    pub obligations: Vec<OObligation>,
    /// Emit `//` comments between sections.
    pub comments: bool,
}

fn arb_target() -> BoxedStrategy<Vec<(usize, OVal)>> {
    prop::collection::vec((0..ATTRS.len()).prop_flat_map(|i| (Just(i), arb_home_val(i))), 0..3).boxed()
}

fn arb_ident() -> BoxedStrategy<String> {
    "[A-Za-z_][A-Za-z0-9_]{0,6}"
        .prop_filter("keyword", |s| {
            !matches!(
                s.as_str(),
                "policy" | "rule" | "target" | "condition" | "obligation" | "on" | "permit" | "deny"
                    | "if" | "then" | "else" | "true" | "false" | "ALLOW" | "DENY"
            )
        })
        .boxed()
}

pub fn arb_rule(index: usize, depth: u32) -> BoxedStrategy<ORule> {
    (any::<bool>(), any::<bool>(), arb_target(), prop::option::of(bool_expr(depth, ATTRS.len())))
        .prop_map(move |(permit, acl_spelling, target, cond)| ORule {
            id: format!("R{index}"),
            permit,
            acl_spelling,
            target,
            cond,
        })
        .boxed()
}

pub fn arb_policy_with(max_rules: usize, depth: u32) -> BoxedStrategy<OPolicy> {
    let rules = (0..=max_rules).prop_flat_map(move |n| {
        (0..n).map(|i| arb_rule(i, depth)).collect::<Vec<_>>()
    });
    let obligations = prop::collection::vec(
        (any::<bool>(), prop::collection::btree_map(arb_ident(), arb_val(), 0..3)),
        0..3,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (on_permit, params))| OObligation {
                id: format!("O{i}"),
                on_permit,
                params,
            })
            .collect::<Vec<_>>()
    });
    (
        arb_ident(),
        arb_target(),
        prop::option::of(0u8..3),
        rules,
        obligations,
        any::<bool>(),
    )
        .prop_map(|(id, target, combining, rules, obligations, comments)| OPolicy {
            id,
            target,
            combining,
            rules,
            obligations,
            comments,
        })
        .boxed()
}

pub fn arb_policy() -> BoxedStrategy<OPolicy> {
    arb_policy_with(5, 4)
}

fn render_target(t: &[(usize, OVal)]) -> String {
    t.iter()
        .map(|(i, v)| format!("{}.{} == {}", ATTRS[*i].0, ATTRS[*i].1, v.render()))
        .collect::<Vec<_>>()
        .join(" && ")
}

impl OPolicy {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let comment = |s: &mut String, text: &str| {
            if self.comments {
                s.push_str(&format!("  // {text}\n"));
            }
        };
        s.push_str(&format!("policy {} {{\n", self.id));
        if !self.target.is_empty() {
            s.push_str(&format!("  target {}\n", render_target(&self.target)));
        }
        if let Some(a) = self.combining {
            s.push_str(&format!("  {}\n", ALG_NAMES[a as usize]));
        }
        for r in &self.rules {
            comment(&mut s, &format!("rule {}", r.id));
            let effect = match (r.permit, r.acl_spelling) {
                (true, false) => "permit",
                (false, false) => "deny",
                (true, true) => "ALLOW",
                (false, true) => "DENY",
            };
            s.push_str(&format!("  rule {} {{\n    {effect}\n", r.id));
            if !r.target.is_empty() {
                s.push_str(&format!("    target {}\n", render_target(&r.target)));
            }
            if let Some(c) = &r.cond {
                s.push_str(&format!("    condition {}\n", c.render()));
            }
            s.push_str("  }\n");
        }
        for o in &self.obligations {
            comment(&mut s, "obligation");
            let on = if o.on_permit { "permit" } else { "deny" };
            s.push_str(&format!("  obligation {} on {on} {{\n", o.id));
            for (k, v) in &o.params {
                s.push_str(&format!("    {k} = {}\n", v.render()));
            }
            s.push_str("  }\n");
        }
        s.push_str("}\n");
        s
    }

    /// Reference evaluation: decision plus the ids of obligations attached.
    pub fn evaluate(&self, env: &OEnv) -> (ODec, Vec<String>) {
        let look = |i: usize| env.lookup(i);
        let target = otarget(&self.target, &look);
        let decision = if target != ODec::Permit {
            target
        } else {
            let alg = self.combining.unwrap_or(0);
            let ds: Vec<ODec> = self.rules.iter().map(|r| orule(r, &look)).collect();
            ocombine(alg, &ds)
        };
        let obligations = match decision {
            ODec::Permit | ODec::Deny => self
                .obligations
                .iter()
                .filter(|o| o.on_permit == (decision == ODec::Permit))
                .map(|o| o.id.clone())
                .collect(),
            _ => Vec::new(),
        };
        (decision, obligations)
    }
}

/// Permit stands for "matches" here.
fn otarget(t: &[(usize, OVal)], look: &dyn Fn(usize) -> Option<OVal>) -> ODec {
    for (i, want) in t {
        match look(*i) {
            None => return ODec::NotApplicable,
            Some(v) if v.kind() != want.kind() => return ODec::Indeterminate,
            Some(v) if v != *want => return ODec::NotApplicable,
            Some(_) => {}
        }
    }
    ODec::Permit
}

pub fn orule(r: &ORule, look: &dyn Fn(usize) -> Option<OVal>) -> ODec {
    let t = otarget(&r.target, look);
    if t != ODec::Permit {
        return t;
    }
    let effect = if r.permit { ODec::Permit } else { ODec::Deny };
    match &r.cond {
        None => effect,
        Some(c) => match oeval_bool(c, look) {
            Ok(true) => effect,
            Ok(false) => ODec::NotApplicable,
            Err(_) => ODec::Indeterminate,
        },
    }
}

// ------------------------------------------------------------- chain ACL

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OParticipant {
    pub id: String,
    pub doctor: bool,
    pub organization: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OObject {
    pub organization: String,
    pub patient_id: String,
    pub assigned: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct OAclRule {
    pub id: String,
    /// (organization, class) where class 0 any, 1 Doctor, 2 Patient
    pub subject: (Option<String>, u8),
    pub verb: &'static str,
    /// `None` means ANY; otherwise a union of path globs.
    pub object: Option<Vec<String>>,
    pub cond: Option<OAclCond>,
    pub allow: bool,
}

/// Conditions over the bound subject `v` and object `t`.
#[derive(Debug, Clone)]
pub enum OAclCond {
    /// v.<attr> == t.<attr>
    Same(&'static str, &'static str),
    /// t.assignedToRequester == <bool>
    Assigned(bool),
    /// v.<attr> == "<lit>"
    Is(&'static str, String),
    And(Box<OAclCond>, Box<OAclCond>),
    Not(Box<OAclCond>),
    /// refers to an unknown attribute, so never holds
    Broken,
}

pub const ORGS: [&str; 3] = ["Christiana", "Mercy", "Hopkins"];
pub const VERBS: [&str; 3] = ["READ", "WRITE", "UPDATE"];

fn subject_attr(p: &OParticipant, name: &str) -> Option<String> {
    Some(match name {
        "id" => p.id.clone(),
        "role" => p.role.clone(),
        "organization" => p.organization.clone(),
        "kind" => if p.doctor { "Doctor" } else { "Patient" }.to_string(),
        _ => return None,
    })
}

fn object_attr(o: &OObject, name: &str) -> Option<String> {
    Some(match name {
        "patientId" => o.patient_id.clone(),
        "organization" => o.organization.clone(),
        _ => return None,
    })
}

impl OAclCond {
    fn holds(&self, p: &OParticipant, o: &OObject) -> Option<bool> {
        match self {
            OAclCond::Same(a, b) => Some(subject_attr(p, a)? == object_attr(o, b)?),
            OAclCond::Assigned(want) => Some(o.assigned.contains(&p.id) == *want),
            OAclCond::Is(a, lit) => Some(subject_attr(p, a)? == *lit),
            OAclCond::And(a, b) => {
                if !a.holds(p, o)? {
                    return Some(false);
                }
                b.holds(p, o)
            }
            OAclCond::Not(a) => a.holds(p, o).map(|b| !b),
            OAclCond::Broken => None,
        }
    }

    fn render(&self) -> String {
        match self {
            OAclCond::Same(a, b) => format!("(v.{a} == t.{b})"),
            OAclCond::Assigned(b) => format!("(t.assignedToRequester == {b})"),
            OAclCond::Is(a, lit) => format!("(v.{a} == {lit})"),
            OAclCond::And(a, b) => format!("({} && {})", a.render(), b.render()),
            OAclCond::Not(a) => format!("!{}", a.render()),
            OAclCond::Broken => "(v.shoeSize == 42)".to_string(),
        }
    }
}

/// `*` matches any run of characters other than `.`; everything else is
/// literal. Dynamic programming over (pattern, text) prefixes.
pub fn oglob(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let mut m = vec![vec![false; t.len() + 1]; p.len() + 1];
    m[0][0] = true;
    for i in 1..=p.len() {
        for j in 0..=t.len() {
            m[i][j] = if p[i - 1] == '*' {
                m[i - 1][j] || (j > 0 && t[j - 1] != '.' && m[i][j - 1])
            } else {
                j > 0 && p[i - 1] == t[j - 1] && m[i - 1][j - 1]
            };
        }
    }
    m[p.len()][t.len()]
}

impl OAclRule {
    fn matches(&self, p: &OParticipant, verb: &str, o: &OObject) -> bool {
        let (org, class) = &self.subject;
        let subject_ok = org.as_ref().is_none_or(|x| *x == p.organization)
            && match class {
                1 => p.doctor,
                2 => !p.doctor,
                _ => true,
            };
        let full = format!("{}.patient#{}.data", o.organization, o.patient_id);
        let local = format!("patient#{}.data", o.patient_id);
        let object_ok = match &self.object {
            None => true,
            Some(globs) => globs.iter().any(|g| oglob(g, &full) || oglob(g, &local)),
        };
        subject_ok && self.verb == verb && object_ok
    }

    pub fn render(&self) -> String {
        let class = ["Participant", "Doctor", "Patient"][self.subject.1 as usize];
        let subject = match &self.subject.0 {
            Some(o) => format!("{o}.{class}"),
            None if self.subject.1 == 0 => "ANY".to_string(),
            None => class.to_string(),
        };
        let object = match &self.object {
            None => "ANY".to_string(),
            Some(g) => g.join(" | "),
        };
        let cond = match &self.cond {
            None => "NONE".to_string(),
            // Quoted conditions are taken verbatim, so string literals
            // inside them are written as bare identifiers.
            Some(c) => format!("\"{}\"", c.render()),
        };
        format!(
            "rule {} {{\n  description: \"generated\"\n  subject(v): \"{subject}\"\n  operation: {}\n  object(t): \"{object}\"\n  condition: {cond}\n  action: {}\n}}\n",
            self.id,
            self.verb,
            if self.allow { "ALLOW" } else { "DENY" }
        )
    }
}

/// First matching rule decides; conditions that are false or cannot be
/// evaluated skip the rule; nothing matching means deny.
pub fn oacl_check(rules: &[OAclRule], p: &OParticipant, verb: &str, o: &OObject) -> bool {
    for r in rules {
        if !r.matches(p, verb, o) {
            continue;
        }
        match &r.cond {
            None => return r.allow,
            Some(c) if c.holds(p, o) == Some(true) => return r.allow,
            Some(_) => {}
        }
    }
    false
}

fn arb_acl_cond(depth: u32) -> BoxedStrategy<OAclCond> {
    let leaf = prop_oneof![
        (
            prop::sample::select(vec!["id", "organization"]),
            prop::sample::select(vec!["patientId", "organization"])
        )
            .prop_map(|(a, b)| OAclCond::Same(a, b)),
        any::<bool>().prop_map(OAclCond::Assigned),
        (
            prop::sample::select(vec!["role", "organization", "kind"]),
            prop::sample::select(vec!["Doctor", "Patient", "Christiana", "Mercy"])
        )
            .prop_map(|(a, l)| OAclCond::Is(a, l.to_string())),
        Just(OAclCond::Broken),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        3 => leaf,
        1 => (arb_acl_cond(depth - 1), arb_acl_cond(depth - 1))
            .prop_map(|(a, b)| OAclCond::And(Box::new(a), Box::new(b))),
        1 => arb_acl_cond(depth - 1).prop_map(|a| OAclCond::Not(Box::new(a))),
    ]
    .boxed()
}

fn arb_glob() -> BoxedStrategy<String> {
    let org = prop_oneof![
        Just(String::new()),
        prop::sample::select(ORGS.to_vec()).prop_map(|o| format!("{o}.")),
        Just("*.".to_string()),
    ];
    let id = prop_oneof![
        (0..4u8).prop_map(|i| i.to_string()),
        Just("*".to_string()),
        (0..4u8).prop_map(|i| format!("{i}*")),
    ];
    (org, id).prop_map(|(o, i)| format!("{o}patient#{i}.data")).boxed()
}

pub fn arb_acl_rule(index: usize) -> BoxedStrategy<OAclRule> {
    (
        prop::option::of(prop::sample::select(ORGS.to_vec()).prop_map(str::to_string)),
        0u8..3,
        prop::sample::select(VERBS.to_vec()),
        prop::option::of(prop::collection::vec(arb_glob(), 1..3)),
        prop::option::of(arb_acl_cond(2)),
        any::<bool>(),
    )
        .prop_map(move |(org, class, verb, object, cond, allow)| OAclRule {
            id: format!("A{index}"),
            subject: (org, class),
            verb,
            object,
            cond,
            allow,
        })
        .boxed()
}

pub fn arb_acl_rules(max: usize) -> BoxedStrategy<Vec<OAclRule>> {
    (0..=max)
        .prop_flat_map(|n| (0..n).map(arb_acl_rule).collect::<Vec<_>>())
        .boxed()
}

pub fn arb_participant() -> BoxedStrategy<OParticipant> {
    (0..4u8, any::<bool>(), prop::sample::select(ORGS.to_vec()), prop::sample::select(vec!["Doctor", "Patient", "Nurse"]))
        .prop_map(|(id, doctor, org, role)| OParticipant {
            id: if doctor { format!("d{id}") } else { id.to_string() },
            doctor,
            organization: org.to_string(),
            role: role.to_string(),
        })
        .boxed()
}

pub fn arb_object() -> BoxedStrategy<OObject> {
    (
        prop::sample::select(ORGS.to_vec()),
        0..4u8,
        prop::collection::vec((0..4u8).prop_map(|i| format!("d{i}")), 0..3),
    )
        .prop_map(|(org, pid, assigned)| OObject {
            organization: org.to_string(),
            patient_id: pid.to_string(),
            assigned,
        })
        .boxed()
}

// ----------------------------------------------------------------- misc

/// Flips one bit of `data` at `pos`.
pub fn flip(data: &mut [u8], pos: usize, bit: u8) {
    data[pos] ^= 1 << (bit % 8);
}
