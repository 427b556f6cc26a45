use std::fmt::Write;

use super::ast::*;
use super::lexer::{is_ident_continue, is_ident_start, TokenKind};

const INDENT: &str = "  ";

/// Canonical text for a policy document: newline-terminated, two-space
/// indentation, empty targets omitted, combining algorithm always explicit.
pub fn serialize(doc: &PolicyDocument) -> String {
    let mut out = String::new();
    writeln!(out, "policy {} {{", doc.id).unwrap();
    if !doc.target.is_empty() {
        writeln!(out, "{INDENT}target {}", target_to_string(&doc.target)).unwrap();
    }
    writeln!(out, "{INDENT}{}", doc.combining.name()).unwrap();
    for rule in &doc.rules {
        writeln!(out, "{INDENT}rule {} {{", rule.id).unwrap();
        writeln!(out, "{INDENT}{INDENT}{}", rule.effect).unwrap();
        if !rule.target.is_empty() {
            writeln!(out, "{INDENT}{INDENT}target {}", target_to_string(&rule.target)).unwrap();
        }
        if let Some(c) = &rule.condition {
            writeln!(out, "{INDENT}{INDENT}condition {}", expr_to_string(c)).unwrap();
        }
        writeln!(out, "{INDENT}}}").unwrap();
    }
    for o in &doc.obligations {
        writeln!(out, "{INDENT}obligation {} on {} {{", o.id, o.fulfill_on).unwrap();
        for (name, value) in &o.parameters {
            writeln!(out, "{INDENT}{INDENT}{name} = {}", literal_to_string(value)).unwrap();
        }
        writeln!(out, "{INDENT}}}").unwrap();
    }
    out.push_str("}\n");
    out
}

/// Renders ACL rule blocks in the field layout `parse_rule_blocks` reads.
pub fn serialize_rule_blocks(blocks: &[RuleBlock]) -> String {
    let mut out = String::new();
    for b in blocks {
        writeln!(out, "rule {} {{", b.id).unwrap();
        if !b.description.is_empty() {
            writeln!(out, "{INDENT}description: {}", quote(&b.description)).unwrap();
        }
        for (field, sel) in [("subject", &b.subject), ("object", &b.object)] {
            match &sel.binding {
                Some(v) => writeln!(out, "{INDENT}{field}({v}): {}", quote(&sel.pattern)),
                None => writeln!(out, "{INDENT}{field}: {}", quote(&sel.pattern)),
            }
            .unwrap();
            if field == "subject" {
                writeln!(out, "{INDENT}operation: {}", b.operation).unwrap();
            }
        }
        match &b.condition {
            Some(c) => writeln!(out, "{INDENT}condition: {}", expr_to_string(c)).unwrap(),
            None => writeln!(out, "{INDENT}condition: NONE").unwrap(),
        }
        let action = match b.action {
            Effect::Permit => "ALLOW",
            Effect::Deny => "DENY",
        };
        writeln!(out, "{INDENT}action: {action}").unwrap();
        out.push_str("}\n");
    }
    out
}

fn target_to_string(t: &TargetExpr) -> String {
    t.clauses
        .iter()
        .map(|m| format!("{} == {}", m.attr, literal_to_string(&m.value)))
        .collect::<Vec<_>>()
        .join(" && ")
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
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

/// True when `s` would lex back as a single non-keyword identifier.
pub fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c))
        && chars.all(is_ident_continue)
        && !TokenKind::is_keyword(s)
}

fn literal_to_string(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Str(s) => quote(s),
    }
}

// Binding strength: larger binds tighter.
fn precedence(e: &CondExpr) -> u8 {
    match e {
        CondExpr::If { .. } => 0,
        CondExpr::Or(..) => 1,
        CondExpr::And(..) => 2,
        CondExpr::Eq(..) | CondExpr::Ne(..) => 3,
        CondExpr::Not(..) => 4,
        CondExpr::Lit(_) | CondExpr::Attr(_) => 5,
    }
}

pub fn expr_to_string(e: &CondExpr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

fn write_expr(out: &mut String, e: &CondExpr, min: u8) {
    let wrap = precedence(e) < min;
    if wrap {
        out.push('(');
    }
    match e {
        CondExpr::Lit(v) => out.push_str(&literal_to_string(v)),
        CondExpr::Attr(a) => write!(out, "{a}").unwrap(),
        CondExpr::Or(a, b) => {
            write_expr(out, a, 1);
            out.push_str(" || ");
            write_expr(out, b, 2);
        }
        CondExpr::And(a, b) => {
            write_expr(out, a, 2);
            out.push_str(" && ");
            write_expr(out, b, 3);
        }
        CondExpr::Eq(a, b) | CondExpr::Ne(a, b) => {
            write_expr(out, a, 4);
            out.push_str(if matches!(e, CondExpr::Eq(..)) { " == " } else { " != " });
            write_expr(out, b, 4);
        }
        CondExpr::Not(a) => {
            out.push('!');
            write_expr(out, a, 4);
        }
        CondExpr::If {
            cond,
            then,
            otherwise,
        } => {
            out.push_str("if (");
            write_expr(out, cond, 0);
            out.push_str(") then ");
            write_expr(out, then, 1);
            out.push_str(" else ");
            write_expr(out, otherwise, 0);
        }
    }
    if wrap {
        out.push(')');
    }
}
