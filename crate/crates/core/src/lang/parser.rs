use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::ast::*;
use super::lexer::{LexError, Lexer, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
    /// Token kinds that would have been accepted; empty for lexical and
    /// semantic errors.
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            line: e.line,
            column: e.column,
            message: e.message,
            expected: Vec::new(),
        }
    }
}

/// Parses a `.alfa` source into a policy document.
///
/// The source is either one `policy` block, or one or more top-level ACL
/// `rule` blocks which are lowered into a first-applicable document.
pub fn parse(source: &str) -> Result<PolicyDocument, ParseError> {
    let tokens = Lexer::new(source, 1, 1).run()?;
    let mut p = Parser::new(source, tokens);
    let doc = match p.peek_kind() {
        Some(TokenKind::KwRule) => {
            let blocks = p.rule_blocks()?;
            let mut doc = PolicyDocument::new(
                if blocks.len() == 1 { blocks[0].id.clone() } else { "acl".to_string() },
                CombiningAlgorithm::FirstApplicable,
            );
            doc.rules = blocks.iter().map(RuleBlock::to_rule_def).collect();
            doc
        }
        _ => {
            let doc = p.policy()?;
            p.expect_end()?;
            doc
        }
    };
    check_document(&doc, p.rule_positions())?;
    Ok(doc)
}

/// Parses a file of top-level ACL `rule` blocks without lowering them.
pub fn parse_rule_blocks(source: &str) -> Result<Vec<RuleBlock>, ParseError> {
    let tokens = Lexer::new(source, 1, 1).run()?;
    let mut p = Parser::new(source, tokens);
    p.rule_blocks()
}

/// Parses a standalone condition expression.
pub fn parse_condition(source: &str) -> Result<CondExpr, ParseError> {
    let tokens = Lexer::new(source, 1, 1).run()?;
    let mut p = Parser::new(source, tokens);
    let (line, column) = p.here();
    let e = p.expr()?;
    p.expect_end()?;
    type_check(&e).map_err(|m| semantic(line, column, m))?;
    Ok(e)
}

fn semantic(line: u32, column: u32, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
        expected: Vec::new(),
    }
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    rule_pos: Vec<(String, u32, u32)>,
}

const MAX_NESTING: usize = 200;

impl<'a> Parser<'a> {
    fn new(src: &'a str, tokens: Vec<Token>) -> Self {
        Parser {
            src,
            tokens,
            pos: 0,
            depth: 0,
            rule_pos: Vec::new(),
        }
    }

    fn rule_positions(&self) -> &[(String, u32, u32)] {
        &self.rule_pos
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    /// Position of the next token, or just past the last token at end of input.
    fn here(&self) -> (u32, u32) {
        match self.peek() {
            Some(t) => (t.line, t.column),
            None => self.end_position(),
        }
    }

    fn end_position(&self) -> (u32, u32) {
        match self.tokens.last() {
            None => (1, 1),
            Some(t) => {
                let text = &self.src[t.span.clone()];
                let (mut line, mut col) = (t.line, t.column);
                for c in text.chars() {
                    if c == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                }
                (line, col)
            }
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let (line, column) = self.here();
        let found = match self.peek() {
            Some(t) => format!("unexpected {}", t.kind.describe()),
            None => "unexpected end of input".to_string(),
        };
        ParseError {
            line,
            column,
            message: found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek_kind() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, ParseError> {
        if self.peek_kind() == Some(&kind) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[&kind.describe()]))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, u32, u32), ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                let t = self.bump();
                Ok((s, t.line, t.column))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.unexpected(&["end of input"])),
        }
    }

    fn effect(&mut self) -> Option<Effect> {
        let e = match self.peek_kind()? {
            TokenKind::KwPermit => Effect::Permit,
            TokenKind::KwDeny => Effect::Deny,
            TokenKind::Ident(s) if s == "ALLOW" => Effect::Permit,
            TokenKind::Ident(s) if s == "DENY" => Effect::Deny,
            _ => return None,
        };
        self.pos += 1;
        Some(e)
    }

    // policy <id> { item* }
    fn policy(&mut self) -> Result<PolicyDocument, ParseError> {
        if self.peek_kind() != Some(&TokenKind::KwPolicy) {
            return Err(self.unexpected(&["`policy`", "`rule`"]));
        }
        self.bump();
        let (id, _, _) = self.expect_ident()?;
        self.expect(TokenKind::LBrace)?;

        let mut target: Option<TargetExpr> = None;
        let mut combining: Option<CombiningAlgorithm> = None;
        let mut rules = Vec::new();
        let mut obligations = Vec::new();

        loop {
            let (line, column) = self.here();
            match self.peek_kind() {
                Some(TokenKind::RBrace) => {
                    self.bump();
                    break;
                }
                Some(TokenKind::KwTarget) => {
                    self.bump();
                    if target.is_some() {
                        return Err(semantic(line, column, "duplicate target clause"));
                    }
                    target = Some(self.target_clauses()?);
                }
                Some(TokenKind::Ident(name)) if CombiningAlgorithm::from_name(name).is_some() => {
                    let alg = CombiningAlgorithm::from_name(name).expect("checked");
                    self.bump();
                    if combining.is_some() {
                        return Err(semantic(line, column, "duplicate combining algorithm"));
                    }
                    combining = Some(alg);
                }
                Some(TokenKind::KwRule) => rules.push(self.policy_rule()?),
                Some(TokenKind::KwObligation) => obligations.push(self.obligation()?),
                _ => {
                    return Err(self.unexpected(&[
                        "`}`",
                        "`target`",
                        "`rule`",
                        "`obligation`",
                        "combining algorithm",
                    ]))
                }
            }
        }

        Ok(PolicyDocument {
            id,
            target: target.unwrap_or_default(),
            combining: combining.unwrap_or_default(),
            rules,
            obligations,
        })
    }

    // rule <id> { effect [target ...] [condition expr] }
    fn policy_rule(&mut self) -> Result<RuleDef, ParseError> {
        self.expect(TokenKind::KwRule)?;
        let (id, id_line, id_col) = self.expect_ident()?;
        self.rule_pos.push((id.clone(), id_line, id_col));
        self.expect(TokenKind::LBrace)?;

        let mut effect = None;
        let mut target = None;
        let mut condition = None;
        loop {
            let (line, column) = self.here();
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            if let Some(e) = self.effect() {
                if effect.replace(e).is_some() {
                    return Err(semantic(line, column, "rule effect given twice"));
                }
                continue;
            }
            match self.peek_kind() {
                Some(TokenKind::KwTarget) => {
                    self.bump();
                    if target.is_some() {
                        return Err(semantic(line, column, "duplicate target clause"));
                    }
                    target = Some(self.target_clauses()?);
                }
                Some(TokenKind::KwCondition) => {
                    self.bump();
                    if condition.is_some() {
                        return Err(semantic(line, column, "duplicate condition"));
                    }
                    let (l, c) = self.here();
                    let e = self.expr()?;
                    type_check(&e).map_err(|m| semantic(l, c, m))?;
                    condition = Some(e);
                }
                _ => {
                    return Err(self.unexpected(&[
                        "`}`",
                        "`permit`",
                        "`deny`",
                        "`target`",
                        "`condition`",
                    ]))
                }
            }
        }
        let effect =
            effect.ok_or_else(|| semantic(id_line, id_col, format!("rule {id} has no effect")))?;
        Ok(RuleDef {
            id,
            effect,
            target: target.unwrap_or_default(),
            condition,
        })
    }

    // obligation <id> on <effect> { name = literal ... }
    fn obligation(&mut self) -> Result<Obligation, ParseError> {
        self.expect(TokenKind::KwObligation)?;
        let (id, _, _) = self.expect_ident()?;
        self.expect(TokenKind::KwOn)?;
        let fulfill_on = self
            .effect()
            .ok_or_else(|| self.unexpected(&["`permit`", "`deny`"]))?;
        self.expect(TokenKind::LBrace)?;
        let mut parameters = BTreeMap::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let (name, line, column) = match self.peek_kind() {
                Some(TokenKind::Ident(_)) => self.expect_ident()?,
                _ => return Err(self.unexpected(&["`}`", "identifier"])),
            };
            self.expect(TokenKind::Assign)?;
            let value = self.literal()?;
            if parameters.insert(name.clone(), value).is_some() {
                return Err(semantic(line, column, format!("duplicate parameter {name}")));
            }
        }
        Ok(Obligation {
            id,
            fulfill_on,
            parameters,
        })
    }

    fn target_clauses(&mut self) -> Result<TargetExpr, ParseError> {
        let mut clauses = vec![self.attr_match()?];
        while self.eat(&TokenKind::AndAnd) {
            clauses.push(self.attr_match()?);
        }
        Ok(TargetExpr { clauses })
    }

    fn attr_match(&mut self) -> Result<AttrMatch, ParseError> {
        let attr = match self.peek_kind() {
            Some(TokenKind::AttrRef(c, n)) => AttrRef::new(c.clone(), n.clone()),
            _ => return Err(self.unexpected(&["attribute reference"])),
        };
        self.bump();
        self.expect(TokenKind::EqEq)?;
        let value = self.literal()?;
        Ok(AttrMatch { attr, value })
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        let v = match self.peek_kind() {
            Some(TokenKind::Str(s)) => Value::Str(s.clone()),
            Some(TokenKind::Ident(s)) => Value::Str(s.clone()),
            Some(TokenKind::Int(i)) => Value::Int(*i),
            Some(TokenKind::KwTrue) => Value::Bool(true),
            Some(TokenKind::KwFalse) => Value::Bool(false),
            _ => return Err(self.unexpected(&["string", "integer", "`true`", "`false`"])),
        };
        self.bump();
        Ok(v)
    }

    // expr := 'if' '(' expr ')' 'then' expr 'else' expr | or
    fn expr(&mut self) -> Result<CondExpr, ParseError> {
        self.nested(Self::expr_inner)
    }

    fn nested(
        &mut self,
        f: impl FnOnce(&mut Self) -> Result<CondExpr, ParseError>,
    ) -> Result<CondExpr, ParseError> {
        self.deepen()?;
        let r = f(self);
        self.depth -= 1;
        r
    }

    // Each chained binary operator adds a tree level, same as a paren.
    fn deepen(&mut self) -> Result<(), ParseError> {
        if self.depth >= MAX_NESTING {
            let (line, column) = self.here();
            return Err(semantic(line, column, "expression nested too deeply"));
        }
        self.depth += 1;
        Ok(())
    }

    fn expr_inner(&mut self) -> Result<CondExpr, ParseError> {
        if self.eat(&TokenKind::KwIf) {
            self.expect(TokenKind::LParen)?;
            let cond = self.expr()?;
            self.expect(TokenKind::RParen)?;
            self.expect(TokenKind::KwThen)?;
            let then = self.expr()?;
            self.expect(TokenKind::KwElse)?;
            let otherwise = self.expr()?;
            return Ok(CondExpr::if_then_else(cond, then, otherwise));
        }
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<CondExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        let mut chain = 0;
        while self.eat(&TokenKind::OrOr) {
            chain += 1;
            self.deepen()?;
            let rhs = self.and_expr()?;
            lhs = CondExpr::or(lhs, rhs);
        }
        self.depth -= chain;
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<CondExpr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        let mut chain = 0;
        while self.eat(&TokenKind::AndAnd) {
            chain += 1;
            self.deepen()?;
            let rhs = self.cmp_expr()?;
            lhs = CondExpr::and(lhs, rhs);
        }
        self.depth -= chain;
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<CondExpr, ParseError> {
        let lhs = self.unary()?;
        if self.eat(&TokenKind::EqEq) {
            return Ok(CondExpr::eq(lhs, self.unary()?));
        }
        if self.eat(&TokenKind::NotEq) {
            return Ok(CondExpr::ne(lhs, self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<CondExpr, ParseError> {
        if self.eat(&TokenKind::Bang) {
            return Ok(CondExpr::not(self.nested(Self::unary)?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<CondExpr, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::LParen) => {
                self.bump();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            Some(TokenKind::AttrRef(c, n)) => {
                let e = CondExpr::attr(c, n);
                self.bump();
                Ok(e)
            }
            Some(
                TokenKind::Str(_)
                | TokenKind::Ident(_)
                | TokenKind::Int(_)
                | TokenKind::KwTrue
                | TokenKind::KwFalse,
            ) => Ok(CondExpr::Lit(self.literal()?)),
            _ => Err(self.unexpected(&[
                "`(`",
                "`!`",
                "`if`",
                "attribute reference",
                "string",
                "integer",
                "`true`",
                "`false`",
            ])),
        }
    }

    fn rule_blocks(&mut self) -> Result<Vec<RuleBlock>, ParseError> {
        let mut blocks = Vec::new();
        while self.peek().is_some() {
            blocks.push(self.rule_block()?);
        }
        if blocks.is_empty() {
            return Err(self.unexpected(&["`rule`"]));
        }
        Ok(blocks)
    }

    // rule <id> { description: .. subject(v): .. operation: .. object(t): .. condition: .. action: .. }
    fn rule_block(&mut self) -> Result<RuleBlock, ParseError> {
        self.expect(TokenKind::KwRule)?;
        let (id, line, column) = self.expect_ident()?;
        self.rule_pos.push((id.clone(), line, column));
        self.expect(TokenKind::LBrace)?;

        let mut description = None;
        let mut subject = None;
        let mut operation = None;
        let mut object = None;
        let mut condition: Option<Option<CondExpr>> = None;
        let mut action = None;

        const FIELDS: [&str; 7] = [
            "`}`",
            "`description`",
            "`subject`",
            "`operation`",
            "`object`",
            "`condition`",
            "`action`",
        ];

        loop {
            let (fl, fc) = self.here();
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let field = match self.peek_kind() {
                Some(TokenKind::Ident(s)) => s.clone(),
                Some(TokenKind::KwCondition) => "condition".to_string(),
                _ => return Err(self.unexpected(&FIELDS)),
            };
            let dup = || semantic(fl, fc, format!("field {field} given twice"));
            match field.as_str() {
                "description" => {
                    self.bump();
                    self.expect(TokenKind::Colon)?;
                    let s = self.string_value()?;
                    if description.replace(s).is_some() {
                        return Err(dup());
                    }
                }
                "subject" | "object" => {
                    self.bump();
                    let binding = if self.eat(&TokenKind::LParen) {
                        let (v, _, _) = self.expect_ident()?;
                        self.expect(TokenKind::RParen)?;
                        Some(v)
                    } else {
                        None
                    };
                    self.expect(TokenKind::Colon)?;
                    let pattern = self.string_or_ident()?;
                    let slot = if field == "subject" { &mut subject } else { &mut object };
                    if slot.replace(Selector { pattern, binding }).is_some() {
                        return Err(dup());
                    }
                }
                "operation" => {
                    self.bump();
                    self.expect(TokenKind::Colon)?;
                    let (verb, _, _) = self.expect_ident()?;
                    if operation.replace(verb).is_some() {
                        return Err(dup());
                    }
                }
                "condition" => {
                    self.bump();
                    self.expect(TokenKind::Colon)?;
                    let c = self.acl_condition()?;
                    if condition.replace(c).is_some() {
                        return Err(dup());
                    }
                }
                "action" => {
                    self.bump();
                    self.expect(TokenKind::Colon)?;
                    let e = self
                        .effect()
                        .ok_or_else(|| self.unexpected(&["`ALLOW`", "`DENY`"]))?;
                    if action.replace(e).is_some() {
                        return Err(dup());
                    }
                }
                _ => return Err(self.unexpected(&FIELDS)),
            }
        }

        let missing = |name: &str| semantic(line, column, format!("rule {id} is missing `{name}`"));
        Ok(RuleBlock {
            description: description.unwrap_or_default(),
            subject: subject.ok_or_else(|| missing("subject"))?,
            operation: operation.ok_or_else(|| missing("operation"))?,
            object: object.ok_or_else(|| missing("object"))?,
            condition: condition.flatten(),
            action: action.ok_or_else(|| missing("action"))?,
            id,
            line,
            column,
        })
    }

    fn string_value(&mut self) -> Result<String, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Str(s)) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["string"])),
        }
    }

    fn string_or_ident(&mut self) -> Result<String, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Str(s) | TokenKind::Ident(s)) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["string", "identifier"])),
        }
    }

    /// `NONE`, a bare expression, or an expression inside a string literal.
    fn acl_condition(&mut self) -> Result<Option<CondExpr>, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Ident(s)) if s == "NONE" => {
                self.bump();
                Ok(None)
            }
            Some(TokenKind::Str(_)) => {
                let tok = self.bump();
                // Re-lex the raw text between the quotes so diagnostics point
                // into the enclosing file.
                let raw = &self.src[tok.span.start + 1..tok.span.end - 1];
                let tokens = Lexer::new(raw, tok.line, tok.column + 1).run()?;
                let mut inner = Parser::new(raw, tokens);
                if inner.peek().is_none() {
                    return Err(semantic(tok.line, tok.column, "empty condition"));
                }
                let (l, c) = inner.here();
                let e = inner.expr()?;
                inner.expect_end()?;
                type_check(&e).map_err(|m| semantic(l, c, m))?;
                Ok(Some(e))
            }
            _ => {
                let (l, c) = self.here();
                let e = self.expr()?;
                type_check(&e).map_err(|m| semantic(l, c, m))?;
                Ok(Some(e))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Known(ValueKind),
    Unknown,
}

fn compatible(a: Ty, b: Ty) -> bool {
    match (a, b) {
        (Ty::Known(x), Ty::Known(y)) => x == y,
        _ => true,
    }
}

fn require_bool(t: Ty, what: &str) -> Result<(), String> {
    match t {
        Ty::Known(k) if k != ValueKind::Bool => Err(format!("{what} must be boolean, found {k}")),
        _ => Ok(()),
    }
}

fn infer(e: &CondExpr) -> Result<Ty, String> {
    Ok(match e {
        CondExpr::Lit(v) => Ty::Known(v.kind()),
        CondExpr::Attr(_) => Ty::Unknown,
        CondExpr::Eq(a, b) | CondExpr::Ne(a, b) => {
            let (ta, tb) = (infer(a)?, infer(b)?);
            if !compatible(ta, tb) {
                return Err(format!("cannot compare {a:?} with {b:?}: incompatible literal kinds"));
            }
            Ty::Known(ValueKind::Bool)
        }
        CondExpr::And(a, b) | CondExpr::Or(a, b) => {
            require_bool(infer(a)?, "logical operand")?;
            require_bool(infer(b)?, "logical operand")?;
            Ty::Known(ValueKind::Bool)
        }
        CondExpr::Not(a) => {
            require_bool(infer(a)?, "negated operand")?;
            Ty::Known(ValueKind::Bool)
        }
        CondExpr::If {
            cond,
            then,
            otherwise,
        } => {
            require_bool(infer(cond)?, "if condition")?;
            let (tt, te) = (infer(then)?, infer(otherwise)?);
            if !compatible(tt, te) {
                return Err("if branches have incompatible kinds".to_string());
            }
            if let Ty::Known(_) = tt {
                tt
            } else {
                te
            }
        }
    })
}

/// Static check: literal comparisons are kind-compatible and the expression
/// can produce a boolean.
pub fn type_check(e: &CondExpr) -> Result<(), String> {
    require_bool(infer(e)?, "condition")
}

fn check_document(doc: &PolicyDocument, positions: &[(String, u32, u32)]) -> Result<(), ParseError> {
    let pos_of = |id: &str| {
        positions
            .iter()
            .rev()
            .find(|(n, _, _)| n == id)
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((1, 1))
    };

    let mut seen = HashSet::new();
    for (i, rule) in doc.rules.iter().enumerate() {
        if !seen.insert(rule.id.as_str()) {
            let (l, c) = positions
                .get(i)
                .map(|&(_, l, c)| (l, c))
                .unwrap_or_else(|| pos_of(&rule.id));
            return Err(semantic(l, c, format!("duplicate rule id {}", rule.id)));
        }
        let mut bad = None;
        let mut check = |a: &AttrRef| {
            if bad.is_none() && !CATEGORIES.contains(&a.category.as_str()) {
                bad = Some(a.clone());
            }
        };
        for m in &rule.target.clauses {
            check(&m.attr);
        }
        if let Some(c) = &rule.condition {
            c.for_each_attr(&mut check);
        }
        if let Some(a) = bad {
            let (l, c) = pos_of(&rule.id);
            return Err(semantic(
                l,
                c,
                format!("rule {}: unknown attribute category in {a}", rule.id),
            ));
        }
    }
    if let Some(m) = doc
        .target
        .clauses
        .iter()
        .find(|m| !CATEGORIES.contains(&m.attr.category.as_str()))
    {
        return Err(semantic(1, 1, format!("unknown attribute category in {}", m.attr)));
    }
    let mut obligation_ids = HashSet::new();
    for o in &doc.obligations {
        if !obligation_ids.insert(o.id.as_str()) {
            return Err(semantic(1, 1, format!("duplicate obligation id {}", o.id)));
        }
    }
    Ok(())
}
