use std::fmt;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    KwPolicy,
    KwRule,
    KwTarget,
    KwCondition,
    KwObligation,
    KwOn,
    KwPermit,
    KwDeny,
    KwIf,
    KwThen,
    KwElse,
    KwTrue,
    KwFalse,
    Ident(String),
    /// `<category>.<name>` with no interior whitespace.
    AttrRef(String, String),
    Str(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Assign,
    EqEq,
    NotEq,
    AndAnd,
    OrOr,
    Bang,
}

impl TokenKind {
    fn keyword(word: &str) -> Option<TokenKind> {
        Some(match word {
            "policy" => TokenKind::KwPolicy,
            "rule" => TokenKind::KwRule,
            "target" => TokenKind::KwTarget,
            "condition" => TokenKind::KwCondition,
            "obligation" => TokenKind::KwObligation,
            "on" => TokenKind::KwOn,
            "permit" => TokenKind::KwPermit,
            "deny" => TokenKind::KwDeny,
            "if" => TokenKind::KwIf,
            "then" => TokenKind::KwThen,
            "else" => TokenKind::KwElse,
            "true" => TokenKind::KwTrue,
            "false" => TokenKind::KwFalse,
            _ => return None,
        })
    }

    /// Words the lexer never returns as [`TokenKind::Ident`].
    pub fn is_keyword(word: &str) -> bool {
        Self::keyword(word).is_some()
    }

    /// Human-readable kind name used in "expected ..." diagnostics.
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(_) => "identifier".into(),
            TokenKind::AttrRef(..) => "attribute reference".into(),
            TokenKind::Str(_) => "string".into(),
            TokenKind::Int(_) => "integer".into(),
            other => format!("`{other}`"),
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::KwPolicy => "policy",
            TokenKind::KwRule => "rule",
            TokenKind::KwTarget => "target",
            TokenKind::KwCondition => "condition",
            TokenKind::KwObligation => "obligation",
            TokenKind::KwOn => "on",
            TokenKind::KwPermit => "permit",
            TokenKind::KwDeny => "deny",
            TokenKind::KwIf => "if",
            TokenKind::KwThen => "then",
            TokenKind::KwElse => "else",
            TokenKind::KwTrue => "true",
            TokenKind::KwFalse => "false",
            TokenKind::Ident(s) => return f.write_str(s),
            TokenKind::AttrRef(c, n) => return write!(f, "{c}.{n}"),
            TokenKind::Str(s) => return write!(f, "{s:?}"),
            TokenKind::Int(i) => return write!(f, "{i}"),
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::Colon => ":",
            TokenKind::Assign => "=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Bang => "!",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub column: u32,
    /// Byte range in the lexed source.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct LexError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    Lexer::new(source, 1, 1).run()
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl<'a> Lexer<'a> {
    /// Lexes `src` as if it started at (`line`, `column`) of an enclosing file.
    pub(crate) fn new(src: &'a str, line: u32, column: u32) -> Self {
        Lexer {
            src,
            pos: 0,
            line,
            column,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: u32, column: u32, message: impl Into<String>) -> LexError {
        LexError {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn run(mut self) -> Result<Vec<Token>, LexError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let Some(c) = self.peek() else {
                return Ok(out);
            };
            let (line, column, start) = (self.line, self.column, self.pos);
            let kind = match c {
                '{' => self.single(TokenKind::LBrace),
                '}' => self.single(TokenKind::RBrace),
                '(' => self.single(TokenKind::LParen),
                ')' => self.single(TokenKind::RParen),
                ':' => self.single(TokenKind::Colon),
                '=' if self.peek_at(1) == Some('=') => self.double(TokenKind::EqEq),
                '=' => self.single(TokenKind::Assign),
                '!' if self.peek_at(1) == Some('=') => self.double(TokenKind::NotEq),
                '!' => self.single(TokenKind::Bang),
                '&' if self.peek_at(1) == Some('&') => self.double(TokenKind::AndAnd),
                '|' if self.peek_at(1) == Some('|') => self.double(TokenKind::OrOr),
                '"' => self.string(line, column)?,
                '-' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => {
                    self.integer(line, column)?
                }
                d if d.is_ascii_digit() => self.integer(line, column)?,
                c if is_ident_start(c) => self.word(),
                other => {
                    return Err(self.error(line, column, format!("illegal character {other:?}")))
                }
            };
            out.push(Token {
                kind,
                line,
                column,
                span: start..self.pos,
            });
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek_at(1) == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn single(&mut self, kind: TokenKind) -> TokenKind {
        self.bump();
        kind
    }

    fn double(&mut self, kind: TokenKind) -> TokenKind {
        self.bump();
        self.bump();
        kind
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(is_ident_continue) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn word(&mut self) -> TokenKind {
        let first = self.ident();
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(is_ident_start) {
            self.bump();
            let second = self.ident();
            return TokenKind::AttrRef(first.to_string(), second.to_string());
        }
        TokenKind::keyword(first).unwrap_or_else(|| TokenKind::Ident(first.to_string()))
    }

    fn integer(&mut self, line: u32, column: u32) -> Result<TokenKind, LexError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        text.parse::<i64>()
            .map(TokenKind::Int)
            .map_err(|_| self.error(line, column, format!("integer literal {text} out of range")))
    }

    fn string(&mut self, line: u32, column: u32) -> Result<TokenKind, LexError> {
        self.bump();
        let mut value = String::new();
        loop {
            let (el, ec) = (self.line, self.column);
            match self.bump() {
                None => return Err(self.error(line, column, "unterminated string literal")),
                Some('"') => return Ok(TokenKind::Str(value)),
                Some('\\') => match self.bump() {
                    Some('"') => value.push('"'),
                    Some('\\') => value.push('\\'),
                    Some('n') => value.push('\n'),
                    Some('t') => value.push('\t'),
                    Some('r') => value.push('\r'),
                    Some(other) => {
                        return Err(self.error(el, ec, format!("unknown escape \\{other}")))
                    }
                    None => return Err(self.error(line, column, "unterminated string literal")),
                },
                Some(c) => value.push(c),
            }
        }
    }
}
