//! Front end for the ALFA-subset authorization language.
//!
//! One grammar covers edge-node policy documents (`policy { ... }`) and
//! chain-side ACL rule files (top-level `rule { ... }` blocks in the
//! description/subject/operation/object/condition/action layout).

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::{parse, parse_condition, parse_rule_blocks, type_check, ParseError};
pub use printer::{expr_to_string, is_plain_ident, serialize, serialize_rule_blocks};
