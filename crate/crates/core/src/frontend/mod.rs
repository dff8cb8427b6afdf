//! Lexing, parsing, printing and domain resolution for COOL source.

pub mod ast;
pub mod domains;
pub mod lexer;
pub mod parser;
mod printer;

use std::fmt;

pub use ast::*;
pub use domains::{resolve_domains, resolve_domains_with, DomainError, DomainMap};
pub use parser::{classify_function, parse_expr, parse_named, parse_program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub file: Option<String>,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { file: None, line, col, message: message.into() }
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = self.file.as_deref().unwrap_or("<input>");
        write!(f, "{file}:{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}
