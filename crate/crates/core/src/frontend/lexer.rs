//! Tokenizer for COOL source text.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    At,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Colon,
    Dollar,
    Hash,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    EqEq,
    AndAnd,
    Assign,
    Dot,
    /// `<<` inheritance marker.
    Inherit,
    /// `=>` query component marker.
    Arrow,
    /// `-->` output redirection.
    Output,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Num(n) => return write!(f, "number `{n}`"),
            Tok::At => "@",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Dollar => "$",
            Tok::Hash => "#",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::EqEq => "==",
            Tok::AndAnd => "&&",
            Tok::Assign => "=",
            Tok::Dot => ".",
            Tok::Inherit => "<<",
            Tok::Arrow => "=>",
            Tok::Output => "-->",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    macro_rules! peek {
        ($k:expr) => {
            chars.get(i + $k).copied()
        };
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }

        if c == '/' && peek!(1) == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && peek!(1) == Some('*') {
            let (l0, c0) = (line, col);
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::new(l0, c0, "unterminated block comment"));
                }
                if chars[i] == '*' && peek!(1) == Some('/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }

        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: tl, col: tc });

        if c.is_ascii_digit() || (c == '.' && peek!(1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                bump!();
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let sign = peek!(1).is_some_and(|s| s == '+' || s == '-');
                let digit_at = if sign { 2 } else { 1 };
                if peek!(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                    bump!();
                    if sign {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let n: f64 = text
                .parse()
                .map_err(|_| ParseError::new(tl, tc, format!("malformed number `{text}`")))?;
            push(&mut out, Tok::Num(n));
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_continue(chars[i]) {
                bump!();
            }
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }

        let (tok, len) = match (c, peek!(1), peek!(2)) {
            ('-', Some('-'), Some('>')) => (Tok::Output, 3),
            ('=', Some('='), _) => (Tok::EqEq, 2),
            ('=', Some('>'), _) => (Tok::Arrow, 2),
            ('&', Some('&'), _) => (Tok::AndAnd, 2),
            ('<', Some('<'), _) => (Tok::Inherit, 2),
            ('@', ..) => (Tok::At, 1),
            ('{', ..) => (Tok::LBrace, 1),
            ('}', ..) => (Tok::RBrace, 1),
            ('(', ..) => (Tok::LParen, 1),
            (')', ..) => (Tok::RParen, 1),
            (';', ..) => (Tok::Semi, 1),
            (',', ..) => (Tok::Comma, 1),
            (':', ..) => (Tok::Colon, 1),
            ('$', ..) => (Tok::Dollar, 1),
            ('#', ..) => (Tok::Hash, 1),
            ('+', ..) => (Tok::Plus, 1),
            ('-', ..) => (Tok::Minus, 1),
            ('*', ..) => (Tok::Star, 1),
            ('/', ..) => (Tok::Slash, 1),
            ('^', ..) => (Tok::Caret, 1),
            ('=', ..) => (Tok::Assign, 1),
            ('.', ..) => (Tok::Dot, 1),
            _ => return Err(ParseError::new(tl, tc, format!("unexpected character `{c}`"))),
        };
        for _ in 0..len {
            bump!();
        }
        push(&mut out, tok);
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn output_arrow_wins_over_minus() {
        assert_eq!(
            toks("m.x-->screen;"),
            vec![
                Tok::Ident("m".into()),
                Tok::Dot,
                Tok::Ident("x".into()),
                Tok::Output,
                Tok::Ident("screen".into()),
                Tok::Semi,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn unicode_identifiers_and_numbers() {
        assert_eq!(
            toks("(θ) 0.5 1e3"),
            vec![
                Tok::LParen,
                Tok::Ident("θ".into()),
                Tok::RParen,
                Tok::Num(0.5),
                Tok::Num(1000.0),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_are_skipped_and_positions_tracked() {
        let t = tokenize("/* a\n b */ // c\n  x").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("x".into()));
        assert_eq!((t[0].line, t[0].col), (3, 3));
    }

    #[test]
    fn bad_character_reports_position() {
        let e = tokenize("x = 1;\n  y ? 2").unwrap_err();
        assert_eq!((e.line, e.col), (2, 5));
    }
}
