//! Tokenizer shared by the model (.gft) and scenario (.gsc) parsers.
//!
//! Words (identifiers, keywords, numbers) are lexed uniformly and classified
//! by the parsers in context; `#` starts a line comment; LF and CRLF are
//! both accepted.

use std::fmt;

use crate::diag::{Diagnostic, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// Identifier, keyword or number: `[A-Za-z0-9_.]+`.
    Word(String),
    /// Double-quoted string (no escape sequences).
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    Star,
    /// `:=`
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ne => f.write_str("`!=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

struct Lexer<'a> {
    file: &'a str,
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn here(&self) -> (u32, u32) {
        (self.line, self.col)
    }

    fn span(&self, start: (u32, u32)) -> SourceSpan {
        SourceSpan::new(self.file, start, self.here())
    }
}

/// Tokenizes `src`; fails fast on the first lexical error.
pub fn lex(file: &str, src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut lx = Lexer { file, chars: src.chars().peekable(), line: 1, col: 1 };
    let mut out = Vec::new();

    while let Some(&c) = lx.chars.peek() {
        let start = lx.here();
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                lx.bump();
            }
            '#' => {
                while let Some(&c) = lx.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    lx.bump();
                }
            }
            '"' => {
                lx.bump();
                let mut s = String::new();
                loop {
                    match lx.bump() {
                        Some('"') => break,
                        Some('\n') | None => {
                            return Err(Diagnostic::error(
                                "unterminated string literal",
                                lx.span(start),
                            ));
                        }
                        Some(c) => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), span: lx.span(start) });
            }
            c if is_word_char(c) => {
                let mut w = String::new();
                while let Some(&c) = lx.chars.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    w.push(c);
                    lx.bump();
                }
                out.push(Token { tok: Tok::Word(w), span: lx.span(start) });
            }
            _ => {
                lx.bump();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '*' => Tok::Star,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    ':' => {
                        if lx.chars.peek() == Some(&'=') {
                            lx.bump();
                            Tok::Assign
                        } else {
                            Tok::Colon
                        }
                    }
                    '=' => Tok::Eq,
                    '<' => {
                        if lx.chars.peek() == Some(&'=') {
                            lx.bump();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if lx.chars.peek() == Some(&'=') {
                            lx.bump();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    '!' => {
                        if lx.chars.peek() == Some(&'=') {
                            lx.bump();
                            Tok::Ne
                        } else {
                            return Err(Diagnostic::error(
                                "unexpected `!` (did you mean `!=` or `NOT`?)",
                                lx.span(start),
                            ));
                        }
                    }
                    other => {
                        return Err(Diagnostic::error(
                            format!("unexpected character `{other}`"),
                            lx.span(start),
                        ));
                    }
                };
                out.push(Token { tok, span: lx.span(start) });
            }
        }
    }
    Ok(out)
}
