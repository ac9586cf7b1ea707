//! Hand-rolled lexer. Nothing fancy: the language fits in one screen.

use super::ast::Span;
use super::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    /// `#word` pragma introducer.
    Hash(String),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Caret,
    Amp,
    Pipe,
    Plus,
    Minus,
    Star,
    At,
    Tilde,
    Shl,
    Shr,
    DotDot,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Hash(s) => write!(f, "`#{s}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Caret => write!(f, "`^`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::At => write!(f, "`@`"),
            Tok::Tilde => write!(f, "`~`"),
            Tok::Shl => write!(f, "`<<`"),
            Tok::Shr => write!(f, "`>>`"),
            Tok::DotDot => write!(f, "`..`"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpannedTok {
    pub tok: Tok,
    pub span: Span,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

/// Identifier continuation allows `'` so share names like `x'` read
/// naturally.
fn is_ident_cont(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

pub fn lex(src: &str) -> Result<Vec<SpannedTok>, Diagnostic> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    loop {
        let span = Span { line, col };
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                match chars.peek() {
                    Some('/') => {
                        while let Some(&c) = chars.peek() {
                            if c == '\n' {
                                break;
                            }
                            bump!();
                        }
                    }
                    Some('*') => {
                        bump!();
                        let mut closed = false;
                        while let Some(c) = bump!() {
                            if c == '*' && chars.peek() == Some(&'/') {
                                bump!();
                                closed = true;
                                break;
                            }
                        }
                        if !closed {
                            return Err(Diagnostic::new(span, "unterminated block comment"));
                        }
                    }
                    _ => {
                        return Err(Diagnostic::new(
                            span,
                            "unknown operator `/`: the operator set is ^ & | @ + - * ~ << >>",
                        ))
                    }
                }
            }
            '#' => {
                bump!();
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphabetic() {
                        word.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if word.is_empty() {
                    return Err(Diagnostic::new(span, "`#` must introduce a pragma word"));
                }
                out.push(SpannedTok {
                    tok: Tok::Hash(word),
                    span,
                });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\n') | None => {
                            return Err(Diagnostic::new(span, "unterminated string literal"))
                        }
                        Some(c) => s.push(c),
                    }
                }
                out.push(SpannedTok {
                    tok: Tok::Str(s),
                    span,
                });
            }
            '0'..='9' => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let v = if let Some(hex) = text.strip_prefix("0x").or(text.strip_prefix("0X")) {
                    i64::from_str_radix(hex, 16)
                } else {
                    text.parse()
                };
                match v {
                    Ok(v) => out.push(SpannedTok {
                        tok: Tok::Int(v),
                        span,
                    }),
                    Err(_) => {
                        return Err(Diagnostic::new(span, format!("malformed number `{text}`")))
                    }
                }
            }
            c if is_ident_start(c) => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if is_ident_cont(c) {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(SpannedTok {
                    tok: Tok::Ident(text),
                    span,
                });
            }
            '<' => {
                bump!();
                if chars.peek() == Some(&'<') {
                    bump!();
                    out.push(SpannedTok {
                        tok: Tok::Shl,
                        span,
                    });
                } else {
                    return Err(Diagnostic::new(span, "unknown operator `<`"));
                }
            }
            '>' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push(SpannedTok {
                        tok: Tok::Shr,
                        span,
                    });
                } else {
                    return Err(Diagnostic::new(span, "unknown operator `>`"));
                }
            }
            '.' => {
                bump!();
                if chars.peek() == Some(&'.') {
                    bump!();
                    out.push(SpannedTok {
                        tok: Tok::DotDot,
                        span,
                    });
                } else {
                    return Err(Diagnostic::new(span, "stray `.`"));
                }
            }
            _ => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '=' => Tok::Eq,
                    '^' => Tok::Caret,
                    '&' => Tok::Amp,
                    '|' => Tok::Pipe,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '@' => Tok::At,
                    '~' => Tok::Tilde,
                    other => {
                        return Err(Diagnostic::new(
                            span,
                            format!("unexpected character `{other}`"),
                        ))
                    }
                };
                bump!();
                out.push(SpannedTok { tok, span });
            }
        }
    }
    Ok(out)
}
