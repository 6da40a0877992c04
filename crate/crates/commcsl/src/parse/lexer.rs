//! Hand-rolled lexer for programs, specification files, assertions, and
//! annotation lines.
//!
//! Newlines are significant (they separate statements and spec clauses), so
//! the lexer emits them as tokens; parsers skip them where the grammar
//! allows. `//@` lines become [`Tok::Annot`] tokens carrying their text;
//! ordinary `//` comments are dropped.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Int(i64),
    Ident(String),
    /// Content of a `//@ ...` annotation line, trimmed.
    Annot(String),
    Newline,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    /// `{|`
    LMs,
    /// `|}`
    RMs,
    Comma,
    Semi,
    Colon,
    /// `::`
    ColonColon,
    /// `:=`
    Assign,
    /// `->`
    Arrow,
    /// `==>`
    Implies,
    /// `==`
    EqEq,
    /// `=`
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    Plus,
    /// `++`
    PlusPlus,
    Minus,
    Star,
    /// `**`
    StarStar,
    Slash,
    Bang,
    AndAnd,
    OrOr,
    Question,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Annot(_) => write!(f, "annotation"),
            Tok::Newline => write!(f, "end of line"),
            Tok::Eof => write!(f, "end of input"),
            other => {
                let s = match other {
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::LBrace => "{",
                    Tok::RBrace => "}",
                    Tok::LMs => "{|",
                    Tok::RMs => "|}",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Colon => ":",
                    Tok::ColonColon => "::",
                    Tok::Assign => ":=",
                    Tok::Arrow => "->",
                    Tok::Implies => "==>",
                    Tok::EqEq => "==",
                    Tok::Eq => "=",
                    Tok::Ne => "!=",
                    Tok::Le => "<=",
                    Tok::Lt => "<",
                    Tok::Ge => ">=",
                    Tok::Gt => ">",
                    Tok::Plus => "+",
                    Tok::PlusPlus => "++",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::StarStar => "**",
                    Tok::Slash => "/",
                    Tok::Bang => "!",
                    Tok::AndAnd => "&&",
                    Tok::OrOr => "||",
                    Tok::Question => "?",
                    _ => unreachable!(),
                };
                write!(f, "{s}")
            }
        }
    }
}

/// A token with its 1-based source position.
#[derive(Debug, Clone, PartialEq)]
pub struct SpannedTok {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

/// Words that cannot be used as variable names.
pub const RESERVED: &[&str] = &[
    "if", "else", "while", "skip", "atomic", "alloc", "let", "in", "true", "false", "exists",
    "emp", "fst", "snd", "len", "card", "dom", "tail", "take", "toms", "sum", "union", "diff",
    "low", "acc", "sguard", "uguard", "allpre", "noguard",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name)
}

pub fn lex(src: &str) -> Result<Vec<SpannedTok>, ParseError> {
    let mut toks = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            toks.push(SpannedTok {
                tok: $tok,
                line,
                col,
            });
            i += $len;
            col += $len as u32;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i] as char;
        let rest = &src[i..];
        match c {
            '\n' => {
                toks.push(SpannedTok {
                    tok: Tok::Newline,
                    line,
                    col,
                });
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if rest.starts_with("//") => {
                let end = rest.find('\n').map(|p| i + p).unwrap_or(bytes.len());
                let comment = &src[i..end];
                if let Some(body) = comment.strip_prefix("//@") {
                    toks.push(SpannedTok {
                        tok: Tok::Annot(body.trim().to_string()),
                        line,
                        col,
                    });
                }
                col += (end - i) as u32;
                i = end;
            }
            '0'..='9' => {
                let len = rest
                    .find(|ch: char| !ch.is_ascii_digit())
                    .unwrap_or(rest.len());
                let text = &rest[..len];
                let n: i64 = text.parse().map_err(|_| ParseError {
                    line,
                    col,
                    message: format!("integer literal {text} out of range"),
                })?;
                push!(Tok::Int(n), len);
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let len = rest
                    .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                    .unwrap_or(rest.len());
                push!(Tok::Ident(rest[..len].to_string()), len);
            }
            _ => {
                let (tok, len) = if rest.starts_with("==>") {
                    (Tok::Implies, 3)
                } else if rest.starts_with("==") {
                    (Tok::EqEq, 2)
                } else if rest.starts_with("!=") {
                    (Tok::Ne, 2)
                } else if rest.starts_with("<=") {
                    (Tok::Le, 2)
                } else if rest.starts_with(">=") {
                    (Tok::Ge, 2)
                } else if rest.starts_with(":=") {
                    (Tok::Assign, 2)
                } else if rest.starts_with("::") {
                    (Tok::ColonColon, 2)
                } else if rest.starts_with("->") {
                    (Tok::Arrow, 2)
                } else if rest.starts_with("++") {
                    (Tok::PlusPlus, 2)
                } else if rest.starts_with("**") {
                    (Tok::StarStar, 2)
                } else if rest.starts_with("&&") {
                    (Tok::AndAnd, 2)
                } else if rest.starts_with("{|") {
                    (Tok::LMs, 2)
                } else if rest.starts_with("|}") {
                    (Tok::RMs, 2)
                } else if rest.starts_with("||") {
                    (Tok::OrOr, 2)
                } else {
                    let tok = match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        ',' => Tok::Comma,
                        ';' => Tok::Semi,
                        ':' => Tok::Colon,
                        '=' => Tok::Eq,
                        '<' => Tok::Lt,
                        '>' => Tok::Gt,
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '!' => Tok::Bang,
                        '?' => Tok::Question,
                        other => {
                            return Err(ParseError {
                                line,
                                col,
                                message: format!("unexpected character {other:?}"),
                            })
                        }
                    };
                    (tok, 1)
                };
                push!(tok, len);
            }
        }
    }
    toks.push(SpannedTok {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src)
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .filter(|t| *t != Tok::Eof)
            .collect()
    }

    #[test]
    fn multichar_tokens() {
        assert_eq!(
            kinds("x := {|1|} ==> == = ++ ** || |}"),
            vec![
                Tok::Ident("x".into()),
                Tok::Assign,
                Tok::LMs,
                Tok::Int(1),
                Tok::RMs,
                Tok::Implies,
                Tok::EqEq,
                Tok::Eq,
                Tok::PlusPlus,
                Tok::StarStar,
                Tok::OrOr,
                Tok::RMs,
            ]
        );
    }

    #[test]
    fn comments_and_annotations() {
        let toks = kinds("x := 1 // plain comment\n//@ assert: low(x)\ny := 2");
        assert!(toks.contains(&Tok::Annot("assert: low(x)".into())));
        assert!(!toks.iter().any(|t| matches!(t, Tok::Ident(s) if s == "plain")));
    }

    #[test]
    fn positions_are_tracked() {
        let toks = lex("a\n  b").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[2].line, toks[2].col), (2, 3));
    }
}
