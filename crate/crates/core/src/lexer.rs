//! A lenient lexer for Python-like source.
//!
//! It never fails: anything it cannot classify becomes an `Unknown` token and
//! unterminated strings are marked as such. Tokens carry byte spans into the
//! original text so callers can rewrite the source in place.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    Str { terminated: bool, triple: bool },
    Op,
    Comment,
    /// A physical `\n`.
    Newline,
    /// Backslash line continuation.
    Continuation,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_op(&self, src: &str, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text(src) == op
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

const OPS3: &[&str] = &["**=", "//=", ">>=", "<<=", "...", "!="];
const OPS2: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "<<", ">>", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
    "^=", "@=", "->", ":=",
];
const OPS1: &[u8] = b"+-*/%@&|^~<>()[]{},:;.=";

const STRING_PREFIXES: &[&str] = &[
    "r", "u", "b", "f", "br", "rb", "fr", "rf", "R", "U", "B", "F", "Br", "bR", "BR", "rB", "Rb",
    "RB", "Fr", "fR", "FR", "rF", "Rf", "RF",
];

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

pub fn lex(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | 0x0c => {
                i += 1;
                continue;
            }
            b'\n' => {
                i += 1;
                tokens.push(Token {
                    kind: TokenKind::Newline,
                    start,
                    end: i,
                });
                continue;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Comment,
                    start,
                    end: i,
                });
                continue;
            }
            b'\\' => {
                let mut j = i + 1;
                if j < bytes.len() && bytes[j] == b'\r' {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'\n' {
                    tokens.push(Token {
                        kind: TokenKind::Continuation,
                        start,
                        end: j + 1,
                    });
                    i = j + 1;
                } else {
                    i += 1;
                    tokens.push(Token {
                        kind: TokenKind::Unknown,
                        start,
                        end: i,
                    });
                }
                continue;
            }
            b'"' | b'\'' => {
                let (end, kind) = scan_string(bytes, i);
                tokens.push(Token { kind, start, end });
                i = end;
                continue;
            }
            b'0'..=b'9' => {
                i = scan_number(bytes, i);
                tokens.push(Token {
                    kind: TokenKind::Number,
                    start,
                    end: i,
                });
                continue;
            }
            b'.' if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() => {
                i = scan_number(bytes, i);
                tokens.push(Token {
                    kind: TokenKind::Number,
                    start,
                    end: i,
                });
                continue;
            }
            _ => {}
        }

        let c = src[i..].chars().next().expect("char boundary");
        if is_ident_start(c) {
            let mut j = i;
            for ch in src[i..].chars() {
                if is_ident_continue(ch) {
                    j += ch.len_utf8();
                } else {
                    break;
                }
            }
            let word = &src[i..j];
            if j < bytes.len()
                && (bytes[j] == b'"' || bytes[j] == b'\'')
                && STRING_PREFIXES.contains(&word)
            {
                let (end, kind) = scan_string(bytes, j);
                tokens.push(Token { kind, start, end });
                i = end;
            } else {
                tokens.push(Token {
                    kind: TokenKind::Name,
                    start,
                    end: j,
                });
                i = j;
            }
            continue;
        }

        let rest = &src[i..];
        let op_len = OPS3
            .iter()
            .find(|op| rest.starts_with(**op))
            .map(|op| op.len())
            .or_else(|| {
                OPS2.iter()
                    .find(|op| rest.starts_with(**op))
                    .map(|op| op.len())
            })
            .or_else(|| OPS1.contains(&b).then_some(1));
        match op_len {
            Some(n) => {
                i += n;
                tokens.push(Token {
                    kind: TokenKind::Op,
                    start,
                    end: i,
                });
            }
            None => {
                i += c.len_utf8();
                tokens.push(Token {
                    kind: TokenKind::Unknown,
                    start,
                    end: i,
                });
            }
        }
    }
    tokens
}

/// Scans a string literal whose opening quote is at `i`. Returns the end
/// offset and the token kind. Single-quoted strings stop at an unescaped
/// newline and are then unterminated; triple-quoted ones run to end of input.
fn scan_string(bytes: &[u8], i: usize) -> (usize, TokenKind) {
    let q = bytes[i];
    let triple = i + 2 < bytes.len() && bytes[i + 1] == q && bytes[i + 2] == q;
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < bytes.len() {
        let b = bytes[j];
        if b == b'\\' {
            j += 2;
            continue;
        }
        if triple {
            if b == q && bytes.get(j + 1) == Some(&q) && bytes.get(j + 2) == Some(&q) {
                return (
                    j + 3,
                    TokenKind::Str {
                        terminated: true,
                        triple,
                    },
                );
            }
        } else if b == q {
            return (
                j + 1,
                TokenKind::Str {
                    terminated: true,
                    triple,
                },
            );
        } else if b == b'\n' {
            return (
                j,
                TokenKind::Str {
                    terminated: false,
                    triple,
                },
            );
        }
        j += 1;
    }
    (
        bytes.len(),
        TokenKind::Str {
            terminated: false,
            triple,
        },
    )
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    let mut prev = 0u8;
    while i < bytes.len() {
        let b = bytes[i];
        let ok = b.is_ascii_alphanumeric()
            || b == b'_'
            || b == b'.'
            || ((b == b'+' || b == b'-') && (prev == b'e' || prev == b'E'));
        if !ok {
            break;
        }
        prev = b;
        i += 1;
    }
    i
}
