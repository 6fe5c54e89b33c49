//! Deterministic code cleanup applied before tokenization.
//!
//! Two passes: comment removal, then a small canonical style (tab expansion
//! in indentation, blank-line collapsing, trailing whitespace, single spaces
//! around top-level binary operators). Both are lenient and never fail.

use serde::{Deserialize, Serialize};

use crate::lexer::{is_keyword, lex, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    pub strip_comments: bool,
    pub collapse_blank_lines: bool,
    pub normalize_indent_spaces: usize,
    pub normalize_operator_spacing: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            strip_comments: true,
            collapse_blank_lines: true,
            normalize_indent_spaces: 4,
            normalize_operator_spacing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Removes `#` comments outside string literals, trimming the whitespace the
/// removal leaves behind. Line count is preserved. After an unterminated
/// string literal nothing more is stripped.
pub fn strip_comments(code: &str) -> Stripped {
    let tokens = lex(code);
    let mut warnings = Vec::new();
    let cutoff = tokens
        .iter()
        .find(|t| matches!(t.kind, TokenKind::Str { terminated: false, .. }))
        .map(|t| {
            warnings.push(format!(
                "unterminated string literal at line {}; comments kept from there on",
                line_of(code, t.start)
            ));
            t.start
        })
        .unwrap_or(usize::MAX);

    let bytes = code.as_bytes();
    let mut out = String::with_capacity(code.len());
    let mut copied = 0;
    for t in tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Comment && t.start < cutoff)
    {
        let mut cut = t.start;
        while cut > copied && matches!(bytes[cut - 1], b' ' | b'\t') {
            cut -= 1;
        }
        out.push_str(&code[copied..cut]);
        copied = t.end;
    }
    out.push_str(&code[copied..]);
    Stripped {
        text: out,
        warnings,
    }
}

fn line_of(code: &str, offset: usize) -> usize {
    code[..offset].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Full normalization: optional comment stripping followed by style fixes.
pub fn normalize(code: &str, cfg: &NormalizeConfig) -> String {
    if cfg.strip_comments {
        normalize_style(&strip_comments(code).text, cfg)
    } else {
        normalize_style(code, cfg)
    }
}

struct LineInfo {
    start: usize,
    end: usize,
    starts_in_string: bool,
    ends_in_string: bool,
    starts_at_depth_zero: bool,
    after_continuation: bool,
}

fn line_infos(code: &str, tokens: &[Token]) -> Vec<LineInfo> {
    let mut infos = Vec::new();
    let mut start = 0;
    for (i, b) in code.bytes().enumerate() {
        if b == b'\n' {
            infos.push((start, i));
            start = i + 1;
        }
    }
    infos.push((start, code.len()));

    // Depth and continuation state at each newline offset.
    let mut depth: i64 = 0;
    let mut newline_state = std::collections::HashMap::new();
    let mut string_spans = Vec::new();
    for t in tokens {
        match t.kind {
            TokenKind::Op => match t.text(code) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            },
            TokenKind::Newline => {
                newline_state.insert(t.start, (depth, false));
            }
            TokenKind::Continuation => {
                newline_state.insert(t.end - 1, (depth, true));
            }
            TokenKind::Str { .. } => string_spans.push((t.start, t.end)),
            _ => {}
        }
    }
    let inside_string = |pos: usize| string_spans.iter().any(|&(s, e)| s < pos && pos < e);

    let mut out = Vec::with_capacity(infos.len());
    let mut prev_newline: Option<usize> = None;
    for (start, end) in infos {
        let (starts_in_string, starts_at_depth_zero, after_continuation) = match prev_newline {
            None => (false, true, false),
            Some(nl) => {
                let in_str = inside_string(nl);
                let (d, cont) = newline_state.get(&nl).copied().unwrap_or((0, false));
                (in_str, d == 0, cont)
            }
        };
        let ends_in_string = end < code.len() && inside_string(end);
        out.push(LineInfo {
            start,
            end,
            starts_in_string,
            ends_in_string,
            starts_at_depth_zero,
            after_continuation,
        });
        prev_newline = Some(end);
    }
    out
}

/// Canonical style. Idempotent; the identity on already-canonical text.
pub fn normalize_style(code: &str, cfg: &NormalizeConfig) -> String {
    let tokens = lex(code);
    let infos = line_infos(code, &tokens);
    let indent = " ".repeat(cfg.normalize_indent_spaces.max(1));

    let mut lines: Vec<String> = Vec::with_capacity(infos.len());
    let mut blank: Vec<bool> = Vec::with_capacity(infos.len());
    let mut tok_idx = 0;
    for info in &infos {
        while tok_idx < tokens.len() && tokens[tok_idx].start < info.start {
            tok_idx += 1;
        }
        let line_tokens: Vec<Token> = tokens[tok_idx..]
            .iter()
            .take_while(|t| t.start < info.end)
            .filter(|t| t.kind != TokenKind::Newline)
            .copied()
            .collect();

        let raw = &code[info.start..info.end];
        let mut line = if cfg.normalize_operator_spacing
            && !info.starts_in_string
            && info.starts_at_depth_zero
            && !info.after_continuation
            && !info.ends_in_string
            && is_simple_statement(code, &line_tokens, info.end)
        {
            space_operators(code, &line_tokens, info.start, info.end)
        } else {
            raw.to_string()
        };

        if !info.starts_in_string {
            let ws_len = line.len() - line.trim_start_matches([' ', '\t']).len();
            if line[..ws_len].contains('\t') {
                let expanded = line[..ws_len].replace('\t', &indent);
                line = format!("{expanded}{}", &line[ws_len..]);
            }
        }
        if !info.ends_in_string {
            let trimmed = line.trim_end_matches([' ', '\t', '\r']).len();
            // Trimming must not turn "\ " into a line continuation.
            if !line[..trimmed].ends_with('\\') {
                line.truncate(trimmed);
            }
        }
        blank.push(!info.starts_in_string && line.is_empty());
        lines.push(line);
    }

    let mut out = String::with_capacity(code.len());
    let mut prev_blank = false;
    let mut first = true;
    for (line, is_blank) in lines.iter().zip(blank) {
        if cfg.collapse_blank_lines && is_blank && prev_blank {
            continue;
        }
        if !first {
            out.push('\n');
        }
        out.push_str(line);
        first = false;
        prev_blank = is_blank;
    }
    out
}

const COMPOUND_STARTS: &[&str] = &[
    "def", "class", "if", "elif", "else", "for", "while", "with", "try", "except", "finally",
    "async", "match", "case",
];

fn is_simple_statement(code: &str, toks: &[Token], line_end: usize) -> bool {
    let Some(first) = toks.first() else {
        return false;
    };
    let first_text = first.text(code);
    let starts_ok = match first.kind {
        TokenKind::Name => !COMPOUND_STARTS.contains(&first_text),
        TokenKind::Number | TokenKind::Str { .. } => true,
        TokenKind::Op => matches!(first_text, "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
        _ => false,
    };
    if !starts_ok {
        return false;
    }
    let mut depth = 0i64;
    let mut last_sig: Option<&Token> = None;
    for t in toks {
        match t.kind {
            TokenKind::Unknown | TokenKind::Continuation => return false,
            TokenKind::Str { terminated, .. } => {
                if !terminated || t.end > line_end {
                    return false;
                }
            }
            TokenKind::Op => match t.text(code) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                _ => {}
            },
            _ => {}
        }
        if t.kind != TokenKind::Comment {
            last_sig = Some(t);
        }
    }
    depth == 0 && !last_sig.map(|t| t.is_op(code, ":")).unwrap_or(false)
}

const SPACED_ALWAYS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "//=", "%=", "**=", "@=", "&=", "|=", "^=", ">>=", "<<=", "==",
    "!=", "<=", ">=", "<", ">",
];
const SPACED_IF_BINARY: &[&str] = &["+", "-", "*", "/", "//", "%", "**", "@", "&", "|", "^", "<<", ">>"];

fn is_operand_end(code: &str, t: &Token) -> bool {
    match t.kind {
        TokenKind::Name => {
            let w = t.text(code);
            !is_keyword(w) || matches!(w, "True" | "False" | "None")
        }
        TokenKind::Number | TokenKind::Str { .. } => true,
        TokenKind::Op => matches!(t.text(code), ")" | "]" | "}"),
        _ => false,
    }
}

fn space_operators(code: &str, toks: &[Token], start: usize, end: usize) -> String {
    let mut depth = 0i64;
    // force[i]: gap before token i becomes a single space.
    let mut force = vec![false; toks.len() + 1];
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Op {
            continue;
        }
        let text = t.text(code);
        match text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        if depth != 0 || i == 0 || i + 1 >= toks.len() || toks[i + 1].kind == TokenKind::Comment {
            continue;
        }
        let binary = SPACED_ALWAYS.contains(&text)
            || (SPACED_IF_BINARY.contains(&text) && is_operand_end(code, &toks[i - 1]));
        if binary {
            force[i] = true;
            force[i + 1] = true;
        }
    }
    let mut out = String::with_capacity(end - start + 8);
    let mut cursor = start;
    for (i, t) in toks.iter().enumerate() {
        if i > 0 && force[i] {
            out.push(' ');
        } else {
            out.push_str(&code[cursor..t.start]);
        }
        out.push_str(t.text(code));
        cursor = t.end;
    }
    out.push_str(&code[cursor..end]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> NormalizeConfig {
        NormalizeConfig::default()
    }

    #[test]
    fn strips_trailing_comment() {
        assert_eq!(strip_comments("x = 1 # set x").text, "x = 1");
    }

    #[test]
    fn hash_inside_string_kept() {
        let src = "s = \"#not a comment\"";
        assert_eq!(strip_comments(src).text, src);
    }

    #[test]
    fn triple_quoted_hash_kept() {
        assert_eq!(
            strip_comments("'''a # b'''\ny=1 # c").text,
            "'''a # b'''\ny=1"
        );
    }

    #[test]
    fn comment_only_line_keeps_line_count() {
        let out = strip_comments("    # header\nx = 1\n").text;
        assert_eq!(out, "\nx = 1\n");
    }

    #[test]
    fn unterminated_string_disables_stripping() {
        let r = strip_comments("a = 1 # one\ns = 'oops # two\nb = 2 # three");
        assert_eq!(r.text, "a = 1\ns = 'oops # two\nb = 2 # three");
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn operator_spacing() {
        assert_eq!(normalize_style("x=1", &cfg()), "x = 1");
        assert_eq!(normalize_style("y  =x+ -2", &cfg()), "y = x + -2");
        assert_eq!(normalize_style("f(a=1, b=c+d)", &cfg()), "f(a=1, b=c+d)");
        assert_eq!(normalize_style("a, *b = c", &cfg()), "a, *b = c");
        assert_eq!(normalize_style("from m import *", &cfg()), "from m import *");
        assert_eq!(normalize_style("if x==1:", &cfg()), "if x==1:");
        assert_eq!(normalize_style("!pip install a-b", &cfg()), "!pip install a-b");
    }

    #[test]
    fn tab_expansion() {
        assert_eq!(normalize_style("\tx = 1", &cfg()), "    x = 1");
        let two = NormalizeConfig {
            normalize_indent_spaces: 2,
            ..cfg()
        };
        assert_eq!(normalize_style("\t\tx = 1", &two), "    x = 1");
    }

    #[test]
    fn blank_lines_collapse_outside_strings() {
        assert_eq!(normalize_style("a = 1\n\n\n\nb = 2", &cfg()), "a = 1\n\nb = 2");
        let s = "s = '''x\n\n\n'''";
        assert_eq!(normalize_style(s, &cfg()), s);
    }

    #[test]
    fn canonical_input_is_identity() {
        let src = "import pandas as pd\n\ndf = pd.read_csv('a.csv')\nfor i in range(3):\n    print(df.head(i), end='')\n";
        assert_eq!(normalize(src, &cfg()), src);
    }

    #[test]
    fn multiline_call_untouched() {
        let src = "rfr = Model(\n    n=200,\n    depth=5\n)\nrfr.fit(x,y)";
        assert_eq!(normalize(src, &cfg()), src);
    }

    fn pythonish() -> impl Strategy<Value = String> {
        let atoms = prop::sample::select(vec![
            "x", "y1", "df", "=", "==", "+", "-", "*", "**", "(", ")", "[", "]", ":", ",", " ",
            "  ", "\t", "\n", "\n\n\n", "#", "# c", "'", "\"", "'''", "1", "2.5", "if", "def",
            "import", "\\\n", "!", ".", "lambda", "{", "}", "+=", "<",
        ]);
        prop::collection::vec(atoms, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(src in pythonish()) {
            let once = normalize(&src, &cfg());
            let twice = normalize(&once, &cfg());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn strip_never_touches_strings(src in pythonish()) {
            let out = strip_comments(&src).text;
            let before: Vec<String> = lex(&src).iter()
                .filter(|t| matches!(t.kind, TokenKind::Str { terminated: true, .. }))
                .map(|t| t.text(&src).to_string()).collect();
            let after: Vec<String> = lex(&out).iter()
                .filter(|t| matches!(t.kind, TokenKind::Str { terminated: true, .. }))
                .map(|t| t.text(&out).to_string()).collect();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn strip_preserves_line_count(src in pythonish()) {
            let out = strip_comments(&src).text;
            prop_assert_eq!(src.matches('\n').count(), out.matches('\n').count());
        }
    }
}
