//! Variable masking: replaces a fraction of the variables a snippet binds
//! with fresh identifiers (`VAR0`, `VAR1`, ...).

pub mod parser;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Snippet;
use crate::error::{Error, Result};
use crate::lexer::{is_keyword, lex, Token, TokenKind};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub mask_fraction: f64,
    pub seed: u64,
    pub mask_prefix: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mask_fraction: 0.5,
            seed: 0,
            mask_prefix: "VAR".into(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::config(format!(
                "mask_fraction must be in [0, 1], got {}",
                self.mask_fraction
            )));
        }
        let mut chars = self.mask_prefix.chars();
        let ok = chars.next().is_some_and(|c| c == '_' || c.is_alphabetic())
            && chars.all(|c| c == '_' || c.is_alphanumeric());
        if !ok {
            return Err(Error::config(format!("mask prefix {:?} is not an identifier", self.mask_prefix)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    /// Bound variable names in first-occurrence order.
    pub variables: Vec<String>,
    /// False when the heuristic fallback was used.
    pub parsed: bool,
    pub warning: Option<String>,
    /// Lexer-token indices of keyword-argument labels.
    kwargs: HashSet<usize>,
}

/// True when `code` is inside the supported Python subset.
pub fn parses(code: &str) -> bool {
    parser::parse(code, &lex(code)).is_some()
}

fn after_dot(tokens: &[Token], code: &str, k: usize) -> bool {
    tokens[..k]
        .iter()
        .rev()
        .find(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Continuation | TokenKind::Comment))
        .is_some_and(|t| t.is_op(code, "."))
}

fn first_occurrence_order(code: &str, tokens: &[Token], names: &HashSet<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in tokens {
        if t.kind == TokenKind::Name {
            let s = t.text(code);
            if names.contains(s) && seen.insert(s) {
                out.push(s.to_string());
            }
        }
    }
    out
}

fn extract_with(code: &str, tokens: &[Token]) -> Extraction {
    if let Some(info) = parser::parse(code, tokens) {
        let names: HashSet<String> = info
            .bindings
            .iter()
            .map(|&i| tokens[i].text(code).to_string())
            .filter(|n| !info.imported.contains(n))
            .collect();
        return Extraction {
            variables: first_occurrence_order(code, tokens, &names),
            parsed: true,
            warning: None,
            kwargs: info.kwargs,
        };
    }

    // Fallback: `name =` at statement level, and `name=` inside a call as a
    // keyword label.
    let mut names = HashSet::new();
    let mut imported = HashSet::new();
    let mut kwargs = HashSet::new();
    let mut stack: Vec<&str> = Vec::new();
    let mut line_start = true;
    let mut line_first: Option<&str> = None;
    let mut prev_import = false;
    for (k, t) in tokens.iter().enumerate() {
        let text = t.text(code);
        match t.kind {
            TokenKind::Comment | TokenKind::Continuation => continue,
            TokenKind::Newline => {
                if stack.is_empty() {
                    line_start = true;
                    line_first = None;
                }
                continue;
            }
            _ => {}
        }
        if line_start {
            line_first = Some(text);
            line_start = false;
        }
        let next = tokens.get(k + 1).map(|n| n.text(code));
        if t.kind == TokenKind::Name && !is_keyword(text) && next == Some("=") {
            if stack.is_empty() {
                names.insert(text.to_string());
            } else if stack.last() == Some(&"(") {
                kwargs.insert(k);
            }
        }
        if matches!(line_first, Some("import") | Some("from")) && t.kind == TokenKind::Name && prev_import {
            imported.insert(text.to_string());
        }
        prev_import = matches!(text, "import" | "as" | ",") && matches!(line_first, Some("import") | Some("from"));
        if t.kind == TokenKind::Op {
            match text {
                "(" | "[" | "{" => stack.push(text),
                ")" | "]" | "}" => {
                    stack.pop();
                }
                _ => {}
            }
        }
    }
    names.retain(|n| !imported.contains(n));
    Extraction {
        variables: first_occurrence_order(code, tokens, &names),
        parsed: false,
        warning: Some("snippet does not parse; variables taken from statement-level assignments".into()),
        kwargs,
    }
}

pub fn extract_variables(code: &str) -> Extraction {
    extract_with(code, &lex(code))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masked {
    pub code: String,
    /// Original name to mask, in mask order.
    pub mapping: BTreeMap<String, String>,
    pub parsed: bool,
    pub warning: Option<String>,
}

/// Replaces `⌈fraction · n⌉` randomly chosen variables by distinct masks at
/// every whole-word identifier occurrence, leaving attribute names,
/// keyword-argument labels and string contents untouched.
pub fn mask_variables(code: &str, cfg: &AugmentConfig) -> Result<Masked> {
    cfg.validate()?;
    let tokens = lex(code);
    let ex = extract_with(code, &tokens);
    let n = ex.variables.len();
    let k = ((cfg.mask_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut pool: Vec<usize> = (0..n).collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut chosen: Vec<usize> = pool[..k.min(n)].to_vec();
    chosen.sort_unstable();

    let existing: HashSet<&str> = tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Name)
        .map(|t| t.text(code))
        .collect();
    let mut mapping: HashMap<&str, String> = HashMap::new();
    let mut next = 0usize;
    for &v in &chosen {
        let mask = loop {
            let m = format!("{}{next}", cfg.mask_prefix);
            next += 1;
            if !existing.contains(m.as_str()) {
                break m;
            }
        };
        mapping.insert(ex.variables[v].as_str(), mask);
    }

    let mut out = String::with_capacity(code.len());
    let mut last = 0;
    for (k, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Name || ex.kwargs.contains(&k) || after_dot(&tokens, code, k) {
            continue;
        }
        if let Some(mask) = mapping.get(t.text(code)) {
            out.push_str(&code[last..t.start]);
            out.push_str(mask);
            last = t.end;
        }
    }
    out.push_str(&code[last..]);
    Ok(Masked {
        code: out,
        mapping: mapping.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        parsed: ex.parsed,
        warning: ex.warning,
    })
}

/// Masked copies of every snippet (`copies` per original), with ids
/// `<id>#aug<k>` and `source_id` pointing back at the original. Originals
/// are not included.
pub fn augment_snippets(snippets: &[Snippet], cfg: &AugmentConfig, copies: usize) -> Result<Vec<Snippet>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..snippets.len())
        .flat_map(|i| (0..copies).map(move |c| (i, c)))
        .collect();
    let out = par::map(&jobs, |&(i, c)| {
        let s = &snippets[i];
        let local = AugmentConfig {
            seed: par::mix_seed(cfg.seed, (i * copies + c) as u64),
            ..cfg.clone()
        };
        let masked = mask_variables(&s.code, &local)?;
        if let Some(w) = &masked.warning {
            log::debug!("{}: {w}", s.id);
        }
        Ok(Snippet {
            id: format!("{}#aug{c}", s.id),
            code: masked.code,
            source_id: Some(s.id.clone()),
            ..s.clone()
        })
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(code: &str) -> String {
        mask_variables(
            code,
            &AugmentConfig {
                mask_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap()
        .code
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_variables("x = 1\ny = x + 2").variables, vec!["x", "y"]);
        assert!(extract_variables("import pandas as pd\npd.read_csv(f)").variables.is_empty());
        assert!(extract_variables("df.drop('Date', axis=1)").variables.is_empty());
    }

    #[test]
    fn masking_examples() {
        assert_eq!(full("x = 1\ny = x + 2"), "VAR0 = 1\nVAR1 = VAR0 + 2");
        assert_eq!(full("s = 'x'\nx = 2"), "VAR0 = 'x'\nVAR1 = 2");
        let code = "x = 1\ny = x + 2";
        let zero = AugmentConfig {
            mask_fraction: 0.0,
            ..Default::default()
        };
        assert_eq!(mask_variables(code, &zero).unwrap().code, code);
    }

    #[test]
    fn attributes_and_keywords_survive() {
        let code = "axis = 0\ndf = df.drop('a', axis=axis)\nr = df.axis";
        assert_eq!(full(code), "VAR0 = 0\nVAR1 = VAR1.drop('a', axis=VAR0)\nVAR2 = VAR1.axis");
    }

    #[test]
    fn existing_mask_names_are_skipped() {
        assert_eq!(full("VAR0 = 1\nx = VAR0"), "VAR1 = 1\nVAR2 = VAR1");
    }

    #[test]
    fn fallback_for_magics() {
        let code = "!pip install lib\ndata = load()\nres = f(data, key=1)";
        let m = mask_variables(
            code,
            &AugmentConfig {
                mask_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!m.parsed);
        assert!(m.warning.is_some());
        assert_eq!(m.code, "!pip install lib\nVAR0 = load()\nVAR1 = f(VAR0, key=1)");
    }

    #[test]
    fn fraction_rounds_up() {
        let code = "a = 1\nb = 2\nc = 3";
        let m = mask_variables(
            code,
            &AugmentConfig {
                mask_fraction: 0.34,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.mapping.len(), 2);
        assert!(parses(&m.code));
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig { mask_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(AugmentConfig { mask_prefix: "1x".into(), ..Default::default() }.validate().is_err());
    }
}
