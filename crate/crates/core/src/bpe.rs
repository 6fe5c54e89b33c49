//! Byte-pair encoding with BPE-dropout.
//!
//! Text is pre-split on ASCII whitespace. Each word becomes a sequence of
//! byte symbols whose last symbol carries an end-of-word flag (shown as `⟂`).
//! A single space between two words is implied by that flag; any other
//! whitespace is emitted as explicit single-byte whitespace tokens, which makes
//! `decode(encode(x)) == x` for every text over known symbols.
//!
//! Training is greedy: the most frequent adjacent pair (ties broken by the
//! smaller `(left, right)` symbol pair) is merged until the vocabulary target
//! is reached or no pair occurs at least twice. Pairs are counted at every
//! adjacent position; merges are applied left to right without overlap.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VOCAB_SIZE: usize = 30_000;
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const UNK_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const SPECIAL_TOKENS: [&str; 2] = ["⟨unk⟩", "⟨pad⟩"];
const EOW: &str = "⟂";
const FORMAT_HEADER: &str = "codesem-bpe v1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub bytes: Vec<u8>,
    pub eow: bool,
}

impl Symbol {
    fn byte(b: u8, eow: bool) -> Self {
        Symbol {
            bytes: vec![b],
            eow,
        }
    }

    fn concat(left: &Symbol, right: &Symbol) -> Symbol {
        let mut bytes = left.bytes.clone();
        bytes.extend_from_slice(&right.bytes);
        Symbol {
            bytes,
            eow: right.eow,
        }
    }

    pub fn is_whitespace(&self) -> bool {
        !self.eow && self.bytes.len() == 1 && self.bytes[0].is_ascii_whitespace()
    }

    /// Printable, unambiguous form: printable ASCII verbatim, other bytes
    /// as `\xHH`, backslash doubled, `⟂` suffix for end of word.
    pub fn display(&self) -> String {
        let mut s = String::with_capacity(self.bytes.len() + 3);
        for &b in &self.bytes {
            match b {
                b'\\' => s.push_str("\\\\"),
                0x21..=0x7e => s.push(b as char),
                _ => {
                    let _ = write!(s, "\\x{b:02x}");
                }
            }
        }
        if self.eow {
            s.push_str(EOW);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Symbol> {
        let bad = || Error::config(format!("malformed token {text:?}"));
        let (body, eow) = match text.strip_suffix(EOW) {
            Some(b) => (b, true),
            None => (text, false),
        };
        let raw = body.as_bytes();
        let mut bytes = Vec::with_capacity(raw.len());
        let mut i = 0;
        while i < raw.len() {
            match raw[i] {
                b'\\' if raw.get(i + 1) == Some(&b'\\') => {
                    bytes.push(b'\\');
                    i += 2;
                }
                b'\\' if raw.get(i + 1) == Some(&b'x') => {
                    let hex = body.get(i + 2..i + 4).ok_or_else(bad)?;
                    bytes.push(u8::from_str_radix(hex, 16).map_err(|_| bad())?);
                    i += 4;
                }
                b @ 0x21..=0x7e if b != b'\\' => {
                    bytes.push(b);
                    i += 1;
                }
                _ => return Err(bad()),
            }
        }
        if bytes.is_empty() {
            return Err(bad());
        }
        Ok(Symbol { bytes, eow })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpeDropoutConfig {
    pub dropout_rate: f64,
    pub seed: u64,
}

impl BpeDropoutConfig {
    pub fn new(dropout_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dropout_rate) {
            return Err(Error::config(format!(
                "dropout rate {dropout_rate} outside [0, 1]"
            )));
        }
        Ok(BpeDropoutConfig { dropout_rate, seed })
    }
}

/// Ordered merge rules plus the vocabulary they induce.
///
/// Ids: the special tokens first, then the base symbols in sorted order, then
/// one id per merge in merge order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeTable {
    vocab_size_target: usize,
    n_base: usize,
    /// Symbols for ids `SPECIAL_TOKENS.len()..`.
    symbols: Vec<Symbol>,
    merges: Vec<(u32, u32)>,
    ids: HashMap<Symbol, u32>,
    ranks: HashMap<(u32, u32), u32>,
    strings: Vec<String>,
}

enum Piece<'a> {
    Word(&'a [u8]),
    Space(u8),
}

/// Pre-tokenization into words and explicit whitespace bytes.
fn pieces(text: &str) -> Vec<Piece<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut after_word = false;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let run = &bytes[start..i];
            let implied = after_word && i < bytes.len() && run == b" ";
            if !implied {
                out.extend(run.iter().map(|&b| Piece::Space(b)));
            }
            after_word = false;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            out.push(Piece::Word(&bytes[start..i]));
            after_word = true;
        }
    }
    out
}

fn word_symbols(word: &[u8]) -> impl Iterator<Item = Symbol> + '_ {
    let last = word.len().saturating_sub(1);
    word.iter()
        .enumerate()
        .map(move |(i, &b)| Symbol::byte(b, i == last))
}

/// Greedy BPE training.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size_target: usize) -> Result<MergeTable> {
    if corpus.is_empty() {
        return Err(Error::config("cannot train BPE on an empty corpus"));
    }
    let mut word_counts: BTreeMap<&[u8], i64> = BTreeMap::new();
    // The space byte is always present: single spaces between words are
    // implied by the word boundaries rather than counted.
    let mut base: BTreeSet<Symbol> = BTreeSet::from([Symbol::byte(b' ', false)]);
    for text in corpus {
        for piece in pieces(text.as_ref()) {
            match piece {
                Piece::Word(w) => *word_counts.entry(w).or_default() += 1,
                Piece::Space(b) => {
                    base.insert(Symbol::byte(b, false));
                }
            }
        }
    }
    for w in word_counts.keys() {
        base.extend(word_symbols(w));
    }
    if vocab_size_target < base.len() {
        return Err(Error::config(format!(
            "vocabulary target {vocab_size_target} is smaller than the {} base symbols",
            base.len()
        )));
    }

    let mut table = MergeTable::with_base(vocab_size_target, base.into_iter().collect());
    let mut words: Vec<(Vec<u32>, i64)> = word_counts
        .iter()
        .map(|(w, &c)| (word_symbols(w).map(|s| table.ids[&s]).collect(), c))
        .collect();

    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), BTreeSet<usize>> = HashMap::new();
    for (wi, (syms, count)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_default() += count;
            pair_words.entry(pair).or_default().insert(wi);
        }
    }

    type Entry = (i64, Reverse<(Symbol, Symbol)>, (u32, u32));
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let key = |t: &MergeTable, pair: (u32, u32)| {
        (t.symbol(pair.0).clone(), t.symbol(pair.1).clone())
    };
    for (&pair, &c) in &pair_counts {
        heap.push((c, Reverse(key(&table, pair)), pair));
    }

    while table.n_base + table.merges.len() < vocab_size_target {
        let Some((count, _, pair)) = heap.pop() else {
            break;
        };
        if pair_counts.get(&pair).copied().unwrap_or(0) != count {
            continue;
        }
        if count < 2 {
            break;
        }
        let new_id = table.push_merge(pair);
        let affected = pair_words.remove(&pair).unwrap_or_default();
        let mut changed: BTreeSet<(u32, u32)> = BTreeSet::new();
        for wi in affected {
            let (syms, wc) = &mut words[wi];
            if !syms.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            for p in syms.windows(2) {
                let old = (p[0], p[1]);
                *pair_counts.get_mut(&old).expect("counted pair") -= *wc;
                changed.insert(old);
            }
            *syms = merge_all(syms, pair, new_id);
            for p in syms.windows(2) {
                let new = (p[0], p[1]);
                *pair_counts.entry(new).or_default() += *wc;
                pair_words.entry(new).or_default().insert(wi);
                changed.insert(new);
            }
        }
        for p in changed {
            let c = pair_counts.get(&p).copied().unwrap_or(0);
            if c > 0 {
                heap.push((c, Reverse(key(&table, p)), p));
            } else {
                pair_counts.remove(&p);
            }
        }
    }
    Ok(table)
}

fn merge_all(syms: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

impl MergeTable {
    fn with_base(vocab_size_target: usize, base: Vec<Symbol>) -> Self {
        let mut t = MergeTable {
            vocab_size_target,
            n_base: base.len(),
            symbols: Vec::new(),
            merges: Vec::new(),
            ids: HashMap::new(),
            ranks: HashMap::new(),
            strings: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
        };
        for s in base {
            t.push_symbol(s);
        }
        t
    }

    fn push_symbol(&mut self, s: Symbol) -> u32 {
        let id = (SPECIAL_TOKENS.len() + self.symbols.len()) as u32;
        self.strings.push(s.display());
        self.ids.insert(s.clone(), id);
        self.symbols.push(s);
        id
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let merged = Symbol::concat(self.symbol(pair.0), self.symbol(pair.1));
        let rank = self.merges.len() as u32;
        self.merges.push(pair);
        self.ranks.insert(pair, rank);
        self.push_symbol(merged)
    }

    fn symbol(&self, id: u32) -> &Symbol {
        &self.symbols[id as usize - SPECIAL_TOKENS.len()]
    }

    pub fn vocab_size_target(&self) -> usize {
        self.vocab_size_target
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    /// Total ids, special tokens included.
    pub fn vocab_len(&self) -> usize {
        self.strings.len()
    }

    pub fn merges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.merges
            .iter()
            .map(|&(l, r)| (self.strings[l as usize].as_str(), self.strings[r as usize].as_str()))
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn token_str(&self, id: u32) -> Option<&str> {
        self.strings.get(id as usize).map(String::as_str)
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        if let Some(i) = SPECIAL_TOKENS.iter().position(|s| *s == token) {
            return Some(i as u32);
        }
        Symbol::parse(token).ok().and_then(|s| self.ids.get(&s).copied())
    }

    pub fn is_whitespace_token(&self, id: u32) -> bool {
        id as usize >= SPECIAL_TOKENS.len()
            && (id as usize) < self.strings.len()
            && self.symbol(id).is_whitespace()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_impl(text, None)
    }

    /// Stochastic segmentation: at every step each applicable merge is
    /// skipped independently with probability `dropout_rate`.
    pub fn encode_with_dropout(&self, text: &str, cfg: &BpeDropoutConfig) -> Result<Vec<u32>> {
        let cfg = BpeDropoutConfig::new(cfg.dropout_rate, cfg.seed)?;
        if cfg.dropout_rate == 0.0 {
            return Ok(self.encode(text));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(self.encode_impl(text, Some((cfg.dropout_rate, &mut rng))))
    }

    fn encode_impl(&self, text: &str, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Vec<u32> {
        let mut out = Vec::new();
        for piece in pieces(text) {
            match piece {
                Piece::Space(b) => out.push(
                    self.ids
                        .get(&Symbol::byte(b, false))
                        .copied()
                        .unwrap_or(UNK_ID),
                ),
                Piece::Word(w) => {
                    let syms: Vec<u32> = word_symbols(w)
                        .map(|s| self.ids.get(&s).copied().unwrap_or(UNK_ID))
                        .collect();
                    let merged = match dropout.as_mut() {
                        None => self.merge_word(syms, None),
                        Some((rate, rng)) => self.merge_word(syms, Some((*rate, &mut **rng))),
                    };
                    out.extend(merged);
                }
            }
        }
        out
    }

    fn merge_word(&self, mut syms: Vec<u32>, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Vec<u32> {
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..syms.len().saturating_sub(1) {
                let Some(&rank) = self.ranks.get(&(syms[i], syms[i + 1])) else {
                    continue;
                };
                if let Some((rate, rng)) = dropout.as_mut() {
                    if rng.gen::<f64>() < *rate {
                        continue;
                    }
                }
                if best.is_none_or(|(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
            let Some((rank, i)) = best else {
                return syms;
            };
            let merged_id = (SPECIAL_TOKENS.len() + self.n_base) as u32 + rank;
            syms.splice(i..i + 2, [merged_id]);
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for (k, &id) in ids.iter().enumerate() {
            match id {
                UNK_ID => bytes.extend_from_slice("\u{fffd}".as_bytes()),
                PAD_ID => {}
                _ => {
                    if id as usize >= self.strings.len() {
                        return Err(Error::UnknownTokenId(id));
                    }
                    let sym = self.symbol(id);
                    bytes.extend_from_slice(&sym.bytes);
                    if sym.eow {
                        let next_is_word = ids.get(k + 1).is_some_and(|&n| {
                            n != PAD_ID && (n as usize) < self.strings.len() && !self.is_whitespace_token(n)
                        });
                        if next_is_word {
                            bytes.push(b' ');
                        }
                    }
                }
            }
        }
        Ok(String::from_utf8(bytes).unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned()))
    }

    /// Text form: header, target, base symbols, then merges in order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "vocab_size_target {}", self.vocab_size_target);
        let _ = writeln!(s, "specials {}", SPECIAL_TOKENS.join(" "));
        let _ = writeln!(s, "base {}", self.n_base);
        for sym in &self.symbols[..self.n_base] {
            let _ = writeln!(s, "{}", sym.display());
        }
        let _ = writeln!(s, "merges {}", self.merges.len());
        for (l, r) in self.merges() {
            let _ = writeln!(s, "{l} {r}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::config(format!("merge table truncated before {what}")))
        };
        let header = next("header")?;
        if header != FORMAT_HEADER {
            return Err(Error::config(format!(
                "unsupported merge table header {header:?}, expected {FORMAT_HEADER:?}"
            )));
        }
        let field = |line: &str, name: &str| -> Result<String> {
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::config(format!("expected `{name}` line, got {line:?}")))
        };
        let count = |v: String| -> Result<usize> {
            v.parse().map_err(|_| Error::config(format!("bad count {v:?}")))
        };
        let target = count(field(next("target")?, "vocab_size_target")?)?;
        let specials = field(next("specials")?, "specials")?;
        if specials != SPECIAL_TOKENS.join(" ") {
            return Err(Error::config(format!("unexpected special tokens {specials:?}")));
        }
        let n_base = count(field(next("base")?, "base")?)?;
        let mut base = Vec::with_capacity(n_base);
        for _ in 0..n_base {
            base.push(Symbol::parse(next("base symbol")?)?);
        }
        let mut table = MergeTable::with_base(target, base);
        let n_merges = count(field(next("merges")?, "merges")?)?;
        for _ in 0..n_merges {
            let line = next("merge")?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| Error::config(format!("bad merge line {line:?}")))?;
            let lid = table.ids.get(&Symbol::parse(l)?).copied();
            let rid = table.ids.get(&Symbol::parse(r)?).copied();
            match (lid, rid) {
                (Some(a), Some(b)) => {
                    table.push_merge((a, b));
                }
                _ => return Err(Error::config(format!("merge {line:?} references unknown tokens"))),
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
