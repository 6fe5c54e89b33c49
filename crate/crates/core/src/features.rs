//! Sparse document-term matrices and the TF-IDF vectorizer.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Row-major compressed sparse matrix. Column indices within a row are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(n_cols: usize) -> Self {
        SparseMatrix {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row given as (column, value) pairs; zero values are dropped
    /// and duplicate columns summed.
    pub fn push_row(&mut self, mut entries: Vec<(u32, f64)>) {
        entries.sort_by_key(|e| e.0);
        let mut last: Option<u32> = None;
        for (c, v) in entries {
            assert!((c as usize) < self.n_cols, "column {c} out of range");
            if last == Some(c) {
                *self.values.last_mut().expect("previous entry") += v;
                continue;
            }
            self.indices.push(c);
            self.values.push(v);
            last = Some(c);
        }
        // Drop explicit zeros, including sums that cancelled.
        let start = *self.indptr.last().expect("indptr");
        let mut w = start;
        for r in start..self.indices.len() {
            if self.values[r] != 0.0 {
                self.indices[w] = self.indices[r];
                self.values[w] = self.values[r];
                w += 1;
            }
        }
        self.indices.truncate(w);
        self.values.truncate(w);
        self.indptr.push(w);
    }

    pub fn from_rows(n_cols: usize, rows: impl IntoIterator<Item = Vec<(u32, f64)>>) -> Self {
        let mut m = SparseMatrix::new(n_cols);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            n_cols,
            rows.iter().map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(c, &v)| (c as u32, v))
                    .collect::<Vec<_>>()
            }),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        Row {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        SparseMatrix::from_rows(self.n_cols, rows.iter().map(|&i| self.row(i).to_entries()))
    }

    pub fn map_values(&self, mut f: impl FnMut(u32, f64) -> f64) -> SparseMatrix {
        SparseMatrix::from_rows(
            self.n_cols,
            self.rows().map(|r| {
                r.iter().map(|(c, v)| (c, f(c, v))).collect::<Vec<_>>()
            }),
        )
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows()
            .map(|r| {
                let mut d = vec![0.0; self.n_cols];
                for (c, v) in r.iter() {
                    d[c as usize] = v;
                }
                d
            })
            .collect()
    }

    /// Variance over every entry of the dense view, zeros included.
    pub fn entry_variance(&self) -> f64 {
        let n = (self.n_rows() * self.n_cols) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let sum: f64 = self.values.iter().sum();
        let sq: f64 = self.values.iter().map(|v| v * v).sum();
        let mean = sum / n;
        (sq / n - mean * mean).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, other: &Row<'_>) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Equal => {
                    s += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        s
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.iter().map(|(c, v)| w[c as usize] * v).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_entries(&self) -> Vec<(u32, f64)> {
        self.iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizerConfig {
    /// Absolute document-frequency floor.
    pub min_df: usize,
    /// Document-frequency ceiling as a proportion of documents.
    pub max_df: f64,
    pub ngram_max: usize,
    pub binarize: bool,
    pub sublinear_tf: bool,
    pub l2_normalize: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            min_df: 1,
            max_df: 1.0,
            ngram_max: 1,
            binarize: false,
            sublinear_tf: false,
            l2_normalize: true,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_df < 1 {
            return Err(Error::config("min_df must be at least 1"));
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return Err(Error::config("max_df must be in (0, 1]"));
        }
        if !(1..=2).contains(&self.ngram_max) {
            return Err(Error::config("ngram_max must be 1 or 2"));
        }
        Ok(())
    }
}

/// Unigrams, plus space-joined bigrams when `ngram_max` is 2.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], ngram_max: usize) -> Vec<String> {
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    if ngram_max >= 2 {
        out.extend(
            tokens
                .windows(2)
                .map(|w| format!("{} {}", w[0].as_ref(), w[1].as_ref())),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedVectorizer {
    pub config: VectorizerConfig,
    /// Terms in column order (lexicographic).
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

/// Builds the term table, prunes by document frequency and computes smoothed
/// idf, `ln((1 + N) / (1 + df)) + 1`.
pub fn fit_vectorizer<S: AsRef<str>>(docs: &[Vec<S>], cfg: &VectorizerConfig) -> Result<FittedVectorizer> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::config("cannot fit a vectorizer on an empty corpus"));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let mut terms = ngrams(doc, cfg.ngram_max);
        terms.sort_unstable();
        terms.dedup();
        for t in terms {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let (terms, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|&(_, d)| d >= cfg.min_df && d as f64 / n <= cfg.max_df)
        .map(|(t, d)| {
            let w = ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0;
            (t, w)
        })
        .unzip();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(FittedVectorizer::from_parts(cfg.clone(), terms, idf))
}

impl FittedVectorizer {
    pub fn from_parts(config: VectorizerConfig, terms: Vec<String>, idf: Vec<f64>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        FittedVectorizer {
            config,
            terms,
            idf,
            index,
        }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    /// Raw term counts per document; unseen terms are ignored.
    fn counts<S: AsRef<str>>(&self, doc: &[S]) -> Vec<(u32, f64)> {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for t in ngrams(doc, self.config.ngram_max) {
            if let Some(c) = self.column(&t) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    pub fn transform<S: AsRef<str> + Sync>(&self, docs: &[Vec<S>]) -> SparseMatrix {
        let rows = par::map(docs, |doc| {
            let mut row: Vec<(u32, f64)> = self
                .counts(doc)
                .into_iter()
                .map(|(c, n)| {
                    let tf = if self.config.binarize {
                        1.0
                    } else if self.config.sublinear_tf {
                        1.0 + n.ln()
                    } else {
                        n
                    };
                    (c, tf * self.idf[c as usize])
                })
                .collect();
            if self.config.l2_normalize {
                let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for e in &mut row {
                        e.1 /= norm;
                    }
                }
            }
            row
        });
        SparseMatrix::from_rows(self.n_features(), rows)
    }

    /// Raw counts over the fitted vocabulary (binarized when configured).
    pub fn transform_counts<S: AsRef<str> + Sync>(&self, docs: &[Vec<S>]) -> SparseMatrix {
        let binarize = self.config.binarize;
        let rows = par::map(docs, |doc| {
            self.counts(doc)
                .into_iter()
                .map(|(c, n)| (c, if binarize { 1.0 } else { n }))
                .collect::<Vec<_>>()
        });
        SparseMatrix::from_rows(self.n_features(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn smoothed_idf_hand_values() {
        let d = docs(&[&["a", "b"], &["a"]]);
        let v = fit_vectorizer(&d, &VectorizerConfig::default()).unwrap();
        assert_eq!(v.terms, vec!["a", "b"]);
        assert!((v.idf[0] - 1.0).abs() < 1e-12);
        assert!((v.idf[1] - (1.5f64.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pruning_thresholds() {
        let d = docs(&[&["a", "b"], &["a"]]);
        let v = fit_vectorizer(
            &d,
            &VectorizerConfig {
                min_df: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.terms, vec!["a"]);
        let v = fit_vectorizer(
            &d,
            &VectorizerConfig {
                max_df: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.terms, vec!["b"]);
        let err = fit_vectorizer(
            &d,
            &VectorizerConfig {
                min_df: 3,
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn transform_normalizes_rows() {
        let d = docs(&[&["a", "b"], &["a"]]);
        let v = fit_vectorizer(&d, &VectorizerConfig::default()).unwrap();
        let m = v.transform(&docs(&[&["a", "b"], &["zzz"]]));
        let dense = m.to_dense();
        let idf_b = 1.5f64.ln() + 1.0;
        let norm = (1.0 + idf_b * idf_b).sqrt();
        assert!((dense[0][0] - 1.0 / norm).abs() < 1e-12);
        assert!((dense[0][1] - idf_b / norm).abs() < 1e-12);
        assert!((dense[0][0] - 0.5797).abs() < 1e-4 && (dense[0][1] - 0.8148).abs() < 1e-4);
        assert_eq!(m.row(1).indices.len(), 0);
    }

    #[test]
    fn binarize_ignores_repeats() {
        let d = docs(&[&["a", "b"], &["a"]]);
        let cfg = VectorizerConfig {
            binarize: true,
            ..Default::default()
        };
        let v = fit_vectorizer(&d, &cfg).unwrap();
        let m = v.transform(&docs(&[&["a", "a", "b"], &["a", "b"]]));
        assert_eq!(m.row(0).to_entries(), m.row(1).to_entries());
    }

    #[test]
    fn bigrams() {
        let d = docs(&[&["x", "y", "z"]]);
        let v = fit_vectorizer(
            &d,
            &VectorizerConfig {
                ngram_max: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.terms, vec!["x", "x y", "y", "y z", "z"]);
    }

    #[test]
    fn config_validation() {
        for bad in [
            VectorizerConfig { min_df: 0, ..Default::default() },
            VectorizerConfig { max_df: 0.0, ..Default::default() },
            VectorizerConfig { max_df: 1.5, ..Default::default() },
            VectorizerConfig { ngram_max: 3, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn sparse_rows_merge_duplicates_and_drop_zeros() {
        let m = SparseMatrix::from_rows(4, vec![vec![(2, 1.0), (0, 2.0), (2, 3.0), (1, 0.0)]]);
        assert_eq!(m.row(0).to_entries(), vec![(0, 2.0), (2, 4.0)]);
    }

    proptest! {
        #[test]
        fn transform_is_order_independent(raw in prop::collection::vec(prop::collection::vec(0u8..6, 0..8), 1..8)) {
            let d: Vec<Vec<String>> = raw.iter().map(|doc| doc.iter().map(|t| format!("t{t}")).collect()).collect();
            if let Ok(v) = fit_vectorizer(&d, &VectorizerConfig::default()) {
                let m = v.transform(&d);
                let rev: Vec<Vec<String>> = d.iter().rev().cloned().collect();
                let mr = v.transform(&rev);
                for i in 0..d.len() {
                    prop_assert_eq!(m.row(i).to_entries(), mr.row(d.len() - 1 - i).to_entries());
                }
                for r in m.rows() {
                    let n = r.sq_norm();
                    prop_assert!(n == 0.0 || (n.sqrt() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
