//! The per-model pipeline: normalize, segment with BPE, vectorize, fit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bpe::{train_bpe, BpeDropoutConfig, MergeTable, DEFAULT_DROPOUT, DEFAULT_VOCAB_SIZE};
use crate::classify::{Estimator, EstimatorSpec};
use crate::error::{Error, Result};
use crate::features::{fit_vectorizer, FittedVectorizer, SparseMatrix, VectorizerConfig};
use crate::normalize::{normalize, NormalizeConfig};
use crate::par;

/// Settings for the shared preprocessing stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub normalize: NormalizeConfig,
    pub vocab_size: usize,
    /// Dropout used when segmenting training documents. Inference always
    /// segments deterministically.
    pub dropout: f64,
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        TokenizerSpec {
            normalize: NormalizeConfig::default(),
            vocab_size: DEFAULT_VOCAB_SIZE,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

/// Normalizer plus trained merge table.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    pub normalize: NormalizeConfig,
    pub table: MergeTable,
}

impl Tokenizer {
    /// Trains the merge table on the normalized texts.
    pub fn train<S: AsRef<str> + Sync>(texts: &[S], spec: &TokenizerSpec) -> Result<Self> {
        let normalized = par::map(texts, |t| normalize(t.as_ref(), &spec.normalize));
        let table = train_bpe(&normalized, spec.vocab_size)?;
        Ok(Tokenizer {
            normalize: spec.normalize.clone(),
            table,
        })
    }

    fn strings(&self, ids: Vec<u32>) -> Vec<String> {
        ids.into_iter()
            .filter(|&id| !self.table.is_whitespace_token(id))
            .map(|id| self.table.token_str(id).unwrap_or_default().to_string())
            .collect()
    }

    /// Deterministic segmentation, whitespace tokens dropped.
    pub fn tokens(&self, code: &str) -> Vec<String> {
        self.strings(self.table.encode(&normalize(code, &self.normalize)))
    }

    pub fn tokenize<S: AsRef<str> + Sync>(&self, codes: &[S]) -> Vec<Vec<String>> {
        par::map(codes, |c| self.tokens(c.as_ref()))
    }

    /// Training-time segmentation with per-document seeded dropout.
    pub fn tokenize_train<S: AsRef<str> + Sync>(&self, codes: &[S], dropout: f64, seed: u64) -> Result<Vec<Vec<String>>> {
        if dropout == 0.0 {
            return Ok(self.tokenize(codes));
        }
        BpeDropoutConfig::new(dropout, seed)?;
        let idx: Vec<usize> = (0..codes.len()).collect();
        par::map(&idx, |&i| {
            let cfg = BpeDropoutConfig::new(dropout, par::mix_seed(seed, i as u64))?;
            let text = normalize(codes[i].as_ref(), &self.normalize);
            Ok(self.strings(self.table.encode_with_dropout(&text, &cfg)?))
        })
        .into_iter()
        .collect()
    }
}

/// Vectorizer and estimator settings for one classifier node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub vectorizer: VectorizerConfig,
    pub estimator: EstimatorSpec,
}

/// A fitted vectorizer plus estimator over string class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    /// Sorted class labels; estimator outputs index into this.
    pub classes: Vec<String>,
    pub vectorizer: FittedVectorizer,
    pub estimator: Estimator,
    pub uses_counts: bool,
}

impl FeatureModel {
    pub fn fit(docs: &[Vec<String>], labels: &[&str], spec: &ModelSpec) -> Result<Self> {
        if docs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: docs.len(),
                got: labels.len(),
            });
        }
        let classes: Vec<String> = labels
            .iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::Training(format!(
                "need at least two classes, found {}",
                classes.len()
            )));
        }
        let y: Vec<usize> = labels
            .iter()
            .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l)).expect("known class"))
            .collect();
        let uses_counts = spec.estimator.uses_counts();
        let mut vcfg = spec.vectorizer.clone();
        if uses_counts {
            vcfg.l2_normalize = false;
        }
        let vectorizer = fit_vectorizer(docs, &vcfg)?;
        let x = Self::matrix(&vectorizer, uses_counts, docs);
        let estimator = spec.estimator.fit(&x, &y, classes.len())?;
        Ok(FeatureModel {
            classes,
            vectorizer,
            estimator,
            uses_counts,
        })
    }

    fn matrix(v: &FittedVectorizer, counts: bool, docs: &[Vec<String>]) -> SparseMatrix {
        if counts {
            v.transform_counts(docs)
        } else {
            v.transform(docs)
        }
    }

    pub fn predict(&self, docs: &[Vec<String>]) -> Result<Vec<String>> {
        let x = Self::matrix(&self.vectorizer, self.uses_counts, docs);
        Ok(self
            .estimator
            .predict(&x)?
            .into_iter()
            .map(|i| self.classes[i].clone())
            .collect())
    }

    pub fn predict_with_confidence(&self, docs: &[Vec<String>]) -> Result<Vec<(String, f64)>> {
        let x = Self::matrix(&self.vectorizer, self.uses_counts, docs);
        Ok(self
            .estimator
            .predict_with_confidence(&x)?
            .into_iter()
            .map(|(i, c)| (self.classes[i].clone(), c))
            .collect())
    }

    /// Rebuilds non-serialized state after loading.
    pub fn prepare(&mut self) {
        self.vectorizer.reindex();
        self.estimator.prepare();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{KernelKind, KernelSpec, SvmConfig};

    fn tok() -> Tokenizer {
        let texts = ["df = pd.read_csv(path)", "df.drop('a', axis=1)", "plt.plot(x, y)", "plt.show()"];
        Tokenizer::train(
            &texts,
            &TokenizerSpec {
                vocab_size: 300,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn tokens_skip_whitespace_and_comments() {
        let t = tok();
        let a = t.tokens("plt.show()  # draw");
        let b = t.tokens("plt.show()");
        assert_eq!(a, b);
        assert!(a.iter().all(|s| !s.trim().is_empty()));
    }

    #[test]
    fn dropout_tokenization_is_seeded() {
        let t = tok();
        let codes = ["df.drop('a', axis=1)", "plt.plot(x, y)"];
        let a = t.tokenize_train(&codes, 0.5, 9).unwrap();
        assert_eq!(a, t.tokenize_train(&codes, 0.5, 9).unwrap());
        assert_eq!(t.tokenize_train(&codes, 0.0, 9).unwrap(), t.tokenize(&codes));
    }

    #[test]
    fn feature_model_round_trip() {
        let t = tok();
        let codes = ["df = pd.read_csv(path)", "df.drop('a', axis=1)", "plt.plot(x, y)", "plt.show()"];
        let labels = ["D.load", "D.drop", "V.plot", "V.plot"];
        let docs = t.tokenize(&codes);
        let spec = ModelSpec {
            vectorizer: VectorizerConfig::default(),
            estimator: EstimatorSpec::Svm(SvmConfig {
                kernel: KernelSpec {
                    kind: KernelKind::Linear,
                    c: 10.0,
                    ..Default::default()
                },
                ..Default::default()
            }),
        };
        let m = FeatureModel::fit(&docs, &labels, &spec).unwrap();
        assert_eq!(m.predict(&docs).unwrap(), labels);
        let mut back: FeatureModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        back.prepare();
        assert_eq!(back, m);
    }
}
