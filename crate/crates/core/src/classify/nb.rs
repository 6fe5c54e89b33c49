//! Multinomial, complement and Bernoulli Naive Bayes.

use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, check_width};
use crate::error::{Error, Result};
use crate::features::{Row, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbVariant {
    Multinomial,
    Complement,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub variant: NbVariant,
    pub alpha: f64,
    pub n_features: usize,
    pub class_log_prior: Vec<f64>,
    /// Per class, per term. Multinomial: `ln P(t|c)`. Complement: the
    /// normalized complement weights. Bernoulli: `ln P(t present | c)`.
    pub feature_log_prob: Vec<Vec<f64>>,
    /// Bernoulli only: `ln(1 - P(t present | c))`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neg_log_prob: Vec<Vec<f64>>,
}

pub fn fit_nb(x: &SparseMatrix, y: &[usize], n_classes: usize, variant: NbVariant, alpha: f64) -> Result<NbModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    let class_counts = check_labels(x, y, n_classes)?;
    let v = x.n_cols();
    let n = y.len() as f64;
    let binarize = variant == NbVariant::Bernoulli;

    // Per-class feature totals (document frequency when binarized).
    let mut fc = vec![vec![0.0; v]; n_classes];
    for (row, &c) in x.rows().zip(y) {
        for (t, val) in row.iter() {
            fc[c][t as usize] += if binarize { 1.0 } else { val };
        }
    }
    let class_log_prior: Vec<f64> = class_counts
        .iter()
        .map(|&k| if k == 0 { f64::NEG_INFINITY } else { (k as f64 / n).ln() })
        .collect();

    let mut neg_log_prob = Vec::new();
    let feature_log_prob = match variant {
        NbVariant::Multinomial => fc
            .iter()
            .map(|counts| {
                let total: f64 = counts.iter().sum::<f64>() + alpha * v as f64;
                counts.iter().map(|&k| ((k + alpha) / total).ln()).collect()
            })
            .collect(),
        NbVariant::Complement => {
            let all: Vec<f64> = (0..v).map(|t| fc.iter().map(|c| c[t]).sum()).collect();
            fc.iter()
                .map(|counts| {
                    let comp: Vec<f64> = all.iter().zip(counts).map(|(a, k)| a - k).collect();
                    let total: f64 = comp.iter().sum::<f64>() + alpha * v as f64;
                    let w: Vec<f64> = comp.iter().map(|&k| ((k + alpha) / total).ln()).collect();
                    let norm: f64 = w.iter().map(|x| x.abs()).sum();
                    w.iter().map(|x| x / norm).collect()
                })
                .collect()
        }
        NbVariant::Bernoulli => {
            let mut pos = Vec::with_capacity(n_classes);
            for (counts, &nc) in fc.iter().zip(&class_counts) {
                let denom = nc as f64 + 2.0 * alpha;
                let p: Vec<f64> = counts.iter().map(|&k| (k + alpha) / denom).collect();
                pos.push(p.iter().map(|p| p.ln()).collect());
                neg_log_prob.push(p.iter().map(|p| (1.0 - p).ln()).collect());
            }
            pos
        }
    };
    Ok(NbModel {
        variant,
        alpha,
        n_features: v,
        class_log_prior,
        feature_log_prob,
        neg_log_prob,
    })
}

impl NbModel {
    pub fn n_classes(&self) -> usize {
        self.class_log_prior.len()
    }

    /// Per-class scores where larger is better. Multinomial and Bernoulli
    /// return joint log-likelihoods; complement returns the negated
    /// complement score (no prior).
    pub fn scores_row(&self, row: Row<'_>) -> Vec<f64> {
        (0..self.n_classes())
            .map(|c| {
                let w = &self.feature_log_prob[c];
                match self.variant {
                    NbVariant::Multinomial => self.class_log_prior[c] + row.dot_dense(w),
                    NbVariant::Complement => -row.dot_dense(w),
                    NbVariant::Bernoulli => {
                        let neg = &self.neg_log_prob[c];
                        let mut s = self.class_log_prior[c] + neg.iter().sum::<f64>();
                        for (t, val) in row.iter() {
                            if val != 0.0 {
                                s += w[t as usize] - neg[t as usize];
                            }
                        }
                        s
                    }
                }
            })
            .collect()
    }

    pub fn scores(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>> {
        check_width(self.n_features, x)?;
        Ok(x.rows().map(|r| self.scores_row(r)).collect())
    }

    /// Posterior distribution: softmax of the scores.
    pub fn predict_proba(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>> {
        Ok(self.scores(x)?.into_iter().map(|s| softmax(&s)).collect())
    }

    pub fn predict(&self, x: &SparseMatrix) -> Result<Vec<usize>> {
        Ok(self.scores(x)?.iter().map(|s| argmax(s)).collect())
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}
