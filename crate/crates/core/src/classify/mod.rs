//! Estimators over sparse feature matrices with integer class labels.

pub mod nb;
pub mod nbsvm;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseMatrix;

pub use nb::{fit_nb, NbModel, NbVariant};
pub use nbsvm::{fit_nbsvm, NbsvmConfig, NbsvmModel};
pub use svm::{fit_svm, Kernel, KernelKind, KernelSpec, SvmConfig, SvmModel};

/// What to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Nb { variant: NbVariant, alpha: f64 },
    Svm(SvmConfig),
    Nbsvm(NbsvmConfig),
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec::Svm(SvmConfig::default())
    }
}

impl EstimatorSpec {
    /// NBSVM consumes raw counts; everything else consumes TF-IDF.
    pub fn uses_counts(&self) -> bool {
        matches!(self, EstimatorSpec::Nbsvm(_))
    }

    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Nb { variant, .. } => format!("{variant:?} NB"),
            EstimatorSpec::Svm(c) => format!("SVM ({:?})", c.kernel.kind),
            EstimatorSpec::Nbsvm(_) => "NBSVM".into(),
        }
    }

    pub fn fit(&self, x: &SparseMatrix, y: &[usize], n_classes: usize) -> Result<Estimator> {
        Ok(match self {
            EstimatorSpec::Nb { variant, alpha } => Estimator::Nb(fit_nb(x, y, n_classes, *variant, *alpha)?),
            EstimatorSpec::Svm(cfg) => Estimator::Svm(fit_svm(x, y, n_classes, cfg)?),
            EstimatorSpec::Nbsvm(cfg) => Estimator::Nbsvm(fit_nbsvm(x, y, n_classes, cfg)?),
        })
    }
}

/// A fitted estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Estimator {
    Nb(NbModel),
    Svm(SvmModel),
    Nbsvm(NbsvmModel),
}

impl Estimator {
    pub fn predict(&self, x: &SparseMatrix) -> Result<Vec<usize>> {
        match self {
            Estimator::Nb(m) => m.predict(x),
            Estimator::Svm(m) => m.predict(x),
            Estimator::Nbsvm(m) => m.predict(x),
        }
    }

    /// Predicted class and a confidence in [0, 1]: the NB posterior, the
    /// winner's share of one-vs-one votes, or the softmax of NBSVM decision
    /// values.
    pub fn predict_with_confidence(&self, x: &SparseMatrix) -> Result<Vec<(usize, f64)>> {
        let from_scores = |rows: Vec<Vec<f64>>| {
            rows.iter()
                .map(|s| {
                    let p = nb::softmax(s);
                    let k = argmax(s);
                    (k, p[k])
                })
                .collect()
        };
        Ok(match self {
            Estimator::Nb(m) => from_scores(m.scores(x)?),
            Estimator::Nbsvm(m) => from_scores(m.decision_values(x)?),
            Estimator::Svm(m) => {
                let rivals = (m.n_classes.max(2) - 1) as f64;
                m.decision_values(x)?
                    .iter()
                    .map(|d| {
                        let k = svm::vote(m.n_classes, &m.pairs, d);
                        let won = m
                            .pairs
                            .iter()
                            .zip(d)
                            .filter(|(p, &v)| (p.a == k && v >= 0.0) || (p.b == k && v < 0.0))
                            .count() as f64;
                        (k, (won / rivals).min(1.0))
                    })
                    .collect()
            }
        })
    }

    /// Rebuilds state that is not serialized.
    pub fn prepare(&mut self) {
        if let Estimator::Svm(m) = self {
            m.prepare();
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Checks shapes and label range; returns per-class row counts. At least two
/// classes must be represented.
pub(crate) fn check_labels(x: &SparseMatrix, y: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(Error::Training(format!("label {c} out of range for {n_classes} classes")));
        }
        counts[c] += 1;
    }
    if counts.iter().filter(|&&k| k > 0).count() < 2 {
        return Err(Error::Training("at least two classes are required".into()));
    }
    Ok(counts)
}

pub(crate) fn check_width(expected: usize, x: &SparseMatrix) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.n_cols(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
    }

    #[test]
    fn predictions_follow_row_permutation() {
        let x = SparseMatrix::from_dense(&[
            vec![1.0, 0.0, 0.2],
            vec![0.0, 1.0, 0.1],
            vec![0.1, 0.0, 1.0],
            vec![0.9, 0.1, 0.0],
        ]);
        let y = [0, 1, 2, 0];
        let specs = [
            EstimatorSpec::Nb {
                variant: NbVariant::Complement,
                alpha: 0.5,
            },
            EstimatorSpec::Svm(SvmConfig::default()),
            EstimatorSpec::Nbsvm(NbsvmConfig::default()),
        ];
        let perm = [3, 1, 0, 2];
        for spec in &specs {
            let m = spec.fit(&x, &y, 3).unwrap();
            let p = m.predict(&x).unwrap();
            let pp = m.predict(&x.select_rows(&perm)).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                assert_eq!(pp[k], p[i]);
            }
        }
    }
}
