//! NBSVM: a linear SVM on features scaled by Naive Bayes log-count ratios,
//! with weights interpolated toward their mean magnitude.

use serde::{Deserialize, Serialize};

use super::svm::{solve_binary, Kernel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use super::{argmax, check_labels, check_width};
use crate::error::{Error, Result};
use crate::features::{Row, SparseMatrix};
use crate::par;

pub const DEFAULT_BETA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsvmConfig {
    pub alpha: f64,
    pub c: f64,
    pub beta: f64,
    /// Inputs are binarized counts; also selects binary `f̂` over L2-scaled.
    pub binarize: bool,
    pub tol: f64,
    pub max_iter: usize,
    /// Replaces every ratio with 1, reducing the model to a plain linear SVM
    /// on `f̂` (when `beta` is 1).
    #[serde(default)]
    pub uniform_ratio: bool,
}

impl Default for NbsvmConfig {
    fn default() -> Self {
        NbsvmConfig {
            alpha: 1.0,
            c: 1.0,
            beta: DEFAULT_BETA,
            binarize: false,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            uniform_ratio: false,
        }
    }
}

impl NbsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        Ok(())
    }
}

/// One scoring problem: class `positive` against the rest (or, with two
/// classes, against the other class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsvmProblem {
    pub positive: usize,
    pub r: Vec<f64>,
    /// Interpolated weights over the scaled feature space.
    pub w: Vec<f64>,
    pub b: f64,
    pub kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsvmModel {
    pub config: NbsvmConfig,
    pub n_classes: usize,
    pub n_features: usize,
    pub problems: Vec<NbsvmProblem>,
}

/// Log-count ratio `ln((p/|p|₁) / (q/|q|₁))` with `p = alpha + Σ_{pos} f`,
/// `q = alpha + Σ_{neg} f`.
pub fn log_count_ratio(x: &SparseMatrix, positive: &[bool], alpha: f64) -> Vec<f64> {
    let v = x.n_cols();
    let mut p = vec![alpha; v];
    let mut q = vec![alpha; v];
    for (row, &pos) in x.rows().zip(positive) {
        let acc = if pos { &mut p } else { &mut q };
        for (t, val) in row.iter() {
            acc[t as usize] += val;
        }
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    p.iter().zip(&q).map(|(a, b)| ((a / sp) / (b / sq)).ln()).collect()
}

fn f_hat(row: Row<'_>, binarize: bool) -> Vec<(u32, f64)> {
    if binarize {
        return row.iter().map(|(t, v)| (t, if v != 0.0 { 1.0 } else { 0.0 })).collect();
    }
    let norm = row.sq_norm().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    row.iter().map(|(t, v)| (t, v / norm)).collect()
}

pub fn fit_nbsvm(x: &SparseMatrix, y: &[usize], n_classes: usize, cfg: &NbsvmConfig) -> Result<NbsvmModel> {
    cfg.validate()?;
    let counts = check_labels(x, y, n_classes)?;
    let x = if cfg.binarize {
        x.map_values(|_, v| if v != 0.0 { 1.0 } else { 0.0 })
    } else {
        x.clone()
    };
    let positives: Vec<usize> = if n_classes == 2 {
        vec![0]
    } else {
        (0..n_classes).filter(|&c| counts[c] > 0).collect()
    };
    let v = x.n_cols();
    let problems = par::map(&positives, |&c| {
        let pos: Vec<bool> = y.iter().map(|&l| l == c).collect();
        let r = if cfg.uniform_ratio {
            vec![1.0; v]
        } else {
            log_count_ratio(&x, &pos, cfg.alpha)
        };
        let scaled = SparseMatrix::from_rows(
            v,
            x.rows().map(|row| {
                f_hat(row, cfg.binarize)
                    .into_iter()
                    .map(|(t, val)| (t, val * r[t as usize]))
                    .collect::<Vec<_>>()
            }),
        );
        let ys: Vec<f64> = pos.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        let sol = solve_binary(&scaled, &ys, Kernel::Linear, cfg.c, cfg.tol, cfg.max_iter);
        let mut w = vec![0.0; v];
        for (k, row) in scaled.rows().enumerate() {
            if sol.alpha[k] > 0.0 {
                for (t, val) in row.iter() {
                    w[t as usize] += sol.alpha[k] * ys[k] * val;
                }
            }
        }
        let w_bar = w.iter().map(|x| x.abs()).sum::<f64>() / v as f64;
        let w = w.iter().map(|&wi| (1.0 - cfg.beta) * w_bar + cfg.beta * wi).collect();
        NbsvmProblem {
            positive: c,
            r,
            w,
            b: -sol.rho,
            kkt_violation: sol.kkt_violation,
        }
    });
    Ok(NbsvmModel {
        config: cfg.clone(),
        n_classes,
        n_features: v,
        problems,
    })
}

impl NbsvmModel {
    /// Per-class decision values; classes without a problem score `-inf`.
    pub fn decision_values(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>> {
        check_width(self.n_features, x)?;
        Ok(x
            .rows()
            .map(|row| {
                let fh = f_hat(row, self.config.binarize);
                let mut d = vec![f64::NEG_INFINITY; self.n_classes];
                for p in &self.problems {
                    let s = fh.iter().map(|&(t, v)| p.w[t as usize] * p.r[t as usize] * v).sum::<f64>() + p.b;
                    d[p.positive] = s;
                    if self.n_classes == 2 {
                        d[1 - p.positive] = -s;
                    }
                }
                d
            })
            .collect())
    }

    pub fn predict(&self, x: &SparseMatrix) -> Result<Vec<usize>> {
        Ok(self.decision_values(x)?.iter().map(|d| argmax(d)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SparseMatrix {
        SparseMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn ratio_signs() {
        // Columns: good, bad.
        let x = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = log_count_ratio(&x, &[true, false], 1.0);
        assert!((r[0] - (2.0f64 / 3.0 / (1.0 / 3.0)).ln()).abs() < 1e-12);
        assert!(r[0] > 0.0 && r[1] < 0.0);
    }

    #[test]
    fn symmetric_test_doc_ties_to_lowest_index() {
        let x = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let model = fit_nbsvm(&x, &[0, 1], 2, &NbsvmConfig::default()).unwrap();
        let d = model.decision_values(&m(&[&[1.0, 1.0]])).unwrap();
        assert!(d[0][0].abs() < 1e-9);
        assert_eq!(model.predict(&m(&[&[1.0, 1.0]])).unwrap(), vec![0]);
        assert_eq!(model.predict(&x).unwrap(), vec![0, 1]);
    }

    #[test]
    fn beta_bounds() {
        let x = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        for beta in [-0.1, 1.1] {
            let cfg = NbsvmConfig {
                beta,
                ..Default::default()
            };
            assert!(fit_nbsvm(&x, &[0, 1], 2, &cfg).is_err());
        }
    }

    #[test]
    fn multiclass_one_vs_rest() {
        let x = m(&[&[3.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 1.0], &[2.0, 0.0, 1.0]]);
        let y = [0, 1, 2, 0];
        let model = fit_nbsvm(&x, &y, 3, &NbsvmConfig { c: 10.0, ..Default::default() }).unwrap();
        assert_eq!(model.problems.len(), 3);
        assert_eq!(model.predict(&x).unwrap(), y);
    }
}
