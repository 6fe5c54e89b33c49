//! Metrics, cross-validation and random hyperparameter search.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{EstimatorSpec, KernelKind};
use crate::corpus::{Part, Snippet, SplitPlan, Taxonomy};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::ModelSpec;
use crate::strategies::{self, StrategySpec, TrainSpec, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_accuracy: Option<f64>,
    /// Accuracy of the upper-level part of each prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_accuracy: Option<f64>,
    /// Classes with support or predictions; others are left out of both
    /// averages.
    pub per_class: BTreeMap<String, ClassMetrics>,
}

/// `2pr / (p + r)`, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics<S: AsRef<str>>(y_true: &[S], y_pred: &[S], classes: &[String]) -> Result<MetricsReport> {
    if y_true.is_empty() {
        return Err(Error::config("cannot compute metrics on an empty batch"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let lookup = |l: &str| index.get(l).copied().ok_or_else(|| Error::UnknownLabel(l.to_string()));
    let k = classes.len();
    let (mut tp, mut support, mut predicted) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let mut correct = 0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let (t, p) = (lookup(t.as_ref())?, lookup(p.as_ref())?);
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
            correct += 1;
        }
    }
    let n = y_true.len();
    let mut per_class = BTreeMap::new();
    let (mut macro_sum, mut weighted_sum, mut active) = (0.0, 0.0, 0usize);
    for c in 0..k {
        if support[c] == 0 && predicted[c] == 0 {
            continue;
        }
        let precision = ratio(tp[c], predicted[c]);
        let recall = ratio(tp[c], support[c]);
        let f1 = f1_score(precision, recall);
        macro_sum += f1;
        weighted_sum += f1 * support[c] as f64;
        active += 1;
        per_class.insert(
            classes[c].clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: support[c],
                predicted: predicted[c],
            },
        );
    }
    Ok(MetricsReport {
        n,
        accuracy: ratio(correct, n),
        f1_weighted: weighted_sum / n as f64,
        f1_macro: macro_sum / active as f64,
        std_f1: None,
        std_accuracy: None,
        upper_accuracy: None,
        per_class,
    })
}

/// Lower-level metrics for a set of predictions, plus upper-level accuracy.
pub fn evaluate_predictions(gold: &[&Snippet], preds: &[strategies::Prediction]) -> Result<MetricsReport> {
    let truth: Vec<&str> = gold
        .iter()
        .map(|s| {
            s.lower_label.as_deref().ok_or_else(|| Error::InvalidSnippet {
                id: s.id.clone(),
                message: "evaluation snippet has no label".into(),
            })
        })
        .collect::<Result<_>>()?;
    let pred: Vec<&str> = preds.iter().map(|p| p.lower_label.as_str()).collect();
    let classes: Vec<String> = truth
        .iter()
        .chain(&pred)
        .map(|s| s.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut report = compute_metrics(&truth, &pred, &classes)?;
    let upper_correct = gold
        .iter()
        .zip(preds)
        .filter(|(s, p)| s.upper_label.as_deref() == Some(p.upper_label.as_str()))
        .count();
    report.upper_accuracy = Some(ratio(upper_correct, gold.len()));
    Ok(report)
}

pub fn evaluate_model(model: &TrainedModel, gold: &[&Snippet]) -> Result<MetricsReport> {
    let codes: Vec<&str> = gold.iter().map(|s| s.code.as_str()).collect();
    let preds = model.predict(&codes)?;
    evaluate_predictions(gold, &preds)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Mean accuracy and F1 over folds with population std; per-class
    /// values from the pooled out-of-fold predictions.
    pub summary: MetricsReport,
    pub folds: Vec<FoldRecord>,
}

/// Something that maps snippets to qualified lower labels.
pub trait Predictor {
    fn predict_lower(&self, snippets: &[&Snippet]) -> Result<Vec<String>>;
}

impl Predictor for TrainedModel {
    fn predict_lower(&self, snippets: &[&Snippet]) -> Result<Vec<String>> {
        let codes: Vec<&str> = snippets.iter().map(|s| s.code.as_str()).collect();
        Ok(self.predict(&codes)?.into_iter().map(|p| p.lower_label).collect())
    }
}

/// Cross-validation over the training part of `plan` with a custom fit.
pub fn cross_validate_with<F, P>(snippets: &[Snippet], plan: &SplitPlan, fit: F) -> Result<CvReport>
where
    F: Fn(&[&Snippet], usize) -> Result<P> + Sync + Send,
    P: Predictor,
{
    let folds: Vec<usize> = (0..plan.cv_folds).collect();
    let results = par::map(&folds, |&f| -> Result<(FoldRecord, Vec<String>, Vec<String>)> {
        let (train, eval) = plan.fold_split(snippets, f);
        if eval.is_empty() {
            return Err(Error::Training(format!("fold {f} has no evaluation rows")));
        }
        let model = fit(&train, f)?;
        let pred = model.predict_lower(&eval)?;
        let truth: Vec<String> = eval.iter().map(|s| s.lower_label.clone().unwrap_or_default()).collect();
        let classes: Vec<String> = truth.iter().chain(&pred).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let m = compute_metrics(&truth, &pred, &classes)?;
        Ok((
            FoldRecord {
                fold: f,
                n_train: train.len(),
                n_eval: eval.len(),
                accuracy: m.accuracy,
                f1_weighted: m.f1_weighted,
                f1_macro: m.f1_macro,
            },
            truth,
            pred,
        ))
    });
    let mut records = Vec::new();
    let (mut all_truth, mut all_pred) = (Vec::new(), Vec::new());
    for r in results {
        let (rec, t, p) = r?;
        records.push(rec);
        all_truth.extend(t);
        all_pred.extend(p);
    }
    let classes: Vec<String> = all_truth.iter().chain(&all_pred).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut summary = compute_metrics(&all_truth, &all_pred, &classes)?;
    let accs: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let f1s: Vec<f64> = records.iter().map(|r| r.f1_weighted).collect();
    let macros: Vec<f64> = records.iter().map(|r| r.f1_macro).collect();
    let (acc, acc_std) = mean_std(&accs);
    let (f1, f1_std) = mean_std(&f1s);
    summary.accuracy = acc;
    summary.f1_weighted = f1;
    summary.f1_macro = mean_std(&macros).0;
    summary.std_accuracy = Some(acc_std);
    summary.std_f1 = Some(f1_std);
    Ok(CvReport { summary, folds: records })
}

/// Cross-validates the full pipeline described by `spec`.
pub fn cross_validate(
    snippets: &[Snippet],
    unlabeled: &[&Snippet],
    taxonomy: &Taxonomy,
    plan: &SplitPlan,
    spec: &TrainSpec,
    seed: u64,
) -> Result<CvReport> {
    cross_validate_with(snippets, plan, |train, fold| {
        strategies::fit(train, unlabeled, taxonomy, spec, par::mix_seed(seed, fold as u64))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub name: String,
    #[serde(default)]
    pub c: Option<(f64, f64)>,
    #[serde(default)]
    pub alpha: Option<(f64, f64)>,
    #[serde(default)]
    pub min_df: Option<(usize, usize)>,
    #[serde(default)]
    pub max_df: Option<(f64, f64)>,
    #[serde(default)]
    pub degree: Option<(u32, u32)>,
    #[serde(default)]
    pub mask_fraction: Option<(f64, f64)>,
    #[serde(default)]
    pub kernels: Vec<KernelKind>,
}

impl SearchSpace {
    /// Named spaces; bounds cover the tuned values reported for each family.
    pub fn named(name: &str) -> Result<Self> {
        let base = SearchSpace {
            name: name.to_string(),
            c: None,
            alpha: None,
            min_df: Some((1, 10)),
            max_df: Some((0.2, 1.0)),
            degree: None,
            mask_fraction: None,
            kernels: Vec::new(),
        };
        Ok(match name {
            "default-svm" => SearchSpace {
                c: Some((0.01, 1000.0)),
                degree: Some((2, 4)),
                kernels: vec![KernelKind::Linear, KernelKind::Poly, KernelKind::Rbf],
                ..base
            },
            "default-nb" => SearchSpace {
                alpha: Some((0.001, 10.0)),
                ..base
            },
            "default-nbsvm" => SearchSpace {
                c: Some((0.01, 100.0)),
                alpha: Some((0.1, 10.0)),
                ..base
            },
            other => return Err(Error::config(format!("unknown search space {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, r: Option<(f64, f64)>| match r {
            Some((lo, hi)) if !(lo > 0.0 && lo < hi) => {
                Err(Error::config(format!("{name} bounds must satisfy 0 < lo < hi")))
            }
            _ => Ok(()),
        };
        positive("C", self.c)?;
        positive("alpha", self.alpha)?;
        positive("max_df", self.max_df)?;
        if let Some((lo, hi)) = self.max_df {
            if hi > 1.0 {
                return Err(Error::config("max_df upper bound must be at most 1"));
            }
            let _ = lo;
        }
        if let Some((lo, hi)) = self.mask_fraction {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::config("mask_fraction bounds must satisfy 0 <= lo < hi <= 1"));
            }
        }
        if let Some((lo, hi)) = self.min_df {
            if !(1 <= lo && lo <= hi) {
                return Err(Error::config("min_df bounds must satisfy 1 <= lo <= hi"));
            }
        }
        if let Some((lo, hi)) = self.degree {
            if !(2 <= lo && lo <= hi) {
                return Err(Error::config("degree bounds must satisfy 2 <= lo <= hi"));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> TrialParams {
        let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| (rng.gen_range(lo.ln()..hi.ln())).exp();
        TrialParams {
            c: self.c.map(|r| log_uniform(rng, r)),
            alpha: self.alpha.map(|r| log_uniform(rng, r)),
            min_df: self.min_df.map(|(lo, hi)| rng.gen_range(lo..=hi)),
            max_df: self.max_df.map(|(lo, hi)| rng.gen_range(lo..hi)),
            degree: self.degree.map(|(lo, hi)| rng.gen_range(lo..=hi)),
            mask_fraction: self.mask_fraction.map(|(lo, hi)| rng.gen_range(lo..hi)),
            kernel: (!self.kernels.is_empty()).then(|| self.kernels[rng.gen_range(0..self.kernels.len())]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
}

impl TrialParams {
    fn apply_model(&self, m: &mut ModelSpec) {
        if let Some(v) = self.min_df {
            m.vectorizer.min_df = v;
        }
        if let Some(v) = self.max_df {
            m.vectorizer.max_df = v;
        }
        match &mut m.estimator {
            EstimatorSpec::Nb { alpha, .. } => {
                if let Some(a) = self.alpha {
                    *alpha = a;
                }
            }
            EstimatorSpec::Svm(cfg) => {
                if let Some(c) = self.c {
                    cfg.kernel.c = c;
                }
                if let Some(k) = self.kernel {
                    cfg.kernel.kind = k;
                }
                if let Some(d) = self.degree {
                    cfg.kernel.degree = d;
                }
            }
            EstimatorSpec::Nbsvm(cfg) => {
                if let Some(c) = self.c {
                    cfg.c = c;
                }
                if let Some(a) = self.alpha {
                    cfg.alpha = a;
                }
            }
        }
    }

    /// Applies the sampled values to the searched model of `spec`: the flat
    /// model, the final pseudo-label model, or the hierarchy's upper model.
    pub fn apply(&self, spec: &TrainSpec) -> TrainSpec {
        let mut out = spec.clone();
        match &mut out.strategy {
            StrategySpec::Flat(m) => self.apply_model(m),
            StrategySpec::Pseudo(p) => self.apply_model(&mut p.final_model),
            StrategySpec::Hierarchy(h) => self.apply_model(&mut h.upper),
        }
        if let (Some(f), Some(aug)) = (self.mask_fraction, out.augment.as_mut()) {
            aug.mask_fraction = f;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: TrialParams,
    pub f1_weighted: f64,
    pub std_f1: f64,
    pub accuracy: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub space: SearchSpace,
    pub budget: usize,
    pub seed: u64,
    pub scored_on: String,
    pub best_trial: usize,
    pub best_params: TrialParams,
    pub best_f1_weighted: f64,
    pub trials: Vec<TrialRecord>,
}

/// Seeded random search. Each trial is scored by mean CV weighted F1, or by
/// validation-split weighted F1 when the plan has one. Ties go to the
/// earlier trial.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    snippets: &[Snippet],
    unlabeled: &[&Snippet],
    taxonomy: &Taxonomy,
    plan: &SplitPlan,
    template: &TrainSpec,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<SearchReport> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::config("search budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<TrialParams> = (0..budget).map(|_| space.sample(&mut rng)).collect();
    let use_val = plan.has_val();
    let trials: Vec<TrialRecord> = par::map_range(params.len(), |trial| {
            let p = &params[trial];
            let started = Instant::now();
            let spec = p.apply(template);
            let trial_seed = par::mix_seed(seed, trial as u64 + 1);
            let scored = if use_val {
                let train = plan.select(snippets, Part::Train);
                let val = plan.select(snippets, Part::Val);
                strategies::fit(&train, unlabeled, taxonomy, &spec, trial_seed)
                    .and_then(|m| evaluate_model(&m, &val))
                    .map(|m| (m.f1_weighted, 0.0, m.accuracy))
            } else {
                cross_validate(snippets, unlabeled, taxonomy, plan, &spec, trial_seed)
                    .map(|r| (r.summary.f1_weighted, r.summary.std_f1.unwrap_or(0.0), r.summary.accuracy))
            };
            let wall_seconds = started.elapsed().as_secs_f64();
            match scored {
                Ok((f1, std, acc)) => TrialRecord {
                    trial,
                    params: p.clone(),
                    f1_weighted: f1,
                    std_f1: std,
                    accuracy: acc,
                    wall_seconds,
                    error: None,
                },
                Err(e) => {
                    log::warn!("trial {trial} failed: {e}");
                    TrialRecord {
                        trial,
                        params: p.clone(),
                        f1_weighted: f64::NAN,
                        std_f1: f64::NAN,
                        accuracy: f64::NAN,
                        wall_seconds,
                        error: Some(e.to_string()),
                    }
                }
            }
        });
    let mut best: Option<&TrialRecord> = None;
    for t in trials.iter().filter(|t| t.error.is_none()) {
        if best.is_none_or(|b| t.f1_weighted > b.f1_weighted) {
            best = Some(t);
        }
    }
    let Some(best) = best else {
        let msgs: Vec<String> = trials
            .iter()
            .map(|t| format!("trial {}: {}", t.trial, t.error.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Training(format!("every trial failed: {}", msgs.join("; "))));
    };
    Ok(SearchReport {
        space: space.clone(),
        budget,
        seed,
        scored_on: if use_val { "val".into() } else { "cv".into() },
        best_trial: best.trial,
        best_params: best.params.clone(),
        best_f1_weighted: best.f1_weighted,
        trials: trials.clone(),
    })
}

/// Aligned text table: model, weighted F1 ± std, accuracy ± std.
pub fn format_table(rows: &[(String, &MetricsReport)]) -> String {
    let cell = |v: f64, s: Option<f64>| match s {
        Some(s) => format!("{v:.4} ± {s:.4}"),
        None => format!("{v:.4}"),
    };
    let body: Vec<[String; 3]> = rows
        .iter()
        .map(|(name, m)| [name.clone(), cell(m.f1_weighted, m.std_f1), cell(m.accuracy, m.std_accuracy)])
        .collect();
    let header = ["model".to_string(), "F1 (weighted)".to_string(), "accuracy".to_string()];
    let mut widths = [0usize; 3];
    for r in std::iter::once(&header).chain(&body) {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |r: &[String; 3]| {
        let mut s = String::new();
        for (i, (c, w)) in r.iter().zip(widths).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    for r in &body {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = ["a", "b", "b", "c"];
        let m = compute_metrics(&y, &y, &classes(&["a", "b", "c", "d"])).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1_weighted, 1.0);
        assert_eq!(m.f1_macro, 1.0);
        assert!(!m.per_class.contains_key("d"));
    }

    #[test]
    fn f1_formula() {
        assert!((f1_score(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-15);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert_eq!(f1_score(1.0, 0.0), 0.0);
        assert_eq!(f1_score(1.0, 1.0), 1.0);
    }

    #[test]
    fn hand_example() {
        let t = ["a", "a", "b", "b", "b"];
        let p = ["a", "b", "b", "b", "a"];
        let m = compute_metrics(&t, &p, &classes(&["a", "b"])).unwrap();
        // a: p=1/2 r=1/2 f=1/2; b: p=2/3 r=2/3 f=2/3.
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert!((m.f1_macro - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((m.f1_weighted - (2.0 * 0.5 + 3.0 * 2.0 / 3.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let e: [&str; 0] = [];
        assert!(compute_metrics(&e, &e, &classes(&["a"])).is_err());
        assert!(compute_metrics(&["a"], &["z"], &classes(&["a"])).is_err());
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn search_space_sampling_is_seeded_and_bounded() {
        let space = SearchSpace::named("default-svm").unwrap();
        let a: Vec<TrialParams> = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..50).map(|_| space.sample(&mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<TrialParams> = (0..50).map(|_| space.sample(&mut rng)).collect();
        assert_eq!(a, b);
        for p in &a {
            let c = p.c.unwrap();
            assert!((0.01..1000.0).contains(&c));
            assert!((1..=10).contains(&p.min_df.unwrap()));
        }
        assert!(SearchSpace::named("nope").is_err());
    }

    #[test]
    fn table_is_aligned() {
        let m = compute_metrics(&["a", "b"], &["a", "a"], &classes(&["a", "b"])).unwrap();
        let t = format_table(&[("SVM".into(), &m), ("Longer name".into(), &m)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].chars().count(), lines[2].chars().count());
    }
}
