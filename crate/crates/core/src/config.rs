//! JSON training configs.
//!
//! A config is a flat object. Model keys at the top level describe the main
//! model; nested objects override them for particular nodes:
//!
//! ```json
//! {
//!   "strategy": "hierarchy",
//!   "upper": {"C": 149.65, "kernel": "poly", "degree": 2},
//!   "lower": {
//!     "default": {"kernel": "linear"},
//!     "EDA": {"C": 4.70, "min_df": 4, "max_df": 0.61}
//!   }
//! }
//! ```
//!
//! Model keys: `estimator` (`svm`, `nb`, `nbsvm`), `kernel`, `C`, `degree`,
//! `gamma`, `nb_variant`, `alpha`, `beta`, `binarize`, `uniform_ratio`,
//! `min_df`, `max_df`, `ngram_max`, `sublinear_tf`, `tol`, `max_iter`.
//!
//! Other keys: `strategy` (`flat`, `hierarchy`, `pseudo`), `description`,
//! `vocab_size`, `dropout`, `normalize`, `mask_fraction`, `augment_copies`,
//! `unlabeled_fraction`, `confidence_threshold`, and the override objects
//! `upper`, `lower`, `base`, `final`.
//!
//! For pseudo-labelling the top-level model keys describe the final model;
//! the base model starts from the linear SVM baseline and takes `base`
//! overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::classify::{EstimatorSpec, KernelKind, KernelSpec, NbVariant, NbsvmConfig, SvmConfig};
use crate::error::{Error, Result};
use crate::features::VectorizerConfig;
use crate::normalize::NormalizeConfig;
use crate::pipeline::{ModelSpec, TokenizerSpec};
use crate::strategies::{AugmentSpec, HierarchySpec, PseudoSpec, StrategySpec, TrainSpec};

/// Linear SVM baseline: C = 37.17, min_df = 2, max_df = 0.31.
pub fn baseline_model() -> ModelSpec {
    ModelSpec {
        vectorizer: VectorizerConfig {
            min_df: 2,
            max_df: 0.31,
            ..Default::default()
        },
        estimator: EstimatorSpec::Svm(SvmConfig {
            kernel: KernelSpec {
                kind: KernelKind::Linear,
                c: 37.17,
                ..Default::default()
            },
            ..Default::default()
        }),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelKeys {
    estimator: Option<String>,
    kernel: Option<KernelKind>,
    #[serde(rename = "C")]
    c: Option<f64>,
    degree: Option<u32>,
    gamma: Option<f64>,
    nb_variant: Option<NbVariant>,
    alpha: Option<f64>,
    beta: Option<f64>,
    binarize: Option<bool>,
    uniform_ratio: Option<bool>,
    min_df: Option<usize>,
    max_df: Option<f64>,
    ngram_max: Option<usize>,
    sublinear_tf: Option<bool>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

const MODEL_KEYS: &[&str] = &[
    "estimator",
    "kernel",
    "C",
    "degree",
    "gamma",
    "nb_variant",
    "alpha",
    "beta",
    "binarize",
    "uniform_ratio",
    "min_df",
    "max_df",
    "ngram_max",
    "sublinear_tf",
    "tol",
    "max_iter",
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopKeys {
    strategy: Option<String>,
    #[allow(dead_code)]
    description: Option<String>,
    vocab_size: Option<usize>,
    dropout: Option<f64>,
    normalize: Option<NormalizeConfig>,
    mask_fraction: Option<f64>,
    augment_copies: Option<usize>,
    unlabeled_fraction: Option<f64>,
    confidence_threshold: Option<f64>,
    upper: Option<Map<String, Value>>,
    lower: Option<Map<String, Value>>,
    base: Option<Map<String, Value>>,
    #[serde(rename = "final")]
    final_model: Option<Map<String, Value>>,
}

fn overlay(base: &Map<String, Value>, top: &Map<String, Value>) -> Map<String, Value> {
    let mut out = base.clone();
    for (k, v) in top {
        out.insert(k.clone(), v.clone());
    }
    out
}

fn object(v: &Value, what: &str) -> Result<Map<String, Value>> {
    v.as_object()
        .cloned()
        .ok_or_else(|| Error::config(format!("{what} must be an object")))
}

fn model_from(keys: &Map<String, Value>, start: ModelSpec, what: &str) -> Result<ModelSpec> {
    let k: ModelKeys = serde_json::from_value(Value::Object(keys.clone()))
        .map_err(|e| Error::config(format!("{what}: {e}")))?;
    let mut vectorizer = start.vectorizer;
    if let Some(v) = k.min_df {
        vectorizer.min_df = v;
    }
    if let Some(v) = k.max_df {
        vectorizer.max_df = v;
    }
    if let Some(v) = k.ngram_max {
        vectorizer.ngram_max = v;
    }
    if let Some(v) = k.sublinear_tf {
        vectorizer.sublinear_tf = v;
    }
    let family = match (&k.estimator, &start.estimator) {
        (Some(name), _) => name.as_str(),
        (None, EstimatorSpec::Svm(_)) => "svm",
        (None, EstimatorSpec::Nb { .. }) => "nb",
        (None, EstimatorSpec::Nbsvm(_)) => "nbsvm",
    };
    let ignored = |keys: &[(&str, bool)]| {
        for (name, present) in keys {
            if *present {
                log::warn!("{what}: key {name:?} does not apply to estimator {family:?}");
            }
        }
    };
    let estimator = match family {
        "svm" => {
            let mut cfg = match start.estimator {
                EstimatorSpec::Svm(c) => c,
                _ => SvmConfig::default(),
            };
            if let Some(v) = k.kernel {
                cfg.kernel.kind = v;
            }
            if let Some(v) = k.c {
                cfg.kernel.c = v;
            }
            if let Some(v) = k.degree {
                cfg.kernel.degree = v;
            }
            if k.gamma.is_some() {
                cfg.kernel.gamma = k.gamma;
            }
            if let Some(v) = k.tol {
                cfg.tol = v;
            }
            if let Some(v) = k.max_iter {
                cfg.max_iter = v;
            }
            if let Some(v) = k.binarize {
                vectorizer.binarize = v;
            }
            ignored(&[
                ("nb_variant", k.nb_variant.is_some()),
                ("alpha", k.alpha.is_some()),
                ("beta", k.beta.is_some()),
                ("uniform_ratio", k.uniform_ratio.is_some()),
            ]);
            cfg.kernel.validate()?;
            EstimatorSpec::Svm(cfg)
        }
        "nb" => {
            let (mut variant, mut alpha) = match start.estimator {
                EstimatorSpec::Nb { variant, alpha } => (variant, alpha),
                _ => (NbVariant::Multinomial, 1.0),
            };
            if let Some(v) = k.nb_variant {
                variant = v;
            }
            if let Some(v) = k.alpha {
                alpha = v;
            }
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config(format!("{what}: alpha must be positive, got {alpha}")));
            }
            if let Some(v) = k.binarize {
                vectorizer.binarize = v;
            }
            ignored(&[
                ("kernel", k.kernel.is_some()),
                ("C", k.c.is_some()),
                ("degree", k.degree.is_some()),
                ("gamma", k.gamma.is_some()),
                ("beta", k.beta.is_some()),
                ("uniform_ratio", k.uniform_ratio.is_some()),
                ("tol", k.tol.is_some()),
                ("max_iter", k.max_iter.is_some()),
            ]);
            EstimatorSpec::Nb { variant, alpha }
        }
        "nbsvm" => {
            let mut cfg = match start.estimator {
                EstimatorSpec::Nbsvm(c) => c,
                _ => NbsvmConfig::default(),
            };
            if let Some(kind) = k.kernel {
                if kind != KernelKind::Linear {
                    return Err(Error::config(format!("{what}: NBSVM supports only the linear kernel")));
                }
            }
            if let Some(v) = k.c {
                cfg.c = v;
            }
            if let Some(v) = k.alpha {
                cfg.alpha = v;
            }
            if let Some(v) = k.beta {
                cfg.beta = v;
            }
            if let Some(v) = k.binarize {
                cfg.binarize = v;
            }
            if let Some(v) = k.uniform_ratio {
                cfg.uniform_ratio = v;
            }
            if let Some(v) = k.tol {
                cfg.tol = v;
            }
            if let Some(v) = k.max_iter {
                cfg.max_iter = v;
            }
            ignored(&[
                ("nb_variant", k.nb_variant.is_some()),
                ("degree", k.degree.is_some()),
                ("gamma", k.gamma.is_some()),
            ]);
            cfg.validate()?;
            EstimatorSpec::Nbsvm(cfg)
        }
        other => {
            return Err(Error::config(format!(
                "{what}: unknown estimator {other:?} (expected \"svm\", \"nb\" or \"nbsvm\")"
            )))
        }
    };
    vectorizer.validate()?;
    Ok(ModelSpec { vectorizer, estimator })
}

/// Parses a config into a training spec.
pub fn parse_config(text: &str) -> Result<TrainSpec> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    let root = object(&root, "config")?;
    let (mut model_keys, mut other) = (Map::new(), Map::new());
    for (k, v) in root {
        if MODEL_KEYS.contains(&k.as_str()) {
            model_keys.insert(k, v);
        } else {
            other.insert(k, v);
        }
    }
    let top: TopKeys = serde_json::from_value(Value::Object(other)).map_err(|e| Error::config(e.to_string()))?;

    let defaults = TokenizerSpec::default();
    let tokenizer = TokenizerSpec {
        normalize: top.normalize.clone().unwrap_or_default(),
        vocab_size: top.vocab_size.unwrap_or(defaults.vocab_size),
        dropout: top.dropout.unwrap_or(defaults.dropout),
    };
    if !(0.0..=1.0).contains(&tokenizer.dropout) {
        return Err(Error::config("dropout must be in [0, 1]"));
    }

    let strategy_name = top.strategy.as_deref().unwrap_or("flat");
    let misplaced = |present: bool, key: &str| -> Result<()> {
        if present {
            Err(Error::config(format!("key {key:?} does not apply to strategy {strategy_name:?}")))
        } else {
            Ok(())
        }
    };
    let strategy = match strategy_name {
        "flat" => {
            misplaced(top.upper.is_some(), "upper")?;
            misplaced(top.lower.is_some(), "lower")?;
            misplaced(top.base.is_some(), "base")?;
            misplaced(top.final_model.is_some(), "final")?;
            misplaced(top.unlabeled_fraction.is_some(), "unlabeled_fraction")?;
            StrategySpec::Flat(model_from(&model_keys, ModelSpec::default(), "model")?)
        }
        "hierarchy" => {
            misplaced(top.base.is_some(), "base")?;
            misplaced(top.final_model.is_some(), "final")?;
            misplaced(top.unlabeled_fraction.is_some(), "unlabeled_fraction")?;
            let upper_keys = overlay(&model_keys, &top.upper.clone().unwrap_or_default());
            let upper = model_from(&upper_keys, ModelSpec::default(), "upper")?;
            let mut lower_obj = top.lower.clone().unwrap_or_default();
            let default_keys = match lower_obj.remove("default") {
                Some(v) => overlay(&model_keys, &object(&v, "lower.default")?),
                None => model_keys.clone(),
            };
            let lower_default = model_from(&default_keys, ModelSpec::default(), "lower.default")?;
            let mut lower = BTreeMap::new();
            for (class, v) in lower_obj {
                let keys = overlay(&default_keys, &object(&v, &format!("lower.{class}"))?);
                lower.insert(class.clone(), model_from(&keys, ModelSpec::default(), &format!("lower.{class}"))?);
            }
            StrategySpec::Hierarchy(HierarchySpec {
                upper,
                lower_default,
                lower,
            })
        }
        "pseudo" => {
            misplaced(top.upper.is_some(), "upper")?;
            misplaced(top.lower.is_some(), "lower")?;
            let fraction = top.unlabeled_fraction.unwrap_or(1.0);
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::config("unlabeled_fraction must be in [0, 1]"));
            }
            if let Some(t) = top.confidence_threshold {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::config("confidence_threshold must be in [0, 1]"));
                }
            }
            let final_keys = overlay(&model_keys, &top.final_model.clone().unwrap_or_default());
            StrategySpec::Pseudo(PseudoSpec {
                unlabeled_fraction: fraction,
                base: model_from(&top.base.clone().unwrap_or_default(), baseline_model(), "base")?,
                final_model: model_from(&final_keys, ModelSpec::default(), "final")?,
                confidence_threshold: top.confidence_threshold,
            })
        }
        other => {
            return Err(Error::config(format!(
                "unknown strategy {other:?} (expected \"flat\", \"hierarchy\" or \"pseudo\")"
            )))
        }
    };
    if strategy_name != "pseudo" {
        misplaced(top.confidence_threshold.is_some(), "confidence_threshold")?;
    }

    let augment = match (top.mask_fraction, top.augment_copies) {
        (None, None) => None,
        (fraction, copies) => {
            let mask_fraction = fraction.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&mask_fraction) {
                return Err(Error::config("mask_fraction must be in [0, 1]"));
            }
            Some(AugmentSpec {
                mask_fraction,
                copies: copies.unwrap_or(1),
            })
        }
    };
    Ok(TrainSpec {
        tokenizer,
        strategy,
        augment,
    })
}

pub fn load_config(path: &Path) -> Result<TrainSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// The spec used when no config is given: a flat linear SVM baseline.
pub fn default_spec() -> TrainSpec {
    TrainSpec {
        tokenizer: TokenizerSpec::default(),
        strategy: StrategySpec::Flat(baseline_model()),
        augment: None,
    }
}
