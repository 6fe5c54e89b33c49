//! Training strategies over labelled snippets: a flat classifier, the
//! two-level hierarchy and single-round pseudo-labelling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_snippets, AugmentConfig};
use crate::corpus::{qualify, split_label, Snippet, Taxonomy};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{FeatureModel, ModelSpec, Tokenizer, TokenizerSpec};

/// Lower-cased alphanumerics only, so "Data Extraction", "Data_Extraction"
/// and "data-extraction" name the same class.
pub fn class_key(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub upper: ModelSpec,
    pub lower_default: ModelSpec,
    /// Per upper class overrides, keyed by class name.
    pub lower: BTreeMap<String, ModelSpec>,
}

impl HierarchySpec {
    pub fn lower_for(&self, upper: &str) -> &ModelSpec {
        let key = class_key(upper);
        self.lower
            .iter()
            .find(|(k, _)| class_key(k) == key)
            .map_or(&self.lower_default, |(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSpec {
    pub unlabeled_fraction: f64,
    pub base: ModelSpec,
    pub final_model: ModelSpec,
    /// Keep only pseudo labels at or above this confidence. Off when `None`.
    pub confidence_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategySpec {
    Flat(ModelSpec),
    Hierarchy(HierarchySpec),
    Pseudo(PseudoSpec),
}

impl StrategySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            StrategySpec::Flat(_) => "flat",
            StrategySpec::Hierarchy(_) => "hierarchy",
            StrategySpec::Pseudo(_) => "pseudo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub mask_fraction: f64,
    /// Masked copies added per training snippet.
    pub copies: usize,
}

/// Everything needed to train a model from snippets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub tokenizer: TokenizerSpec,
    pub strategy: StrategySpec,
    pub augment: Option<AugmentSpec>,
}

/// A classifier node: a fitted model, or a constant answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// The class has exactly one child; no model needed.
    Single { label: String },
    /// Fewer than two represented classes, or no usable features.
    Majority { label: String },
    Model { model: FeatureModel },
}

impl Node {
    pub fn predict(&self, docs: &[Vec<String>]) -> Result<Vec<String>> {
        match self {
            Node::Single { label } | Node::Majority { label } => Ok(vec![label.clone(); docs.len()]),
            Node::Model { model } => model.predict(docs),
        }
    }

    pub fn prepare(&mut self) {
        if let Node::Model { model } = self {
            model.prepare();
        }
    }

    /// Fits a model, or degrades to the most frequent label (ties to the
    /// smallest) when fewer than two labels are present or the vocabulary is
    /// empty after pruning.
    fn fit_or_majority(docs: &[Vec<String>], labels: &[&str], spec: &ModelSpec, what: &str) -> Result<Node> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l).or_default() += 1;
        }
        let majority = || {
            let mut best: Option<(&str, usize)> = None;
            for (&l, &c) in &counts {
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((l, c));
                }
            }
            best.map(|(l, _)| l.to_string())
        };
        if counts.len() < 2 {
            let label = majority().ok_or_else(|| Error::Training(format!("{what}: no training rows")))?;
            log::warn!("{what}: fewer than two represented classes, predicting {label}");
            return Ok(Node::Majority { label });
        }
        match FeatureModel::fit(docs, labels, spec) {
            Ok(model) => Ok(Node::Model { model }),
            Err(Error::EmptyVocabulary) => {
                let label = majority().expect("non-empty");
                log::warn!("{what}: vocabulary empty after df pruning, predicting {label}");
                Ok(Node::Majority { label })
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyModel {
    pub taxonomy: Taxonomy,
    pub upper: Node,
    /// One node per upper class of the taxonomy.
    pub lower: BTreeMap<String, Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoReport {
    pub labeled: usize,
    pub unlabeled_pool: usize,
    pub sampled: usize,
    pub pseudo_labeled: usize,
    pub final_train_size: usize,
    pub pseudo_class_distribution: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Flat { model: FeatureModel },
    Hierarchy(HierarchyModel),
    Pseudo { model: FeatureModel, report: PseudoReport },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub tokenizer: Tokenizer,
    pub kind: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub upper_label: String,
    pub lower_label: String,
}

fn labels_of<'a>(snippets: &[&'a Snippet], upper: bool) -> Result<Vec<&'a str>> {
    snippets
        .iter()
        .map(|s| {
            let l = if upper { &s.upper_label } else { &s.lower_label };
            l.as_deref().ok_or_else(|| Error::InvalidSnippet {
                id: s.id.clone(),
                message: "training snippet has no label".into(),
            })
        })
        .collect()
}

fn codes<'a>(snippets: &[&'a Snippet]) -> Vec<&'a str> {
    snippets.iter().map(|s| s.code.as_str()).collect()
}

/// Trains the tokenizer on labelled and unlabelled code, then the strategy.
pub fn fit(train: &[&Snippet], unlabeled: &[&Snippet], taxonomy: &Taxonomy, spec: &TrainSpec, seed: u64) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let mut bpe_corpus = codes(train);
    bpe_corpus.extend(codes(unlabeled));
    let tokenizer = Tokenizer::train(&bpe_corpus, &spec.tokenizer)?;
    fit_with_tokenizer(tokenizer, train, unlabeled, taxonomy, spec, seed)
}

pub fn fit_with_tokenizer(
    tokenizer: Tokenizer,
    train: &[&Snippet],
    unlabeled: &[&Snippet],
    taxonomy: &Taxonomy,
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainedModel> {
    let augmented;
    let mut train: Vec<&Snippet> = train.to_vec();
    if let Some(aug) = &spec.augment {
        let owned: Vec<Snippet> = train.iter().map(|s| (*s).clone()).collect();
        let cfg = AugmentConfig {
            mask_fraction: aug.mask_fraction,
            seed: par::mix_seed(seed, 1),
            ..Default::default()
        };
        augmented = augment_snippets(&owned, &cfg, aug.copies)?;
        train.extend(augmented.iter());
    }
    let dropout = spec.tokenizer.dropout;
    let docs = tokenizer.tokenize_train(&codes(&train), dropout, par::mix_seed(seed, 2))?;
    let kind = match &spec.strategy {
        StrategySpec::Flat(m) => ModelKind::Flat {
            model: FeatureModel::fit(&docs, &labels_of(&train, false)?, m)?,
        },
        StrategySpec::Hierarchy(h) => ModelKind::Hierarchy(fit_hierarchy(&docs, &train, taxonomy, h)?),
        StrategySpec::Pseudo(p) => {
            let (model, report) = fit_pseudo(&tokenizer, &docs, &train, unlabeled, p, dropout, seed)?;
            ModelKind::Pseudo { model, report }
        }
    };
    Ok(TrainedModel { tokenizer, kind })
}

fn fit_hierarchy(docs: &[Vec<String>], train: &[&Snippet], taxonomy: &Taxonomy, spec: &HierarchySpec) -> Result<HierarchyModel> {
    let taxonomy = taxonomy.union(&Taxonomy::from_snippets(train.iter().copied()));
    let upper_labels = labels_of(train, true)?;
    let lower_labels = labels_of(train, false)?;
    let upper = Node::fit_or_majority(docs, &upper_labels, &spec.upper, "upper level")?;

    let uppers: Vec<String> = taxonomy.upper_classes.clone();
    let nodes = par::map(&uppers, |u| -> Result<Node> {
        let children = taxonomy.children_of(u);
        if children.len() == 1 {
            return Ok(Node::Single {
                label: qualify(u, &children[0]),
            });
        }
        let rows: Vec<usize> = (0..train.len()).filter(|&i| upper_labels[i] == u).collect();
        if rows.is_empty() {
            let label = qualify(u, children.first().map_or("", String::as_str));
            log::warn!("upper class {u}: no training rows, predicting {label}");
            return Ok(Node::Majority { label });
        }
        let sub_docs: Vec<Vec<String>> = rows.iter().map(|&i| docs[i].clone()).collect();
        let sub_labels: Vec<&str> = rows.iter().map(|&i| lower_labels[i]).collect();
        Node::fit_or_majority(&sub_docs, &sub_labels, spec.lower_for(u), &format!("upper class {u}"))
    });
    let mut lower = BTreeMap::new();
    for (u, node) in uppers.into_iter().zip(nodes) {
        lower.insert(u, node?);
    }
    Ok(HierarchyModel { taxonomy, upper, lower })
}

/// Size of the pseudo-label sample: `⌊fraction · n⌋`.
pub fn pseudo_sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

fn fit_pseudo(
    tokenizer: &Tokenizer,
    docs: &[Vec<String>],
    train: &[&Snippet],
    unlabeled: &[&Snippet],
    spec: &PseudoSpec,
    dropout: f64,
    seed: u64,
) -> Result<(FeatureModel, PseudoReport)> {
    if !(0.0..=1.0).contains(&spec.unlabeled_fraction) {
        return Err(Error::config("unlabeled_fraction must be in [0, 1]"));
    }
    let labels = labels_of(train, false)?;
    let m = pseudo_sample_size(spec.unlabeled_fraction, unlabeled.len());
    let mut report = PseudoReport {
        labeled: train.len(),
        unlabeled_pool: unlabeled.len(),
        sampled: m,
        pseudo_labeled: 0,
        final_train_size: train.len(),
        pseudo_class_distribution: BTreeMap::new(),
    };
    if m == 0 {
        log::warn!("pseudo-label sample is empty; fitting the final model on labelled data only");
        return Ok((FeatureModel::fit(docs, &labels, &spec.final_model)?, report));
    }
    let base = FeatureModel::fit(docs, &labels, &spec.base)?;
    let mut idx: Vec<usize> = (0..unlabeled.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(par::mix_seed(seed, 3)));
    idx.truncate(m);
    idx.sort_unstable();
    let sample: Vec<&str> = idx.iter().map(|&i| unlabeled[i].code.as_str()).collect();
    let predicted = base.predict_with_confidence(&tokenizer.tokenize(&sample))?;
    let kept: Vec<(usize, String)> = predicted
        .into_iter()
        .enumerate()
        .filter(|(_, (_, conf))| spec.confidence_threshold.is_none_or(|t| *conf >= t))
        .map(|(k, (label, _))| (k, label))
        .collect();
    let kept_codes: Vec<&str> = kept.iter().map(|(k, _)| sample[*k]).collect();
    let pseudo_docs = tokenizer.tokenize_train(&kept_codes, dropout, par::mix_seed(seed, 4))?;

    let mut all_docs = docs.to_vec();
    all_docs.extend(pseudo_docs);
    let mut all_labels = labels.clone();
    for (_, l) in &kept {
        all_labels.push(l.as_str());
        *report.pseudo_class_distribution.entry(l.clone()).or_default() += 1;
    }
    report.pseudo_labeled = kept.len();
    report.final_train_size = all_docs.len();
    let model = FeatureModel::fit(&all_docs, &all_labels, &spec.final_model)?;
    Ok((model, report))
}

impl TrainedModel {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Flat { .. } => "flat",
            ModelKind::Hierarchy(_) => "hierarchy",
            ModelKind::Pseudo { .. } => "pseudo",
        }
    }

    pub fn predict<S: AsRef<str> + Sync>(&self, codes: &[S]) -> Result<Vec<Prediction>> {
        let docs = self.tokenizer.tokenize(codes);
        let from_lower = |lower: Vec<String>| {
            lower
                .into_iter()
                .map(|l| Prediction {
                    upper_label: split_label(&l).map_or(l.as_str(), |(u, _)| u).to_string(),
                    lower_label: l,
                })
                .collect()
        };
        match &self.kind {
            ModelKind::Flat { model } | ModelKind::Pseudo { model, .. } => Ok(from_lower(model.predict(&docs)?)),
            ModelKind::Hierarchy(h) => {
                let uppers = h.upper.predict(&docs)?;
                let mut out: Vec<Option<Prediction>> = vec![None; docs.len()];
                let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for (i, u) in uppers.iter().enumerate() {
                    groups.entry(u.as_str()).or_default().push(i);
                }
                for (u, rows) in groups {
                    let node = h
                        .lower
                        .get(u)
                        .ok_or_else(|| Error::UnknownLabel(u.to_string()))?;
                    let sub: Vec<Vec<String>> = rows.iter().map(|&i| docs[i].clone()).collect();
                    for (&i, l) in rows.iter().zip(node.predict(&sub)?) {
                        out[i] = Some(Prediction {
                            upper_label: u.to_string(),
                            lower_label: l,
                        });
                    }
                }
                Ok(out.into_iter().map(|p| p.expect("every row routed")).collect())
            }
        }
    }

    pub fn prepare(&mut self) {
        match &mut self.kind {
            ModelKind::Flat { model } | ModelKind::Pseudo { model, .. } => model.prepare(),
            ModelKind::Hierarchy(h) => {
                h.upper.prepare();
                h.lower.values_mut().for_each(Node::prepare);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{EstimatorSpec, KernelKind, KernelSpec, SvmConfig};
    use crate::features::VectorizerConfig;

    fn svm(c: f64) -> ModelSpec {
        ModelSpec {
            vectorizer: VectorizerConfig::default(),
            estimator: EstimatorSpec::Svm(SvmConfig {
                kernel: KernelSpec {
                    kind: KernelKind::Linear,
                    c,
                    ..Default::default()
                },
                ..Default::default()
            }),
        }
    }

    fn corpus() -> Vec<Snippet> {
        let rows = [
            ("A.x", "alpha_one(a)"),
            ("A.x", "alpha_one(b)"),
            ("A.y", "alpha_two(a)"),
            ("A.y", "alpha_two(c)"),
            ("B.z", "beta_call(q)"),
            ("B.z", "beta_call(r)"),
        ];
        rows.iter()
            .enumerate()
            .map(|(i, (l, c))| Snippet::labeled(format!("s{i}"), *c, l))
            .collect()
    }

    fn spec(strategy: StrategySpec) -> TrainSpec {
        TrainSpec {
            tokenizer: TokenizerSpec {
                vocab_size: 500,
                dropout: 0.0,
                ..Default::default()
            },
            strategy,
            augment: None,
        }
    }

    #[test]
    fn class_keys_ignore_case_and_punctuation() {
        assert_eq!(class_key("Data Extraction"), class_key("data_extraction"));
        assert_ne!(class_key("EDA"), class_key("Data"));
    }

    #[test]
    fn hierarchy_routes_and_stays_consistent() {
        let snippets = corpus();
        let refs: Vec<&Snippet> = snippets.iter().collect();
        let tax = Taxonomy::from_snippets(refs.iter().copied());
        let h = HierarchySpec {
            upper: svm(10.0),
            lower_default: svm(10.0),
            lower: BTreeMap::new(),
        };
        let m = fit(&refs, &[], &tax, &spec(StrategySpec::Hierarchy(h)), 1).unwrap();
        let ModelKind::Hierarchy(hm) = &m.kind else { panic!() };
        assert!(matches!(hm.lower["B"], Node::Single { .. }));
        let preds = m.predict(&codes(&refs)).unwrap();
        for (p, s) in preds.iter().zip(&snippets) {
            assert_eq!(Some(&p.lower_label), s.lower_label.as_ref());
            assert!(p.lower_label.starts_with(&format!("{}.", p.upper_label)));
        }
    }

    #[test]
    fn pseudo_with_empty_sample_equals_supervised() {
        let snippets = corpus();
        let refs: Vec<&Snippet> = snippets.iter().collect();
        let pool: Vec<Snippet> = (0..4).map(|i| Snippet::new(format!("u{i}"), "alpha_one(z)")).collect();
        let pool_refs: Vec<&Snippet> = pool.iter().collect();
        let tax = Taxonomy::from_snippets(refs.iter().copied());
        let p = PseudoSpec {
            unlabeled_fraction: 0.0,
            base: svm(1.0),
            final_model: svm(5.0),
            confidence_threshold: None,
        };
        let pm = fit(&refs, &pool_refs, &tax, &spec(StrategySpec::Pseudo(p)), 3).unwrap();
        let fm = fit(&refs, &pool_refs, &tax, &spec(StrategySpec::Flat(svm(5.0))), 3).unwrap();
        let probe = ["alpha_two(x)", "beta_call(y)", "alpha_one(q)"];
        assert_eq!(pm.predict(&probe).unwrap(), fm.predict(&probe).unwrap());

        let p = PseudoSpec {
            unlabeled_fraction: 0.5,
            base: svm(1.0),
            final_model: svm(5.0),
            confidence_threshold: None,
        };
        let pm = fit(&refs, &pool_refs, &tax, &spec(StrategySpec::Pseudo(p)), 3).unwrap();
        let ModelKind::Pseudo { report, .. } = &pm.kind else { panic!() };
        assert_eq!(report.sampled, 2);
        assert_eq!(report.final_train_size, snippets.len() + 2);
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(pseudo_sample_size(0.2, 10), 2);
        assert_eq!(pseudo_sample_size(0.4, 7), 2);
        assert_eq!(pseudo_sample_size(1.0, 7), 7);
        assert_eq!(pseudo_sample_size(0.3, 10), 3);
    }
}
