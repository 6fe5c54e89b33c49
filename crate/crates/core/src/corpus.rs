//! Snippet corpora, the two-level class taxonomy, stratified splits and
//! corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper-level classes of the semantic taxonomy.
pub const DEFAULT_UPPER_CLASSES: [&str; 10] = [
    "Hypothesis",
    "Environment",
    "Data extraction",
    "Exploratory data analysis",
    "Data transform",
    "Model train",
    "Model evaluation",
    "Model interpretation",
    "Hyperparameter tuning",
    "Visualization",
];

/// One code block, the unit of classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_label: Option<String>,
    /// Fully qualified, `Upper.lower`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub competition_id: Option<String>,
    /// Id of the snippet this one was derived from (augmentation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl Snippet {
    pub fn new(id: impl Into<String>, code: impl Into<String>) -> Self {
        Snippet {
            id: id.into(),
            code: code.into(),
            upper_label: None,
            lower_label: None,
            competition_id: None,
            source_id: None,
        }
    }

    /// Builds a labelled snippet from a qualified `Upper.lower` label.
    pub fn labeled(id: impl Into<String>, code: impl Into<String>, lower: &str) -> Self {
        let mut s = Snippet::new(id, code);
        s.upper_label = split_label(lower).map(|(u, _)| u.to_string());
        s.lower_label = Some(lower.to_string());
        s
    }

    pub fn is_labeled(&self) -> bool {
        self.lower_label.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidSnippet {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if self.code.trim().is_empty() {
            return Err(bad("code is empty"));
        }
        if let Some(lower) = &self.lower_label {
            let Some((prefix, child)) = split_label(lower) else {
                return Err(bad("lower_label must be qualified as Upper.lower"));
            };
            if child.is_empty() || prefix.is_empty() {
                return Err(bad("lower_label must be qualified as Upper.lower"));
            }
            match &self.upper_label {
                None => return Err(bad("lower_label given without upper_label")),
                Some(upper) if upper != prefix => {
                    return Err(bad("upper_label does not match the lower_label prefix"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Splits `Upper.lower` at the first dot.
pub fn split_label(label: &str) -> Option<(&str, &str)> {
    label.split_once('.')
}

pub fn qualify(upper: &str, lower: &str) -> String {
    format!("{upper}.{lower}")
}

/// Two-level class graph: ordered upper classes, each with ordered children.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub upper_classes: Vec<String>,
    /// Unqualified child names per upper class.
    pub children: BTreeMap<String, Vec<String>>,
}

impl Taxonomy {
    /// Reads a `{ "Upper": ["lower", ...], ... }` JSON object.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut tax = Taxonomy::default();
        for (upper, value) in map {
            let lowers: Vec<String> = serde_json::from_value(value)?;
            if lowers.is_empty() {
                return Err(Error::config(format!(
                    "taxonomy class {upper:?} has no lower classes"
                )));
            }
            if tax.children.contains_key(&upper) {
                return Err(Error::config(format!("duplicate upper class {upper:?}")));
            }
            let unique: BTreeSet<&String> = lowers.iter().collect();
            if unique.len() != lowers.len() {
                return Err(Error::config(format!(
                    "duplicate lower class under {upper:?}"
                )));
            }
            tax.upper_classes.push(upper.clone());
            tax.children.insert(upper, lowers);
        }
        Ok(tax)
    }

    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for upper in &self.upper_classes {
            map.insert(
                upper.clone(),
                serde_json::json!(self.children.get(upper).cloned().unwrap_or_default()),
            );
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("taxonomy json")
    }

    pub fn from_snippets<'a>(snippets: impl IntoIterator<Item = &'a Snippet>) -> Self {
        let mut tax = Taxonomy::default();
        for s in snippets {
            tax.observe(s);
        }
        tax
    }

    fn observe(&mut self, s: &Snippet) {
        if let Some((upper, lower)) = s.lower_label.as_deref().and_then(split_label) {
            self.insert(upper, lower);
        } else if let Some(upper) = &s.upper_label {
            if !self.children.contains_key(upper) {
                self.upper_classes.push(upper.clone());
                self.children.insert(upper.clone(), Vec::new());
            }
        }
    }

    pub fn insert(&mut self, upper: &str, lower: &str) {
        let kids = self.children.entry(upper.to_string()).or_insert_with(|| {
            self.upper_classes.push(upper.to_string());
            Vec::new()
        });
        if !kids.iter().any(|k| k == lower) {
            kids.push(lower.to_string());
        }
    }

    pub fn contains_upper(&self, upper: &str) -> bool {
        self.children.contains_key(upper)
    }

    pub fn contains_lower(&self, qualified: &str) -> bool {
        split_label(qualified)
            .and_then(|(u, l)| self.children.get(u).map(|kids| kids.iter().any(|k| k == l)))
            .unwrap_or(false)
    }

    pub fn children_of(&self, upper: &str) -> &[String] {
        self.children.get(upper).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every lower class, qualified, in taxonomy order.
    pub fn qualified_lowers(&self) -> Vec<String> {
        self.upper_classes
            .iter()
            .flat_map(|u| self.children_of(u).iter().map(move |l| qualify(u, l)))
            .collect()
    }

    pub fn union(&self, other: &Taxonomy) -> Taxonomy {
        let mut out = self.clone();
        for upper in &other.upper_classes {
            if !out.children.contains_key(upper) {
                out.upper_classes.push(upper.clone());
                out.children.insert(upper.clone(), Vec::new());
            }
            for lower in other.children_of(upper) {
                out.insert(upper, lower);
            }
        }
        out
    }
}

/// Reads a JSONL corpus, validating every snippet. When `declared` is given,
/// every label must resolve into it; the returned taxonomy is the union of
/// the declared one and the observed labels.
pub fn load_corpus(path: &Path, declared: Option<&Taxonomy>) -> Result<(Vec<Snippet>, Taxonomy)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut snippets = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let snippet: Snippet = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        snippets.push(snippet);
    }
    let taxonomy = validate_corpus(&snippets, declared)?;
    Ok((snippets, taxonomy))
}

pub fn validate_corpus(snippets: &[Snippet], declared: Option<&Taxonomy>) -> Result<Taxonomy> {
    let mut seen = HashSet::new();
    for s in snippets {
        s.validate()?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
        if let Some(tax) = declared {
            if let Some(lower) = &s.lower_label {
                if !tax.contains_lower(lower) {
                    return Err(Error::UnknownLabel(lower.clone()));
                }
            } else if let Some(upper) = &s.upper_label {
                if !tax.contains_upper(upper) {
                    return Err(Error::UnknownLabel(upper.clone()));
                }
            }
        }
    }
    let observed = Taxonomy::from_snippets(snippets);
    Ok(match declared {
        Some(tax) => tax.union(&observed),
        None => observed,
    })
}

pub fn write_corpus(path: &Path, snippets: &[Snippet]) -> Result<()> {
    let mut buf = Vec::new();
    for s in snippets {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub part: Part,
    /// Cross-validation fold for training snippets. `None` for val/test and
    /// for members of classes too small to spread over the folds; those are
    /// always trained on and never evaluated.
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub cv_folds: usize,
    pub assignment: BTreeMap<String, Assignment>,
}

/// Stratified split by lower label.
///
/// Per class, members are sorted by id and shuffled with a seeded RNG; the
/// first `round(test_fraction * n)` go to test, the next
/// `round(val_fraction * n)` to val, the rest to train, dealt round-robin
/// over the folds. Classes with fewer members than `cv_folds` stay whole in
/// train with no fold. `val_fraction` may be 0 (no validation split).
pub fn make_split(
    snippets: &[Snippet],
    seed: u64,
    test_fraction: f64,
    val_fraction: f64,
    cv_folds: usize,
) -> Result<SplitPlan> {
    if cv_folds < 2 {
        return Err(Error::config("cv_folds must be at least 2"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("test_fraction must be in (0, 1)"));
    }
    if !(0.0..1.0).contains(&val_fraction) || test_fraction + val_fraction >= 1.0 {
        return Err(Error::config(
            "val_fraction must be in [0, 1) and test_fraction + val_fraction < 1",
        ));
    }
    let labeled: Vec<&Snippet> = snippets.iter().filter(|s| s.is_labeled()).collect();
    if labeled.is_empty() {
        return Err(Error::config("cannot split an empty corpus"));
    }
    if labeled.len() < cv_folds {
        return Err(Error::config(format!(
            "{} labeled snippets is fewer than {cv_folds} folds",
            labeled.len()
        )));
    }

    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in &labeled {
        by_class
            .entry(s.lower_label.as_deref().unwrap_or_default())
            .or_default()
            .push(&s.id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut fold_offset = 0usize;
    for members in by_class.values_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let n = members.len();
        if n < cv_folds {
            for id in members.iter() {
                assignment.insert(
                    id.to_string(),
                    Assignment {
                        part: Part::Train,
                        fold: None,
                    },
                );
            }
            continue;
        }
        let n_test = round_count(test_fraction, n);
        let n_val = round_count(val_fraction, n).min(n - n_test);
        for (i, id) in members.iter().enumerate() {
            let a = if i < n_test {
                Assignment {
                    part: Part::Test,
                    fold: None,
                }
            } else if i < n_test + n_val {
                Assignment {
                    part: Part::Val,
                    fold: None,
                }
            } else {
                let k = i - n_test - n_val;
                Assignment {
                    part: Part::Train,
                    fold: Some((k + fold_offset) % cv_folds),
                }
            };
            assignment.insert(id.to_string(), a);
        }
        fold_offset = (fold_offset + n - n_test - n_val) % cv_folds;
    }

    Ok(SplitPlan {
        seed,
        test_fraction,
        val_fraction,
        cv_folds,
        assignment,
    })
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

impl SplitPlan {
    pub fn part_of(&self, id: &str) -> Option<Part> {
        self.assignment.get(id).map(|a| a.part)
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).and_then(|a| a.fold)
    }

    pub fn select<'a>(&self, snippets: &'a [Snippet], part: Part) -> Vec<&'a Snippet> {
        snippets
            .iter()
            .filter(|s| self.part_of(&s.id) == Some(part))
            .collect()
    }

    /// (train, eval) for one CV fold, drawn from the training part.
    pub fn fold_split<'a>(
        &self,
        snippets: &'a [Snippet],
        fold: usize,
    ) -> (Vec<&'a Snippet>, Vec<&'a Snippet>) {
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for s in snippets {
            match self.assignment.get(&s.id) {
                Some(a) if a.part == Part::Train => {
                    if a.fold == Some(fold) {
                        eval.push(s);
                    } else {
                        train.push(s);
                    }
                }
                _ => {}
            }
        }
        (train, eval)
    }

    pub fn has_val(&self) -> bool {
        self.assignment.values().any(|a| a.part == Part::Val)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub lower_counts: BTreeMap<String, usize>,
    pub upper_counts: BTreeMap<String, usize>,
    pub min_class_size: usize,
    pub max_class_size: usize,
    pub median_class_size: f64,
    /// Snippets per competition, to expose group skew.
    pub competition_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(snippets: &[Snippet]) -> CorpusStats {
    let mut lower_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut upper_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut competition_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut labeled = 0;
    for s in snippets {
        if let Some(l) = &s.lower_label {
            *lower_counts.entry(l.clone()).or_default() += 1;
            labeled += 1;
        }
        if let Some(u) = &s.upper_label {
            *upper_counts.entry(u.clone()).or_default() += 1;
        }
        if let Some(c) = &s.competition_id {
            *competition_counts.entry(c.clone()).or_default() += 1;
        }
    }
    let mut sizes: Vec<usize> = lower_counts.values().copied().collect();
    sizes.sort_unstable();
    let median_class_size = match sizes.len() {
        0 => 0.0,
        n if n % 2 == 1 => sizes[n / 2] as f64,
        n => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
    };
    CorpusStats {
        total: snippets.len(),
        labeled,
        unlabeled: snippets.len() - labeled,
        min_class_size: sizes.first().copied().unwrap_or(0),
        max_class_size: sizes.last().copied().unwrap_or(0),
        median_class_size,
        lower_counts,
        upper_counts,
        competition_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_one_labeled_line() {
        let f = write_tmp(&[
            r#"{"id":"a","code":"x=1","upper_label":"Data transform","lower_label":"Data transform.drop_column"}"#,
        ]);
        let (snips, tax) = load_corpus(f.path(), None).unwrap();
        assert_eq!(snips.len(), 1);
        assert!(tax.contains_lower("Data transform.drop_column"));
    }

    #[test]
    fn rejects_empty_code() {
        let f = write_tmp(&[r#"{"id":"a","code":""}"#]);
        assert!(matches!(
            load_corpus(f.path(), None),
            Err(Error::InvalidSnippet { .. })
        ));
        let f = write_tmp(&[r#"{"id":"a","code":"  \n "}"#]);
        assert!(load_corpus(f.path(), None).is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let f = write_tmp(&[r#"{"id":"a","code":"x"}"#, r#"{"id":"a","code":"y"}"#]);
        assert!(matches!(load_corpus(f.path(), None), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp(&[r#"{"id":"a","code":"x"}"#, "{not json"]);
        match load_corpus(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_outside_declared_taxonomy() {
        let tax = Taxonomy::from_json(r#"{"A": ["x"]}"#).unwrap();
        let f = write_tmp(&[r#"{"id":"a","code":"x","upper_label":"A","lower_label":"A.y"}"#]);
        match load_corpus(f.path(), Some(&tax)) {
            Err(Error::UnknownLabel(l)) => assert_eq!(l, "A.y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_prefix_rejected() {
        let mut s = Snippet::labeled("a", "x", "A.x");
        s.upper_label = Some("B".into());
        assert!(s.validate().is_err());
    }

    #[test]
    fn round_trip_through_jsonl() {
        let snips = vec![
            Snippet::labeled("a", "x = 1\ny = 2", "A.x"),
            Snippet::new("b", "print('hi')"),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_corpus(f.path(), &snips).unwrap();
        let (back, _) = load_corpus(f.path(), None).unwrap();
        assert_eq!(back, snips);
    }

    fn balanced(n_per: usize, classes: &[&str]) -> Vec<Snippet> {
        let mut v = Vec::new();
        for c in classes {
            for i in 0..n_per {
                v.push(Snippet::labeled(format!("{c}-{i:03}"), "x", c));
            }
        }
        v
    }

    #[test]
    fn stratified_test_counts() {
        let snips = balanced(50, &["A.x", "B.y"]);
        let plan = make_split(&snips, 7, 0.2, 0.0, 10).unwrap();
        for class in ["A.x", "B.y"] {
            let n_test = snips
                .iter()
                .filter(|s| s.lower_label.as_deref() == Some(class))
                .filter(|s| plan.part_of(&s.id) == Some(Part::Test))
                .count();
            assert_eq!(n_test, 10);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let snips = balanced(23, &["A.x", "B.y", "C.z"]);
        let a = make_split(&snips, 99, 0.2, 0.1, 5).unwrap();
        let b = make_split(&snips, 99, 0.2, 0.1, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = make_split(&snips, 100, 0.2, 0.1, 5).unwrap();
        assert_ne!(a.assignment, c.assignment);
    }

    #[test]
    fn split_preconditions() {
        let one = balanced(1, &["A.x"]);
        assert!(make_split(&one, 0, 0.2, 0.0, 10).is_err());
        assert!(make_split(&[], 0, 0.2, 0.0, 10).is_err());
        let many = balanced(20, &["A.x"]);
        assert!(make_split(&many, 0, 0.2, 0.0, 1).is_err());
        assert!(make_split(&many, 0, 0.6, 0.5, 2).is_err());
    }

    #[test]
    fn small_classes_stay_in_train() {
        let mut snips = balanced(30, &["A.x"]);
        snips.extend(balanced(3, &["B.rare"]));
        let plan = make_split(&snips, 1, 0.2, 0.0, 10).unwrap();
        for s in snips.iter().filter(|s| s.id.starts_with("B.rare")) {
            assert_eq!(
                plan.assignment[&s.id],
                Assignment {
                    part: Part::Train,
                    fold: None
                }
            );
        }
    }

    #[test]
    fn fold_counts_are_balanced_per_class() {
        let snips = balanced(37, &["A.x", "B.y", "C.z"]);
        let plan = make_split(&snips, 5, 0.2, 0.0, 10).unwrap();
        for class in ["A.x", "B.y", "C.z"] {
            let mut counts = [0usize; 10];
            for s in snips.iter().filter(|s| s.lower_label.as_deref() == Some(class)) {
                if let Some(f) = plan.fold_of(&s.id) {
                    counts[f] += 1;
                }
            }
            let mean = counts.iter().sum::<usize>() as f64 / 10.0;
            assert!(counts.iter().all(|&c| (c as f64 - mean).abs() <= 1.0));
        }
    }

    #[test]
    fn stats_counts() {
        let snips = vec![
            Snippet::labeled("1", "a", "A.x"),
            Snippet::labeled("2", "a", "A.x"),
            Snippet::labeled("3", "a", "B.y"),
        ];
        let st = corpus_stats(&snips);
        assert_eq!(st.lower_counts["A.x"], 2);
        assert_eq!(st.lower_counts["B.y"], 1);
        assert_eq!(st.upper_counts["A"], 2);
        assert_eq!(st.upper_counts["B"], 1);
        assert_eq!((st.min_class_size, st.max_class_size), (1, 2));
        assert_eq!(st.median_class_size, 1.5);
    }

    #[test]
    fn stats_empty_and_unlabeled() {
        let st = corpus_stats(&[]);
        assert_eq!(st.total, 0);
        assert_eq!(st.max_class_size, 0);
        let st = corpus_stats(&[Snippet::new("a", "x"), Snippet::new("b", "y")]);
        assert!(st.lower_counts.is_empty());
        assert_eq!((st.total, st.unlabeled), (2, 2));
    }

    #[test]
    fn taxonomy_json_preserves_order() {
        let t = Taxonomy::from_json(r#"{"Z": ["b", "a"], "A": ["c"]}"#).unwrap();
        assert_eq!(t.upper_classes, vec!["Z", "A"]);
        assert_eq!(t.qualified_lowers(), vec!["Z.b", "Z.a", "A.c"]);
        let back = Taxonomy::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }
}
