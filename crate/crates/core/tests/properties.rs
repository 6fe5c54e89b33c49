use std::collections::BTreeMap;

use proptest::prelude::*;

use codesem::bpe::{train_bpe, BpeDropoutConfig};
use codesem::corpus::{make_split, Part, Snippet};
use codesem::evaluate::{compute_metrics, cross_validate_with, Predictor};
use codesem::features::{fit_vectorizer, VectorizerConfig};
use codesem::Result;

/// Predicts the most frequent training label for everything.
struct Majority(String);

impl Predictor for Majority {
    fn predict_lower(&self, snippets: &[&Snippet]) -> Result<Vec<String>> {
        Ok(vec![self.0.clone(); snippets.len()])
    }
}

fn majority(train: &[&Snippet]) -> Majority {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in train {
        *counts.entry(s.lower_label.as_deref().unwrap()).or_default() += 1;
    }
    let best = counts.iter().max_by_key(|(l, c)| (**c, std::cmp::Reverse(**l))).unwrap();
    Majority(best.0.to_string())
}

#[test]
fn majority_baseline_cross_validation() {
    // Balanced two-class corpus: every fold predicts one class for a
    // balanced evaluation set.
    let snippets: Vec<Snippet> = (0..200)
        .map(|i| Snippet::labeled(format!("s{i:03}"), format!("x = {i}"), if i % 2 == 0 { "A.a" } else { "B.b" }))
        .collect();
    let plan = make_split(&snippets, 1, 0.2, 0.0, 10).unwrap();
    let cv = cross_validate_with(&snippets, &plan, |train, _| Ok(majority(train))).unwrap();
    assert_eq!(cv.folds.len(), 10);
    assert!((cv.summary.accuracy - 0.5).abs() < 1e-12, "{}", cv.summary.accuracy);
    assert!(cv.summary.std_accuracy.unwrap() < 1e-12);
    let n_eval: usize = cv.folds.iter().map(|f| f.n_eval).sum();
    assert_eq!(n_eval, plan.select(&snippets, Part::Train).len());
}

fn label_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..60)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_are_bounded_and_consistent((k, pairs) in label_strategy()) {
        let classes: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let t: Vec<&str> = pairs.iter().map(|p| classes[p.0].as_str()).collect();
        let p: Vec<&str> = pairs.iter().map(|p| classes[p.1].as_str()).collect();
        let m = compute_metrics(&t, &p, &classes).unwrap();
        for v in [m.accuracy, m.f1_weighted, m.f1_macro] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let support: usize = m.per_class.values().map(|c| c.support).sum();
        prop_assert_eq!(support, pairs.len());
        // Micro precision over single-label data equals accuracy.
        let tp: f64 = m.per_class.values().map(|c| c.recall * c.support as f64).sum();
        prop_assert!((tp / pairs.len() as f64 - m.accuracy).abs() < 1e-12);
        let self_m = compute_metrics(&t, &t, &classes).unwrap();
        prop_assert_eq!(self_m.f1_weighted, 1.0);
    }

    #[test]
    fn bpe_round_trips_and_dropout_stays_lossless(
        corpus in prop::collection::vec("[ab_.( )=\n]{0,30}", 1..5),
        probe in "[ab_.( )=\n]{0,40}",
        seed in any::<u64>(),
        rate in 0.0f64..=1.0,
    ) {
        let mut corpus = corpus;
        corpus.push("a aa b bb _ __ . .. ( (( ) )) = ==\n".to_string());
        let table = train_bpe(&corpus, 40).unwrap();
        prop_assert!(table.vocab_len() <= 40 + 2);
        let ids = table.encode(&probe);
        prop_assert_eq!(table.decode(&ids).unwrap(), probe.clone());
        let cfg = BpeDropoutConfig::new(rate, seed).unwrap();
        let dropped = table.encode_with_dropout(&probe, &cfg).unwrap();
        prop_assert!(dropped.len() >= ids.len());
        prop_assert_eq!(table.decode(&dropped).unwrap(), probe);
        // Text form is a fixed point.
        let text = table.to_text();
        prop_assert_eq!(codesem::bpe::MergeTable::from_text(&text).unwrap().to_text(), text);
    }

    #[test]
    fn tfidf_rows_are_unit_or_empty(
        docs in prop::collection::vec(prop::collection::vec("[a-e]", 0..8), 1..12),
        min_df in 1usize..3,
        max_df in 0.2f64..=1.0,
    ) {
        match fit_vectorizer(&docs, &VectorizerConfig { min_df, max_df, ..Default::default() }) {
            Ok(v) => {
                let x = v.transform(&docs);
                for row in x.rows() {
                    let n = row.sq_norm();
                    prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
                }
                for t in &v.terms {
                    let df = docs.iter().filter(|d| d.contains(t)).count();
                    prop_assert!(df >= min_df && df as f64 / docs.len() as f64 <= max_df);
                }
            }
            Err(e) => prop_assert!(matches!(e, codesem::Error::EmptyVocabulary), "{e}"),
        }
    }

    #[test]
    fn splits_partition_and_are_seeded(seed in any::<u64>(), n in 20usize..120) {
        let snippets: Vec<Snippet> = (0..n)
            .map(|i| Snippet::labeled(format!("s{i}"), "x = 1", ["A.a", "A.b", "B.c"][i % 3]))
            .collect();
        let a = make_split(&snippets, seed, 0.2, 0.1, 4).unwrap();
        let b = make_split(&snippets, seed, 0.2, 0.1, 4).unwrap();
        prop_assert_eq!(&a, &b);
        let sizes: usize = [Part::Train, Part::Val, Part::Test]
            .iter()
            .map(|&p| a.select(&snippets, p).len())
            .sum();
        prop_assert_eq!(sizes, n);
    }
}
