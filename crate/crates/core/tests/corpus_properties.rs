use std::collections::BTreeSet;

use proptest::prelude::*;

use semantify_core::corpus::{corpus_stats, prune_partially_ontologized, split_folds, top_predicate_subset};
use semantify_core::{Bioassay, Corpus, Statement};

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    let statement = (0..6usize, 0..12usize, any::<bool>()).prop_map(|(p, v, o)| Statement::new(format!("pred {p}"), format!("val {v}"), o));
    prop::collection::vec(prop::collection::vec(statement, 0..10), 1..25).prop_map(|assays| {
        Corpus::new(
            assays
                .into_iter()
                .enumerate()
                .map(|(i, st)| Bioassay::new(format!("a{i}"), format!("text {i}"), st))
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn prune_is_idempotent(corpus in arb_corpus(), blocked in prop::collection::btree_set(0..6usize, 0..3)) {
        let blocklist: BTreeSet<String> = blocked.iter().map(|p| format!("pred {p}")).collect();
        let once = prune_partially_ontologized(&corpus, &blocklist);
        let twice = prune_partially_ontologized(&once, &blocklist);
        prop_assert_eq!(&once, &twice);
        for a in once.assays() {
            prop_assert!(!a.statements.is_empty());
            prop_assert!(a.statements.iter().all(|s| s.ontologized && !blocklist.contains(&s.predicate)));
        }
    }

    #[test]
    fn top_n_universe_grows_with_n(corpus in arb_corpus()) {
        let full = corpus.statement_universe();
        let mut prev = BTreeSet::new();
        for n in 0..=7 {
            let u = top_predicate_subset(&corpus, n).statement_universe();
            prop_assert!(prev.is_subset(&u));
            prop_assert!(u.is_subset(&full));
            prev = u;
        }
        prop_assert_eq!(prev, full);
    }

    #[test]
    fn total_unique_matches_brute_force(corpus in arb_corpus()) {
        let mut seen: Vec<String> = Vec::new();
        for a in corpus.assays() {
            for s in &a.statements {
                let key = format!("{} -> {}", s.predicate, s.value);
                if !seen.contains(&key) {
                    seen.push(key);
                }
            }
        }
        let stats = corpus_stats(&corpus).unwrap();
        prop_assert_eq!(stats.total_unique, seen.len());
        let counts: Vec<usize> = corpus.assays().iter().map(|a| a.statements.len()).collect();
        prop_assert_eq!(stats.total_statements, counts.iter().sum::<usize>());
        prop_assert_eq!(stats.min, *counts.iter().min().unwrap());
        prop_assert_eq!(stats.max, *counts.iter().max().unwrap());
    }

    #[test]
    fn folds_are_disjoint_and_complete(n in 6usize..60, seed in any::<u64>()) {
        let corpus = Corpus::new((0..n).map(|i| Bioassay::new(format!("a{i}"), "t", vec![])).collect()).unwrap();
        let test = n / 3;
        let train = n - test;
        let split = split_folds(&corpus, train, test, seed).unwrap();
        prop_assert_eq!(split.folds.len(), 3);
        let mut all_test = BTreeSet::new();
        for f in &split.folds {
            let tr: BTreeSet<&String> = f.train_ids.iter().collect();
            let te: BTreeSet<&String> = f.test_ids.iter().collect();
            prop_assert_eq!(tr.len(), train);
            prop_assert_eq!(te.len(), test);
            prop_assert!(tr.is_disjoint(&te));
            for id in te {
                prop_assert!(all_test.insert(id.clone()));
            }
        }
        prop_assert_eq!(split_folds(&corpus, train, test, seed).unwrap(), split);
    }
}
