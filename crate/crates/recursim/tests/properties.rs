use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recursim::data::{
    load_corpus, load_vector_dataset, partition, synth_corpus, synth_digits, write_corpus, write_vector_dataset,
    FEATURE_MAX,
};
use recursim::feedback::{
    corrupt_labels, no_filter, quality_filter, random_filter, FilterState, ScoredCandidate,
};
use recursim::learners::{summarize, MarkovSummarizer};
use recursim::metrics::{
    bootstrap_ci, lcs_length, moving_average, nearest_rank, rouge_l_f1, tokenize, QualityHistory,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 0..25)
}

fn candidates(scores: &[f64]) -> Vec<ScoredCandidate> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &score)| ScoredCandidate { id: format!("c{i}"), article_id: "a".into(), summary: vec![], score })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lcs_is_symmetric_and_bounded(a in seq(), b in seq()) {
        let l = lcs_length(&a, &b);
        prop_assert_eq!(l, lcs_length(&b, &a));
        prop_assert!(l <= a.len().min(b.len()));
        prop_assert_eq!(lcs_length(&a, &a), a.len());
    }

    #[test]
    fn lcs_grows_with_appended_tokens(a in seq(), b in seq(), t in 0u8..6) {
        let mut a2 = a.clone();
        a2.push(t);
        let l = lcs_length(&a, &b);
        let l2 = lcs_length(&a2, &b);
        prop_assert!(l2 == l || l2 == l + 1);
    }

    #[test]
    fn rouge_is_symmetric_and_in_unit_interval(a in seq(), b in seq()) {
        let f = rouge_l_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - rouge_l_f1(&b, &a)).abs() < 1e-15);
        if !a.is_empty() {
            prop_assert_eq!(rouge_l_f1(&a, &a), 1.0);
        }
    }

    #[test]
    fn tokens_are_lowercase_and_untrimmed(s in "[ A-Za-z.,!?'\"-]{0,60}") {
        for t in tokenize(&s) {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(|c| c.is_whitespace() || c.is_uppercase()));
            prop_assert!(!t.starts_with(|c: char| c.is_ascii_punctuation()));
            prop_assert!(!t.ends_with(|c: char| c.is_ascii_punctuation()));
        }
    }

    #[test]
    fn history_keeps_the_last_three(values in prop::collection::vec(0.0f64..=1.0, 1..12)) {
        let h = QualityHistory::from_values(&values).unwrap();
        prop_assert!(h.len() <= 3);
        let tail = &values[values.len().saturating_sub(3)..];
        prop_assert_eq!(h.values(), tail.to_vec());
        let m = moving_average(&h).unwrap();
        prop_assert!((m - tail.iter().sum::<f64>() / tail.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_interval_is_ordered_and_inside_the_data_range(
        xs in prop::collection::vec(0.0f64..1.0, 1..40),
        seed in any::<u64>(),
    ) {
        let s = bootstrap_ci(&xs, 200, 0.95, &mut rng(seed)).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= s.ci_low && s.ci_low <= s.ci_high && s.ci_high <= hi + 1e-12);
        prop_assert!(lo - 1e-12 <= s.mean && s.mean <= hi + 1e-12);
        prop_assert_eq!(s.n, xs.len());
    }

    #[test]
    fn nearest_rank_picks_an_element_at_or_above_p(
        mut xs in prop::collection::vec(0.0f64..1.0, 1..50),
        p in 0.001f64..0.999,
    ) {
        xs.sort_by(f64::total_cmp);
        let v = nearest_rank(&xs, p);
        let at_or_below = xs.iter().filter(|&&x| x <= v).count() as f64;
        prop_assert!(at_or_below / xs.len() as f64 >= p - 1e-9);
    }

    #[test]
    fn corrupted_labels_stay_in_range(
        labels in prop::collection::vec(0usize..10, 0..100),
        q in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let out = corrupt_labels(&labels, q, 10, &mut rng(seed)).unwrap();
        prop_assert_eq!(out.len(), labels.len());
        prop_assert!(out.iter().all(|&l| l < 10));
        prop_assert_eq!(corrupt_labels(&labels, 1.0, 10, &mut rng(seed)).unwrap(), labels);
    }

    #[test]
    fn quality_filter_keeps_everything_above_threshold(
        scores in prop::collection::vec(0.0f64..1.0, 0..60),
        hist in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let cands = candidates(&scores);
        let state = FilterState::seeded(0.15, hist).unwrap();
        let (sel, dec, next) = quality_filter(&cands, &state, &mut rng(seed)).unwrap();
        prop_assert_eq!(dec.len(), cands.len());
        let above = cands.iter().filter(|c| c.score >= 0.15).count();
        prop_assert!(sel.len() >= above);
        prop_assert_eq!(sel.len(), dec.iter().filter(|d| d.accepted).count());
        prop_assert_eq!(next.history, state.history);
    }

    #[test]
    fn random_filter_returns_an_ordered_subset_of_exact_size(
        n in 0usize..50,
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let cands = candidates(&vec![0.5; n]);
        let target = (frac * n as f64).floor() as usize;
        let (sel, dec) = random_filter(&cands, target, &mut rng(seed)).unwrap();
        prop_assert_eq!(sel.len(), target);
        prop_assert_eq!(dec.len(), n);
        let idx: Vec<usize> = sel.iter().map(|c| c.id[1..].parse().unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn passthrough_is_identity(scores in prop::collection::vec(0.0f64..1.0, 0..30)) {
        let cands = candidates(&scores);
        prop_assert_eq!(no_filter(&cands).0, cands);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn digits_are_bounded_and_balanced(n in 10usize..300, seed in any::<u64>()) {
        let d = synth_digits(n, &mut rng(seed)).unwrap();
        prop_assert_eq!(d.len(), n);
        prop_assert!(d.samples.iter().all(|s| s.features.iter().all(|&v| (0.0..=FEATURE_MAX).contains(&v))));
        let mut counts = vec![0usize; d.class_count];
        for s in &d.samples {
            counts[s.label] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn every_reference_is_a_subsequence_of_its_article(n in 1usize..60, seed in any::<u64>()) {
        for p in synth_corpus(n, &mut rng(seed)).unwrap() {
            prop_assert_eq!(lcs_length(&p.reference, &p.article), p.reference.len());
            prop_assert!(p.article.len() > p.reference.len());
        }
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive(n in 20usize..200, test in 1usize..10, seed in any::<u64>()) {
        let pairs = synth_corpus(n, &mut rng(seed)).unwrap();
        let parts = partition(&pairs, 0.8, 0.2, test, &mut rng(seed ^ 1)).unwrap();
        prop_assert_eq!(parts.test.len(), test);
        let ids: Vec<&String> = parts.generation.iter().chain(&parts.validation).chain(&parts.test).map(|p| &p.id).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), n);
    }

    #[test]
    fn vector_csv_round_trips(n in 10usize..40, seed in any::<u64>()) {
        let d = synth_digits(n, &mut rng(seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_vector_dataset(&path, &d).unwrap();
        prop_assert_eq!(load_vector_dataset(&path).unwrap(), d);
    }

    #[test]
    fn corpus_jsonl_round_trips(n in 1usize..30, seed in any::<u64>()) {
        let pairs = synth_corpus(n, &mut rng(seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &pairs).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), pairs);
    }

    #[test]
    fn summaries_only_use_known_tokens(n in 1usize..20, seed in any::<u64>(), max_len in 2usize..30) {
        let pairs = synth_corpus(n, &mut rng(seed)).unwrap();
        let mut m = MarkovSummarizer::new(1.0);
        for p in &pairs {
            m.observe(&p.article);
        }
        let vocab: HashSet<String> = m.vocabulary().into_iter().map(String::from).collect();
        let mut r = rng(seed ^ 7);
        for p in &pairs {
            let s = summarize(&m, &p.article, max_len, &mut r);
            prop_assert!(s.len() <= max_len);
            prop_assert_eq!(&s[..2], &p.article[..2]);
            prop_assert!(s[2..].iter().all(|t| vocab.contains(t)));
        }
    }

    #[test]
    fn observing_never_lowers_counts(n in 1usize..10, seed in any::<u64>()) {
        let pairs = synth_corpus(n, &mut rng(seed)).unwrap();
        let mut m = MarkovSummarizer::new(1.0);
        m.observe(&pairs[0].article);
        let before = m.clone();
        for p in &pairs {
            m.observe(&p.reference);
        }
        prop_assert!(m.total_count() >= before.total_count());
        let a = &pairs[0].article;
        for w in a.windows(3) {
            prop_assert!(m.count(&w[0], &w[1], &w[2]) >= before.count(&w[0], &w[1], &w[2]));
        }
        let json = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(serde_json::from_str::<MarkovSummarizer>(&json).unwrap(), m);
    }
}
