use proptest::prelude::*;

use affect::corpus::{Emotion, LabelMap, LabelSet, Track};
use affect::inference::{majority_vote, tally};
use affect::metrics::{binary_f1, pearson};
use affect::mutation::{draw_mutation_count, mutate_labels, MutationDistribution};
use affect::pairgen::{pair_count, sample_pairs, PairGenConfig};
use affect::prefloss::neg_log_sigmoid;
use affect::seed::{derive_seed, rng};
use affect::synthetic::generate;
use affect::templates::{fill, format_sp_target, parse_crc_output, parse_sp_output};

const ALL: [Emotion; 6] = [
    Emotion::Anger,
    Emotion::Fear,
    Emotion::Joy,
    Emotion::Sadness,
    Emotion::Surprise,
    Emotion::Disgust,
];

fn track() -> impl Strategy<Value = Track> {
    prop_oneof![Just(Track::A), Just(Track::B)]
}

fn label_map(track: Track) -> impl Strategy<Value = LabelMap> {
    proptest::sample::subsequence(ALL.to_vec(), 1..=6).prop_flat_map(move |es| {
        let n = es.len();
        proptest::collection::vec(0..=track.max_value(), n)
            .prop_map(move |vs| es.iter().copied().zip(vs).collect::<LabelMap>())
    })
}

proptest! {
    #[test]
    fn vote_is_a_most_frequent_value(votes in proptest::collection::vec(0u8..4, 1..30)) {
        let winner = majority_vote(&votes).unwrap();
        let counts = tally(&votes);
        let best = *counts.values().max().unwrap();
        prop_assert_eq!(counts[&winner], best);
        prop_assert!(counts.iter().all(|(&v, &c)| c < best || v >= winner));
        prop_assert_eq!(counts.values().sum::<usize>(), votes.len());
    }

    #[test]
    fn vote_ignores_order(mut votes in proptest::collection::vec(0u8..4, 1..30), seed in any::<u64>()) {
        let before = majority_vote(&votes);
        use rand::seq::SliceRandom;
        votes.shuffle(&mut rng(seed));
        prop_assert_eq!(majority_vote(&votes), before);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in proptest::collection::vec((0u8..4, 0u8..4), 3..40),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1 as f64).collect();
        if let Some(r) = pearson(&x, &y) {
            let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let flipped: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&scaled, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&flipped, &y).unwrap() + r).abs() < 1e-9);
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn f1_is_bounded_and_symmetric(gp in proptest::collection::vec((0u8..2, 0u8..2), 1..40)) {
        let g: Vec<f64> = gp.iter().map(|p| p.0 as f64).collect();
        let p: Vec<f64> = gp.iter().map(|p| p.1 as f64).collect();
        let f = binary_f1(&g, &p);
        prop_assert_eq!(f, binary_f1(&p, &g));
        if let Some(f) = f {
            prop_assert!((0.0..=1.0).contains(&f));
        }
        if g.contains(&1.0) {
            prop_assert_eq!(binary_f1(&g, &g), Some(1.0));
        }
    }

    #[test]
    fn mutations_change_exactly_the_reported_labels(
        (track, gold) in track().prop_flat_map(|t| (Just(t), label_map(t))),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let k = draw_mutation_count(&MutationDistribution::default(), gold.len(), &mut r);
        prop_assert!(k >= 1 && k <= gold.len().min(5));
        let (rejected, mutated) = mutate_labels(&gold, track, k, &mut r);
        prop_assert_eq!(mutated.len(), k);
        prop_assert!(rejected.keys().eq(gold.keys()));
        for (e, v) in &rejected {
            prop_assert!(track.contains(*v));
            prop_assert_eq!(mutated.contains(e), *v != gold[e]);
        }
    }

    #[test]
    fn sp_targets_round_trip((track, values) in track().prop_flat_map(|t| (Just(t), label_map(t)))) {
        let labels = LabelSet::new("eng", values.keys().copied()).unwrap();
        let parsed = parse_sp_output(&format_sp_target(&values), &labels, track);
        prop_assert!(parsed.is_ok());
        prop_assert_eq!(parsed.values, values);
    }

    #[test]
    fn parsers_accept_any_string(text in any::<String>(), t in track()) {
        let labels = LabelSet::new("eng", ALL).unwrap();
        let p = parse_sp_output(&text, &labels, t);
        prop_assert!(p.is_ok() || p.values.is_empty());
        if let Ok(out) = parse_crc_output(&text, t) {
            prop_assert!(t.contains(out.v1) && t.contains(out.v2));
        }
    }

    #[test]
    fn fill_leaves_plain_text_alone(text in "[^{}]*", value in ".*") {
        prop_assert_eq!(fill(&text, &[("x", &value)]), text.clone());
        prop_assert_eq!(fill(&format!("{{x}}{text}"), &[("x", &value)]), format!("{value}{text}"));
    }

    #[test]
    fn neg_log_sigmoid_is_positive_and_decreasing(z in -500.0f64..500.0, dz in 1e-3f64..10.0) {
        let a = neg_log_sigmoid(z);
        prop_assert!(a.is_finite() && a >= 0.0);
        prop_assert!(neg_log_sigmoid(z + dz) <= a);
    }

    #[test]
    fn derived_seeds_depend_on_every_part(seed in any::<u64>(), a in "[a-z]{1,8}", b in "[a-z]{1,8}") {
        prop_assert_eq!(derive_seed(seed, &[&a, &b]), derive_seed(seed, &[&a, &b]));
        if a != b {
            prop_assert_ne!(derive_seed(seed, &[&a]), derive_seed(seed, &[&b]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampled_pairs_are_distinct_and_capped(n in 2usize..25, cap in 1usize..700, seed in any::<u64>(), t in track()) {
        let data = generate(t, n, seed, "s");
        let pairs = sample_pairs(&data.samples, Emotion::Joy, &PairGenConfig { cap_per_label: cap, seed }).unwrap();
        prop_assert_eq!(pairs.len(), pair_count(n, cap));
        let mut seen = std::collections::BTreeSet::new();
        for p in &pairs {
            prop_assert_ne!(&p.s1.id, &p.s2.id);
            prop_assert!(seen.insert((p.s1.id.clone(), p.s2.id.clone())));
            prop_assert_eq!((p.v1, p.v2), (p.s1.values[&Emotion::Joy], p.s2.values[&Emotion::Joy]));
        }
    }
}
