mod common;

use std::collections::BTreeMap;

use common::{flat_schema, random_model};
use deceit::classifier::DecisionThreshold;
use deceit::dataset::LabeledDataset;
use deceit::explainer::{benign_features_of, explain, ExplainConfig};
use deceit::metamorphic::detect_batch;
use deceit::ranking::{rank_benign_features, RankedBenignFeatures};
use deceit::vector::{FeatureVector, Label};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 24;

fn bits() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), N)
}

fn feature_set() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..N, 0..10)
}

fn label() -> impl Strategy<Value = Option<Label>> {
    prop_oneof![Just(None), Just(Some(Label::Benign)), Just(Some(Label::Malware))]
}

proptest! {
    #[test]
    fn nullify_is_bitwise_clear(b in bits(), s in feature_set()) {
        let schema = flat_schema(N);
        let v = FeatureVector::new(&schema, "v", b.clone(), None).unwrap();
        let out = v.nullify(&s).unwrap();
        for (i, (&got, &was)) in out.bits().iter().zip(&b).enumerate() {
            prop_assert_eq!(got, was && !s.contains(&i));
        }
        prop_assert!(out.popcount() <= v.popcount());
        prop_assert_eq!(out.nullify(&s).unwrap(), out.clone());
    }

    #[test]
    fn nullify_composes_under_union(b in bits(), s1 in feature_set(), s2 in feature_set()) {
        let schema = flat_schema(N);
        let v = FeatureVector::new(&schema, "v", b, None).unwrap();
        let union: Vec<usize> = s1.iter().chain(&s2).copied().collect();
        prop_assert_eq!(v.nullify(&union).unwrap(), v.nullify(&s1).unwrap().nullify(&s2).unwrap());
    }

    #[test]
    fn dataset_text_round_trips(rows in prop::collection::vec((bits(), label()), 0..20)) {
        let schema = flat_schema(N);
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (b, l))| FeatureVector::new(&schema, format!("app-{i}"), b, l).unwrap())
            .collect();
        let ds = LabeledDataset::new(&schema, samples).unwrap();
        let back = LabeledDataset::parse(&ds.to_text(), &schema).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn top_k_prefixes_nest(sets in prop::collection::vec(feature_set(), 1..30), a in 0usize..12, b in 0usize..12) {
        let r = RankedBenignFeatures::tally(sets.clone(), sets.len(), 0, "d", "fp");
        let (a, b) = (a.min(b).min(r.len()), a.max(b).min(r.len()));
        let small = r.top_k(a).unwrap();
        let large = r.top_k(b).unwrap();
        prop_assert_eq!(&large[..a], &small[..]);
        let pairs: usize = sets.iter().map(|s| s.iter().collect::<std::collections::BTreeSet<_>>().len()).sum();
        prop_assert_eq!(r.total_count(), pairs);
        for w in r.entries().windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn tally_is_additive(a in prop::collection::vec(feature_set(), 0..15), b in prop::collection::vec(feature_set(), 0..15)) {
        let counts = |r: &RankedBenignFeatures| r.entries().iter().copied().collect::<BTreeMap<_, _>>();
        let ra = counts(&RankedBenignFeatures::tally(a.clone(), a.len(), 0, "d", "fp"));
        let rb = counts(&RankedBenignFeatures::tally(b.clone(), b.len(), 0, "d", "fp"));
        let both = counts(&RankedBenignFeatures::tally(a.iter().chain(&b).cloned(), a.len() + b.len(), 0, "d", "fp"));
        for (i, c) in &both {
            prop_assert_eq!(*c, ra.get(i).unwrap_or(&0) + rb.get(i).unwrap_or(&0));
        }
        prop_assert_eq!(both.len(), ra.keys().chain(rb.keys()).collect::<std::collections::BTreeSet<_>>().len());
    }

    #[test]
    fn raising_delta_never_adds_malware(p in 0.0f64..=1.0, d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let lo = DecisionThreshold::new(lo).unwrap();
        let hi = DecisionThreshold::new(hi).unwrap();
        if hi.label_for(p).is_malware() {
            prop_assert!(lo.label_for(p).is_malware());
        }
    }

    #[test]
    fn detection_supersets_vanilla(seed in any::<u64>(), k in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = flat_schema(N);
        let model = random_model(&mut rng, &schema, 4);
        let samples: Vec<FeatureVector> = (0..40)
            .map(|i| {
                let vals: Vec<u8> = (0..N).map(|j| ((seed >> (j % 60)) as usize + i * j) as u8 % 2).collect();
                FeatureVector::from_values(&schema, format!("s{i}"), &vals, Some(Label::Benign)).unwrap()
            })
            .collect();
        let ds = LabeledDataset::new(&schema, samples).unwrap();
        let order: Vec<Vec<usize>> = (0..8).map(|n| (0..8 - n).collect()).collect();
        let r = RankedBenignFeatures::tally(order, 8, 0, "d", schema.fingerprint());
        let t = DecisionThreshold::default();
        let base = detect_batch(&model, &ds, &r, 0, t).unwrap();
        let meta = detect_batch(&model, &ds, &r, k, t).unwrap();
        let top = r.top_k(k).unwrap();
        for ((b, m), v) in base.iter().zip(&meta).zip(ds.samples()) {
            prop_assert_eq!(b.final_label, model.classify(v, t).unwrap());
            if b.final_label.is_malware() {
                prop_assert!(m.final_label.is_malware());
            }
            if top.iter().all(|&i| !v.bits()[i]) {
                prop_assert_eq!(m.final_label, b.final_label);
            }
        }
    }
}

#[test]
fn ranking_over_concatenated_dev_sets_adds_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let schema = flat_schema(N);
    let model = random_model(&mut rng, &schema, 5);
    let make = |prefix: &str, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..15)
            .map(|i| {
                let b: Vec<bool> = (0..N).map(|_| rand::Rng::gen_bool(&mut rng, 0.4)).collect();
                FeatureVector::new(&schema, format!("{prefix}{i}"), b, Some(Label::Benign)).unwrap()
            })
            .collect();
        LabeledDataset::new(&schema, samples).unwrap()
    };
    let a = make("a", 1);
    let b = make("b", 2);
    let cfg = ExplainConfig { num_samples: 200, top_m: 8, ..ExplainConfig::default() };
    let counts = |ds: &LabeledDataset| {
        rank_benign_features(&model, ds, &cfg).unwrap().entries().iter().copied().collect::<BTreeMap<_, _>>()
    };
    let (ca, cb, cab) = (counts(&a), counts(&b), counts(&a.concat(&b).unwrap()));
    for (i, c) in &cab {
        assert_eq!(*c, ca.get(i).unwrap_or(&0) + cb.get(i).unwrap_or(&0));
    }
    let direct: usize = a
        .iter()
        .chain(b.iter())
        .map(|v| benign_features_of(&explain(&model, v, &cfg).unwrap()).len())
        .sum();
    assert_eq!(cab.values().sum::<usize>(), direct);
}

#[test]
fn ranking_is_independent_of_pool_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let schema = flat_schema(N);
    let model = random_model(&mut rng, &schema, 5);
    let samples = (0..30)
        .map(|i| {
            let b: Vec<bool> = (0..N).map(|_| rand::Rng::gen_bool(&mut rng, 0.4)).collect();
            FeatureVector::new(&schema, format!("x{i}"), b, Some(Label::Malware)).unwrap()
        })
        .collect();
    let ds = LabeledDataset::new(&schema, samples).unwrap();
    let cfg = ExplainConfig { num_samples: 150, top_m: 6, ..ExplainConfig::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rank_benign_features(&model, &ds, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
