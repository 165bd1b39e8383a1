mod common;

use common::{metrics_close, oracle_metrics};
use deceit::benchmark::BenchmarkConfig;
use deceit::classifier::{train, DecisionThreshold, TrainConfig};
use deceit::datagen::{default_profiles, expected_popcount, generate, generate_traced, GenConfig};
use deceit::eval::{delta_histogram, metrics_of, sweep_k, ConfusionMatrix};
use deceit::ranking::rank_benign_features;
use deceit::schema::FeatureSchema;
use deceit::vector::{Label, SampleKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn generated_popcounts_track_profiles() {
    let schema = FeatureSchema::default_schema();
    let (benign, malware) = default_profiles(&schema);
    let ds = generate(&GenConfig::new(schema, 10_000, 10_000, 0, 31)).unwrap();
    for (label, profile) in [(Label::Benign, &benign), (Label::Malware, &malware)] {
        let vs: Vec<_> = ds.iter().filter(|v| v.label() == Some(label)).collect();
        let mean = vs.iter().map(|v| v.popcount()).sum::<usize>() as f64 / vs.len() as f64;
        let expected = expected_popcount(profile);
        assert!((mean - expected).abs() <= 0.1 * expected, "{label}: {mean} vs {expected}");
    }
}

#[test]
fn repackaged_samples_share_their_template() {
    let schema = FeatureSchema::default_schema();
    let cfg = GenConfig::new(schema, 0, 0, 500, 12);
    let (ds, traces) = generate_traced(&cfg).unwrap();
    assert_eq!(ds.len(), 500);
    for (v, t) in ds.iter().zip(&traces) {
        assert_eq!(v.kind(), Some(SampleKind::Repackaged));
        assert!(t.share() > 0.8, "{} shares {}", t.app_id, t.share());
        assert!(t.retained.iter().all(|i| t.template.contains(i) && v.bits()[*i]));
        assert_eq!(t.payload.len(), cfg.payload_size);
        assert!(t.payload.iter().all(|i| v.bits()[*i]));
    }
}

#[test]
fn seeds_reproduce_and_differ() {
    let schema = FeatureSchema::default_schema();
    let a = generate(&GenConfig::new(schema.clone(), 5000, 1000, 1000, 7)).unwrap();
    let b = generate(&GenConfig::new(schema.clone(), 5000, 1000, 1000, 7)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = generate(&GenConfig::new(schema, 5000, 1000, 1000, 8)).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

#[test]
fn held_out_accuracy_on_generated_data() {
    let schema = FeatureSchema::default_schema();
    let ds = generate(&GenConfig::new(schema, 5000, 1000, 0, 7)).unwrap();
    let (fit, held) = ds.split(0.2, 7).unwrap();
    let model = train(&fit, &TrainConfig::default()).unwrap();
    let t = DecisionThreshold::default();
    let correct = held.iter().filter(|v| model.classify(v, t).unwrap() == v.label().unwrap()).count();
    let acc = correct as f64 / held.len() as f64;
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn metrics_agree_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..100 {
        let max = if i < 10 { 2 } else { 1000 };
        let c = ConfusionMatrix {
            tp: rng.gen_range(0..max),
            fp: rng.gen_range(0..max),
            tn: rng.gen_range(0..max),
            fn_: rng.gen_range(0..max),
        };
        assert!(metrics_close(&metrics_of(&c), &oracle_metrics(&c), 1e-12), "{c:?}");
    }
}

#[test]
fn sweep_invariants_on_small_benchmark() {
    let mut cfg = BenchmarkConfig {
        test_counts: (600, 150, 150),
        train_counts: (600, 150),
        dev_counts: (80, 20),
        ..BenchmarkConfig::default()
    };
    cfg.train.epochs = 10;
    cfg.explain.num_samples = 300;
    let model = train(&generate(&cfg.train_gen()).unwrap(), &cfg.train).unwrap();
    let ranked = rank_benign_features(&model, &generate(&cfg.dev_gen()).unwrap(), &cfg.explain).unwrap();
    let test = generate(&cfg.test_gen()).unwrap();
    let sweep = sweep_k(&model, &test, &ranked, 10, cfg.threshold).unwrap();
    assert_eq!(sweep.len(), 11);
    for p in &sweep {
        assert_eq!(p.superset_violations, 0);
        let c = p.confusion;
        assert_eq!(c.total(), test.len());
        assert!((p.metrics.accuracy.unwrap() * test.len() as f64 - (c.tp + c.tn) as f64).abs() < 1e-6);
        assert_eq!(p.metrics_vanilla_equivalent, sweep[0].metrics);
    }
    for w in sweep.windows(2) {
        assert!(w[1].metrics.recall.unwrap() >= w[0].metrics.recall.unwrap());
        assert!(w[1].metrics.benign_accuracy.unwrap() <= w[0].metrics.benign_accuracy.unwrap());
        assert!(w[1].confusion.fp >= w[0].confusion.fp);
    }

    let h = delta_histogram(&model, &test, &ranked, 6, 20).unwrap();
    assert_eq!(h.total(), test.len());
    assert_eq!(h.bins.len(), 20);
    assert_eq!(h.bins[0].low, -1.0);
    assert_eq!(h.bins[19].high, 1.0);
    assert!(delta_histogram(&model, &test, &ranked, 6, 0).is_err());
    let h0 = delta_histogram(&model, &test, &ranked, 0, 20).unwrap();
    assert_eq!(h0.bins[h0.zero_bin()].total(), test.len());
}
