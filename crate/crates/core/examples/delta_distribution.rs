//! How far nullifying the top benign features moves each slice's malware
//! probability, as a text histogram.

use deceit::classifier::{maliciousness_score, train, TrainConfig};
use deceit::datagen::{generate, GenConfig};
use deceit::eval::delta_histogram;
use deceit::explainer::ExplainConfig;
use deceit::ranking::rank_benign_features;
use deceit::schema::FeatureSchema;
use deceit::vector::SampleKind;

fn bar(n: usize, total: usize) -> String {
    "#".repeat((60 * n).div_ceil(total.max(1)))
}

fn main() -> deceit::error::Result<()> {
    let schema = FeatureSchema::default_schema();
    let model = train(&generate(&GenConfig::new(schema.clone(), 3000, 600, 0, 31))?, &TrainConfig::default())?;
    let ranked = rank_benign_features(&model, &generate(&GenConfig::new(schema.clone(), 300, 60, 0, 32))?, &ExplainConfig::default())?;
    let test = generate(&GenConfig::new(schema.clone(), 1000, 300, 300, 33))?;

    let h = delta_histogram(&model, &test, &ranked, 6, 20)?;
    for (name, pick) in [
        ("benign", (|b: &deceit::eval::DeltaBin| b.benign) as fn(&_) -> usize),
        ("repackaged", |b| b.repackaged),
    ] {
        let total: usize = h.bins.iter().map(pick).sum();
        println!("{name} (n = {total})");
        for b in h.bins.iter().filter(|b| pick(b) > 0) {
            println!("  [{:+.1}, {:+.1})  {:>5}  {}", b.low, b.high, pick(b), bar(pick(b), total));
        }
    }
    for kind in [SampleKind::Benign, SampleKind::Malware, SampleKind::Repackaged] {
        println!("mean delta {kind:?}: {:+.4}", h.mean_delta(kind).unwrap_or(f64::NAN));
    }

    let probe = test.iter().find(|v| v.kind() == Some(SampleKind::Repackaged)).expect("generated");
    let p = model.predict_proba(probe)?;
    println!("{}: probability {p:.3}, maliciousness score {:+.3}", probe.app_id(), maliciousness_score(p));
    Ok(())
}
