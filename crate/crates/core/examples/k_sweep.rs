//! Detection metrics as the number of nullified features grows, written
//! to a report directory.

use deceit::classifier::{train, DecisionThreshold, TrainConfig};
use deceit::datagen::{generate, GenConfig};
use deceit::eval::{emit_report, sweep_k, RunFingerprints};
use deceit::explainer::ExplainConfig;
use deceit::ranking::rank_benign_features;
use deceit::schema::FeatureSchema;

fn main() -> deceit::error::Result<()> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "k_sweep_report".into());
    let schema = FeatureSchema::default_schema();
    let model = train(&generate(&GenConfig::new(schema.clone(), 3000, 600, 0, 21))?, &TrainConfig::default())?;
    let dev = generate(&GenConfig::new(schema.clone(), 300, 60, 0, 22))?;
    let ranked = rank_benign_features(&model, &dev, &ExplainConfig::default())?;
    let test = generate(&GenConfig::new(schema.clone(), 2000, 400, 400, 23))?;

    let t = DecisionThreshold::default();
    let sweep = sweep_k(&model, &test, &ranked, 10, t)?;
    println!(" k  recall  precision  benign  repackaged");
    for p in &sweep {
        let f = |x: Option<f64>| x.map_or("  NA".into(), |v| format!("{:.4}", v));
        println!(
            "{:>2}  {}  {}     {}  {}",
            p.k,
            f(p.metrics.recall),
            f(p.metrics.precision),
            f(p.benign_accuracy),
            f(p.metrics.repackaged_accuracy)
        );
    }
    let fp = RunFingerprints {
        model: model.digest(),
        rank: ranked.digest(&schema),
        data: test.digest(),
        threshold: t.delta().to_string(),
    };
    for path in emit_report(&sweep, &[], &fp, &out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
