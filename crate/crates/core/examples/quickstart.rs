//! Smallest end-to-end use: generate data, train, rank, detect one app.

use deceit::classifier::{train, DecisionThreshold, TrainConfig};
use deceit::datagen::{generate, GenConfig};
use deceit::explainer::ExplainConfig;
use deceit::metamorphic::{detect, DEFAULT_K};
use deceit::ranking::rank_benign_features;
use deceit::schema::FeatureSchema;

fn main() -> deceit::error::Result<()> {
    let schema = FeatureSchema::default_schema();
    let train_set = generate(&GenConfig::new(schema.clone(), 2000, 400, 0, 1))?;
    let dev = generate(&GenConfig::new(schema.clone(), 200, 50, 0, 2))?;
    let test = generate(&GenConfig::new(schema.clone(), 0, 0, 20, 3))?;

    let model = train(&train_set, &TrainConfig::default())?;
    let ranked = rank_benign_features(&model, &dev, &ExplainConfig::default())?;

    let t = DecisionThreshold::default();
    let mut caught = 0;
    for app in test.iter() {
        let r = detect(&model, app, &ranked, DEFAULT_K, t)?;
        println!(
            "{}  p = {:.3}  follow-up = {}  -> {}{}",
            r.app_id,
            r.original_proba,
            r.followup_proba.map_or("  -  ".into(), |p| format!("{p:.3}")),
            r.final_label,
            if r.diverged { " (metamorphic relation violated)" } else { "" }
        );
        caught += usize::from(r.final_label.is_malware());
    }
    println!("{caught} of {} repackaged apps flagged", test.len());
    Ok(())
}
