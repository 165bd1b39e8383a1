//! Local surrogate explanation of a single prediction.

use deceit::classifier::{train, TrainConfig};
use deceit::datagen::{generate, GenConfig};
use deceit::explainer::{benign_features_of, explain, explanation_rows, ExplainConfig};
use deceit::schema::FeatureSchema;

fn main() -> deceit::error::Result<()> {
    let schema = FeatureSchema::default_schema();
    let model = train(&generate(&GenConfig::new(schema.clone(), 2000, 400, 0, 11))?, &TrainConfig::default())?;
    let apps = generate(&GenConfig::new(schema.clone(), 0, 0, 1, 12))?;
    let app = &apps.samples()[0];
    let cfg = ExplainConfig::default();
    let e = explain(&model, app, &cfg)?;

    println!("{}: malware probability {:.4}", app.app_id(), model.predict_proba(app)?);
    println!("surrogate intercept {:.4}, weighted R^2 {:.3}", e.intercept, e.surrogate_fit_r2);
    for (i, w) in &e.contributions {
        let side = if *w < 0.0 { "benign" } else { "malware" };
        println!("  {w:+.5}  {:<7}  {}", side, schema.features()[*i].qualified_name());
    }
    println!("{} benign-indicative features", benign_features_of(&e).len());
    print!("{}", explanation_rows(std::slice::from_ref(&e), &schema));
    Ok(())
}
