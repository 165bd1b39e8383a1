//! Schema fingerprints, the dataset text format, nullification and model
//! files.

use deceit::classifier::{load_model, save_model, train, TrainConfig};
use deceit::dataset::LabeledDataset;
use deceit::schema::{Category, FeatureSchema, REFERENCE_BENIGN_FEATURES};
use deceit::vector::{nullify, FeatureVector, Label};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let default = FeatureSchema::default_schema();
    println!("default schema: {} features, fingerprint {}", default.len(), default.fingerprint());
    for c in Category::ALL {
        let n = default.features().iter().filter(|f| f.category == c).count();
        println!("  {:<10} {n}", c.as_str());
    }
    println!("first reference benign feature: {}", REFERENCE_BENIGN_FEATURES[0]);

    let schema = FeatureSchema::parse("Permission:SEND_SMS\nPermission:CAMERA\nClass:android.os.Binder\nLeak:device_id\n")?;
    let rows = vec![
        FeatureVector::from_values(&schema, "app-a", &[1, 1, 0, 1], Some(Label::Malware))?,
        FeatureVector::from_active(&schema, "app-b", &[1, 2], Some(Label::Benign))?,
    ];
    let ds = LabeledDataset::new(&schema, rows)?;
    let text = ds.to_text();
    print!("dataset file:\n{text}");
    assert_eq!(LabeledDataset::parse(&text, &schema)?, ds);

    let cleared = nullify(&ds.samples()[0], &[1, 3])?;
    println!("app-a after nullifying CAMERA and device_id: {:?}", cleared.active());

    let model = train(&ds, &TrainConfig { hidden_width: 4, epochs: 50, ..TrainConfig::default() })?;
    let path = std::env::temp_dir().join("deceit-tiny.model");
    save_model(&model, &path)?;
    let back = load_model(&path)?;
    println!("model round trip: digest {} ({} bytes)", back.digest(), std::fs::metadata(&path)?.len());
    assert_eq!(back.digest(), model.digest());
    std::fs::remove_file(&path)?;
    Ok(())
}
