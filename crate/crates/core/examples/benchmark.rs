//! Runs the default synthetic benchmark and prints the k-sweep.

use std::time::Instant;

use deceit::benchmark::{run_benchmark, BenchmarkConfig};
use deceit::schema::FeatureSchema;
use deceit::vector::SampleKind;

fn pct(x: Option<f64>) -> String {
    x.map_or("NA".into(), |v| format!("{:6.2}", 100.0 * v))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchmarkConfig::default();
    let schema = FeatureSchema::default_schema();
    let start = Instant::now();
    let out = run_benchmark(&cfg)?;
    println!("trained in {:.1}s, final loss {:.4}", start.elapsed().as_secs_f64(), out.model.training_meta().final_loss);

    println!("top benign-indicative features:");
    for (i, c) in out.ranked.entries().iter().take(10) {
        println!("  {:<55} {c}", schema.features()[*i].qualified_name());
    }

    println!("{:>3} {:>8} {:>8} {:>8} {:>8}", "k", "acc", "benign", "malware", "repack");
    for p in &out.sweep {
        let m = &p.metrics;
        println!(
            "{:>3} {:>8} {:>8} {:>8} {:>8}",
            p.k,
            pct(m.accuracy),
            pct(m.benign_accuracy),
            pct(m.malware_accuracy),
            pct(m.repackaged_accuracy)
        );
    }
    if let Some(best) = out.best_k(0.03) {
        println!(
            "best k = {}: repackaged +{:.2} pp, benign -{:.2} pp",
            best.k,
            100.0 * best.repackaged_gain,
            100.0 * best.benign_drop
        );
    }
    let h = &out.histogram;
    for kind in [SampleKind::Benign, SampleKind::Malware, SampleKind::Repackaged] {
        println!("mean delta at k={} ({kind:?}): {:.4}", h.k, h.mean_delta(kind).unwrap_or(f64::NAN));
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
