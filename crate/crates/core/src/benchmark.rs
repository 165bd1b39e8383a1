//! End-to-end synthetic benchmark: generate disjoint train, development and
//! test sets, train the classifier, rank benign features on the development
//! set and sweep k on the test set.

use crate::classifier::{train, DecisionThreshold, Model, TrainConfig};
use crate::datagen::{generate, profiles_with, GenConfig, ProfileParams};
use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::eval::{delta_histogram, sweep_k, DeltaHistogram, SweepPoint};
use crate::explainer::ExplainConfig;
use crate::ranking::{rank_benign_features, RankedBenignFeatures};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub schema: FeatureSchema,
    /// Test set: benign, malware and repackaged counts.
    pub test_counts: (usize, usize, usize),
    pub test_seed: u64,
    /// Training set: benign and malware counts (no repackaged samples).
    pub train_counts: (usize, usize),
    pub train_seed: u64,
    /// Development set used for ranking.
    pub dev_counts: (usize, usize),
    pub dev_seed: u64,
    pub share_fraction: f64,
    pub payload_size: usize,
    pub profile: ProfileParams,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
    pub k_max: usize,
    pub histogram_k: usize,
    pub bins: usize,
    pub threshold: DecisionThreshold,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            schema: FeatureSchema::default_schema(),
            test_counts: (5000, 1000, 1000),
            test_seed: 7,
            train_counts: (5000, 1000),
            train_seed: 1007,
            dev_counts: (500, 100),
            dev_seed: 2007,
            share_fraction: 0.85,
            payload_size: 12,
            profile: ProfileParams::default(),
            train: TrainConfig::default(),
            explain: ExplainConfig::default(),
            k_max: 10,
            histogram_k: 6,
            bins: 20,
            threshold: DecisionThreshold::default(),
        }
    }
}

impl BenchmarkConfig {
    fn gen(&self, counts: (usize, usize, usize), seed: u64) -> GenConfig {
        let (benign_profile, malware_profile) = profiles_with(&self.schema, &self.profile);
        GenConfig {
            schema: self.schema.clone(),
            n_benign: counts.0,
            n_malware: counts.1,
            n_repackaged: counts.2,
            benign_profile,
            malware_profile,
            share_fraction: self.share_fraction,
            payload_size: self.payload_size,
            seed,
        }
    }

    pub fn train_gen(&self) -> GenConfig {
        self.gen((self.train_counts.0, self.train_counts.1, 0), self.train_seed)
    }

    pub fn dev_gen(&self) -> GenConfig {
        self.gen((self.dev_counts.0, self.dev_counts.1, 0), self.dev_seed)
    }

    pub fn test_gen(&self) -> GenConfig {
        self.gen(self.test_counts, self.test_seed)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub model: Model,
    pub ranked: RankedBenignFeatures,
    pub test: LabeledDataset,
    pub sweep: Vec<SweepPoint>,
    pub histogram: DeltaHistogram,
}

/// Recall gain and benign-accuracy drop of one sweep point against k = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effect {
    pub k: usize,
    pub repackaged_gain: f64,
    pub benign_drop: f64,
}

impl BenchmarkOutcome {
    pub fn effects(&self) -> Vec<Effect> {
        let base = &self.sweep[0].metrics;
        self.sweep
            .iter()
            .map(|p| Effect {
                k: p.k,
                repackaged_gain: p.metrics.repackaged_accuracy.unwrap_or(0.0)
                    - base.repackaged_accuracy.unwrap_or(0.0),
                benign_drop: base.benign_accuracy.unwrap_or(0.0) - p.metrics.benign_accuracy.unwrap_or(0.0),
            })
            .collect()
    }

    /// The k in `1..` with the largest repackaged gain among those whose
    /// benign drop stays within `max_benign_drop`.
    pub fn best_k(&self, max_benign_drop: f64) -> Option<Effect> {
        self.effects()
            .into_iter()
            .skip(1)
            .filter(|e| e.benign_drop <= max_benign_drop)
            .max_by(|a, b| a.repackaged_gain.total_cmp(&b.repackaged_gain).then(b.k.cmp(&a.k)))
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let train_set = generate(&cfg.train_gen())?;
    let dev = generate(&cfg.dev_gen())?;
    let test = generate(&cfg.test_gen())?;
    let model = train(&train_set, &cfg.train)?;
    let ranked = rank_benign_features(&model, &dev, &cfg.explain)?;
    let sweep = sweep_k(&model, &test, &ranked, cfg.k_max.min(ranked.len()), cfg.threshold)?;
    let histogram = delta_histogram(&model, &test, &ranked, cfg.histogram_k.min(ranked.len()), cfg.bins)?;
    Ok(BenchmarkOutcome {
        model,
        ranked,
        test,
        sweep,
        histogram,
    })
}
