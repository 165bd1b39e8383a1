//! Command-line surface: `gen`, `train`, `rank`, `detect` and `eval`.
//!
//! Every subcommand writes a JSON run manifest next to its outputs. Paths in
//! manifests are recorded by file name only so reruns into different
//! directories stay byte-identical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classifier::{load_model, save_model, train, DecisionThreshold, Model, TrainConfig};
use crate::datagen::{generate, profiles_with, GenConfig, ProfileParams};
use crate::dataset::{parse_dataset, LabeledDataset};
use crate::eval::{delta_histogram, emit_report, metrics_of, sweep_k, ConfusionMatrix, RunFingerprints};
use crate::explainer::ExplainConfig;
use crate::metamorphic::{detect_batch, DetectionReport, DEFAULT_K};
use crate::ranking::{rank_benign_features, RankedBenignFeatures};
use crate::schema::{load_schema, FeatureSchema};

#[derive(Debug, Parser)]
#[command(name = "deceit", version, about = "Expose repackaged malware by re-classifying apps without their most benign-looking features")]
pub struct Cli {
    /// Feature schema file; the built-in 694-feature schema when omitted.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled dataset.
    Gen(GenArgs),
    /// Train the classifier.
    Train(TrainArgs),
    /// Rank benign-indicative features over a development set.
    Rank(RankArgs),
    /// Run metamorphic detection over a dataset.
    Detect(DetectArgs),
    /// Sweep k and write the evaluation report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// TOML generator config; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// TOML training config; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the data held out for the printed metrics.
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub explain_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub top_m: usize,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub rank: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short, long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub rank: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// k for the probability-delta histogram.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub hist_k: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Generator settings read from `gen --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenFileConfig {
    pub n_benign: usize,
    pub n_malware: usize,
    pub n_repackaged: usize,
    pub share_fraction: f64,
    pub payload_size: usize,
    pub seed: u64,
    pub profile: ProfileParams,
}

impl Default for GenFileConfig {
    fn default() -> Self {
        GenFileConfig {
            n_benign: 5000,
            n_malware: 1000,
            n_repackaged: 1000,
            share_fraction: 0.85,
            payload_size: 12,
            seed: 7,
            profile: ProfileParams::default(),
        }
    }
}

/// Record of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(subcommand: &str, seed: Option<u64>) -> Self {
        RunManifest {
            tool: "deceit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            params: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) {
        self.params
            .insert(key.into(), serde_json::to_value(value).expect("parameter serializes"));
    }

    fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(display_name(path), file_digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs.insert(display_name(path), file_digest(path)?);
        Ok(())
    }

    fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// `<path>.<suffix>`, e.g. `model.bin.manifest.json`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_data(path: &Path, schema: &FeatureSchema) -> anyhow::Result<LabeledDataset> {
    parse_dataset(path, schema).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model_for(path: &Path, schema: &FeatureSchema) -> anyhow::Result<Model> {
    let model = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    schema
        .check_fingerprint(model.schema_fingerprint())
        .with_context(|| format!("model {} was trained on another schema", path.display()))?;
    Ok(model)
}

fn load_rank(path: &Path, schema: &FeatureSchema) -> anyhow::Result<RankedBenignFeatures> {
    RankedBenignFeatures::read(path, schema).with_context(|| format!("loading rank file {}", path.display()))
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{:.2}%", 100.0 * v))
}

fn cmd_gen(schema: FeatureSchema, args: &GenArgs) -> anyhow::Result<()> {
    let file: GenFileConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => GenFileConfig::default(),
    };
    let seed = args.seed.unwrap_or(file.seed);
    let (benign_profile, malware_profile) = profiles_with(&schema, &file.profile);
    let cfg = GenConfig {
        schema,
        n_benign: file.n_benign,
        n_malware: file.n_malware,
        n_repackaged: file.n_repackaged,
        benign_profile,
        malware_profile,
        share_fraction: file.share_fraction,
        payload_size: file.payload_size,
        seed,
    };
    let ds = generate(&cfg)?;
    ds.write(&args.out)?;
    let provenance = sidecar(&args.out, "provenance.json");
    cfg.provenance().write(&provenance)?;

    let mut m = RunManifest::new("gen", Some(seed));
    m.param("config", &GenFileConfig { seed, ..file });
    m.param("schema_fingerprint", cfg.schema.fingerprint());
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    m.output(&args.out)?;
    m.output(&provenance)?;
    m.write(&sidecar(&args.out, "manifest.json"))?;
    println!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}

fn cmd_train(schema: FeatureSchema, args: &TrainArgs) -> anyhow::Result<()> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !(0.0..1.0).contains(&args.holdout) {
        bail!("--holdout {} not in [0, 1)", args.holdout);
    }
    let data = load_data(&args.data, &schema)?;
    let (fit, held) = data.split(args.holdout, cfg.seed)?;
    let model = train(&fit, &cfg)?;
    save_model(&model, &args.out)?;

    println!("final loss {:.6}", model.training_meta().final_loss);
    if !held.is_empty() {
        let mut c = ConfusionMatrix::default();
        for v in held.iter() {
            let truth = v.label().context("holdout sample without a label")?;
            c.record(truth, model.classify(v, DecisionThreshold::default())?);
        }
        let met = metrics_of(&c);
        println!(
            "holdout ({} samples): accuracy {} precision {} recall {} f1 {}",
            held.len(),
            pct(met.accuracy),
            pct(met.precision),
            pct(met.recall),
            pct(met.f1)
        );
    }

    let mut m = RunManifest::new("train", Some(cfg.seed));
    m.param("config", &cfg);
    m.param("holdout", args.holdout);
    m.param("final_loss", model.training_meta().final_loss);
    m.input(&args.data)?;
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    m.output(&args.out)?;
    m.write(&sidecar(&args.out, "manifest.json"))?;
    Ok(())
}

fn cmd_rank(schema: FeatureSchema, args: &RankArgs) -> anyhow::Result<()> {
    let model = load_model_for(&args.model, &schema)?;
    let dev = load_data(&args.dev, &schema)?;
    let cfg = ExplainConfig {
        num_samples: args.explain_samples,
        kernel_width: args.kernel_width,
        top_m: args.top_m,
        seed: args.seed,
        ..ExplainConfig::default()
    };
    let ranked = rank_benign_features(&model, &dev, &cfg)?;
    ranked.write(&args.out, &schema)?;
    println!(
        "ranked {} features over {} samples ({} skipped)",
        ranked.len(),
        ranked.dev_set_size(),
        ranked.skipped()
    );

    let mut m = RunManifest::new("rank", Some(args.seed));
    m.param("explain", &cfg);
    m.input(&args.model)?;
    m.input(&args.dev)?;
    m.output(&args.out)?;
    m.write(&sidecar(&args.out, "manifest.json"))?;
    Ok(())
}

fn cmd_detect(schema: FeatureSchema, args: &DetectArgs) -> anyhow::Result<()> {
    let threshold = DecisionThreshold::new(args.delta)?;
    let model = load_model_for(&args.model, &schema)?;
    let ranked = load_rank(&args.rank, &schema)?;
    let data = load_data(&args.data, &schema)?;
    let results = detect_batch(&model, &data, &ranked, args.k, threshold)?;
    let diverged = results.iter().filter(|r| r.diverged).count();
    let malware = results.iter().filter(|r| r.final_label.is_malware()).count();
    let report = DetectionReport {
        k: args.k,
        threshold,
        model_digest: model.digest(),
        rank_digest: ranked.digest(&schema),
        results,
    };
    report.write(&args.out)?;
    println!(
        "{} apps: {malware} malware, {diverged} flagged by the metamorphic relation",
        data.len()
    );

    let mut m = RunManifest::new("detect", None);
    m.param("k", args.k);
    m.param("delta", args.delta);
    m.input(&args.model)?;
    m.input(&args.rank)?;
    m.input(&args.data)?;
    m.output(&args.out)?;
    m.write(&sidecar(&args.out, "manifest.json"))?;
    Ok(())
}

fn cmd_eval(schema: FeatureSchema, args: &EvalArgs) -> anyhow::Result<()> {
    let threshold = DecisionThreshold::new(args.delta)?;
    let model = load_model_for(&args.model, &schema)?;
    let ranked = load_rank(&args.rank, &schema)?;
    let data = load_data(&args.data, &schema)?;
    let sweep = sweep_k(&model, &data, &ranked, args.k_max, threshold)?;
    let histogram = delta_histogram(&model, &data, &ranked, args.hist_k, args.bins)?;
    let fingerprints = RunFingerprints {
        model: model.digest(),
        rank: ranked.digest(&schema),
        data: data.digest(),
        threshold: args.delta.to_string(),
    };
    let written = emit_report(&sweep, &[histogram], &fingerprints, &args.out_dir)?;
    for p in &sweep {
        println!(
            "k={:<3} accuracy {} benign {} malware {} repackaged {}",
            p.k,
            pct(p.metrics.accuracy),
            pct(p.benign_accuracy),
            pct(p.malware_accuracy),
            pct(p.metrics.repackaged_accuracy)
        );
    }

    let mut m = RunManifest::new("eval", None);
    m.param("k_max", args.k_max);
    m.param("hist_k", args.hist_k);
    m.param("bins", args.bins);
    m.param("delta", args.delta);
    m.input(&args.model)?;
    m.input(&args.rank)?;
    m.input(&args.data)?;
    for p in &written {
        m.output(p)?;
    }
    m.write(&args.out_dir.join("manifest.json"))?;
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let schema = match &cli.schema {
        Some(p) => load_schema(p).with_context(|| format!("loading schema {}", p.display()))?,
        None => FeatureSchema::default_schema(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(schema, a),
        Command::Train(a) => cmd_train(schema, a),
        Command::Rank(a) => cmd_rank(schema, a),
        Command::Detect(a) => cmd_detect(schema, a),
        Command::Eval(a) => cmd_eval(schema, a),
    })
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassWeighting;

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("out/m.bin"), "manifest.json"), PathBuf::from("out/m.bin.manifest.json"));
    }

    #[test]
    fn gen_config_defaults_and_unknown_keys() {
        let c: GenFileConfig = toml::from_str("n_benign = 3\n[profile]\ncommon_p = 0.5\n").unwrap();
        assert_eq!(c.n_benign, 3);
        assert_eq!(c.n_malware, 1000);
        assert_eq!(c.profile.common_p, 0.5);
        assert!(toml::from_str::<GenFileConfig>("bogus = 1\n").is_err());
        let t: TrainConfig = toml::from_str("epochs = 5\nclass_weighting = \"balanced\"\n").unwrap();
        assert_eq!((t.epochs, t.class_weighting), (5, ClassWeighting::Balanced));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with(["deceit", "train", "--out", "x"]), 2);
        assert_eq!(main_with(["deceit", "gen", "--out", "x", "--seed", "abc"]), 2);
        assert_eq!(main_with(["deceit", "frobnicate"]), 2);
    }
}
