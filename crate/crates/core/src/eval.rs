//! Detection metrics, k-sweeps and probability-delta histograms.
//!
//! Malware is the positive class. Ratios whose denominator is zero are
//! `None` and are written as `NA` in reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::classifier::{DecisionThreshold, Model};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metamorphic::{delta_with, detect_batch, DetectionResult};
use crate::ranking::RankedBenignFeatures;
use crate::vector::{Label, SampleKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Malware, Label::Malware) => self.tp += 1,
            (Label::Benign, Label::Malware) => self.fp += 1,
            (Label::Benign, Label::Benign) => self.tn += 1,
            (Label::Malware, Label::Benign) => self.fn_ += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Fraction of benign apps labelled benign.
    pub benign_accuracy: Option<f64>,
    /// Fraction of malware apps (all kinds) labelled malware; equals recall.
    pub malware_accuracy: Option<f64>,
    /// Fraction of repackaged apps labelled malware, when any are tagged.
    pub repackaged_accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts predictions against ground truth. `results[i]` must describe
/// `data.samples()[i]`.
pub fn confusion(results: &[DetectionResult], data: &LabeledDataset) -> Result<ConfusionMatrix> {
    check_alignment(results, data)?;
    let mut c = ConfusionMatrix::default();
    for (r, v) in results.iter().zip(data.samples()) {
        let truth = v.label().ok_or_else(|| Error::Unlabeled(v.app_id().to_string()))?;
        c.record(truth, r.final_label);
    }
    Ok(c)
}

fn check_alignment(results: &[DetectionResult], data: &LabeledDataset) -> Result<()> {
    if results.len() != data.len() {
        return Err(Error::InvalidConfig(format!(
            "{} results for {} samples",
            results.len(),
            data.len()
        )));
    }
    if let Some((i, (r, v))) = results
        .iter()
        .zip(data.samples())
        .enumerate()
        .find(|(_, (r, v))| r.app_id != v.app_id())
    {
        return Err(Error::InvalidConfig(format!(
            "result {i} is for `{}` but sample is `{}`",
            r.app_id,
            v.app_id()
        )));
    }
    Ok(())
}

pub fn metrics_of(c: &ConfusionMatrix) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
        benign_accuracy: ratio(c.tn, c.tn + c.fp),
        malware_accuracy: recall,
        repackaged_accuracy: None,
    }
}

/// Metrics including the repackaged slice.
pub fn evaluate(results: &[DetectionResult], data: &LabeledDataset) -> Result<Metrics> {
    let c = confusion(results, data)?;
    let mut m = metrics_of(&c);
    let (mut hit, mut total) = (0, 0);
    for (r, v) in results.iter().zip(data.samples()) {
        if v.kind() == Some(SampleKind::Repackaged) {
            total += 1;
            hit += usize::from(r.final_label == Label::Malware);
        }
    }
    m.repackaged_accuracy = ratio(hit, total);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub k: usize,
    /// The k = 0 metrics, i.e. the plain classifier.
    pub metrics_vanilla_equivalent: Metrics,
    pub metrics: Metrics,
    pub benign_accuracy: Option<f64>,
    pub malware_accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Apps the plain classifier calls malware but this k does not. The
    /// detection structure makes this zero; it is counted, not assumed.
    pub superset_violations: usize,
}

/// Evaluates detection for every k in `0..=k_max`.
pub fn sweep_k(
    model: &Model,
    data: &LabeledDataset,
    ranked: &RankedBenignFeatures,
    k_max: usize,
    t: DecisionThreshold,
) -> Result<Vec<SweepPoint>> {
    if k_max > ranked.len() {
        return Err(Error::KOutOfRange {
            k: k_max,
            available: ranked.len(),
        });
    }
    data.require_labels()?;
    let vanilla_results = detect_batch(model, data, ranked, 0, t)?;
    let vanilla = evaluate(&vanilla_results, data)?;
    (0..=k_max)
        .map(|k| {
            let results = if k == 0 {
                vanilla_results.clone()
            } else {
                detect_batch(model, data, ranked, k, t)?
            };
            let metrics = evaluate(&results, data)?;
            let superset_violations = vanilla_results
                .iter()
                .zip(&results)
                .filter(|(v, r)| v.final_label == Label::Malware && r.final_label != Label::Malware)
                .count();
            Ok(SweepPoint {
                k,
                metrics_vanilla_equivalent: vanilla,
                metrics,
                benign_accuracy: metrics.benign_accuracy,
                malware_accuracy: metrics.malware_accuracy,
                confusion: confusion(&results, data)?,
                superset_violations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeltaBin {
    pub low: f64,
    pub high: f64,
    pub benign: usize,
    pub malware: usize,
    pub repackaged: usize,
}

impl DeltaBin {
    pub fn total(&self) -> usize {
        self.benign + self.malware + self.repackaged
    }
}

/// Distribution of unconditional probability deltas at one k.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHistogram {
    pub k: usize,
    pub bins: Vec<DeltaBin>,
    sums: [f64; 3],
    counts: [usize; 3],
}

fn slot(kind: SampleKind) -> usize {
    match kind {
        SampleKind::Benign => 0,
        SampleKind::Malware => 1,
        SampleKind::Repackaged => 2,
    }
}

impl DeltaHistogram {
    /// Mean delta over samples of `kind`, `None` if there are none.
    pub fn mean_delta(&self, kind: SampleKind) -> Option<f64> {
        let s = slot(kind);
        (self.counts[s] > 0).then(|| self.sums[s] / self.counts[s] as f64)
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(DeltaBin::total).sum()
    }

    /// Index of the bin holding a delta of zero.
    pub fn zero_bin(&self) -> usize {
        bin_index(0.0, self.bins.len())
    }
}

fn bin_index(delta: f64, bins: usize) -> usize {
    let pos = ((delta + 1.0) * bins as f64 / 2.0).floor();
    (pos.max(0.0) as usize).min(bins - 1)
}

/// Bins the probability delta of every sample over `[-1, 1]`.
pub fn delta_histogram(
    model: &Model,
    data: &LabeledDataset,
    ranked: &RankedBenignFeatures,
    k: usize,
    bins: usize,
) -> Result<DeltaHistogram> {
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if ranked.schema_fingerprint() != model.schema_fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: model.schema_fingerprint().to_string(),
            found: ranked.schema_fingerprint().to_string(),
        });
    }
    let features = ranked.top_k(k)?;
    let deltas: Vec<Result<(SampleKind, f64)>> = data
        .samples()
        .par_iter()
        .map(|v| {
            let kind = v.kind().ok_or_else(|| Error::Unlabeled(v.app_id().to_string()))?;
            Ok((kind, delta_with(model, v, &features)?))
        })
        .collect();
    let width = 2.0 / bins as f64;
    let mut out = DeltaHistogram {
        k,
        bins: (0..bins)
            .map(|b| DeltaBin {
                low: -1.0 + b as f64 * width,
                high: if b + 1 == bins { 1.0 } else { -1.0 + (b + 1) as f64 * width },
                ..DeltaBin::default()
            })
            .collect(),
        sums: [0.0; 3],
        counts: [0; 3],
    };
    for (index, d) in deltas.into_iter().enumerate() {
        let (kind, delta) = d.map_err(|e| Error::Sample { index, source: Box::new(e) })?;
        let bin = &mut out.bins[bin_index(delta, bins)];
        match kind {
            SampleKind::Benign => bin.benign += 1,
            SampleKind::Malware => bin.malware += 1,
            SampleKind::Repackaged => bin.repackaged += 1,
        }
        out.sums[slot(kind)] += delta;
        out.counts[slot(kind)] += 1;
    }
    Ok(out)
}

/// Digests identifying the inputs of an evaluation run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunFingerprints {
    pub model: String,
    pub rank: String,
    pub data: String,
    pub threshold: String,
}

impl RunFingerprints {
    fn header(&self) -> String {
        format!(
            "# model={}\n# rank={}\n# data={}\n# delta={}\n",
            self.model, self.rank, self.data, self.threshold
        )
    }
}

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

pub fn sweep_csv(sweep: &[SweepPoint], fingerprints: &RunFingerprints) -> String {
    let mut out = fingerprints.header();
    out.push_str("k,accuracy,precision,recall,f1,benign_acc,malware_acc,repackaged_acc\n");
    for p in sweep {
        let m = &p.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.k,
            na(m.accuracy),
            na(m.precision),
            na(m.recall),
            na(m.f1),
            na(p.benign_accuracy),
            na(p.malware_accuracy),
            na(m.repackaged_accuracy)
        );
    }
    out
}

pub fn deltas_csv(h: &DeltaHistogram, fingerprints: &RunFingerprints) -> String {
    let mut out = fingerprints.header();
    let _ = writeln!(out, "# k={}", h.k);
    out.push_str("bin_low,bin_high,count_benign,count_malware,count_repackaged\n");
    for b in &h.bins {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{},{},{}",
            b.low, b.high, b.benign, b.malware, b.repackaged
        );
    }
    out
}

/// Writes `sweep.csv` and one `deltas_k<k>.csv` per histogram into `dir`.
pub fn emit_report(
    sweep: &[SweepPoint],
    histograms: &[DeltaHistogram],
    fingerprints: &RunFingerprints,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("sweep.csv");
    std::fs::write(&path, sweep_csv(sweep, fingerprints))?;
    written.push(path);
    for h in histograms {
        let path = dir.join(format!("deltas_k{}.csv", h.k));
        std::fs::write(&path, deltas_csv(h, fingerprints))?;
        written.push(path);
    }
    Ok(written)
}
