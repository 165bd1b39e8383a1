//! The metamorphic detection step.
//!
//! An app the classifier already calls malware keeps that label. Otherwise
//! the top-k benign-ranked features are nullified and the app is classified
//! again. A follow-up at or above the threshold means the two outputs
//! disagree, and the app is labelled malware.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::classifier::{DecisionThreshold, Model};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::ranking::RankedBenignFeatures;
use crate::vector::{FeatureVector, Label};

pub const DEFAULT_K: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub app_id: String,
    pub original_proba: f64,
    /// Present only when the relation was applied (original predicted benign).
    pub followup_proba: Option<f64>,
    /// Features nullified for the follow-up; empty when not applied.
    pub applied_features: Vec<usize>,
    pub final_label: Label,
    pub diverged: bool,
}

impl DetectionResult {
    /// `followup - original`, when the follow-up was computed.
    pub fn delta(&self) -> Option<f64> {
        self.followup_proba.map(|f| f - self.original_proba)
    }
}

fn check_inputs(model: &Model, ranked: &RankedBenignFeatures) -> Result<()> {
    if ranked.schema_fingerprint() != model.schema_fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: model.schema_fingerprint().to_string(),
            found: ranked.schema_fingerprint().to_string(),
        });
    }
    Ok(())
}

fn detect_with(model: &Model, v: &FeatureVector, features: &[usize], t: DecisionThreshold) -> Result<DetectionResult> {
    let original = model.predict_proba(v)?;
    if t.label_for(original) == Label::Malware {
        return Ok(DetectionResult {
            app_id: v.app_id().to_string(),
            original_proba: original,
            followup_proba: None,
            applied_features: Vec::new(),
            final_label: Label::Malware,
            diverged: false,
        });
    }
    let followup = model.predict_proba(&v.nullify(features)?)?;
    let final_label = t.label_for(followup);
    Ok(DetectionResult {
        app_id: v.app_id().to_string(),
        original_proba: original,
        followup_proba: Some(followup),
        applied_features: features.to_vec(),
        final_label,
        diverged: final_label == Label::Malware,
    })
}

/// Classifies one app with the top-`k` nullification relation.
pub fn detect(
    model: &Model,
    v: &FeatureVector,
    ranked: &RankedBenignFeatures,
    k: usize,
    t: DecisionThreshold,
) -> Result<DetectionResult> {
    check_inputs(model, ranked)?;
    let features = ranked.top_k(k)?;
    detect_with(model, v, &features, t)
}

/// Change in malware probability caused by nullifying the top-`k`
/// features, computed whatever the original prediction.
pub fn probability_delta(model: &Model, v: &FeatureVector, ranked: &RankedBenignFeatures, k: usize) -> Result<f64> {
    check_inputs(model, ranked)?;
    let features = ranked.top_k(k)?;
    delta_with(model, v, &features)
}

pub(crate) fn delta_with(model: &Model, v: &FeatureVector, features: &[usize]) -> Result<f64> {
    let original = model.predict_proba(v)?;
    Ok(model.predict_proba(&v.nullify(features)?)? - original)
}

/// [`detect`] over a dataset, in input order. The first failing sample (by
/// index) aborts the batch.
pub fn detect_batch(
    model: &Model,
    data: &LabeledDataset,
    ranked: &RankedBenignFeatures,
    k: usize,
    t: DecisionThreshold,
) -> Result<Vec<DetectionResult>> {
    check_inputs(model, ranked)?;
    let features = ranked.top_k(k)?;
    let results: Vec<Result<DetectionResult>> = data
        .samples()
        .par_iter()
        .map(|v| detect_with(model, v, &features, t))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Sample { index, source: Box::new(e) }))
        .collect()
}

/// A batch of detections under one `(k, threshold)` setting.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub k: usize,
    pub threshold: DecisionThreshold,
    pub model_digest: String,
    pub rank_digest: String,
    pub results: Vec<DetectionResult>,
}

impl DetectionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#k={}", self.k);
        let _ = writeln!(out, "#delta={}", self.threshold.delta());
        let _ = writeln!(out, "#model={}", self.model_digest);
        let _ = writeln!(out, "#rank={}", self.rank_digest);
        out.push_str("app_id,original_proba,followup_proba,final_label,diverged,delta\n");
        for r in &self.results {
            let na = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.app_id,
                r.original_proba,
                na(r.followup_proba),
                r.final_label,
                r.diverged,
                na(r.delta())
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
