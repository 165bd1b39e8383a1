//! Dataset container and the sparse text format.
//!
//! ```text
//! #schema=<fingerprint-hex>
//! app-001,benign,3 17 240
//! app-002,malware,5 17 602 693
//! app-003,unlabeled,
//! ```
//!
//! Each row lists the indices of the features present in the app. An index
//! may also be written `i:v` with `v` in {0, 1}.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::FeatureSchema;
use crate::vector::{FeatureVector, Label};

const HEADER_PREFIX: &str = "#schema=";
const UNLABELED: &str = "unlabeled";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    schema_fingerprint: String,
    samples: Vec<FeatureVector>,
}

impl LabeledDataset {
    /// An empty dataset bound to `schema`.
    pub fn empty(schema: &FeatureSchema) -> Self {
        LabeledDataset {
            schema_fingerprint: schema.fingerprint().to_string(),
            samples: Vec::new(),
        }
    }

    pub fn new(schema: &FeatureSchema, samples: Vec<FeatureVector>) -> Result<Self> {
        for s in &samples {
            schema.check_fingerprint(s.schema_fingerprint())?;
        }
        Ok(LabeledDataset {
            schema_fingerprint: schema.fingerprint().to_string(),
            samples,
        })
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn samples(&self) -> &[FeatureVector] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FeatureVector> {
        self.samples.iter()
    }

    /// `(benign, malware)` counts over labelled samples.
    pub fn class_counts(&self) -> (usize, usize) {
        self.samples.iter().fold((0, 0), |(b, m), s| match s.label() {
            Some(Label::Benign) => (b + 1, m),
            Some(Label::Malware) => (b, m + 1),
            None => (b, m),
        })
    }

    /// Fails on the first unlabelled sample.
    pub fn require_labels(&self) -> Result<()> {
        match self.samples.iter().find(|s| s.label().is_none()) {
            Some(s) => Err(Error::Unlabeled(s.app_id().to_string())),
            None => Ok(()),
        }
    }

    /// Appends `other`'s samples; both datasets must share a schema.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.schema_fingerprint != other.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.schema_fingerprint.clone(),
                found: other.schema_fingerprint.clone(),
            });
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Ok(LabeledDataset {
            schema_fingerprint: self.schema_fingerprint.clone(),
            samples,
        })
    }

    /// Seeded shuffle-and-split into `(train, holdout)`; the holdout receives
    /// `round(holdout_fraction * len)` samples.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::InvalidConfig(format!(
                "holdout fraction {holdout_fraction} not in [0, 1)"
            )));
        }
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = (holdout_fraction * self.samples.len() as f64).round() as usize;
        let (hold, train) = order.split_at(n_hold);
        let pick = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            LabeledDataset {
                schema_fingerprint: self.schema_fingerprint.clone(),
                samples: idx.into_iter().map(|i| self.samples[i].clone()).collect(),
            }
        };
        Ok((pick(train), pick(hold)))
    }

    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((n, l)) => break (n, l.trim()),
                None => {
                    return Err(Error::Dataset {
                        line: 1,
                        message: "missing `#schema=` header".into(),
                    })
                }
            }
        };
        let found = header.1.strip_prefix(HEADER_PREFIX).ok_or_else(|| Error::Dataset {
            line: header.0 + 1,
            message: format!("expected `{HEADER_PREFIX}<fingerprint>` header"),
        })?;
        schema.check_fingerprint(found.trim())?;

        let fp: Arc<str> = Arc::from(schema.fingerprint());
        let mut samples = Vec::new();
        for (n, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let v = parse_row(line, schema.len(), &fp).map_err(|message| Error::Dataset {
                line: n + 1,
                message,
            })?;
            samples.push(v);
        }
        Ok(LabeledDataset {
            schema_fingerprint: schema.fingerprint().to_string(),
            samples,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{}\n", self.schema_fingerprint);
        for s in &self.samples {
            out.push_str(s.app_id());
            out.push(',');
            out.push_str(s.label().map_or(UNLABELED, Label::as_str));
            out.push(',');
            let active: Vec<String> = s.active().iter().map(usize::to_string).collect();
            out.push_str(&active.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// SHA-256 of the serialized form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

impl<'a> IntoIterator for &'a LabeledDataset {
    type Item = &'a FeatureVector;
    type IntoIter = std::slice::Iter<'a, FeatureVector>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Reads a dataset file and validates it against `schema`.
pub fn parse_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    LabeledDataset::parse(&text, schema)
}

fn parse_row(line: &str, width: usize, fp: &Arc<str>) -> Result<FeatureVector, String> {
    let mut fields = line.splitn(3, ',');
    let app_id = fields.next().unwrap_or_default().trim();
    if app_id.is_empty() {
        return Err("empty app id".into());
    }
    let label = match fields.next().map(str::trim) {
        Some(UNLABELED) => None,
        Some(tok) => Some(tok.parse::<Label>()?),
        None => return Err("missing label field".into()),
    };
    let features = fields.next().ok_or("missing feature field")?;
    let mut bits = vec![false; width];
    for tok in features.split_whitespace() {
        let (idx, value) = match tok.split_once(':') {
            Some((i, v)) => (i, v),
            None => (tok, "1"),
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| format!("bad feature index `{tok}`"))?;
        if idx >= width {
            return Err(format!(
                "feature index {idx} exceeds vector length {width}"
            ));
        }
        match value {
            "0" => {}
            "1" if bits[idx] => {
                return Err(format!("non-binary value: feature {idx} set more than once"))
            }
            "1" => bits[idx] = true,
            other => return Err(format!("non-binary value `{other}` for feature {idx}")),
        }
    }
    Ok(FeatureVector::from_parts(
        Arc::clone(fp),
        app_id.to_string(),
        bits,
        label,
    ))
}
