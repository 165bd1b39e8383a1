//! Per-app binary feature vectors and feature nullification.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// App-id prefix the synthetic generator gives repackaged samples; evaluation
/// uses it to report the repackaged slice separately.
pub const REPACKAGED_PREFIX: &str = "repackaged-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Benign,
    Malware,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malware => "malware",
        }
    }

    pub fn is_malware(self) -> bool {
        self == Label::Malware
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Label::Benign),
            "malware" => Ok(Label::Malware),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Evaluation slice a labelled sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Benign,
    Malware,
    Repackaged,
}

/// One app in the schema's coordinate system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    app_id: String,
    bits: Vec<bool>,
    label: Option<Label>,
    schema: Arc<str>,
}

impl FeatureVector {
    pub fn new(
        schema: &FeatureSchema,
        app_id: impl Into<String>,
        bits: Vec<bool>,
        label: Option<Label>,
    ) -> Result<Self> {
        if bits.len() != schema.len() {
            return Err(Error::LengthMismatch {
                expected: schema.len(),
                found: bits.len(),
            });
        }
        Ok(FeatureVector {
            app_id: app_id.into(),
            bits,
            label,
            schema: Arc::from(schema.fingerprint()),
        })
    }

    /// Builds a vector from 0/1 values, rejecting anything else.
    pub fn from_values(
        schema: &FeatureSchema,
        app_id: impl Into<String>,
        values: &[u8],
        label: Option<Label>,
    ) -> Result<Self> {
        let bits = values
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::InvalidConfig(format!(
                    "value {v} at feature {i} is not binary"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, app_id, bits, label)
    }

    /// Builds a vector from the indices of its present features.
    pub fn from_active(
        schema: &FeatureSchema,
        app_id: impl Into<String>,
        active: &[usize],
        label: Option<Label>,
    ) -> Result<Self> {
        let mut bits = vec![false; schema.len()];
        for &i in active {
            *bits.get_mut(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: schema.len(),
            })? = true;
        }
        Self::new(schema, app_id, bits, label)
    }

    pub(crate) fn from_parts(schema: Arc<str>, app_id: String, bits: Vec<bool>, label: Option<Label>) -> Self {
        FeatureVector {
            app_id,
            bits,
            label,
            schema,
        }
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).copied()
    }

    pub fn active(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Evaluation slice; `None` for unlabelled vectors.
    pub fn kind(&self) -> Option<SampleKind> {
        match self.label? {
            Label::Benign => Some(SampleKind::Benign),
            Label::Malware if self.app_id.starts_with(REPACKAGED_PREFIX) => {
                Some(SampleKind::Repackaged)
            }
            Label::Malware => Some(SampleKind::Malware),
        }
    }

    /// Copy of this vector with every feature in `features` set to absent.
    ///
    /// Features already absent stay absent; identity and label are kept.
    pub fn nullify<'a, I>(&self, features: I) -> Result<FeatureVector>
    where
        I: IntoIterator<Item = &'a usize>,
    {
        let mut bits = self.bits.clone();
        for &i in features {
            *bits.get_mut(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.bits.len(),
            })? = false;
        }
        Ok(FeatureVector {
            app_id: self.app_id.clone(),
            bits,
            label: self.label,
            schema: Arc::clone(&self.schema),
        })
    }
}

/// Free-function form of [`FeatureVector::nullify`].
pub fn nullify<'a, I>(v: &FeatureVector, features: I) -> Result<FeatureVector>
where
    I: IntoIterator<Item = &'a usize>,
{
    v.nullify(features)
}
