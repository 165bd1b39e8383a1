//! Global ranking of benign-indicative features over a development set.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classifier::Model;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::explainer::{benign_features_of, explain, ExplainConfig};
use crate::schema::FeatureSchema;

/// Features ranked by how many development-set explanations flagged them as
/// benign-indicative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedBenignFeatures {
    entries: Vec<(usize, usize)>,
    dev_set_size: usize,
    skipped: usize,
    explain_config_digest: String,
    schema_fingerprint: String,
}

impl RankedBenignFeatures {
    /// Counts each feature once per set and sorts by count descending, then
    /// feature index ascending.
    pub fn tally<I, S>(
        benign_sets: I,
        dev_set_size: usize,
        skipped: usize,
        explain_config_digest: impl Into<String>,
        schema_fingerprint: impl Into<String>,
    ) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = usize>,
    {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for set in benign_sets {
            let unique: BTreeSet<usize> = set.into_iter().collect();
            for i in unique {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, usize)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        RankedBenignFeatures {
            entries,
            dev_set_size,
            skipped,
            explain_config_digest: explain_config_digest.into(),
            schema_fingerprint: schema_fingerprint.into(),
        }
    }

    /// `(feature index, occurrence count)` in rank order.
    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dev_set_size(&self) -> usize {
        self.dev_set_size
    }

    /// Development samples without any present feature.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn explain_config_digest(&self) -> &str {
        &self.explain_config_digest
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// The `k` highest-ranked features, in rank order.
    pub fn top_k(&self, k: usize) -> Result<Vec<usize>> {
        if k > self.entries.len() {
            return Err(Error::KOutOfRange {
                k,
                available: self.entries.len(),
            });
        }
        Ok(self.entries[..k].iter().map(|e| e.0).collect())
    }

    pub fn to_text(&self, schema: &FeatureSchema) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#schema={}", self.schema_fingerprint);
        let _ = writeln!(out, "#dev_size={}", self.dev_set_size);
        let _ = writeln!(out, "#skipped={}", self.skipped);
        let _ = writeln!(out, "#explain_config={}", self.explain_config_digest);
        out.push_str("rank,feature_name,count\n");
        for (rank, &(i, c)) in self.entries.iter().enumerate() {
            let name = schema.get(i).map_or_else(|| format!("#{i}"), |f| f.qualified_name());
            let _ = writeln!(out, "{},{},{}", rank + 1, name, c);
        }
        out
    }

    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut header: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        let mut saw_columns = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| Error::RankFile { line: n + 1, message };
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h.split_once('=').ok_or_else(|| err(format!("malformed header `{line}`")))?;
                header.insert(k, (n + 1, v));
                continue;
            }
            if !saw_columns {
                if line != "rank,feature_name,count" {
                    return Err(err("expected `rank,feature_name,count` column row".into()));
                }
                saw_columns = true;
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let [rank, name, count] = parts[..] else {
                return Err(err(format!("expected 3 fields, got {}", parts.len())));
            };
            let rank: usize = rank.parse().map_err(|_| err(format!("bad rank `{rank}`")))?;
            if rank != entries.len() + 1 {
                return Err(err(format!("rank {rank} out of sequence")));
            }
            let index = schema
                .index_of(name)
                .ok_or_else(|| err(format!("unknown feature `{name}`")))?;
            let count: usize = count.parse().map_err(|_| err(format!("bad count `{count}`")))?;
            if !seen.insert(index) {
                return Err(err(format!("duplicate feature `{name}`")));
            }
            if let Some(&(prev_i, prev_c)) = entries.last() {
                if !(prev_c > count || (prev_c == count && prev_i < index)) {
                    return Err(err("entries are not sorted by count then index".into()));
                }
            }
            entries.push((index, count));
        }
        let get = |key: &str| -> Result<&str> {
            header.get(key).map(|h| h.1).ok_or(Error::RankFile {
                line: 1,
                message: format!("missing `#{key}=` header"),
            })
        };
        let fp = get("schema")?;
        schema.check_fingerprint(fp)?;
        let num = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::RankFile {
                line: header[key].0,
                message: format!("bad `{key}` value"),
            })
        };
        let dev_set_size = num("dev_size")?;
        let skipped = num("skipped")?;
        let digest = get("explain_config")?.to_string();
        if let Some(&(_, c)) = entries.iter().find(|e| e.1 > dev_set_size) {
            return Err(Error::RankFile {
                line: 1,
                message: format!("count {c} exceeds dev_size {dev_set_size}"),
            });
        }
        Ok(RankedBenignFeatures {
            entries,
            dev_set_size,
            skipped,
            explain_config_digest: digest,
            schema_fingerprint: fp.to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<()> {
        std::fs::write(path, self.to_text(schema))?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, schema)
    }

    /// SHA-256 over the serialized rank file.
    pub fn digest(&self, schema: &FeatureSchema) -> String {
        hex::encode(Sha256::digest(self.to_text(schema).as_bytes()))
    }
}

/// Explains every development sample and tallies the benign-indicative
/// features of each explanation. Samples with no present features are
/// skipped; any other explainer error aborts with the sample index.
///
/// Samples are explained in parallel on the current rayon pool; the result
/// does not depend on the pool size.
pub fn rank_benign_features(
    model: &Model,
    dev: &LabeledDataset,
    cfg: &ExplainConfig,
) -> Result<RankedBenignFeatures> {
    if dev.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dev.schema_fingerprint() != model.schema_fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: model.schema_fingerprint().to_string(),
            found: dev.schema_fingerprint().to_string(),
        });
    }
    cfg.validate()?;
    let per_sample: Vec<Option<BTreeSet<usize>>> = dev
        .samples()
        .par_iter()
        .enumerate()
        .map(|(index, v)| {
            if v.popcount() == 0 {
                return Ok(None);
            }
            explain(model, v, cfg)
                .map(|e| Some(benign_features_of(&e)))
                .map_err(|e| Error::Sample {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let skipped = per_sample.iter().filter(|s| s.is_none()).count();
    Ok(RankedBenignFeatures::tally(
        per_sample.into_iter().flatten(),
        dev.len(),
        skipped,
        cfg.digest(),
        model.schema_fingerprint(),
    ))
}

/// Free-function form of [`RankedBenignFeatures::top_k`].
pub fn top_k(r: &RankedBenignFeatures, k: usize) -> Result<Vec<usize>> {
    r.top_k(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Category;

    fn ranked(sets: Vec<Vec<usize>>) -> RankedBenignFeatures {
        let n = sets.len();
        RankedBenignFeatures::tally(sets, n, 0, "d", "fp")
    }

    #[test]
    fn counts_each_sample_once() {
        let r = ranked(vec![vec![3], vec![3, 5]]);
        assert_eq!(r.entries(), &[(3, 2), (5, 1)]);
        let r = ranked(vec![vec![3, 3, 3]]);
        assert_eq!(r.entries(), &[(3, 1)]);
    }

    #[test]
    fn ties_break_by_index() {
        let sets = (0..4).map(|_| vec![9, 2]).collect();
        assert_eq!(ranked(sets).entries(), &[(2, 4), (9, 4)]);
    }

    #[test]
    fn top_k_prefixes() {
        let r = RankedBenignFeatures::tally(
            vec![vec![3, 5, 1]; 7].into_iter().chain(vec![vec![3]; 2]),
            9,
            0,
            "d",
            "fp",
        );
        assert_eq!(r.entries(), &[(3, 9), (1, 7), (5, 7)]);
        assert!(r.top_k(0).unwrap().is_empty());
        assert_eq!(r.top_k(2).unwrap(), vec![3, 1]);
        assert_eq!(r.top_k(3).unwrap(), vec![3, 1, 5]);
        assert!(matches!(r.top_k(4), Err(Error::KOutOfRange { k: 4, available: 3 })));
    }

    #[test]
    fn rank_file_round_trip() {
        let schema = FeatureSchema::new((0..6).map(|i| (Category::Package, format!("p{i}")))).unwrap();
        let r = RankedBenignFeatures::tally(
            vec![vec![4, 1], vec![4], vec![0, 1, 4]],
            4,
            1,
            "cafe",
            schema.fingerprint(),
        );
        let text = r.to_text(&schema);
        assert!(text.contains("rank,feature_name,count\n1,Package:p4,3\n2,Package:p1,2\n3,Package:p0,1\n"));
        assert_eq!(RankedBenignFeatures::parse(&text, &schema).unwrap(), r);

        let unsorted = text.replace("1,Package:p4,3", "1,Package:p4,1");
        assert!(RankedBenignFeatures::parse(&unsorted, &schema).is_err());
        let unknown = text.replace("Package:p0", "Package:zzz");
        assert!(RankedBenignFeatures::parse(&unknown, &schema).is_err());
        let other = FeatureSchema::new([(Category::Leak, "x")]).unwrap();
        assert!(RankedBenignFeatures::parse(&text, &other).is_err());
    }
}
