//! Seeded synthetic corpus with benign, ordinary-malware and repackaged
//! samples.
//!
//! Benign and malware vectors are independent Bernoulli draws from one
//! probability per feature. A repackaged vector starts from a benign draw
//! (the template), keeps a `share_fraction` of the template's present
//! features and gains `payload_size` features picked among the most
//! malware-typical ones, so it looks mostly benign to a classifier.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, REFERENCE_BENIGN_FEATURES};
use crate::vector::{FeatureVector, Label, REPACKAGED_PREFIX};

/// Features that static analysers commonly associate with malicious
/// payloads; used first when choosing the malware-typical group.
const MALWARE_TYPICAL: [&str; 24] = [
    "Permission:SEND_SMS",
    "Permission:RECEIVE_SMS",
    "Permission:READ_SMS",
    "Permission:WRITE_SMS",
    "Permission:READ_PHONE_STATE",
    "Permission:RECEIVE_BOOT_COMPLETED",
    "Permission:INSTALL_PACKAGES",
    "Permission:SYSTEM_ALERT_WINDOW",
    "Permission:READ_CALL_LOG",
    "Permission:PROCESS_OUTGOING_CALLS",
    "Permission:BIND_DEVICE_ADMIN",
    "Permission:REQUEST_INSTALL_PACKAGES",
    "Package:dalvik.system",
    "Package:javax.crypto",
    "Intent:action.BOOT_COMPLETED",
    "Intent:action.SMS_RECEIVED",
    "Intent:action.NEW_OUTGOING_CALL",
    "Class:android.telephony.SmsManager",
    "Class:dalvik.system.DexClassLoader",
    "Class:java.lang.Runtime",
    "Leak:device_id",
    "Leak:subscriber_id",
    "Leak:sms",
    "Behavior:obfuscation_or_malicious_behaviour",
];

/// Shape of the default Bernoulli profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    /// Size of the benign-typical group (reference benign features first).
    pub benign_group: usize,
    /// Benign presence probability, linearly from first to last group member.
    pub benign_group_benign_p: (f64, f64),
    pub benign_group_malware_p: f64,
    /// Size of the malware-typical group.
    pub malware_group: usize,
    pub malware_group_malware_p: (f64, f64),
    pub malware_group_benign_p: f64,
    /// Features equally likely in both classes.
    pub common_group: usize,
    pub common_p: f64,
    /// Everything else.
    pub background_p: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            benign_group: 35,
            benign_group_benign_p: (0.9, 0.6),
            benign_group_malware_p: 0.6,
            malware_group: 40,
            malware_group_malware_p: (0.8, 0.5),
            malware_group_benign_p: 0.05,
            common_group: 100,
            common_p: 0.25,
            background_p: 0.01,
        }
    }
}

/// Which group each feature was assigned to by [`profiles_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRole {
    BenignTypical,
    MalwareTypical,
    Common,
    Background,
}

/// Assigns feature roles: named features first, then the remaining features
/// in a fixed pseudo-random order derived from their names.
pub fn feature_roles(schema: &FeatureSchema, params: &ProfileParams) -> Vec<FeatureRole> {
    let mut roles = vec![FeatureRole::Background; schema.len()];
    let mut free: Vec<usize> = (0..schema.len()).collect();
    free.sort_by_key(|&i| {
        let d = Sha256::digest(schema.features()[i].qualified_name().as_bytes());
        (u64::from_le_bytes(d[..8].try_into().expect("8 bytes")), i)
    });
    let mut taken = vec![false; schema.len()];
    let mut assign = |named: &[&str], count: usize, role: FeatureRole, roles: &mut [FeatureRole]| {
        let mut picked: Vec<usize> = named
            .iter()
            .filter_map(|n| schema.index_of(n))
            .filter(|&i| !taken[i])
            .take(count)
            .collect();
        for &i in &picked {
            taken[i] = true;
        }
        for &i in &free {
            if picked.len() >= count {
                break;
            }
            if !taken[i] {
                taken[i] = true;
                picked.push(i);
            }
        }
        for i in picked {
            roles[i] = role;
        }
    };
    assign(&REFERENCE_BENIGN_FEATURES, params.benign_group, FeatureRole::BenignTypical, &mut roles);
    assign(&MALWARE_TYPICAL, params.malware_group, FeatureRole::MalwareTypical, &mut roles);
    assign(&[], params.common_group, FeatureRole::Common, &mut roles);
    roles
}

/// Benign and malware Bernoulli profiles for `schema`.
pub fn profiles_with(schema: &FeatureSchema, params: &ProfileParams) -> (Vec<f64>, Vec<f64>) {
    let roles = feature_roles(schema, params);
    let mut benign = vec![params.background_p; schema.len()];
    let mut malware = vec![params.background_p; schema.len()];
    let lerp = |(a, b): (f64, f64), r: usize, n: usize| {
        if n <= 1 {
            a
        } else {
            a + (b - a) * r as f64 / (n - 1) as f64
        }
    };
    let group = |role| -> Vec<usize> { ordered_group(schema, &roles, role) };
    let bg = group(FeatureRole::BenignTypical);
    for (r, &i) in bg.iter().enumerate() {
        benign[i] = lerp(params.benign_group_benign_p, r, bg.len());
        malware[i] = params.benign_group_malware_p;
    }
    let mg = group(FeatureRole::MalwareTypical);
    for (r, &i) in mg.iter().enumerate() {
        malware[i] = lerp(params.malware_group_malware_p, r, mg.len());
        benign[i] = params.malware_group_benign_p;
    }
    for i in group(FeatureRole::Common) {
        benign[i] = params.common_p;
        malware[i] = params.common_p;
    }
    (benign, malware)
}

fn ordered_group(schema: &FeatureSchema, roles: &[FeatureRole], role: FeatureRole) -> Vec<usize> {
    // Named features keep their listed order, the rest follow by index.
    let named: &[&str] = match role {
        FeatureRole::BenignTypical => &REFERENCE_BENIGN_FEATURES,
        FeatureRole::MalwareTypical => &MALWARE_TYPICAL,
        _ => &[],
    };
    let mut out: Vec<usize> = named
        .iter()
        .filter_map(|n| schema.index_of(n))
        .filter(|&i| roles[i] == role)
        .collect();
    let listed: BTreeSet<usize> = out.iter().copied().collect();
    out.extend((0..roles.len()).filter(|i| roles[*i] == role && !listed.contains(i)));
    out
}

/// [`profiles_with`] under [`ProfileParams::default`].
pub fn default_profiles(schema: &FeatureSchema) -> (Vec<f64>, Vec<f64>) {
    profiles_with(schema, &ProfileParams::default())
}

/// Expected number of present features of a draw from `profile`.
pub fn expected_popcount(profile: &[f64]) -> f64 {
    profile.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub schema: FeatureSchema,
    pub n_benign: usize,
    pub n_malware: usize,
    pub n_repackaged: usize,
    pub benign_profile: Vec<f64>,
    pub malware_profile: Vec<f64>,
    pub share_fraction: f64,
    pub payload_size: usize,
    pub seed: u64,
}

impl GenConfig {
    /// Default profiles, `share_fraction` 0.85 and `payload_size` 12.
    pub fn new(schema: FeatureSchema, n_benign: usize, n_malware: usize, n_repackaged: usize, seed: u64) -> Self {
        let (benign_profile, malware_profile) = default_profiles(&schema);
        GenConfig {
            schema,
            n_benign,
            n_malware,
            n_repackaged,
            benign_profile,
            malware_profile,
            share_fraction: 0.85,
            payload_size: 12,
            seed,
        }
    }

    /// Malware-leaning features (malware probability above benign), most
    /// malware-typical first.
    pub fn payload_pool(&self) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..self.schema.len())
            .filter(|&i| self.malware_profile[i] > self.benign_profile[i])
            .collect();
        pool.sort_by(|&a, &b| self.malware_profile[b].total_cmp(&self.malware_profile[a]).then(a.cmp(&b)));
        pool
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.schema.len();
        if self.benign_profile.len() != n || self.malware_profile.len() != n {
            return Err(Error::InvalidConfig(format!("profiles must have {n} entries")));
        }
        if let Some(p) = self
            .benign_profile
            .iter()
            .chain(&self.malware_profile)
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidConfig(format!("profile probability {p} not in [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.share_fraction) {
            return Err(Error::InvalidConfig(format!(
                "share_fraction {} not in [0, 1]",
                self.share_fraction
            )));
        }
        if self.n_repackaged > 0 {
            if self.payload_size == 0 {
                return Err(Error::InvalidConfig("payload_size must be positive".into()));
            }
            let available = self.payload_pool().len();
            if self.payload_size > available {
                return Err(Error::InvalidConfig(format!(
                    "payload_size {} exceeds the {available} malware-leaning features",
                    self.payload_size
                )));
            }
        }
        Ok(())
    }

    /// Digest of everything that determines the generated dataset.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.fingerprint().as_bytes());
        for c in [self.n_benign, self.n_malware, self.n_repackaged, self.payload_size] {
            h.update((c as u64).to_le_bytes());
        }
        h.update(self.share_fraction.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for p in self.benign_profile.iter().chain(&self.malware_profile) {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn provenance(&self) -> Provenance {
        let digest = |p: &[f64]| {
            let mut h = Sha256::new();
            for x in p {
                h.update(x.to_le_bytes());
            }
            hex::encode(h.finalize())
        };
        Provenance {
            schema_fingerprint: self.schema.fingerprint().to_string(),
            n_benign: self.n_benign,
            n_malware: self.n_malware,
            n_repackaged: self.n_repackaged,
            share_fraction: self.share_fraction,
            payload_size: self.payload_size,
            seed: self.seed,
            benign_profile_digest: digest(&self.benign_profile),
            malware_profile_digest: digest(&self.malware_profile),
            config_digest: self.digest(),
        }
    }
}

/// Sidecar record written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_fingerprint: String,
    pub n_benign: usize,
    pub n_malware: usize,
    pub n_repackaged: usize,
    pub share_fraction: f64,
    pub payload_size: usize,
    pub seed: u64,
    pub benign_profile_digest: String,
    pub malware_profile_digest: String,
    pub config_digest: String,
}

impl Provenance {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("provenance serializes");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// How one repackaged sample was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepackTrace {
    pub app_id: String,
    pub template: Vec<usize>,
    pub retained: Vec<usize>,
    pub payload: Vec<usize>,
}

impl RepackTrace {
    /// `|retained| / |template|`; 1 for an empty template.
    pub fn share(&self) -> f64 {
        if self.template.is_empty() {
            1.0
        } else {
            self.retained.len() as f64 / self.template.len() as f64
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, profile: &[f64]) -> Vec<bool> {
    profile.iter().map(|&p| rng.gen::<f64>() < p).collect()
}

/// Generates the dataset described by `cfg`.
pub fn generate(cfg: &GenConfig) -> Result<LabeledDataset> {
    generate_traced(cfg).map(|(ds, _)| ds)
}

/// [`generate`] plus the construction record of each repackaged sample.
pub fn generate_traced(cfg: &GenConfig) -> Result<(LabeledDataset, Vec<RepackTrace>)> {
    cfg.validate()?;
    let schema = &cfg.schema;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n_benign + cfg.n_malware + cfg.n_repackaged);
    for i in 0..cfg.n_benign {
        let bits = draw(&mut rng, &cfg.benign_profile);
        samples.push(FeatureVector::new(schema, format!("benign-{i:05}"), bits, Some(Label::Benign))?);
    }
    for i in 0..cfg.n_malware {
        let bits = draw(&mut rng, &cfg.malware_profile);
        samples.push(FeatureVector::new(schema, format!("malware-{i:05}"), bits, Some(Label::Malware))?);
    }
    let pool = cfg.payload_pool();
    let mut traces = Vec::with_capacity(cfg.n_repackaged);
    for i in 0..cfg.n_repackaged {
        let template_bits = draw(&mut rng, &cfg.benign_profile);
        let template: Vec<usize> = (0..template_bits.len()).filter(|&j| template_bits[j]).collect();
        let keep = (cfg.share_fraction * template.len() as f64).ceil() as usize;
        let mut retained: Vec<usize> = sample(&mut rng, template.len(), keep.min(template.len()))
            .into_iter()
            .map(|j| template[j])
            .collect();
        retained.sort_unstable();

        let candidates: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&j| !template_bits[j])
            .take(2 * cfg.payload_size)
            .collect();
        let n_payload = cfg.payload_size.min(candidates.len());
        let mut payload: Vec<usize> = sample(&mut rng, candidates.len(), n_payload)
            .into_iter()
            .map(|j| candidates[j])
            .collect();
        payload.sort_unstable();

        let mut bits = vec![false; schema.len()];
        for &j in retained.iter().chain(&payload) {
            bits[j] = true;
        }
        let app_id = format!("{REPACKAGED_PREFIX}{i:05}");
        samples.push(FeatureVector::new(schema, app_id.clone(), bits, Some(Label::Malware))?);
        traces.push(RepackTrace {
            app_id,
            template,
            retained,
            payload,
        });
    }
    Ok((LabeledDataset::new(schema, samples)?, traces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::default_schema()
    }

    #[test]
    fn zero_counts_give_empty_dataset() {
        let ds = generate(&GenConfig::new(schema(), 0, 0, 0, 1)).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn label_counts_match_config() {
        let ds = generate(&GenConfig::new(schema(), 30, 20, 10, 5)).unwrap();
        assert_eq!(ds.class_counts(), (30, 30));
        let repack = ds.iter().filter(|v| v.app_id().starts_with(REPACKAGED_PREFIX)).count();
        assert_eq!(repack, 10);
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&GenConfig::new(schema(), 20, 10, 10, 7)).unwrap();
        let b = generate(&GenConfig::new(schema(), 20, 10, 10, 7)).unwrap();
        let c = generate(&GenConfig::new(schema(), 20, 10, 10, 8)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn full_share_keeps_template() {
        let mut cfg = GenConfig::new(schema(), 0, 0, 50, 3);
        cfg.share_fraction = 1.0;
        cfg.payload_size = 1;
        let (ds, traces) = generate_traced(&cfg).unwrap();
        for (v, t) in ds.iter().zip(&traces) {
            assert_eq!(t.retained, t.template);
            let bits = v.active();
            let minus_payload: Vec<usize> = bits.iter().copied().filter(|i| !t.payload.contains(i)).collect();
            let inter = minus_payload.iter().filter(|i| t.template.contains(i)).count();
            let union = t.template.len() + minus_payload.len() - inter;
            assert!(inter as f64 / union as f64 >= 0.8);
        }
    }

    #[test]
    fn repackaged_samples_share_more_than_80_percent() {
        let (ds, traces) = generate_traced(&GenConfig::new(schema(), 0, 0, 300, 11)).unwrap();
        for (v, t) in ds.iter().zip(&traces) {
            assert!(t.share() > 0.8, "{} shares {}", t.app_id, t.share());
            let active: BTreeSet<usize> = v.active().into_iter().collect();
            let kept = t.template.iter().filter(|i| active.contains(i)).count();
            assert!(t.template.is_empty() || kept as f64 / t.template.len() as f64 > 0.8);
            assert_eq!(t.payload.len(), 12);
            assert!(t.payload.iter().all(|i| !t.template.contains(i)));
        }
    }

    #[test]
    fn profiles_are_probabilities_and_separated() {
        let s = schema();
        let (b, m) = default_profiles(&s);
        assert!(b.iter().chain(&m).all(|p| (0.0..=1.0).contains(p)));
        let separated = b.iter().zip(&m).filter(|(x, y)| (*x - *y).abs() >= 0.5).count();
        assert!(separated >= 30, "only {separated} features separated");
        let roles = feature_roles(&s, &ProfileParams::default());
        assert_eq!(roles.iter().filter(|r| **r == FeatureRole::BenignTypical).count(), 35);
        assert_eq!(roles.iter().filter(|r| **r == FeatureRole::MalwareTypical).count(), 40);
        let top = s.index_of(REFERENCE_BENIGN_FEATURES[0]).unwrap();
        assert_eq!(b[top], 0.9);
    }

    #[test]
    fn oversized_payload_rejected() {
        let mut cfg = GenConfig::new(schema(), 0, 0, 1, 0);
        cfg.payload_size = 10_000;
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = GenConfig::new(schema(), 1, 0, 0, 0);
        cfg.benign_profile[0] = 1.5;
        assert!(generate(&cfg).is_err());
    }
}
