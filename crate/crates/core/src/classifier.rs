//! Single-hidden-layer ReLU network with a two-way softmax head.
//!
//! Inputs are binary, so the first affine map is evaluated sparsely: the
//! hidden pre-activation is the hidden bias plus the weight rows of the
//! features that are present. Output index 0 is benign, 1 is malware.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::vector::{FeatureVector, Label};

pub const OUTPUTS: usize = 2;
const BENIGN: usize = 0;
const MALWARE: usize = 1;

const MAGIC: &[u8; 8] = b"DECEITNN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Loss weighting across the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    #[default]
    None,
    /// Each class contributes half the total loss regardless of its size.
    Balanced,
}

impl fmt::Display for ClassWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassWeighting::None => "none",
            ClassWeighting::Balanced => "balanced",
        })
    }
}

impl std::str::FromStr for ClassWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ClassWeighting::None),
            "balanced" => Ok(ClassWeighting::Balanced),
            other => Err(format!("unknown class weighting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_width: 200,
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 128,
            l2_penalty: 0.0,
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(1..=100_000).contains(&self.hidden_width) {
            return bad(format!("hidden_width {} not in 1..=100000", self.hidden_width));
        }
        if !(1..=100_000).contains(&self.epochs) {
            return bad(format!("epochs {} not in 1..=100000", self.epochs));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} not in (0, 1]", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad(format!("l2_penalty {} must be finite and >= 0", self.l2_penalty));
        }
        Ok(())
    }
}

/// Probability cutoff: malware iff `p >= delta`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DecisionThreshold(f64);

impl DecisionThreshold {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidConfig(format!("threshold {delta} not in [0, 1]")));
        }
        Ok(DecisionThreshold(delta))
    }

    pub fn delta(self) -> f64 {
        self.0
    }

    pub fn label_for(self, malware_proba: f64) -> Label {
        if malware_proba >= self.0 {
            Label::Malware
        } else {
            Label::Benign
        }
    }
}

impl Default for DecisionThreshold {
    fn default() -> Self {
        DecisionThreshold(0.5)
    }
}

/// Training provenance stored with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub class_weighting: ClassWeighting,
    pub final_loss: f64,
}

impl TrainingMeta {
    fn untrained() -> Self {
        TrainingMeta {
            seed: 0,
            epochs: 0,
            learning_rate: 0.0,
            batch_size: 0,
            l2_penalty: 0.0,
            class_weighting: ClassWeighting::None,
            final_loss: f64::NAN,
        }
    }

    fn to_text(&self) -> String {
        format!(
            "seed={}\nepochs={}\nlearning_rate={}\nbatch_size={}\nl2_penalty={}\nclass_weighting={}\nfinal_loss={}\n",
            self.seed,
            self.epochs,
            self.learning_rate,
            self.batch_size,
            self.l2_penalty,
            self.class_weighting,
            self.final_loss
        )
    }

    fn from_text(text: &str) -> Result<Self> {
        let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        fn field<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
            kv.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::ModelFormat(format!("training metadata `{key}` missing or malformed")))
        }
        Ok(TrainingMeta {
            seed: field(&kv, "seed")?,
            epochs: field(&kv, "epochs")?,
            learning_rate: field(&kv, "learning_rate")?,
            batch_size: field(&kv, "batch_size")?,
            l2_penalty: field(&kv, "l2_penalty")?,
            class_weighting: field(&kv, "class_weighting")?,
            final_loss: field(&kv, "final_loss")?,
        })
    }
}

/// Trained network parameters bound to a schema fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    schema_fingerprint: String,
    input: usize,
    hidden: usize,
    /// `input x hidden`, row `i` holds feature `i`'s outgoing weights.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `hidden x OUTPUTS`.
    w2: Vec<f64>,
    b2: [f64; OUTPUTS],
    meta: TrainingMeta,
}

/// Loss gradient laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; OUTPUTS],
}

impl Gradient {
    fn zeros(input: usize, hidden: usize) -> Self {
        Gradient {
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * OUTPUTS],
            b2: [0.0; OUTPUTS],
        }
    }

    /// Same order as [`Model::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + OUTPUTS);
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }
}

impl Model {
    /// Assembles a model from explicit parameters (hand-built or imported).
    pub fn from_parts(
        schema_fingerprint: impl Into<String>,
        input: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: [f64; OUTPUTS],
    ) -> Result<Self> {
        let schema_fingerprint = schema_fingerprint.into();
        if schema_fingerprint.is_empty() {
            return Err(Error::ModelFormat("schema fingerprint absent".into()));
        }
        if input == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        if w1.len() != input * hidden || b1.len() != hidden || w2.len() != hidden * OUTPUTS {
            return Err(Error::InvalidConfig("parameter block sizes do not match dimensions".into()));
        }
        let model = Model {
            schema_fingerprint,
            input,
            hidden,
            w1,
            b1,
            w2,
            b2,
            meta: TrainingMeta::untrained(),
        };
        if !model.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn training_meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// All parameters flattened as `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + OUTPUTS);
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    /// Copy with parameters replaced by a flat vector in [`Model::parameters`] order.
    pub fn with_parameters(&self, params: &[f64]) -> Result<Model> {
        let (n1, nb1, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if params.len() != n1 + nb1 + n2 + OUTPUTS {
            return Err(Error::InvalidConfig("parameter vector has wrong length".into()));
        }
        let mut m = self.clone();
        m.w1.copy_from_slice(&params[..n1]);
        m.b1.copy_from_slice(&params[n1..n1 + nb1]);
        m.w2.copy_from_slice(&params[n1 + nb1..n1 + nb1 + n2]);
        m.b2.copy_from_slice(&params[n1 + nb1 + n2..]);
        Ok(m)
    }

    fn check(&self, v: &FeatureVector) -> Result<()> {
        if v.schema_fingerprint() != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.schema_fingerprint.clone(),
                found: v.schema_fingerprint().to_string(),
            });
        }
        if v.len() != self.input {
            return Err(Error::LengthMismatch {
                expected: self.input,
                found: v.len(),
            });
        }
        Ok(())
    }

    fn hidden_pre(&self, active: &[usize]) -> Vec<f64> {
        let mut z = self.b1.clone();
        for &i in active {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (zj, wj) in z.iter_mut().zip(row) {
                *zj += wj;
            }
        }
        z
    }

    fn logits_from_pre(&self, pre: &[f64]) -> [f64; OUTPUTS] {
        let mut out = self.b2;
        for (j, &zj) in pre.iter().enumerate() {
            if zj > 0.0 {
                out[BENIGN] += zj * self.w2[j * OUTPUTS + BENIGN];
                out[MALWARE] += zj * self.w2[j * OUTPUTS + MALWARE];
            }
        }
        out
    }

    /// Logits for the present-feature index list `active` (unchecked).
    pub(crate) fn logits_active(&self, active: &[usize]) -> [f64; OUTPUTS] {
        self.logits_from_pre(&self.hidden_pre(active))
    }

    pub(crate) fn proba_active(&self, active: &[usize]) -> f64 {
        softmax(self.logits_active(active))[MALWARE]
    }

    /// `[benign, malware]` softmax probabilities.
    pub fn class_probabilities(&self, v: &FeatureVector) -> Result<[f64; OUTPUTS]> {
        self.check(v)?;
        Ok(softmax(self.logits_active(&v.active())))
    }

    /// Malware-class probability.
    pub fn predict_proba(&self, v: &FeatureVector) -> Result<f64> {
        Ok(self.class_probabilities(v)?[MALWARE])
    }

    /// Probability rescaled to `[-1, 1]`: -1 benign, 1 malware.
    pub fn maliciousness(&self, v: &FeatureVector) -> Result<f64> {
        Ok(maliciousness_score(self.predict_proba(v)?))
    }

    pub fn classify(&self, v: &FeatureVector, t: DecisionThreshold) -> Result<Label> {
        Ok(t.label_for(self.predict_proba(v)?))
    }

    /// Adds one sample's loss gradient (scaled by `scale`) into `grad` and
    /// returns its unscaled cross-entropy.
    fn accumulate(&self, active: &[usize], target: usize, scale: f64, grad: &mut Gradient) -> f64 {
        let pre = self.hidden_pre(active);
        let logits = self.logits_from_pre(&pre);
        let p = softmax(logits);
        let ce = log_sum_exp(logits) - logits[target];

        let mut dlogit = [0.0; OUTPUTS];
        for k in 0..OUTPUTS {
            dlogit[k] = scale * (p[k] - if k == target { 1.0 } else { 0.0 });
            grad.b2[k] += dlogit[k];
        }
        let mut dpre = vec![0.0; self.hidden];
        for j in 0..self.hidden {
            if pre[j] > 0.0 {
                let w = &self.w2[j * OUTPUTS..(j + 1) * OUTPUTS];
                let g = &mut grad.w2[j * OUTPUTS..(j + 1) * OUTPUTS];
                for k in 0..OUTPUTS {
                    g[k] += pre[j] * dlogit[k];
                }
                dpre[j] = w[BENIGN] * dlogit[BENIGN] + w[MALWARE] * dlogit[MALWARE];
            }
        }
        for (b, d) in grad.b1.iter_mut().zip(&dpre) {
            *b += d;
        }
        for &i in active {
            let row = &mut grad.w1[i * self.hidden..(i + 1) * self.hidden];
            for (g, d) in row.iter_mut().zip(&dpre) {
                *g += d;
            }
        }
        ce
    }

    /// Mean (class-weighted) cross-entropy plus `l2 / 2 * ||W||^2` over
    /// `samples`, and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        samples: &[FeatureVector],
        l2_penalty: f64,
        weighting: ClassWeighting,
    ) -> Result<(f64, Gradient)> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let weights = class_weights(samples, weighting)?;
        let scale = 1.0 / samples.len() as f64;
        let mut grad = Gradient::zeros(self.input, self.hidden);
        let mut loss = 0.0;
        for s in samples {
            self.check(s)?;
            let target = target_of(s)?;
            let c = weights[target];
            loss += c * scale * self.accumulate(&s.active(), target, c * scale, &mut grad);
        }
        loss += self.penalty(l2_penalty);
        if l2_penalty > 0.0 {
            for (g, w) in grad.w1.iter_mut().zip(&self.w1) {
                *g += l2_penalty * w;
            }
            for (g, w) in grad.w2.iter_mut().zip(&self.w2) {
                *g += l2_penalty * w;
            }
        }
        Ok((loss, grad))
    }

    fn penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        let sq: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
        0.5 * l2 * sq
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.w1.len() + self.w2.len() + self.hidden + OUTPUTS));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        put_block(&mut out, self.schema_fingerprint.as_bytes());
        for dim in [self.input, self.hidden, OUTPUTS] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for p in self.parameters() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        put_block(&mut out, self.meta.to_text().as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::ModelFormat("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let fp = String::from_utf8(r.block()?.to_vec())
            .map_err(|_| Error::ModelFormat("fingerprint is not UTF-8".into()))?;
        if fp.is_empty() {
            return Err(Error::ModelFormat("schema fingerprint absent".into()));
        }
        let input = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        if outputs != OUTPUTS || input == 0 || hidden == 0 {
            return Err(Error::ModelFormat(format!(
                "unsupported dimensions {input}x{hidden}x{outputs}"
            )));
        }
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::ModelFormat("dimension overflow".into()))?)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let w1 = read(input * hidden)?;
        let b1 = read(hidden)?;
        let w2 = read(hidden * OUTPUTS)?;
        let b2v = read(OUTPUTS)?;
        let meta_text = String::from_utf8(r.block()?.to_vec())
            .map_err(|_| Error::ModelFormat("metadata is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes after metadata".into()));
        }
        let mut model = Model::from_parts(fp, input, hidden, w1, b1, w2, [b2v[0], b2v[1]])
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        model.meta = TrainingMeta::from_text(&meta_text)?;
        Ok(model)
    }

    /// SHA-256 of the serialized model.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    Model::from_bytes(&std::fs::read(path)?)
}

/// Affine map of a malware probability onto `[-1, 1]`.
pub fn maliciousness_score(malware_proba: f64) -> f64 {
    2.0 * malware_proba - 1.0
}

/// Trains the network with seeded mini-batch SGD on softmax cross-entropy.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.require_labels()?;
    match data.class_counts() {
        (_, 0) => return Err(Error::SingleClass("benign")),
        (0, _) => return Err(Error::SingleClass("malware")),
        _ => {}
    }
    let input = data.samples()[0].len();
    let hidden = cfg.hidden_width;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let r1 = (6.0 / (input + hidden) as f64).sqrt();
    let r2 = (6.0 / (hidden + OUTPUTS) as f64).sqrt();
    let w1 = (0..input * hidden).map(|_| rng.gen_range(-r1..=r1)).collect();
    let w2 = (0..hidden * OUTPUTS).map(|_| rng.gen_range(-r2..=r2)).collect();
    let mut model = Model::from_parts(
        data.schema_fingerprint(),
        input,
        hidden,
        w1,
        vec![0.0; hidden],
        w2,
        [0.0; OUTPUTS],
    )?;

    let samples = data.samples();
    let actives: Vec<Vec<usize>> = samples.iter().map(FeatureVector::active).collect();
    let targets: Vec<usize> = samples.iter().map(target_of).collect::<Result<_>>()?;
    let weights = class_weights(samples, cfg.class_weighting)?;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = Gradient::zeros(input, hidden);
    let mut touched: Vec<bool> = vec![false; input];
    let mut touched_rows: Vec<usize> = Vec::new();
    let lr = cfg.learning_rate;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &s in batch {
                let c = weights[targets[s]];
                epoch_loss += c * model.accumulate(&actives[s], targets[s], c * scale, &mut grad);
                for &i in &actives[s] {
                    if !touched[i] {
                        touched[i] = true;
                        touched_rows.push(i);
                    }
                }
            }
            model.sgd_step(&mut grad, &mut touched, &mut touched_rows, lr, cfg.l2_penalty);
        }
        if !epoch_loss.is_finite() || !model.b2.iter().all(|b| b.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }

    let mut final_loss = 0.0;
    for (a, &t) in actives.iter().zip(&targets) {
        let logits = model.logits_active(a);
        final_loss += weights[t] * (log_sum_exp(logits) - logits[t]);
    }
    final_loss = final_loss / samples.len() as f64 + model.penalty(cfg.l2_penalty);
    if !final_loss.is_finite() || !model.parameters().iter().all(|p| p.is_finite()) {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    model.meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        l2_penalty: cfg.l2_penalty,
        class_weighting: cfg.class_weighting,
        final_loss,
    };
    Ok(model)
}

impl Model {
    /// Applies and clears an accumulated batch gradient. Only `w1` rows of
    /// features seen in the batch carry data-gradient.
    fn sgd_step(
        &mut self,
        grad: &mut Gradient,
        touched: &mut [bool],
        touched_rows: &mut Vec<usize>,
        lr: f64,
        l2: f64,
    ) {
        if l2 > 0.0 {
            let decay = 1.0 - lr * l2;
            self.w1.iter_mut().for_each(|w| *w *= decay);
            self.w2.iter_mut().for_each(|w| *w *= decay);
        }
        let h = self.hidden;
        for &i in touched_rows.iter() {
            let g = &mut grad.w1[i * h..(i + 1) * h];
            for (w, gj) in self.w1[i * h..(i + 1) * h].iter_mut().zip(g.iter_mut()) {
                *w -= lr * *gj;
                *gj = 0.0;
            }
            touched[i] = false;
        }
        touched_rows.clear();
        for (w, g) in self.b1.iter_mut().zip(grad.b1.iter_mut()) {
            *w -= lr * *g;
            *g = 0.0;
        }
        for (w, g) in self.w2.iter_mut().zip(grad.w2.iter_mut()) {
            *w -= lr * *g;
            *g = 0.0;
        }
        for k in 0..OUTPUTS {
            self.b2[k] -= lr * grad.b2[k];
            grad.b2[k] = 0.0;
        }
    }
}

fn target_of(v: &FeatureVector) -> Result<usize> {
    match v.label() {
        Some(Label::Benign) => Ok(BENIGN),
        Some(Label::Malware) => Ok(MALWARE),
        None => Err(Error::Unlabeled(v.app_id().to_string())),
    }
}

fn class_weights(samples: &[FeatureVector], weighting: ClassWeighting) -> Result<[f64; OUTPUTS]> {
    match weighting {
        ClassWeighting::None => Ok([1.0; OUTPUTS]),
        ClassWeighting::Balanced => {
            let mut counts = [0usize; OUTPUTS];
            for s in samples {
                counts[target_of(s)?] += 1;
            }
            let n = samples.len() as f64;
            Ok(counts.map(|c| if c == 0 { 0.0 } else { n / (OUTPUTS as f64 * c as f64) }))
        }
    }
}

fn log_sum_exp(z: [f64; OUTPUTS]) -> f64 {
    let m = z[0].max(z[1]);
    m + ((z[0] - m).exp() + (z[1] - m).exp()).ln()
}

fn softmax(z: [f64; OUTPUTS]) -> [f64; OUTPUTS] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn put_block(out: &mut Vec<u8>, data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(data);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn block(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}
