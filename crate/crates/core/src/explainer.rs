//! Local surrogate explanations of single predictions.
//!
//! The neighbourhood of an app is sampled by switching off random subsets of
//! its present features (absent features are never switched on). Each
//! neighbour is weighted by `exp(-d^2 / width^2)`, `d` being the number of
//! features switched off, and a weighted ridge regression of the malware
//! probability on the kept-feature indicators gives one signed coefficient
//! per present feature. A positive coefficient means the feature's presence
//! pushes the prediction toward malware, a negative one toward benign.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::Model;
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;
use crate::vector::FeatureVector;

/// Upper bound on present features for exhaustive enumeration.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// `num_samples` independent draws, each present bit dropped with probability 1/2.
    #[default]
    Random,
    /// Every one of the `2^k` subsets of the `k` present features.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub num_samples: usize,
    /// `None` selects `0.75 * sqrt(k)` for `k` present features. Use
    /// `f64::INFINITY` for a uniform kernel.
    pub kernel_width: Option<f64>,
    pub top_m: usize,
    pub ridge_penalty: f64,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            num_samples: 1000,
            kernel_width: None,
            top_m: 10,
            ridge_penalty: 1e-3,
            seed: 0,
            sampling: Sampling::Random,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 && self.sampling == Sampling::Random {
            return Err(Error::InvalidConfig("num_samples must be positive".into()));
        }
        if self.top_m == 0 {
            return Err(Error::InvalidConfig("top_m must be positive".into()));
        }
        if let Some(w) = self.kernel_width {
            if w.is_nan() || w <= 0.0 {
                return Err(Error::InvalidConfig(format!("kernel_width {w} must be positive")));
            }
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ridge_penalty {} must be finite and >= 0",
                self.ridge_penalty
            )));
        }
        Ok(())
    }

    pub fn width_for(&self, active: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (active as f64).sqrt())
    }

    /// Stable digest of every setting that influences an explanation.
    pub fn digest(&self) -> String {
        let canon = format!(
            "num_samples={}\nkernel_width={}\ntop_m={}\nridge_penalty={}\nseed={}\nsampling={:?}\n",
            self.num_samples,
            self.kernel_width.map_or("auto".to_string(), |w| w.to_string()),
            self.top_m,
            self.ridge_penalty,
            self.seed,
            self.sampling
        );
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub app_id: String,
    /// `(feature index, weight)` sorted by `|weight|` descending, ties by index.
    pub contributions: Vec<(usize, f64)>,
    pub intercept: f64,
    pub surrogate_fit_r2: f64,
}

/// Perturbation set drawn around one app, with the model's responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbourhood {
    /// Present features of the explained app, in index order.
    pub active: Vec<usize>,
    /// One row per neighbour; `kept[r][j]` tells whether `active[j]` survived.
    pub kept: Vec<Vec<bool>>,
    /// Malware probability of each neighbour.
    pub responses: Vec<f64>,
}

impl Neighbourhood {
    /// Hamming distance of each neighbour to the explained app.
    pub fn distances(&self) -> Vec<usize> {
        self.kept
            .iter()
            .map(|row| row.iter().filter(|&&k| !k).count())
            .collect()
    }

    pub fn kernel_weights(&self, width: f64) -> Vec<f64> {
        self.distances()
            .into_iter()
            .map(|d| {
                let d = d as f64;
                (-(d * d) / (width * width)).exp()
            })
            .collect()
    }
}

/// Seed for one app's perturbation stream, independent of batch order.
pub fn stream_seed(seed: u64, app_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(app_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Draws the perturbation set for `v` and queries the model on it.
pub fn neighbourhood(model: &Model, v: &FeatureVector, cfg: &ExplainConfig) -> Result<Neighbourhood> {
    cfg.validate()?;
    model.predict_proba(v)?;
    let active = v.active();
    let k = active.len();
    if k == 0 {
        return Err(Error::NoActiveFeatures(v.app_id().to_string()));
    }
    let kept: Vec<Vec<bool>> = match cfg.sampling {
        Sampling::Random => {
            if cfg.num_samples < k + 1 {
                return Err(Error::InvalidConfig(format!(
                    "num_samples {} must be at least active features + 1 = {}",
                    cfg.num_samples,
                    k + 1
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, v.app_id()));
            (0..cfg.num_samples)
                .map(|_| (0..k).map(|_| rng.gen_bool(0.5)).collect())
                .collect()
        }
        Sampling::Exhaustive => {
            if k > MAX_EXHAUSTIVE_FEATURES {
                return Err(Error::InvalidConfig(format!(
                    "exhaustive sampling supports at most {MAX_EXHAUSTIVE_FEATURES} present features, got {k}"
                )));
            }
            (0u64..1 << k)
                .map(|mask| (0..k).map(|j| mask >> j & 1 == 1).collect())
                .collect()
        }
    };
    let mut buf = Vec::with_capacity(k);
    let responses = kept
        .iter()
        .map(|row| {
            buf.clear();
            buf.extend(active.iter().zip(row).filter(|(_, &keep)| keep).map(|(&i, _)| i));
            model.proba_active(&buf)
        })
        .collect();
    Ok(Neighbourhood {
        active,
        kept,
        responses,
    })
}

/// Weighted ridge fit on a neighbourhood: returns `(intercept, coefficients, r2)`.
/// The intercept is not penalised.
pub fn fit_surrogate(n: &Neighbourhood, weights: &[f64], ridge: f64) -> Result<(f64, Vec<f64>, f64)> {
    let k = n.active.len();
    let dim = k + 1;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for ((row, &y), &w) in n.kept.iter().zip(&n.responses).zip(weights) {
        if w == 0.0 {
            continue;
        }
        x[0] = 1.0;
        for (xj, &keep) in x[1..].iter_mut().zip(row) {
            *xj = if keep { 1.0 } else { 0.0 };
        }
        for r in 0..dim {
            if x[r] == 0.0 {
                continue;
            }
            b[r] += w * y;
            for c in 0..dim {
                if x[c] != 0.0 {
                    a[r * dim + c] += w;
                }
            }
        }
    }
    for j in 1..dim {
        a[j * dim + j] += ridge;
    }
    let beta = cholesky_solve(&mut a, &b, dim).ok_or_else(|| {
        Error::InvalidConfig("surrogate normal equations are singular; use ridge_penalty > 0".into())
    })?;

    let total_w: f64 = weights.iter().sum();
    let mean = n.responses.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total_w;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((row, &y), &w) in n.kept.iter().zip(&n.responses).zip(weights) {
        let pred = beta[0]
            + row
                .iter()
                .zip(&beta[1..])
                .filter(|(&keep, _)| keep)
                .map(|(_, c)| c)
                .sum::<f64>();
        ss_res += w * (y - pred).powi(2);
        ss_tot += w * (y - mean).powi(2);
    }
    let r2 = if ss_tot <= f64::EPSILON * total_w {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok((beta[0], beta[1..].to_vec(), r2))
}

/// Explains the model's malware probability for `v`.
pub fn explain(model: &Model, v: &FeatureVector, cfg: &ExplainConfig) -> Result<Explanation> {
    if cfg.top_m > v.len() {
        return Err(Error::InvalidConfig(format!(
            "top_m {} exceeds schema size {}",
            cfg.top_m,
            v.len()
        )));
    }
    let n = neighbourhood(model, v, cfg)?;
    let weights = n.kernel_weights(cfg.width_for(n.active.len()));
    let (intercept, coefs, r2) = fit_surrogate(&n, &weights, cfg.ridge_penalty)?;
    let mut contributions: Vec<(usize, f64)> = n.active.iter().copied().zip(coefs).collect();
    contributions.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    contributions.truncate(cfg.top_m);
    Ok(Explanation {
        app_id: v.app_id().to_string(),
        contributions,
        intercept,
        surrogate_fit_r2: r2,
    })
}

/// Features whose reported weight is strictly negative.
pub fn benign_features_of(e: &Explanation) -> BTreeSet<usize> {
    e.contributions
        .iter()
        .filter(|(_, w)| *w < 0.0)
        .map(|&(i, _)| i)
        .collect()
}

/// Audit rows `app_id,feature_name,weight` with a header line.
pub fn explanation_rows(explanations: &[Explanation], schema: &FeatureSchema) -> String {
    let mut out = String::from("app_id,feature_name,weight\n");
    for e in explanations {
        for &(i, w) in &e.contributions {
            let name = schema
                .get(i)
                .map_or_else(|| format!("#{i}"), |f| f.qualified_name());
            let _ = writeln!(out, "{},{},{}", e.app_id, name, w);
        }
    }
    out
}

/// In-place Cholesky factorisation and solve of the SPD system `a x = b`.
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[i * n + k] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[k * n + i] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    Some(y)
}
