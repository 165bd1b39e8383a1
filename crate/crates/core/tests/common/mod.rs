#![allow(dead_code)]

use std::collections::BTreeMap;

use deceit::classifier::Model;
use deceit::eval::{ConfusionMatrix, Metrics};
use deceit::schema::{Category, FeatureSchema};
use rand::Rng;

pub fn flat_schema(n: usize) -> FeatureSchema {
    FeatureSchema::new((0..n).map(|i| (Category::Permission, format!("F{i}")))).unwrap()
}

/// Single hidden unit kept positive by a large bias, so the malware-minus-benign
/// logit is `bias + sum(w_i x_i)`.
pub fn linear_logit_model(schema: &FeatureSchema, weights: &[f64], bias: f64) -> Model {
    let lift = 1.0 + weights.iter().map(|w| w.abs()).sum::<f64>();
    Model::from_parts(
        schema.fingerprint(),
        weights.len(),
        1,
        weights.to_vec(),
        vec![lift],
        vec![0.0, 1.0],
        [lift - bias, 0.0],
    )
    .unwrap()
}

pub fn random_model<R: Rng>(rng: &mut R, schema: &FeatureSchema, hidden: usize) -> Model {
    let input = schema.len();
    let mut u = |n: usize, s: f64| (0..n).map(|_| rng.gen_range(-s..s)).collect::<Vec<f64>>();
    let w1 = u(input * hidden, 1.0);
    let b1 = u(hidden, 0.5);
    let w2 = u(hidden * 2, 1.0);
    let b2 = u(2, 0.5);
    Model::from_parts(schema.fingerprint(), input, hidden, w1, b1, w2, [b2[0], b2[1]]).unwrap()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reference metrics written independently of the library.
pub fn oracle_metrics(c: &ConfusionMatrix) -> Metrics {
    let (tp, fp, tn, fne) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = if tp + fp > 0.0 { Some(tp / (tp + fp)) } else { None };
    let recall = if tp + fne > 0.0 { Some(tp / (tp + fne)) } else { None };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => Some(if p + r == 0.0 { 0.0 } else { 2.0 / (1.0 / p + 1.0 / r) }),
        _ => None,
    };
    let n = tp + fp + tn + fne;
    Metrics {
        accuracy: if n > 0.0 { Some((tp + tn) / n) } else { None },
        precision,
        recall,
        f1,
        benign_accuracy: if tn + fp > 0.0 { Some(tn / (tn + fp)) } else { None },
        malware_accuracy: recall,
        repackaged_accuracy: None,
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

pub fn metrics_close(a: &Metrics, b: &Metrics, tol: f64) -> bool {
    close(a.accuracy, b.accuracy, tol)
        && close(a.precision, b.precision, tol)
        && close(a.recall, b.recall, tol)
        && close(a.f1, b.f1, tol)
        && close(a.benign_accuracy, b.benign_accuracy, tol)
        && close(a.malware_accuracy, b.malware_accuracy, tol)
        && close(a.repackaged_accuracy, b.repackaged_accuracy, tol)
}

/// Max relative error between analytic and central-difference gradients.
pub fn gradient_check<R: Rng>(rng: &mut R) -> f64 {
    use deceit::classifier::ClassWeighting;
    use deceit::vector::{FeatureVector, Label};
    let schema = flat_schema(6);
    let model = random_model(rng, &schema, 3);
    let samples: Vec<FeatureVector> = (0..8)
        .map(|i| {
            let vals: Vec<u8> = (0..6).map(|_| rng.gen_range(0..2)).collect();
            let label = if i % 2 == 0 { Label::Benign } else { Label::Malware };
            FeatureVector::from_values(&schema, format!("s{i}"), &vals, Some(label)).unwrap()
        })
        .collect();
    let l2 = 0.01;
    let (_, grad) = model.loss_and_gradient(&samples, l2, ClassWeighting::None).unwrap();
    let analytic = grad.flatten();
    let params = model.parameters();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..params.len() {
        let mut plus = params.clone();
        plus[j] += h;
        let mut minus = params.clone();
        minus[j] -= h;
        let lp = model.with_parameters(&plus).unwrap().loss_and_gradient(&samples, l2, ClassWeighting::None).unwrap().0;
        let lm = model.with_parameters(&minus).unwrap().loss_and_gradient(&samples, l2, ClassWeighting::None).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[j].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    worst
}

/// Exact least squares of `sigmoid(bias + sum w_j x_j)` on every zero
/// perturbation of the active set, uniform weights. Returns
/// `(intercept, coefficients)` in active order.
pub fn exhaustive_oracle(weights: &[f64], bias: f64, active: &[usize]) -> (f64, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let k = active.len();
    let rows = 1usize << k;
    let mut x = DMatrix::<f64>::zeros(rows, k + 1);
    let mut y = DVector::<f64>::zeros(rows);
    for mask in 0..rows {
        x[(mask, 0)] = 1.0;
        let mut logit = bias;
        for (j, &i) in active.iter().enumerate() {
            if mask >> j & 1 == 1 {
                x[(mask, j + 1)] = 1.0;
                logit += weights[i];
            }
        }
        y[mask] = sigmoid(logit);
    }
    let beta = x.svd(true, true).solve(&y, 1e-14).unwrap();
    (beta[0], beta.iter().skip(1).copied().collect())
}

/// Weighted ridge with unpenalised intercept, solved densely.
pub fn ridge_oracle(design: &[Vec<bool>], y: &[f64], w: &[f64], ridge: f64) -> (f64, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let k = design[0].len();
    let x = DMatrix::<f64>::from_fn(design.len(), k + 1, |r, c| {
        if c == 0 || design[r][c - 1] {
            1.0
        } else {
            0.0
        }
    });
    let wm = DMatrix::<f64>::from_diagonal(&DVector::from_column_slice(w));
    let mut a = x.transpose() * &wm * &x;
    for j in 1..=k {
        a[(j, j)] += ridge;
    }
    let b = x.transpose() * &wm * DVector::from_column_slice(y);
    let beta = a.lu().solve(&b).unwrap();
    (beta[0], beta.iter().skip(1).copied().collect())
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_deceit"))
}

/// Runs the binary in `dir`, returning `(exit code, stderr)`.
pub fn run_in(dir: &std::path::Path, args: &[&str]) -> (i32, String) {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// A small gen → train → rank → detect → eval run; returns every file
/// written, keyed by path relative to `dir`.
pub fn cli_pipeline(dir: &std::path::Path, threads: &str) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(dir.join("train.toml"), "n_benign = 400\nn_malware = 100\nn_repackaged = 0\nseed = 101\n").unwrap();
    std::fs::write(dir.join("dev.toml"), "n_benign = 60\nn_malware = 20\nn_repackaged = 0\n").unwrap();
    std::fs::write(dir.join("test.toml"), "n_benign = 200\nn_malware = 50\nn_repackaged = 50\n").unwrap();
    std::fs::write(dir.join("net.toml"), "epochs = 5\nhidden_width = 32\n").unwrap();
    let steps: [&[&str]; 7] = [
        &["gen", "--config", "train.toml", "--out", "train.txt"],
        &["gen", "--config", "dev.toml", "--seed", "202", "--out", "dev.txt"],
        &["gen", "--config", "test.toml", "--seed", "7", "--out", "test.txt"],
        &["train", "--data", "train.txt", "--config", "net.toml", "--seed", "3", "--out", "model.bin"],
        &["rank", "--model", "model.bin", "--dev", "dev.txt", "--explain-samples", "200", "--seed", "5", "--out", "rank.txt", "--threads", threads],
        &["detect", "--model", "model.bin", "--rank", "rank.txt", "--data", "test.txt", "-k", "6", "--out", "detect.csv", "--threads", threads],
        &["eval", "--model", "model.bin", "--rank", "rank.txt", "--data", "test.txt", "--k-max", "8", "--out-dir", "report", "--threads", threads],
    ];
    for args in steps {
        let (code, err) = run_in(dir, args);
        assert_eq!(code, 0, "{args:?}: {err}");
    }
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}
