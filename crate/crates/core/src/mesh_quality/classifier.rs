use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, Parameterized, TensorRecord};

pub const HIDDEN: [usize; 2] = [100, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Binary classifier over pose vectors: standardization, then an MLP with
/// hidden sizes 100 and 50 and a logistic output.
#[derive(Debug, Clone)]
pub struct QualityClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format: String,
    version: u32,
    dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    tensors: Vec<TensorRecord>,
}

const FORMAT: &str = "handstate-quality-mlp";

fn check_two_classes(data: &[(&[f64], bool)]) -> Result<usize> {
    let pos = data.iter().filter(|d| d.1).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::InvalidArgument(
            "training needs at least one positive and one negative".into(),
        ));
    }
    let dim = data[0].0.len();
    if let Some(bad) = data.iter().find(|d| d.0.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.0.len(),
        });
    }
    Ok(dim)
}

fn column_stats(rows: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    (mean, var)
}

impl QualityClassifier {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn standardize(&self, xs: &[&[f64]]) -> Result<Array2<f32>> {
        let d = self.dim();
        let mut out = Array2::<f32>::zeros((xs.len(), d));
        for (i, x) in xs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: x.len(),
                });
            }
            for k in 0..d {
                out[[i, k]] = ((x[k] - self.mean[k]) / self.scale[k]) as f32;
            }
        }
        Ok(out)
    }

    /// Probability of the positive class for each input.
    pub fn predict(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let (logits, _) = self.mlp.forward(&self.standardize(xs)?);
        Ok(logits.column(0).iter().map(|&z| 1.0 / (1.0 + (-(z as f64)).exp())).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let body = ClassifierFile {
            format: FORMAT.into(),
            version: 1,
            dim: self.dim(),
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            tensors: self.mlp.to_tensors(),
        };
        serde_json::to_writer(&mut w, &body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let body: ClassifierFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if body.format != FORMAT || body.version != 1 {
            return Err(Error::Checkpoint(format!("unsupported classifier {}", body.format)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::new("quality", &[body.dim, HIDDEN[0], HIDDEN[1], 1], &mut rng);
        mlp.load_tensors(&body.tensors)?;
        Ok(Self {
            mean: body.mean,
            scale: body.scale,
            mlp,
        })
    }
}

/// Full-batch Adam on binary cross-entropy. Deterministic for a fixed seed.
pub fn train_quality_mlp(data: &[(&[f64], bool)], cfg: &MlpTrainConfig) -> Result<QualityClassifier> {
    let dim = check_two_classes(data)?;
    let rows: Vec<&[f64]> = data.iter().map(|d| d.0).collect();
    let (mean, var) = column_stats(&rows, dim);
    let scale = var.iter().map(|v| v.sqrt().max(1e-8)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clf = QualityClassifier {
        mean,
        scale,
        mlp: Mlp::new("quality", &[dim, HIDDEN[0], HIDDEN[1], 1], &mut rng),
    };
    let x = clf.standardize(&rows)?;
    let n = data.len() as f32;
    let mut opt = Adam::new(cfg.learning_rate as f32);
    for _ in 0..cfg.epochs {
        clf.mlp.zero_grad();
        let (z, cache) = clf.mlp.forward(&x);
        let mut dz = Array2::<f32>::zeros(z.dim());
        for (i, (_, y)) in data.iter().enumerate() {
            let p = 1.0 / (1.0 + (-z[[i, 0]]).exp());
            dz[[i, 0]] = (p - *y as u8 as f32) / n;
        }
        clf.mlp.backward(&cache, &dz);
        opt.step(&mut clf.mlp);
    }
    Ok(clf)
}

/// Gaussian naive Bayes with per-class diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub fn fit(data: &[(&[f64], bool)]) -> Result<Self> {
        let dim = check_two_classes(data)?;
        let split = |want: bool| -> Vec<&[f64]> {
            data.iter().filter(|d| d.1 == want).map(|d| d.0).collect()
        };
        let (neg, pos) = (split(false), split(true));
        let (m0, v0) = column_stats(&neg, dim);
        let (m1, v1) = column_stats(&pos, dim);
        // variance floor relative to the largest feature variance
        let all: Vec<&[f64]> = data.iter().map(|d| d.0).collect();
        let floor = 1e-9 * column_stats(&all, dim).1.iter().cloned().fold(0.0, f64::max).max(1e-12);
        let n = data.len() as f64;
        Ok(Self {
            log_prior: [(neg.len() as f64 / n).ln(), (pos.len() as f64 / n).ln()],
            mean: [m0, m1],
            var: [
                v0.into_iter().map(|v| v + floor).collect(),
                v1.into_iter().map(|v| v + floor).collect(),
            ],
        })
    }

    fn log_joint(&self, x: &[f64], c: usize) -> f64 {
        let mut l = self.log_prior[c];
        for ((v, m), s) in x.iter().zip(&self.mean[c]).zip(&self.var[c]) {
            l -= 0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m) * (v - m) / s);
        }
        l
    }

    /// Posterior probability of the positive class.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mean[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean[0].len(),
                actual: x.len(),
            });
        }
        let (a, b) = (self.log_joint(x, 0), self.log_joint(x, 1));
        Ok(1.0 / (1.0 + (a - b).exp()))
    }
}

/// Unsupervised density score: log-likelihood under one full-covariance
/// Gaussian fitted to all samples, covariance regularized by `1e-6 I`.
#[derive(Debug, Clone)]
pub struct GaussianScorer {
    mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl GaussianScorer {
    pub const RIDGE: f64 = 1e-6;

    pub fn fit(samples: &[&[f64]]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Empty("no samples for Gaussian fit".into()));
        };
        let d = first.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let n = samples.len() as f64;
        let mut mean = DVector::<f64>::zeros(d);
        for s in samples {
            mean += DVector::from_column_slice(s) / n;
        }
        let mut cov = DMatrix::<f64>::identity(d, d) * Self::RIDGE;
        for s in samples {
            let c = DVector::from_column_slice(s) - &mean;
            cov += &c * c.transpose() / n;
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { mean, chol, log_norm })
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.len(),
            });
        }
        let c = DVector::from_column_slice(x) - &self.mean;
        let sol = self.chol.solve(&c);
        Ok(self.log_norm - 0.5 * c.dot(&sol))
    }
}
