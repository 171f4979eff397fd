use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{permutation, seeded};
use crate::tensor::Matrix;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            epochs: 50,
            batch_size: 128,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

/// Multinomial softmax regression: `p = softmax(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    /// `width x classes`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LogRegModel {
    pub fn zeros(width: usize, classes: usize) -> Self {
        LogRegModel {
            weights: Matrix::zeros(width, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn row_proba(&self, x: &[f64], out: &mut [f64]) {
        let k = self.classes();
        out.copy_from_slice(&self.bias);
        for (p, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let w = &self.weights.as_slice()[p * k..(p + 1) * k];
                for (o, wv) in out.iter_mut().zip(w) {
                    *o += v * wv;
                }
            }
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::data(format!(
                "expected {} features, got {}",
                self.width(),
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.classes());
        for i in 0..x.rows() {
            self.row_proba(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }
}

/// Mini-batch gradient descent on cross-entropy from all-zero weights.
///
/// Returns the model and the per-epoch mean loss (each batch measured
/// before its update). Rows are reshuffled every epoch from one seeded
/// generator.
pub fn logreg_fit(
    x: &Matrix,
    labels: &[u32],
    classes: usize,
    config: &LogRegConfig,
) -> Result<(LogRegModel, Vec<f64>)> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::data(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::data(format!("label {l} outside {classes} classes")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("design matrix has non-finite entries"));
    }
    if config.batch_size == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::config(
            "logistic regression needs batch size >= 1 and a positive learning rate",
        ));
    }
    let width = x.cols();
    let mut model = LogRegModel::zeros(width, classes);
    if config.epochs > 0 && n == 0 {
        return Err(Error::data("training set is empty"));
    }
    let mut rng = seeded(config.seed);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut probs = vec![0.0; classes];
    let mut gw = vec![0.0; width * classes];
    let mut gb = vec![0.0; classes];
    for _ in 0..config.epochs {
        let order = permutation(n, &mut rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            gw.fill(0.0);
            gb.fill(0.0);
            let mut batch_loss = 0.0;
            for &r in chunk {
                let row = x.row(r);
                model.row_proba(row, &mut probs);
                let y = labels[r] as usize;
                batch_loss -= probs[y].clamp(PROB_FLOOR, 1.0).ln();
                probs[y] -= 1.0;
                for (p, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        for (g, d) in gw[p * classes..(p + 1) * classes].iter_mut().zip(&probs) {
                            *g += v * d;
                        }
                    }
                }
                for (g, d) in gb.iter_mut().zip(&probs) {
                    *g += d;
                }
            }
            let step = config.learning_rate / chunk.len() as f64;
            for (w, g) in model.weights.as_mut_slice().iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= step * g;
            }
            epoch_total += batch_loss;
        }
        losses.push(epoch_total / n as f64);
    }
    Ok((model, losses))
}
