//! Elastic-net logistic regression.
//!
//! Minimizes
//!
//! ```text
//! (1/n) Σ [ln(1 + e^{z_i}) - y_i z_i] + (l2/2)‖w‖² + l1‖w‖₁,   z_i = w·x_i + b
//! ```
//!
//! over standardized features with proximal gradient steps (soft
//! thresholding for the L1 term, backtracking on the step size). The bias is
//! not penalized.

use serde::{Deserialize, Serialize};

use super::data::{Dataset, Standardizer};
use super::Classifier;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams<F> {
    pub l1: F,
    pub l2: F,
    pub epochs: usize,
    /// Initial step size; halved on backtracking.
    pub step: F,
    /// Relative objective change that stops the iteration.
    pub tol: F,
}

impl<F: Scalar> Default for LogRegParams<F> {
    fn default() -> Self {
        LogRegParams {
            l1: F::lit(0.01),
            l2: F::lit(0.01),
            epochs: 2000,
            step: F::one(),
            tol: F::lit(1e-10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression<F> {
    /// Coefficients on standardized features.
    pub weights: Vec<F>,
    pub bias: F,
    pub l1: F,
    pub l2: F,
    /// Fitted on training data only.
    pub standardization: Standardizer<F>,
    pub epochs_run: usize,
}

impl<F: Scalar> LogisticRegression<F> {
    pub fn decision(&self, row: &[F]) -> F {
        let mut z = self.bias;
        for (((&v, &w), &m), &s) in row
            .iter()
            .zip(&self.weights)
            .zip(&self.standardization.mean)
            .zip(&self.standardization.std)
        {
            z = z + w * (v - m) / s;
        }
        z
    }
}

impl<F: Scalar> Classifier<F> for LogisticRegression<F> {
    fn predict_proba(&self, row: &[F]) -> F {
        sigmoid(self.decision(row))
    }
}

/// The training objective over an already standardized dataset.
pub struct LogisticObjective<'a, F> {
    pub data: &'a Dataset<F>,
    pub l1: F,
    pub l2: F,
}

impl<F: Scalar> LogisticObjective<'_, F> {
    fn margins(&self, w: &[F], b: F) -> Vec<F> {
        self.data
            .rows()
            .map(|row| row.iter().zip(w).fold(b, |z, (&x, &wi)| z + x * wi))
            .collect()
    }

    /// Mean logistic loss plus the L2 term.
    pub fn smooth_value(&self, w: &[F], b: F) -> F {
        let n = F::from_count(self.data.len());
        let loss = self
            .margins(w, b)
            .into_iter()
            .zip(self.data.labels())
            .map(|(z, &y)| softplus(z) - if y { z } else { F::zero() })
            .fold(F::zero(), |a, v| a + v);
        let ridge = w.iter().map(|&wi| wi * wi).fold(F::zero(), |a, v| a + v);
        loss / n + self.l2 * ridge / F::lit(2.0)
    }

    pub fn value(&self, w: &[F], b: F) -> F {
        let lasso = w.iter().map(|wi| wi.abs()).fold(F::zero(), |a, v| a + v);
        self.smooth_value(w, b) + self.l1 * lasso
    }

    /// Gradient of [`Self::smooth_value`] with respect to `(w, b)`.
    pub fn smooth_gradient(&self, w: &[F], b: F) -> (Vec<F>, F) {
        let n = F::from_count(self.data.len());
        let mut gw = vec![F::zero(); w.len()];
        let mut gb = F::zero();
        for ((row, z), &y) in self.data.rows().zip(self.margins(w, b)).zip(self.data.labels()) {
            let r = sigmoid(z) - if y { F::one() } else { F::zero() };
            gb = gb + r;
            for (g, &x) in gw.iter_mut().zip(row) {
                *g = *g + r * x;
            }
        }
        for (g, &wi) in gw.iter_mut().zip(w) {
            *g = *g / n + self.l2 * wi;
        }
        (gw, gb / n)
    }
}

fn soft_threshold<F: Scalar>(v: F, t: F) -> F {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        F::zero()
    }
}

pub fn train_logreg<F: Scalar>(data: &Dataset<F>, params: &LogRegParams<F>) -> Result<LogisticRegression<F>> {
    data.check_two_classes()?;
    if params.l1 < F::zero() || params.l2 < F::zero() || params.step <= F::zero() {
        return Err(Error::Config("logistic regression needs l1, l2 >= 0 and step > 0".into()));
    }
    let standardization = Standardizer::fit(data);
    let z = standardization.transform(data);
    let obj = LogisticObjective {
        data: &z,
        l1: params.l1,
        l2: params.l2,
    };

    let d = data.n_features();
    let mut w = vec![F::zero(); d];
    let prior = F::from_count(data.positives()) / F::from_count(data.len());
    let mut b = (prior / (F::one() - prior)).ln();
    let mut value = obj.value(&w, b);
    let mut step = params.step;
    let half = F::lit(0.5);
    let mut epochs_run = 0;

    for _ in 0..params.epochs {
        epochs_run += 1;
        let f = obj.smooth_value(&w, b);
        let (gw, gb) = obj.smooth_gradient(&w, b);
        let (mut nw, mut nb);
        // backtrack until the quadratic upper bound holds
        loop {
            nw = w
                .iter()
                .zip(&gw)
                .map(|(&wi, &g)| soft_threshold(wi - step * g, step * params.l1))
                .collect::<Vec<F>>();
            nb = b - step * gb;
            let mut lin = (nb - b) * gb;
            let mut sq = (nb - b) * (nb - b);
            for ((&a, &o), &g) in nw.iter().zip(&w).zip(&gw) {
                lin = lin + (a - o) * g;
                sq = sq + (a - o) * (a - o);
            }
            if obj.smooth_value(&nw, nb) <= f + lin + sq / (F::lit(2.0) * step) || step < F::lit(1e-12) {
                break;
            }
            step = step * half;
        }
        let new_value = obj.value(&nw, nb);
        let change = (value - new_value).abs();
        w = nw;
        b = nb;
        value = new_value;
        if change <= params.tol * (F::one() + value.abs()) {
            break;
        }
    }

    Ok(LogisticRegression {
        weights: w,
        bias: b,
        l1: params.l1,
        l2: params.l2,
        standardization,
        epochs_run,
    })
}
