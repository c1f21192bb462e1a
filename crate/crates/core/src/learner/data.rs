use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major feature matrix with binary labels (`true` = positive class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<F> {
    x: Vec<F>,
    y: Vec<bool>,
    n_features: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(x: Vec<F>, y: Vec<bool>, n_features: usize) -> Result<Self> {
        if n_features == 0 || x.len() != y.len() * n_features {
            return Err(Error::InvalidData(format!(
                "{} values do not form {} rows of {} features",
                x.len(),
                y.len(),
                n_features
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        Ok(Dataset { x, y, n_features })
    }

    pub fn from_rows<R: AsRef<[F]>>(rows: &[R], y: Vec<bool>) -> Result<Self> {
        let n_features = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_features) {
            return Err(Error::InvalidData("ragged feature rows".into()));
        }
        let x = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Dataset::new(x, y, n_features)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.x.chunks_exact(self.n_features)
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    pub fn value(&self, i: usize, feature: usize) -> F {
        self.x[i * self.n_features + feature]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset<F> {
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            n_features: self.n_features,
        }
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&b| b).count()
    }

    /// Error unless both classes are present.
    pub fn check_two_classes(&self) -> Result<()> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Per-feature centering and scaling. Constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<F> {
    pub mean: Vec<F>,
    pub std: Vec<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(data: &Dataset<F>) -> Self {
        let d = data.n_features();
        let n = F::from_count(data.len().max(1));
        let mut mean = vec![F::zero(); d];
        for row in data.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![F::zero(); d];
        for row in data.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > F::epsilon() {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform_row(&self, row: &[F], out: &mut [F]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, data: &Dataset<F>) -> Dataset<F> {
        let mut x = vec![F::zero(); data.len() * data.n_features()];
        for (row, out) in data.rows().zip(x.chunks_exact_mut(data.n_features())) {
            self.transform_row(row, out);
        }
        Dataset {
            x,
            y: data.labels().to_vec(),
            n_features: data.n_features(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Dataset::<f64>::new(vec![1.0, 2.0, 3.0], vec![true, false], 2).is_err());
        assert!(Dataset::<f64>::new(vec![1.0, f64::NAN], vec![true], 2).is_err());
        let d = Dataset::from_rows(&[[1.0f64, 2.0], [3.0, 4.0]], vec![true, false]).unwrap();
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.subset(&[1]).row(0), &[3.0, 4.0]);
        assert!(d.check_two_classes().is_ok());
        assert!(matches!(d.subset(&[0]).check_two_classes(), Err(Error::SingleClass)));
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let d = Dataset::from_rows(&[[1.0f64, 5.0], [3.0, 5.0]], vec![true, false]).unwrap();
        let s = Standardizer::fit(&d);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        let z = s.transform(&d);
        assert_eq!(z.row(0), &[-1.0, 0.0]);
        assert_eq!(z.row(1), &[1.0, 0.0]);
    }
}
