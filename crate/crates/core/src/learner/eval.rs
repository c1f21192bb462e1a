//! Stratified k-fold cross-validation, ROC and AUC.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::gbdt::{feature_importance, train_gbdt, FeatureScore, GbdtParams};
use super::logreg::{train_logreg, LogRegParams};
use super::Classifier;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec<F> {
    LogReg(LogRegParams<F>),
    Gbdt(GbdtParams<F>),
}

impl<F: Scalar> ModelSpec<F> {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LogReg(_) => "logreg",
            ModelSpec::Gbdt(_) => "gbdt",
        }
    }

    pub fn fit(&self, data: &Dataset<F>) -> Result<Box<dyn Classifier<F>>> {
        Ok(match self {
            ModelSpec::LogReg(p) => Box::new(train_logreg(data, p)?),
            ModelSpec::Gbdt(p) => Box::new(train_gbdt(data, p)?),
        })
    }

    /// Importance from a fit on all of `data`: level scores for trees,
    /// absolute standardized weights for logistic regression.
    pub fn importance(&self, data: &Dataset<F>, names: &[&str]) -> Result<Vec<FeatureScore>> {
        match self {
            ModelSpec::Gbdt(p) => Ok(feature_importance(&train_gbdt(data, p)?, names)),
            ModelSpec::LogReg(p) => {
                let model = train_logreg(data, p)?;
                let mut scores: Vec<FeatureScore> = names
                    .iter()
                    .zip(&model.weights)
                    .enumerate()
                    .map(|(feature, (name, w))| FeatureScore {
                        feature,
                        name: name.to_string(),
                        level_score: w.abs().as_f64(),
                        gain_score: 0.0,
                    })
                    .collect();
                scores.sort_by(|a, b| {
                    b.level_score
                        .partial_cmp(&a.level_score)
                        .unwrap()
                        .then(a.feature.cmp(&b.feature))
                });
                Ok(scores)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<F> {
    pub fpr: F,
    pub tpr: F,
    pub threshold: F,
}

/// Out-of-fold results.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult<F> {
    pub folds: Vec<usize>,
    pub fold_accuracies: Vec<F>,
    pub mean_accuracy: F,
    /// Score of each example from the model that did not train on it.
    pub scores: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<F> {
    pub city: String,
    pub model: String,
    pub n_examples: usize,
    pub fold_accuracies: Vec<F>,
    pub mean_accuracy: F,
    pub roc: Vec<RocPoint<F>>,
    pub auc: F,
    pub importance: Vec<FeatureScore>,
}

/// Fold index of every example. Each class is shuffled with `seed` and dealt
/// round-robin, continuing the deal across classes.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, "folds");
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

pub fn accuracy<F: Scalar>(model: &dyn Classifier<F>, data: &Dataset<F>) -> F {
    let correct = (0..data.len())
        .filter(|&i| model.predict(data.row(i)) == data.labels()[i])
        .count();
    F::from_count(correct) / F::from_count(data.len().max(1))
}

pub fn cross_validate<F: Scalar>(
    data: &Dataset<F>,
    spec: &ModelSpec<F>,
    folds: usize,
    seed: u64,
    city: &str,
) -> Result<CvResult<F>> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let pos = data.positives();
    if pos < folds || data.len() - pos < folds {
        return Err(Error::TooFewExamples {
            city: city.to_string(),
            folds,
        });
    }
    let assignment = stratified_folds(data.labels(), folds, seed);
    let per_fold: Vec<(Vec<usize>, Vec<F>)> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] == f);
            let model = spec.fit(&data.subset(&train))?;
            let scores = test.iter().map(|&i| model.predict_proba(data.row(i))).collect();
            Ok((test, scores))
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![F::zero(); data.len()];
    let mut fold_accuracies = Vec::with_capacity(folds);
    for (test, s) in per_fold {
        let correct = test
            .iter()
            .zip(&s)
            .filter(|(&i, &p)| (p >= F::lit(0.5)) == data.labels()[i])
            .count();
        fold_accuracies.push(F::from_count(correct) / F::from_count(test.len()));
        for (&i, p) in test.iter().zip(s) {
            scores[i] = p;
        }
    }
    let mean_accuracy = fold_accuracies.iter().copied().sum::<F>() / F::from_count(folds);
    Ok(CvResult {
        folds: assignment,
        fold_accuracies,
        mean_accuracy,
        scores,
    })
}

/// ROC over a descending threshold sweep. Tied scores enter together; the
/// first point is `(0, 0)` at a threshold above every score.
pub fn roc_curve<F: Scalar>(scores: &[F], labels: &[bool]) -> Vec<RocPoint<F>> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let rate = |k: usize, total: usize| {
        if total == 0 {
            F::zero()
        } else {
            F::from_count(k) / F::from_count(total)
        }
    };
    let top = order.first().map_or(F::one(), |&i| scores[i] + F::one());
    let mut roc = vec![RocPoint {
        fpr: F::zero(),
        tpr: F::zero(),
        threshold: top,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        roc.push(RocPoint {
            fpr: rate(fp, neg),
            tpr: rate(tp, pos),
            threshold: s,
        });
    }
    roc
}

pub fn auc_trapezoid<F: Scalar>(roc: &[RocPoint<F>]) -> F {
    roc.windows(2).fold(F::zero(), |a, w| {
        a + (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / F::lit(2.0)
    })
}

/// Cross-validated metrics plus importance from a fit on the whole set.
pub fn evaluate<F: Scalar>(
    data: &Dataset<F>,
    spec: &ModelSpec<F>,
    folds: usize,
    seed: u64,
    city: &str,
    names: &[&str],
) -> Result<EvalReport<F>> {
    let cv = cross_validate(data, spec, folds, seed, city)?;
    let roc = roc_curve(&cv.scores, data.labels());
    let auc = auc_trapezoid(&roc);
    Ok(EvalReport {
        city: city.to_string(),
        model: spec.name().to_string(),
        n_examples: data.len(),
        fold_accuracies: cv.fold_accuracies,
        mean_accuracy: cv.mean_accuracy,
        roc,
        auc,
        importance: spec.importance(data, names)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn separable(n: usize) -> Dataset<f64> {
        // the classes sit on either side of a gap
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| [i as f64 + if i >= n / 2 { n as f64 } else { 0.0 }, (i % 7) as f64])
            .collect();
        let y = (0..n).map(|i| i >= n / 2).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn folds_are_stratified_partitions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let labels: Vec<bool> = (0..103).map(|_| rng.gen_bool(0.3)).collect();
        let folds = stratified_folds(&labels, 5, 9);
        let pos = labels.iter().filter(|&&y| y).count();
        for f in 0..5 {
            let in_fold: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
            let p = in_fold.iter().filter(|&&i| labels[i]).count() as f64;
            assert!((p - pos as f64 / 5.0).abs() <= 1.0);
            let q = (in_fold.len() as f64 - p) - (labels.len() - pos) as f64 / 5.0;
            assert!(q.abs() <= 1.0);
        }
        assert_eq!(folds, stratified_folds(&labels, 5, 9));
    }

    #[test]
    fn separable_data_is_perfect() {
        let data = separable(100);
        for spec in [
            ModelSpec::LogReg(LogRegParams::default()),
            ModelSpec::Gbdt(GbdtParams::default()),
        ] {
            let report = evaluate(&data, &spec, 5, 3, "Test", &["a", "b"]).unwrap();
            assert_eq!(report.mean_accuracy, 1.0, "{}", spec.name());
            assert_eq!(report.auc, 1.0);
        }
    }

    #[test]
    fn roc_runs_corner_to_corner_and_is_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let scores: Vec<f64> = (0..200).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let labels: Vec<bool> = (0..200).map(|_| rng.gen_bool(0.5)).collect();
        let roc = roc_curve(&scores, &labels);
        assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            assert!(w[1].threshold < w[0].threshold);
        }
    }

    #[test]
    fn too_few_examples_names_city() {
        let data = Dataset::from_rows(&[[1.0f64], [2.0], [3.0], [4.0]], vec![true, false, true, false]).unwrap();
        let err = cross_validate(&data, &ModelSpec::Gbdt(GbdtParams::default()), 5, 0, "Karlsruhe").unwrap_err();
        assert!(err.to_string().contains("Karlsruhe"));
    }

    #[test]
    fn test_fold_features_do_not_change_fitted_model() {
        let data = separable(60);
        let folds = stratified_folds(data.labels(), 5, 4);
        let train: Vec<usize> = (0..60).filter(|&i| folds[i] != 0).collect();
        let mut x: Vec<f64> = data.rows().flatten().copied().collect();
        for i in (0..60).filter(|&i| folds[i] == 0) {
            x[2 * i] = 1e6;
        }
        let mutated = Dataset::new(x, data.labels().to_vec(), 2).unwrap();
        let a = train_gbdt(&data.subset(&train), &GbdtParams::default()).unwrap();
        let b = train_gbdt(&mutated.subset(&train), &GbdtParams::default()).unwrap();
        assert_eq!(a, b);
        let a = train_logreg(&data.subset(&train), &LogRegParams::default()).unwrap();
        let b = train_logreg(&mutated.subset(&train), &LogRegParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
