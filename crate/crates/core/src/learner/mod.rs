//! Classifiers for long/short cascade prediction and their evaluation.
//!
//! - [`LogisticRegression`]: elastic-net logistic regression fit by proximal
//!   gradient descent on standardized features.
//! - [`Gbdt`]: gradient-boosted regression trees on the logistic loss.
//! - [`cross_validate`] / [`evaluate`]: stratified k-fold accuracy, pooled ROC
//!   and AUC, and feature importance.

mod data;
mod eval;
mod gbdt;
mod logreg;

pub use data::{Dataset, Standardizer};
pub use eval::{
    accuracy, auc_trapezoid, cross_validate, evaluate, roc_curve, stratified_folds, CvResult,
    EvalReport, ModelSpec, RocPoint,
};
pub use gbdt::{feature_importance, train_gbdt, FeatureScore, Gbdt, GbdtParams, Tree, TreeNode};
pub use logreg::{train_logreg, LogRegParams, LogisticObjective, LogisticRegression};

use crate::scalar::Scalar;

/// Anything that scores a feature row with a probability of the positive class.
pub trait Classifier<F: Scalar>: Send + Sync {
    fn predict_proba(&self, row: &[F]) -> F;

    fn predict(&self, row: &[F]) -> bool {
        self.predict_proba(row) >= F::lit(0.5)
    }
}
