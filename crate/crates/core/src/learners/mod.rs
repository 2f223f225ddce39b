//! Base learners and the X-learner built from them.

pub mod boosting;
pub mod cv;
pub mod forest;
pub mod logistic;
pub mod tree;
pub mod xlearner;

pub use boosting::{fit_gradient_boosting, BoostingParams, GradientBoostedModel};
pub use cv::{cross_validate, CvOutcome, Grid, Targets};
pub use forest::{fit_forest, ForestParams, ProbabilityForest};
pub use logistic::{fit_logistic, LogisticModel};
pub use tree::{fit_regression_tree, RegressionTree, TreeParams};
pub use xlearner::{fit_xlearner, predict_cate, XLearnerConfig, XLearnerModel};
