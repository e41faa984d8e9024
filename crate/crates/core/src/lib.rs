//! Meta-learners for conditional average treatment effects.
//!
//! S-, T-, X-, F- and U-learners over OLS, k-nearest-neighbour and honest
//! random forest base learners, plus synthetic data-generating processes,
//! bootstrap inference and Monte Carlo rate experiments.

pub mod data;
pub mod dgp;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod learner_spec;
pub mod learners;
pub mod matrix;
pub mod meta;
pub mod rng;
pub mod stats;

pub use data::{Dataset, GroundTruth};
pub use dgp::{CorrelationMatrix, FeatureLaw, SimulationSpec};
pub use error::{Arm, Error, Result};
pub use learners::{FittedRegressor, Regressor};
pub use matrix::Matrix;
pub use evaluation::{emse, RateExperiment, RateFit, ReplicationRecord, SampleDesign};
pub use inference::{CiMethod, IntervalEstimate};
pub use learner_spec::{parse_learner, parse_learner_list, LearnerContext, NamedLearner};
pub use meta::{CateEstimator, CateKind, CateLearner, CateModel, MetaLearner};
