//! Sparse variational inference for deep ReLU regression networks with a
//! spike-and-slab posterior, a Gumbel-softmax relaxation of the inclusion
//! gates, and ELBO-penalized width selection.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod net;
pub mod rates;
pub mod rng;
pub mod select;
pub mod teacher;
pub mod train;
pub mod variational;

pub use data::{load_csv, RegressionDataset, SplitSpec, Standardizer, TargetColumn};
pub use elbo::{ElboReport, OptimizerKind, TrainConfig, VariationalGrad};
pub use error::{Result, SviError};
pub use net::{forward, param_count, Evaluator, NetworkShape, ThetaVector};
pub use rates::{estimation_rate, holder_structure, variational_error, RateInputs};
pub use select::{select_width, Selection, SelectionReport, WidthCandidate};
pub use teacher::{generate_teacher, synthesize, TeacherNetwork};
pub use train::{train_width, TrainOutcome};
pub use variational::{EntropyUnits, PriorConfig, VariationalParams};
