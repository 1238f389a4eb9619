//! Incremental analysis tasks.
//!
//! Every task here trains from a growing state, one partition at a time, with
//! no global preprocessing pass over the full corpus. That is what lets a
//! model travel from station to station:
//!
//! - [`naive_bayes`]: multinomial naive Bayes over exact integer counts, so
//!   training over partitions in any order equals training over their union.
//! - [`sgd`]: logistic regression trained by plain sequential SGD.
//! - [`features`]: pairwise features for author name disambiguation.
//! - [`schema`] / [`dataset`]: dataset schemas, JSON-Lines datasets and the
//!   synthetic schema-sample generator.
//! - [`runner`]: the task-kind dispatch used by stations and the center.

pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod naive_bayes;
pub mod runner;
pub mod schema;
pub mod sgd;
pub mod tokenize;

pub use dataset::LocalDataset;
pub use error::TaskError;
pub use features::{and_featurize, AndPairFeatures, AndPairRecord};
pub use naive_bayes::{nb_predict, nb_update, NbPrediction, NbState};
pub use schema::{generate_schema_sample, DatasetSchema, FieldSpec, FieldType, SchemaSample};
pub use sgd::{sgd_predict, sgd_update, SgdState};
pub use tokenize::tokenize;
