//! Randomised hyperparameter search: the per-family search spaces, sampled
//! configurations, the parallel experiment runner and its persistent record
//! store, and distribution summaries.

pub mod record;
pub mod runner;
pub mod space;
pub mod summary;

pub use record::{config_hash, load_records, ExperimentRecord, RecordSink, RecordStatus};
pub use runner::{derive_seed, experiment_at, run_search, SearchConfig, SearchReport};
pub use space::{Hyperparameters, ParamCategory, ParamKind, ParamSpec, SearchSpace};
pub use summary::{summarize, FamilySummary};
