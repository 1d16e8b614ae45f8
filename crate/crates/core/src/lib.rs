//! County-level corn yield forecasting.
//!
//! The pipeline runs end to end from CSV inputs to evaluation reports:
//! ingestion and validation, yield de-trending, agronomic feature
//! engineering into a dense sequence tensor, combination-based data
//! augmentation, mRMR feature selection, a from-scratch many-to-one LSTM
//! trained by SGD with backpropagation through time, random hyperparameter
//! search, truncated early prediction, and county-to-state evaluation.
//!
//! Real weather feeds are proprietary, so the crate ships a deterministic
//! synthetic generator with a known ground truth; correctness rests on
//! property tests and a finite-difference gradient oracle rather than on
//! reproducing published error tables.

pub mod augment;
pub mod detrend;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod lstm;
pub mod persist;
pub mod select;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use tensor::{FeatureMatrix, FeatureTensor};
pub use types::{CountyMeta, DailyWeather, Date, PdsiSeries, Sample, YieldRecord, SEASON_DAYS};
