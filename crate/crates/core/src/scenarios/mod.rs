//! Drifting data generators and evaluation metrics.

mod classification;
mod csv_stream;
mod metrics;
mod regression;

pub use classification::{gaussian_plus_sq_mean, ClassificationDrift};
pub use csv_stream::CsvStream;
pub use metrics::{roc_auc, test_loss};
pub use regression::RegressionDrift;
