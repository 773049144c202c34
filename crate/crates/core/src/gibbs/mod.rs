//! Posterior sampling for the count model and its Gaussian counterpart.

pub mod config;
pub mod engine;
pub mod store;
pub mod summary;

pub use config::{FitConfig, Priors, Variant, POIS_DEFAULT_R};
pub use engine::{fit, fit_gauss, sqrt_rates};
pub use store::{validate_store_dir, DrawStore, ModelState, StoreMeta};
pub use summary::{effective_sample_size, predictive_summary, quantile_sorted, PredictiveSummary};
