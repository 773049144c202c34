//! Probability kernels and elementary samplers.

pub mod nb;
pub mod polya_gamma;
pub mod slice;

pub use nb::{nb_logpmf, nb_moments, nb_pmf, sample_nb, NBParams};
pub use polya_gamma::{pg_mean, pg_var, sample_polya_gamma, PolyaGammaSampler};
pub use slice::{slice_sample, SliceSampler};
