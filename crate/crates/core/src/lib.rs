// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod count;
pub mod error;
pub mod forecast;
pub mod gibbs;
pub mod io;
pub mod latent;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use io::CountPanel;
pub use rng::RngHandle;
