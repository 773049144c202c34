//! Input tables, run configuration and on-disk formats.

pub mod config;
pub mod panel;

pub use config::KeyValueConfig;
pub use panel::{load_panel, read_counts, read_offsets, write_counts, CountPanel};
