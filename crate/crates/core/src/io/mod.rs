//! File formats, run configuration and report output.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelBundle};
pub use config::RunConfig;
pub use dataset::{load_csv, load_dataset, save_dataset};
