//! File formats, dataset bundles, model files and the `egnn` command line
//! around [`egnn_core`].

pub use egnn_core as core;

mod binio;
pub mod bundle;
pub mod citation;
pub mod cli;
pub mod error;
pub mod model_file;
pub mod molecular;
pub mod report;
pub mod variant;

pub use error::{Error, Result};
