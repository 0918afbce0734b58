//! File formats, parallel model selection and the command-line front end
//! for `bhme-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod kin8nm;
pub mod model_file;
pub mod parallel;
pub mod report;
pub mod table;

pub use error::{Error, ErrorKind, Result};
