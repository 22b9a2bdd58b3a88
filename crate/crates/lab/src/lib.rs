//! File formats, the experiment harness and the `rdm` command line tool built
//! on `rdm-core`.

pub mod bench;
mod error;
pub mod formats;

pub use error::{LabError, Result};
