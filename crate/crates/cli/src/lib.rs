//! Command line and HTTP front end for `dpscale-core`.
//!
//! [`reports`] holds the request and report types both front ends share;
//! [`formats`] reads and writes the on-disk artifacts; [`service`] is the
//! `/api/v1` router.

pub mod error;
pub mod formats;
pub mod manifest;
pub mod reports;
pub mod service;

pub use error::{CliError, ErrorBody};
