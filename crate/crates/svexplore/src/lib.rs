//! Bundle files, the offline precompute pipeline and the HTTP exploration
//! service built on `svexplore-core`.

pub mod bundle;
pub mod error;
pub mod io;
pub mod service;
pub mod store;

pub use bundle::{precompute_bundle, Bundle, Manifest, PrecomputeParams};
pub use error::{Error, Result};
