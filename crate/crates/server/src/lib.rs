//! Model store, HTTP API and command-line pipeline around `tutorviz-core`.

pub mod api;
pub mod cli;
pub mod store;

pub use store::{Store, StoreError};

/// Environment variable naming the store root.
pub const STORE_ENV: &str = "TUTORVIZ_STORE";
