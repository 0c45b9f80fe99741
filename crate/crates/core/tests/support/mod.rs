//! Oracles and generators shared by the integration suites and the
//! acceptance run.

#![allow(dead_code)]

pub mod layouts;
pub mod populations;
pub mod random;
pub mod recount;

use std::path::PathBuf;

use tutorviz_core::AssignmentConfig;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn demo() -> AssignmentConfig {
    AssignmentConfig::from_json(&std::fs::read_to_string(fixture("demo_config.json")).unwrap()).unwrap()
}
