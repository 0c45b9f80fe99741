//! Engine for the collective student model of a procedural-training
//! assignment.
//!
//! The pipeline runs from raw tutor logs to renderable geometry:
//!
//! * [`domain`] holds the assignment configuration and the event, error and
//!   zone vocabulary.
//! * [`replay`] parses event-record corpora, reproduces the tutor's
//!   do/try/fail classification from raw actions, and generates synthetic
//!   corpora.
//! * [`automaton`] folds student logs into the zoned, frequency-annotated
//!   automaton and groups repeated irrelevant errors into super-states.
//! * [`cluster`] computes per-student features and partitions students with
//!   X-means or a diagonal Gaussian mixture.
//! * [`layout`] places the automaton on the three-band canvas with the
//!   color coding instructors expect.
//! * [`views`] and [`stats`] serve filtering, search, per-date and
//!   per-student views, details, and period comparison.
//! * [`render`] turns a layout into static SVG or DOT.

pub mod automaton;
pub mod cluster;
pub mod domain;
pub mod error;
pub mod layout;
pub mod render;
pub mod replay;
pub mod stats;
pub mod views;

pub use automaton::{build_automaton, frequency_of, group_super_states, Automaton, EdgeRec, StateId, StateKind, StateNode};
pub use domain::{validate_config, ActionSpec, AssignmentConfig, ErrorKind, EventKind, StudentEvent, StudentLog, Zone};
pub use error::{Error, Result};
