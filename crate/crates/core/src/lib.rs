//! Interactive many-objective unit-test generation.
//!
//! The crate evolves test cases for classes written in a small subject
//! language, pauses at scheduled moments so a tester can score the
//! readability of minimized candidate tests, and folds those scores back
//! into archive management, breeding and final suite assembly.

pub mod subject;
pub mod interpreter;
pub mod test_model;
pub mod minimization;
pub mod search;
pub mod interaction;
pub mod scoring;
pub mod session;
pub mod events;
pub mod stats;
pub mod experiment;
