//! Population protocols, output conditions and the "ensures" relation:
//! synthesis of protocols ensuring a counting condition, plus explicit,
//! symbolic and simulation-based checkers.

pub mod explicit;
pub mod fixtures;
pub mod format;
pub mod multiset;
pub mod protocol;
pub mod sets;
pub mod sim;
pub mod symbolic;
pub mod synth_io;
pub mod synth_pp;

pub use protocol::{Configuration, DeanonymisedExecution, Protocol, ProtocolError, StateId, Step, Transition};
pub use sets::{Condition, CountingSet, Cube, LinearSet, SemilinearSet, SetError};
