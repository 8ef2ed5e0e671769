//! Analysis, certification and state-feedback synthesis for negative-imaginary
//! linear time-invariant systems.

pub mod certify;
pub mod error;
pub mod io;
pub mod matkit;
pub mod par;
pub mod planted;
pub mod structure;
pub mod synth;
pub mod sysmodel;

pub use error::{Error, ErrorKind, Result};
