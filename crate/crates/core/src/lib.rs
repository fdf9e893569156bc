//! Exact algebra of q-deformed differential operators over truncated
//! power series in `t = q - 1`.

pub mod cli;
pub mod coords;
pub mod delta;
pub mod error;
pub mod qconn;
pub mod patch;
pub mod qdiff;
pub mod sections;
pub mod suite;
pub mod ring;

pub use error::{Error, Result};
pub use ring::{MultiIndex, Rat, RingElt};
