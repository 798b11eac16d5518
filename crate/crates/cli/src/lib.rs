//! File formats and benchmark studies behind the `transship` binary.

pub mod io;
pub mod study;
