//! File formats, LP round-tripping, reports and the command-line front end
//! for `sectrans-core`.

pub mod cli;
pub mod lp;
pub mod report;
pub mod schema;
pub mod solution;
pub mod trace_io;
