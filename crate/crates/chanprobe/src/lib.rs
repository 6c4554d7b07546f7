//! File formats, reports and the command-line driver around
//! [`chanprobe_core`].
//!
//! * [`ctrc`]: the CTRC v1 binary trace container,
//! * [`ingest`]: CSV intensity tables,
//! * [`report`]: JSON and CSV renderings of analysis results,
//! * [`cli`]: the `chanprobe` subcommands.

pub mod cli;
pub mod ctrc;
pub mod ingest;
pub mod report;

pub use ctrc::{read_trace, read_trace_file, write_trace, write_trace_file, CtrcError};
pub use ingest::{ingest_csv, IngestError};
