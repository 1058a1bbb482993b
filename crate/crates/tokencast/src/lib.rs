//! File formats, configuration, threaded race execution and benchmarking on
//! top of `tokencast-core`.

pub mod bench;
pub mod config;
pub mod external;
pub mod io;
pub mod race;
pub mod stream;
pub mod synthetic;
pub mod tokfile;

pub use tokencast_core as core;
