//! On-disk formats and run provenance shared by the `milo` binary and its
//! integration tests.

pub mod container;
pub mod manifest;
pub mod model_io;
