//! Command line and HTTP front ends for the keydeform toolkit.

pub mod cli;
pub mod ops;
pub mod server;
