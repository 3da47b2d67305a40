//! HTTP service and command line front end for the assistance engine.

pub mod cli;
pub mod http;
