//! HTTP front end for the vibnet toolkit; the `vibnet` binary wraps it
//! together with the file pipeline.

pub mod service;
