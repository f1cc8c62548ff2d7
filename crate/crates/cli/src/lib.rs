//! Command-line front end and HTTP gateway for the aegis pipeline.
//!
//! The core crate is re-exported as [`core`] so downstream code needs only
//! this dependency.

pub mod commands;
pub mod gateway;
pub mod settings;
pub mod view;

pub use aegis_core as core;
