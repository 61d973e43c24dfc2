//! Library half of the command-line front end.
//!
//! The binary in `main.rs` is a thin argument-parsing shell over
//! `commands`; everything else lives here so tests can exercise parsing,
//! serialization, and the on-disk formats directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod formats;
