//! Command-line workflows and the live feedback service.

pub mod cli;
pub mod server;

pub use server::{router, AppState};
