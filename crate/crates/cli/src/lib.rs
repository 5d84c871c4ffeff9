pub mod commands;
pub mod config;
pub mod repro;

pub use commands::run;
