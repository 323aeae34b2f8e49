//! Command-line driver for the free-boundary solver.

pub mod config;
pub mod output;
pub mod runner;
