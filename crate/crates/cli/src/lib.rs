//! Command-line tool and HTTP service for causality tree extraction.

pub mod cli;
pub mod render;
pub mod service;
