pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod regression;
