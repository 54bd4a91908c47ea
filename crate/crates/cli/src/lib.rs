//! Command line front end for the `randstab` library.

pub mod config;
pub mod dispatch;
pub mod experiments;

pub use dispatch::dispatch;
