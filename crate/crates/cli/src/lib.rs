//! Command line tools and the HTTP session service for `privclean-core`.

pub mod commands;
pub mod config;
pub mod service;
