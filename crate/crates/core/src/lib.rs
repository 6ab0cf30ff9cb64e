pub mod commands;
pub mod config;
pub mod control;
pub mod error;
pub mod io;
pub mod kernel;
pub mod mppi;
pub mod section;
pub mod tvlqr;
pub mod validation;
pub mod vec2;
pub mod vehicle;
pub mod wake;
pub mod wing;
