//! Batch front end: dataset generation, training, evaluation, feasibility
//! queries and SVG plots.

pub mod commands;
pub mod config;
pub mod io;
pub mod plot;
