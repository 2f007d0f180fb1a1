//! Batch runner: ensembles on disk, their moment statistics, the fitted
//! theory and plot-ready overlays.

pub mod commands;
pub mod output;
pub mod pipeline;
