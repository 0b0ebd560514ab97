//! Twin identification from speech and ear images with score-level fusion.

pub mod cli;
pub mod dataset;
pub mod dcva;
pub mod dtw;
pub mod ear;
pub mod eval;
pub mod fusion;
pub mod speech;
pub mod store;
