pub mod cli;
pub mod config;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;
