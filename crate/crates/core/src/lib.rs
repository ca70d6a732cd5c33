pub mod config;
pub mod correlation;
pub mod corpus;
pub mod drift;
pub mod embedding;
pub mod lexical;
pub mod observe;
pub mod perf;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
