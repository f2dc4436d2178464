pub mod adaptive;
pub mod cli;
pub mod data;
pub mod error;
pub mod fit;
pub mod mcmc;
pub mod meta;
pub mod power;
pub mod protocol;
pub mod rng;
pub mod sequences;
pub mod simulate;
pub mod stats;
