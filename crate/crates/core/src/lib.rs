pub mod agreement;
pub mod alignment;
pub mod attention;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod labels;
pub mod moral;
pub mod network;
pub mod rda;
pub mod stats;
pub mod synth;
pub mod timeline;

pub use error::{Error, Result};
