//! Desk-scale GCN training engine built around cluster-partitioned
//! mini-batch SGD: a METIS-style multilevel partitioner drives batch
//! construction, batches are block subgraphs with between-cluster links
//! restored and renormalized, and deep networks are stabilized with
//! diagonal-enhanced propagation.

pub mod batch;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod labels;
pub mod model;
pub mod optim;
pub mod partition;
pub mod seeds;
pub mod sparse;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
