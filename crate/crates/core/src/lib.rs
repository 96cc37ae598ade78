//! Graph-regularized low-rank completion of spatiotemporal sensor matrices.
//!
//! Rows of an [`ObservationMatrix`] are 10-minute timestamps and columns are
//! stations. The crate builds spatial and temporal graphs, completes missing
//! entries with GRALS or a baseline, generates synthetic gap patterns and
//! runs cross-validated experiments.

pub mod completion;
pub mod data;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod mask;

pub use data::{ObservationMatrix, StationMetadata};
pub use error::{Error, Result};
