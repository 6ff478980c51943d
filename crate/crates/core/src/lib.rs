//! Online signed-distance-field mapping from posed 2D range scans.

pub mod checkpoint;
pub mod cluster;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exact;
pub mod expert;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod kernel;
pub mod linalg;
pub mod measurement;
pub mod partition;
pub mod pipeline;
pub mod sim;
pub mod sparse;

pub use checkpoint::Checkpoint;
pub use config::EnsembleConfig;
pub use ensemble::{Ensemble, StepReport};
pub use error::{Error, Result};
pub use exact::{exact_gp_predict, Posterior};
pub use expert::{Discrepancy, Expert, PiRole};
pub use geometry::{point, Point};
pub use grid::{GridSpec, SdfGrid};
pub use ingest::{scan_to_measurements, Scan};
pub use kernel::{kernel_matrix, ThinPlate};
pub use measurement::{MeasurementBatch, MeasurementKind};
pub use sparse::SparseGp;
pub use partition::{ExpertId, PartitionIndex, Site};
