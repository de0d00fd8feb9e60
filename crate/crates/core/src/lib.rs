//! Principal-component estimation of sparse weak factor models.

pub mod error;
pub mod factor_count;
pub mod linalg;
pub mod metrics;
pub mod panel;
pub mod pc;
pub mod replicate;
pub mod rolling;
pub mod simulate;
pub mod sparsity;

pub use error::{Error, Result};
pub use factor_count::{FactorCountResult, FactorCounter, Method};
pub use panel::{Orientation, Panel, TransformCode};
pub use pc::{PcFit, PcModel};
pub use replicate::{MetricsReport, ReplicationOptions, Task};
pub use rolling::{HeatmapExport, RollingResult};
pub use simulate::{SimConfig, SimTruth};
pub use sparsity::{SparseFit, StrengthEstimate, StrengthLabel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
