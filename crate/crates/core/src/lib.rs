//! Simulation and analysis toolkit for pulsed heralded single-photon sources.
//!
//! The crate is organized around four layers:
//!
//! - [`model`]: domain types and the closed-form relations between pump power,
//!   pair generation, heralding rate, heralding efficiency and the heralded
//!   autocorrelation, plus detector dead-time arithmetic and the single-mode
//!   heralded-g²(0) theory curve.
//! - [`simkernel`]: a discrete-event Monte Carlo engine that samples the full
//!   detection chain (pair generation, loss thinning, heralding detector,
//!   triggered HBT detectors, TAC post-selection) over a multi-GHz pulse train
//!   using geometric event skipping, so that seconds of simulated time are
//!   tractable.
//! - [`estimator`]: converts raw counting totals into figures of merit with
//!   dead-time corrections and Poisson uncertainties.
//! - [`scenario`]: experiment campaigns: pump-power sweeps, detector-upgrade
//!   projections and the published-results comparison table.

pub mod estimator;
pub mod model;
pub mod scenario;
pub mod simkernel;

pub use estimator::{EstimationConfig, Estimate};
pub use model::{
    DetectorMode, DetectorModel, Figure, FiguresOfMerit, Measured, ModeStructure, ModelError,
    PairStatistics, SourceConfig,
};
pub use simkernel::{ClickOrigin, ClickRecord, CountingTotals, DetectorId, SimError, SimScenario};
