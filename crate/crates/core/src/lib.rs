//! Correlation-based forecasting and leakage auditing for M4-format data.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads ragged M4 value files and their metadata.
//! * [`stats`] holds the Pearson / rolling-window kernels.
//! * [`correlator`] searches the whole dataset for a window that correlates
//!   with a series' tail and remaps its continuation into a forecast.
//! * [`forecasters`] and [`ensemble`] provide the statistical members and the
//!   median combination used when no correlated window is accepted.
//! * [`metrics`] scores forecasts with MASE, sMAPE and OWA.
//! * [`analysis`] runs the whole-overlap cross-correlation audit and sorts the
//!   resulting pairs into leakage categories.
//! * [`cli`] wires everything into the `m4corr` binary.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod correlator;
pub mod dataset;
pub mod ensemble;
mod error;
pub mod forecasters;
pub mod metrics;
pub mod stats;

pub use error::{Error, Result};

pub use correlator::{CorrelatorMatch, CorrelatorParams};
pub use dataset::{Dataset, Frequency, HoldoutSplit, TimeSeries};
pub use forecasters::{Forecast, Method};
pub use metrics::MetricReport;
