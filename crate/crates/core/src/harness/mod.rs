//! Scenario files, the simulation event loop, Monte Carlo ensembles, and CSV output.

mod ensemble;
mod run;
mod scenario;

use crate::ekf::{CovarianceDefect, EkfError};
use crate::sim::AnchorId;

pub use ensemble::{map_runs, monte_carlo, monte_carlo_with, percent_diff, EnsembleSummary, Errors, Execution, PairedRun};
pub use run::{
    run_metrics, run_scenario, simulate, LogRow, RangeEvent, RangeOutcome, RunLog, RunMetrics, Step,
    TIMESERIES_HEADER,
};
pub use scenario::{FilterConfig, Rates, Scenario, ScenarioError, BUNDLED_SCENARIO};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("filter error at t = {t:.3} s: {source}")]
    Filter {
        t: f64,
        #[source]
        source: EkfError,
    },
    #[error("covariance unhealthy at t = {t:.3} s: {defect}")]
    Covariance { t: f64, defect: CovarianceDefect },
    #[error("policy selected unknown anchor {anchor} at t = {t:.3} s")]
    UnknownAnchor { t: f64, anchor: AnchorId },
    #[error("at least one run is required")]
    NoRuns,
}

impl HarnessError {
    /// Process exit code: 1 for scenario problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Scenario(_) | HarnessError::NoRuns => 1,
            _ => 2,
        }
    }
}
