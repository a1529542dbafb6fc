//! Error type and exit codes.

use spikepattern_core::convergence::ConvergenceError;
use spikepattern_core::grid::GridError;
use spikepattern_core::integrator::SimulationError;
use spikepattern_core::kinetics::KineticError;
use spikepattern_core::stability::StabilityError;
use spikepattern_core::steady_bvp::SteadyError;

use crate::config::ConfigError;
use crate::output::OutputError;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for bad configuration, arguments or output locations.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for a numerical fault.
pub const EXIT_NUMERICAL: i32 = 2;

/// Failure of a harness command.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Configuration file or values.
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Inconsistent command-line arguments.
    #[error("{0}")]
    Usage(String),
    /// Writing results.
    #[error(transparent)]
    Output(#[from] OutputError),
    /// A computation failed.
    #[error(transparent)]
    Numerical(#[from] NumericalError),
}

/// Numerical faults from the core.
#[derive(Debug, thiserror::Error)]
pub enum NumericalError {
    /// Time integration.
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    /// Kinetic ODE.
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    /// Stability analysis.
    #[error(transparent)]
    Stability(#[from] StabilityError),
    /// Steady profiles.
    #[error(transparent)]
    Steady(#[from] SteadyError),
    /// Convergence study.
    #[error(transparent)]
    Convergence(#[from] ConvergenceError),
}

impl HarnessError {
    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                Self::Numerical(e.into())
            }
        }
    )*};
}
numerical!(SimulationError, KineticError, StabilityError, SteadyError);

impl From<ConvergenceError> for HarnessError {
    fn from(e: ConvergenceError) -> Self {
        match e {
            ConvergenceError::NoLevels | ConvergenceError::ReferenceTooCoarse { .. } => {
                Self::Usage(e.to_string())
            }
            e => Self::Numerical(e.into()),
        }
    }
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        Self::Usage(e.to_string())
    }
}
