use thiserror::Error;

/// Errors produced by the simulator and controllers.
#[derive(Debug, Error)]
pub enum Error {
    /// A refrigerant property was requested at a non-positive or non-finite pressure.
    #[error("suction pressure {value} bar is outside the refrigerant property domain")]
    PressureDomain { value: f64 },

    /// One or more parameter invariants were violated. Every violation is listed.
    #[error("invalid configuration:\n{}", violations.join("\n"))]
    Config { violations: Vec<String> },

    /// The integrator produced an invalid state.
    #[error("integration failed at t = {time_s} s: {variable} left its valid range")]
    Integration { time_s: f64, variable: String },

    /// A control schedule does not cover the requested horizon.
    #[error("control schedule does not cover t = {time_s} s")]
    ScheduleGap { time_s: f64 },

    /// Trajectories passed to a comparison have different horizons.
    #[error("trajectory horizons differ: {left_s} s vs {right_s} s")]
    HorizonMismatch { left_s: f64, right_s: f64 },

    /// Exhaustive enumeration was requested above the case-count guard.
    #[error("exhaustive search refused: n = {n} exceeds the guard of {max}")]
    EnumerationGuard { n: usize, max: usize },

    /// A price series is empty or malformed.
    #[error("price series error: {0}")]
    PriceSeries(String),

    #[error("malformed price row at line {line}: {reason}")]
    PriceRow { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(violations: Vec<String>) -> Self {
        Error::Config { violations }
    }
}
