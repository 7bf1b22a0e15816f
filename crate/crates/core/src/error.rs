use alloc::string::String;
use core::fmt;

/// Errors surfaced by scenario generation, link computations, and solvers.
///
/// Infeasibility of an optimization problem is not an error; it is carried
/// as data on the returned solution.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation before any work started.
    Validation(String),
    /// AV density outside the supported range.
    DensityOutOfRange { density: f64, min: f64, max: f64 },
    /// The requested per-lane vehicle count cannot respect minimum spacing.
    SpacingInfeasible { lane: u32, count: usize, length_m: f64 },
    /// Distance must be strictly positive for the propagation model.
    NonPositiveDistance { distance_m: f64 },
    /// A slice was queried on a base station that does not transmit on it.
    SliceNotAssigned { bs: u32, slice: u32 },
    /// A link was queried for a vehicle outside the base station's range.
    OutOfCoverage { bs: u32, av: u32 },
    /// An id did not resolve against the scenario.
    UnknownId(String),
    /// Queueing-model parameter outside its domain.
    QosDomain(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::DensityOutOfRange { density, min, max } => {
                write!(f, "density {density} AV/m outside [{min}, {max}]")
            }
            Error::SpacingInfeasible { lane, count, length_m } => write!(
                f,
                "lane {lane}: cannot place {count} vehicles on {length_m} m with minimum spacing"
            ),
            Error::NonPositiveDistance { distance_m } => {
                write!(f, "distance {distance_m} m must be positive")
            }
            Error::SliceNotAssigned { bs, slice } => {
                write!(f, "base station {bs} does not transmit on slice {slice}")
            }
            Error::OutOfCoverage { bs, av } => {
                write!(f, "vehicle {av} is outside the range of base station {bs}")
            }
            Error::UnknownId(id) => write!(f, "unknown id: {id}"),
            Error::QosDomain(msg) => write!(f, "qos domain error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
