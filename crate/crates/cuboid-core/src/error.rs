use core::fmt;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Every wireframe segment of the box lies behind the near plane.
    EntirelyBehindCamera,
    /// The sensor's horizontal position lies inside (or on) the box footprint,
    /// so no view category is defined.
    SensorInsideFootprint,
    /// A componentwise parameter product escaped the open interval (0, 2).
    OutOfRange { component: usize, value: f64 },
    /// A refinement parameter lies outside (0, 2).
    InvalidParam { component: usize, value: f64 },
    /// A loss over an empty batch is undefined.
    EmptyBatch,
    /// An element has neither a ground-truth nor a pseudo 2D target.
    NoTarget { index: usize },
    /// The objective returned NaN at a simplex vertex.
    NonFiniteObjective,
    /// A cost matrix entry is NaN or infinite.
    NonFiniteCost { row: usize, col: usize },
    /// A box field violates its invariant (non-finite or non-positive dims).
    InvalidBox { field: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EntirelyBehindCamera => {
                write!(f, "box lies entirely behind the camera near plane")
            }
            Error::SensorInsideFootprint => {
                write!(f, "sensor position lies inside the box footprint")
            }
            Error::OutOfRange { component, value } => {
                write!(f, "composed parameter {component} = {value} escapes (0, 2)")
            }
            Error::InvalidParam { component, value } => {
                write!(f, "refinement parameter {component} = {value} outside (0, 2)")
            }
            Error::EmptyBatch => write!(f, "loss over an empty batch is undefined"),
            Error::NoTarget { index } => {
                write!(f, "element {index} has neither a ground-truth nor a pseudo target")
            }
            Error::NonFiniteObjective => write!(f, "objective returned a non-finite value"),
            Error::NonFiniteCost { row, col } => {
                write!(f, "cost matrix entry ({row}, {col}) is not finite")
            }
            Error::InvalidBox { field } => write!(f, "box field `{field}` violates its invariant"),
        }
    }
}

impl core::error::Error for Error {}
