//! Error type shared by every module of the core crate.

use alloc::boxed::Box;
use core::fmt;

/// Errors produced by the spike-sorting primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Window length is zero or longer than the signal.
    InvalidWindowLength { window: usize, samples: usize },
    /// Operand dimensions disagree.
    ShapeMismatch(&'static str),
    /// A template with zero (or non-finite) norm.
    DegenerateTemplate,
    /// An event lies outside the representable range or repeats a `(neuron, position)` pair.
    InvalidEvent { neuron: usize, position: usize },
    /// Every correlation with the residual is zero.
    NoSelectableAtom,
    /// The Gram matrix of the selected support became numerically singular.
    IllConditionedSupport { neuron: usize, position: usize },
    /// The atom is already part of the support.
    DuplicateAtom { neuron: usize, position: usize },
    /// A neuron has no events, so its template cannot be updated.
    EmptyPatchSet { neuron: usize },
    /// The error matrix of a neuron is identically zero.
    DegenerateAtom { neuron: usize },
    /// Sparse coding returned no events at all.
    NoEvents { iteration: usize },
    /// Firing rate incompatible with the refractory period.
    InfeasibleRate,
    /// SNR is undefined for a signal without spike energy.
    UndefinedSnr,
    /// The requested dictionary perturbation cannot be reached.
    UnreachablePerturbation,
    /// K-means asked for more clusters than points.
    TooFewPoints { points: usize, clusters: usize },
    /// Parameters outside the domain of a formula.
    Domain(&'static str),
    /// Filter design parameters are invalid.
    Filter(&'static str),
    /// No segment below the detection threshold is long enough.
    NoQuietSegment,
    /// Not enough threshold crossings to seed a dictionary.
    InsufficientEvents { found: usize, needed: usize },
    /// Non-finite sample values.
    NonFinite,
    /// Error raised while processing one window.
    InWindow { window: usize, source: Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidWindowLength { window, samples } => {
                write!(f, "invalid window length {window} for a signal of {samples} samples")
            }
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::DegenerateTemplate => write!(f, "degenerate template (zero norm)"),
            Error::InvalidEvent { neuron, position } => {
                write!(f, "invalid event (neuron {neuron}, position {position})")
            }
            Error::NoSelectableAtom => write!(f, "no selectable atom"),
            Error::IllConditionedSupport { neuron, position } => write!(
                f,
                "ill-conditioned support when adding atom (neuron {neuron}, position {position})"
            ),
            Error::DuplicateAtom { neuron, position } => {
                write!(f, "duplicate atom (neuron {neuron}, position {position})")
            }
            Error::EmptyPatchSet { neuron } => write!(f, "neuron {neuron} has no events"),
            Error::DegenerateAtom { neuron } => {
                write!(f, "error matrix of neuron {neuron} is zero")
            }
            Error::NoEvents { iteration } => {
                write!(f, "sparse coding produced no events at iteration {iteration}")
            }
            Error::InfeasibleRate => {
                write!(f, "firing rate times refractory period must be below 1")
            }
            Error::UndefinedSnr => write!(f, "SNR undefined: clean signal has no spike energy"),
            Error::UnreachablePerturbation => write!(f, "perturbation target unreachable"),
            Error::TooFewPoints { points, clusters } => {
                write!(f, "{clusters} clusters requested for {points} points")
            }
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::Filter(what) => write!(f, "filter error: {what}"),
            Error::NoQuietSegment => write!(f, "no quiet segment long enough"),
            Error::InsufficientEvents { found, needed } => {
                write!(f, "found {found} threshold crossings, need {needed}")
            }
            Error::NonFinite => write!(f, "non-finite sample"),
            Error::InWindow { window, source } => write!(f, "window {window}: {source}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
