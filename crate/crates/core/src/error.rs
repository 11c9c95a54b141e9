use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the mean-field models, integrators, diagnostics and the
/// exact solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("width singularity: {coordinate} = {value:e} fell below {guard:e}")]
    Singularity {
        coordinate: &'static str,
        value: f64,
        guard: f64,
    },

    #[error("energy {energy} is below the minimum {minimum} reachable under the chosen convention")]
    InfeasibleEnergy { energy: f64, minimum: f64 },

    #[error(
        "coupling e = 0 leaves no finite A(0) for energy {energy} > {minimum}; supply an explicit initial state"
    )]
    NoFiniteAmplitude { energy: f64, minimum: f64 },

    #[error("model mismatch: expected {expected}, got {found}")]
    ModelMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("degenerate ansatz at y = {point:?}: structure matrix condition number {condition:e}")]
    DegenerateAnsatz { point: Vec<f64>, condition: f64 },

    #[error("wave packet does not fit the box along {axis}: margin short by {shortfall}")]
    PacketTooWide { axis: &'static str, shortfall: f64 },

    #[error("probability {mass:e} within the boundary layer at t = {t} (box escape)")]
    BoxEscape { t: f64, mass: f64 },

    #[error("norm integrity violated: norm = {norm} at t = {t}")]
    Integrity { t: f64, norm: f64 },

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
