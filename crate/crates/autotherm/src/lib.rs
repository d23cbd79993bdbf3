//! Simulation library for the thermodynamics of autonomous quantum systems.
//!
//! The crate propagates small closed and open quantum systems (exchange-coupled
//! qubit/oscillator pairs, damped qubits, a qubit with a damped reaction
//! coordinate) and evaluates, along each trajectory, a thermodynamic ledger
//! built from entropy-matched effective temperatures: thermal energy, heat,
//! work, ergotropy, exergy, entropy production, and mutual information,
//! together with two comparator frameworks (effective-Hamiltonian "standard"
//! rates and minimal-coupling rates).
//!
//! Modules follow the pipeline: [`operators`] (dense complex linear algebra on
//! tensor-product spaces), [`models`] (Hamiltonian and initial-state
//! construction), [`dynamics`] (propagation), [`thermo`] (the ledger),
//! [`scenarios`] (presets, config files, CSV emission), and [`acceptance`]
//! (the end-to-end verification suite behind `autotherm verify`).

pub mod acceptance;
pub mod dynamics;
pub mod models;
pub mod operators;
pub mod scenarios;
pub mod thermo;

pub(crate) mod numerics;

use thiserror::Error;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Crate-wide error type. Variants map onto the CLI exit codes: spec and
/// usage problems exit 1, physics/numerics violations exit 2, I/O exits 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem index out of range: {0}")]
    IndexError(String),
    #[error("operator is not Hermitian: {0}")]
    NotHermitian(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad model or state specification: {0}")]
    BadSpec(String),
    #[error("oscillator truncation too small: {0}")]
    TruncationTooSmall(String),
    #[error("integrator step too large: {0}")]
    StepTooLarge(String),
    #[error("non-physical state: {0}")]
    NonPhysicalState(String),
    #[error("degenerate ground level: {0}")]
    DegenerateGround(String),
    #[error("entropy target out of range: {0}")]
    EntropyOutOfRange(String),
    #[error("unknown preset: {0}")]
    UnknownPreset(String),
    #[error("config parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown config key at line {line}: {key}")]
    UnknownKey { line: usize, key: String },
    #[error("physics invariant violated: {0}")]
    PhysicsViolation(String),
    #[error("at sample t = {time}: {source}")]
    AtSample {
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class for the CLI: 1 usage, 2 physics, 3 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BadSpec(_)
            | Error::UnknownPreset(_)
            | Error::ParseError { .. }
            | Error::UnknownKey { .. } => 1,
            Error::Io(_) => 3,
            Error::AtSample { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
