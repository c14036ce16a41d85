use thiserror::Error;

use crate::netmodel::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", format_violations(.0))]
    Structural(Vec<Violation>),

    #[error("state dimension {got} does not match network layout ({expected})")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value at t = {t} s in slot {slot}")]
    NonFinite { t: f64, slot: usize },

    #[error("step size control failed at t = {t} s (step {dt} s below minimum)")]
    StepFailure { t: f64, dt: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("degenerate direction: |J grad H| = {norm:e} is below the resolvable floor")]
    DegenerateDirection { norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
