//! Contraction and convergence diagnostics and steady-state classification.

mod gap;
mod lemma;
mod measure;
mod quotient;
mod steady;

pub use gap::{fit_decay_rate, hamiltonian_gap, rotating_frame, GapSeries};
pub use lemma::{shifted_hamiltonian_decay, DecayOptions, DecayReport, ForcedCircuit, Source};
pub use measure::{matrix_measure, InnerProductWeight};
pub use quotient::{horizontal_project, quotient_distance_chord, ProjectionMode, Projector};
pub use steady::{
    classify_steady_state, classify_system, estimate_frequencies, Classification,
    ClassifierConfig, FrequencyEstimate, SignalLayout, SpectralPeak, SteadyStateReport,
};
