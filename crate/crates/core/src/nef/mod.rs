//! A small Neural Engineering Framework: LIF neurons, ensembles, least-squares
//! decoders and a deterministic simulator for feedforward networks.

pub mod decoders;
pub mod ensemble;
pub mod lif;
pub mod sim;

pub use decoders::{regularized_loss, solve_decoders, DecodedConnection};
pub use ensemble::{build_ensemble, grid_eval_points, Ensemble, TuningRanges};
pub use lif::{lif_rate, LifParameters, LifPopulation};
pub use sim::{readout, run_network, EnsembleId, InputId, Mode, Network, Probe, ProbeId, SimConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NefError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("regularized Gram matrix is numerically singular")]
    SingularGram,
    #[error("network contains a cycle; only feedforward graphs are supported")]
    CyclicNetwork,
    #[error("probe has too few samples for the readout window")]
    InsufficientSamples,
}
