//! IEEE 754 single-precision multiplication built from spiking-neuron ensembles.

pub mod nef;
pub mod seed;
pub mod gates;
pub mod float;
pub mod oracle;
pub mod fp_mul;
pub mod analysis;
