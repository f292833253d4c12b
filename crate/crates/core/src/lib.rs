//! Quasi-periodically doubly-kicked quantum rotor: exact propagation,
//! Floquet level dynamics, sub-Fourier resonance spectroscopy and the
//! classical diffusion baseline.

pub mod classical;
pub mod floquet;
pub mod harness;
pub mod model;
pub mod propagator;
pub mod spectroscopy;
