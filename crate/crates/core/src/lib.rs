//! Simulator and analysis toolkit for N-path quantum Cheshire cat neutron
//! interferometry: exact three-path intensities and weak values, a
//! generalized N-path device, synthetic noisy interferograms, and the full
//! fringe-fit / signal-decomposition / weak-value extraction pipeline.

pub mod config;
pub mod extract;
pub mod fit;
pub mod hilbert;
pub mod ifgio;
pub mod model;
pub mod pan;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;
