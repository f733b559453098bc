//! Sampled-data consensus for networks of double-integrator agents.
//!
//! The crate covers the whole loop of a nonuniformly sampled consensus
//! design: closed-form gain synthesis from a maximum sampling interval and a
//! Laplacian eigenvalue band ([`synthesis`]), contraction certificates for the
//! resulting closed loops ([`certify`]), and exact discrete-time simulation of
//! the network under switching balanced topologies ([`sim`]).

pub mod certify;
pub mod graph;
pub mod numerics;
pub mod sim;
pub mod synthesis;

pub use certify::{CertMethod, ContractionCertificate, GridSpec, LambdaSet, PlantKind, PlantModel, Verdict};
pub use graph::{RandomGraphRecipe, ReductionBasis, SpectrumSummary, WeightedDigraph};
pub use numerics::{Complex, ComplexMatrix, Matrix};
pub use sim::{BatchResult, Controller, NetworkState, RunRecord, SimulationConfig, StepRecord, TopologySource};
pub use synthesis::{DesignSpec, GainDesign, GainRecipe, InequalityLimits};
