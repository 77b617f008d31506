//! Exact propagation and seeded Monte Carlo sampling of particle ensembles.
//!
//! A spec compiles into a [`ParticleChain`]: the Born distribution of the
//! initial state and, per step, a survival rule plus a transfer matrix.
//! Keep filters reject particles by label. Costate filters reject runs with
//! the filter's survival probability, independent of the label, and move the
//! survivors onto the contracted space.

mod exact;
mod rng;
mod sample;
mod spec;

pub use exact::{
    born_stages, propagate_exact, ExactRun, Kernel, ParticleChain, StageResult, SurvivalRule, TRANSPORT_TOL,
};
pub use rng::{pick, StageStream, StreamKey};
pub use sample::{
    replay, run_chain, sample_chain, sample_trajectories, sample_with_workers, Conditioned, Trajectory,
    TrajectoryEnsemble,
};
pub use spec::{ExperimentSpec, PolicyKind};
