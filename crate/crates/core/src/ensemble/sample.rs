use rayon::prelude::*;
use serde::Serialize;

use super::exact::{propagate_exact, ParticleChain};
use super::rng::{pick, StageStream, StreamKey};
use super::spec::ExperimentSpec;
use crate::error::{Error, Result};
use crate::state::{ConfigSpace, Distribution};

/// One particle run. `labels[t]` indexes into stage `t`'s space; a run that
/// was removed by a filter stops at the stage where it was rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub labels: Vec<usize>,
    pub survived: bool,
    pub run_index: u64,
}

impl Trajectory {
    /// Label index at `stage`, if the run reached it.
    pub fn at(&self, stage: usize) -> Option<usize> {
        self.labels.get(stage).copied()
    }
}

/// Runs the chain once for `(seed, run)`.
pub fn run_chain(chain: &ParticleChain, seed: u64, run: u64) -> Trajectory {
    let mut s0 = StageStream::new(StreamKey { seed, run, stage: 0 });
    let start = pick(chain.initial().weights().iter().copied(), s0.uniform())
        .expect("initial distribution has mass");
    let mut labels = Vec::with_capacity(chain.spaces().len());
    labels.push(start);
    let mut current = start;
    for (t, kernel) in chain.kernels().iter().enumerate() {
        let mut s = StageStream::new(StreamKey {
            seed,
            run,
            stage: t as u64 + 1,
        });
        let u_survive = s.uniform();
        let u_move = s.uniform();
        if u_survive >= kernel.survival.probability(current) {
            return Trajectory {
                labels,
                survived: false,
                run_index: run,
            };
        }
        let column = kernel.transfer.entries().column(current);
        match pick(column.iter().copied(), u_move) {
            Some(next) => {
                current = next;
                labels.push(next);
            }
            None => {
                return Trajectory {
                    labels,
                    survived: false,
                    run_index: run,
                }
            }
        }
    }
    Trajectory {
        labels,
        survived: true,
        run_index: run,
    }
}

/// A seeded sample of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub name: String,
    pub seed: u64,
    pub spaces: Vec<ConfigSpace>,
    pub trajectories: Vec<Trajectory>,
}

/// Outcome of conditioning an ensemble on a label subset at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioned {
    /// Fraction of the runs reaching the stage whose label was kept.
    pub fraction: f64,
    /// Empirical distribution of the kept runs, or `None` if none were kept.
    pub distribution: Option<Distribution>,
    pub ensemble: TrajectoryEnsemble,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Occupation counts per label at every stage.
    pub fn counts(&self) -> Vec<Vec<u64>> {
        let mut c: Vec<Vec<u64>> = self.spaces.iter().map(|s| vec![0; s.dim()]).collect();
        for tr in &self.trajectories {
            for (t, &l) in tr.labels.iter().enumerate() {
                c[t][l] += 1;
            }
        }
        c
    }

    /// Number of runs that reached `stage`.
    pub fn reached(&self, stage: usize) -> u64 {
        self.trajectories.iter().filter(|t| t.labels.len() > stage).count() as u64
    }

    pub fn survivor_count(&self) -> u64 {
        self.trajectories.iter().filter(|t| t.survived).count() as u64
    }

    pub fn survival_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.survivor_count() as f64 / self.len() as f64
        }
    }

    /// Empirical distribution of the runs that reached `stage`.
    pub fn empirical(&self, stage: usize) -> Option<Distribution> {
        let space = self.spaces.get(stage)?;
        let counts = &self.counts()[stage];
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let w = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Distribution::subnormalized(space.clone(), w).ok()
    }

    /// The runs that passed every filter.
    pub fn survivors(&self) -> TrajectoryEnsemble {
        self.filtered(|t| t.survived)
    }

    fn filtered(&self, keep: impl Fn(&Trajectory) -> bool) -> TrajectoryEnsemble {
        TrajectoryEnsemble {
            name: self.name.clone(),
            seed: self.seed,
            spaces: self.spaces.clone(),
            trajectories: self.trajectories.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }

    /// Restricts to runs whose label at `stage` lies in `keep`.
    pub fn condition_on(&self, stage: usize, keep: &[&str]) -> Result<Conditioned> {
        let space = self
            .spaces
            .get(stage)
            .ok_or_else(|| Error::InvalidExperiment(format!("no stage {stage}")))?;
        let mut mark = vec![false; space.dim()];
        for l in keep {
            mark[space.require(l)?] = true;
        }
        let reached = self.reached(stage);
        let sub = self.filtered(|t| t.at(stage).is_some_and(|l| mark[l]));
        let fraction = if reached == 0 {
            0.0
        } else {
            sub.len() as f64 / reached as f64
        };
        let distribution = sub.empirical(stage);
        Ok(Conditioned {
            fraction,
            distribution,
            ensemble: sub,
        })
    }

    /// Label text of a run at a stage.
    pub fn label(&self, trajectory: &Trajectory, stage: usize) -> Option<&str> {
        trajectory.at(stage).map(|i| self.spaces[stage].label(i))
    }
}

/// Samples `n` runs of `chain`, spread over `workers` threads (0 picks the
/// rayon default). The result does not depend on `workers`.
pub fn sample_chain(
    name: &str,
    chain: &ParticleChain,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<TrajectoryEnsemble> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidExperiment(format!("cannot start workers: {e}")))?;
    let trajectories = pool.install(|| (0..n).into_par_iter().map(|r| run_chain(chain, seed, r)).collect());
    Ok(TrajectoryEnsemble {
        name: name.to_string(),
        seed,
        spaces: chain.spaces().to_vec(),
        trajectories,
    })
}

/// Samples `n` runs of the spec's particle dynamics.
pub fn sample_trajectories(spec: &ExperimentSpec, n: u64, seed: u64) -> Result<TrajectoryEnsemble> {
    sample_with_workers(spec, n, seed, 0)
}

pub fn sample_with_workers(spec: &ExperimentSpec, n: u64, seed: u64, workers: usize) -> Result<TrajectoryEnsemble> {
    let exact = propagate_exact(spec)?;
    sample_chain(spec.name(), &exact.chain, n, seed, workers)
}

/// Regenerates a single run of a sampled ensemble.
pub fn replay(spec: &ExperimentSpec, seed: u64, run: u64) -> Result<Trajectory> {
    let exact = propagate_exact(spec)?;
    Ok(run_chain(&exact.chain, seed, run))
}
