use nalgebra::DMatrix;

use super::spec::{ExperimentSpec, PolicyKind};
use crate::error::{Error, Result};
use crate::guidance::{
    born_distribution, flow_matrix, transfer_from_flow_with_mask, transport_with_preference, TransferMatrix,
};
use crate::state::{apply_step, ConfigSpace, Distribution, Filter, StepOperator, WaveFunction, SUPPORT_EPS};

/// Tolerance for Born transport of tabulated transfers.
pub const TRANSPORT_TOL: f64 = 1e-10;

/// How a step decides whether a particle survives it.
#[derive(Clone, Debug, PartialEq)]
pub enum SurvivalRule {
    Always,
    /// Survives iff its current label index is marked.
    Keep(Vec<bool>),
    /// Survives with probability `s`, independent of its label.
    Uniform(f64),
}

impl SurvivalRule {
    /// Survival probability of a particle sitting at `index`.
    pub fn probability(&self, index: usize) -> f64 {
        match self {
            SurvivalRule::Always => 1.0,
            SurvivalRule::Keep(k) => {
                if k[index] {
                    1.0
                } else {
                    0.0
                }
            }
            SurvivalRule::Uniform(s) => *s,
        }
    }
}

/// One step of the particle's Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub survival: SurvivalRule,
    pub transfer: TransferMatrix,
}

/// The particle dynamics of an experiment, detached from the wave.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleChain {
    spaces: Vec<ConfigSpace>,
    initial: Distribution,
    kernels: Vec<Kernel>,
}

impl ParticleChain {
    pub fn new(initial: Distribution, kernels: Vec<Kernel>) -> Result<Self> {
        let mut spaces = vec![initial.space().clone()];
        for (t, k) in kernels.iter().enumerate() {
            if k.transfer.from_space().labels() != spaces[t].labels() {
                return Err(Error::InvalidExperiment(format!("kernel {t} does not start at stage {t}")));
            }
            if let SurvivalRule::Keep(v) = &k.survival {
                if v.len() != spaces[t].dim() {
                    return Err(Error::InvalidExperiment(format!("kernel {t} survival mask has wrong length")));
                }
            }
            spaces.push(k.transfer.to_space().clone());
        }
        Ok(Self {
            spaces,
            initial,
            kernels,
        })
    }

    pub fn spaces(&self) -> &[ConfigSpace] {
        &self.spaces
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }
}

/// Exact quantities at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageResult {
    pub stage: usize,
    /// Normalized conditional wave; `None` once a filter removed everything.
    pub wave: Option<WaveFunction>,
    /// Born distribution of `wave`.
    pub born: Option<Distribution>,
    /// Particle distribution conditioned on survival so far.
    pub particle: Option<Distribution>,
    /// Cumulative postselection survival of the wave.
    pub survival: f64,
    /// Cumulative survival of the particle ensemble.
    pub particle_survival: f64,
    /// Whether the transfer into this stage came from the repair path.
    pub repaired: bool,
}

impl StageResult {
    /// Largest gap between particle and Born distributions.
    pub fn born_deviation(&self) -> f64 {
        match (&self.particle, &self.born) {
            (Some(p), Some(b)) => p.max_deviation(b).unwrap_or(f64::INFINITY),
            _ => 0.0,
        }
    }
}

/// Exact propagation: waves, Born distributions, particle distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactRun {
    pub stages: Vec<StageResult>,
    pub chain: ParticleChain,
}

impl ExactRun {
    pub fn final_stage(&self) -> &StageResult {
        self.stages.last().expect("at least the initial stage")
    }
}

/// Normalized conditional waves for every stage, plus cumulative survival.
pub fn born_stages(spec: &ExperimentSpec) -> Result<Vec<(Option<WaveFunction>, f64)>> {
    let mut out = vec![(Some(spec.initial_state().clone()), 1.0)];
    for step in spec.steps() {
        let (prev, surv) = out.last().expect("nonempty").clone();
        let next = match prev {
            None => (None, 0.0),
            Some(psi) => {
                let moved = apply_step(step, &psi)?;
                if step.is_filter() {
                    let s = moved.norm_sqr();
                    if s <= SUPPORT_EPS {
                        (None, 0.0)
                    } else {
                        (Some(moved.normalize()?), surv * s)
                    }
                } else {
                    (Some(moved), surv)
                }
            }
        };
        out.push(next);
    }
    Ok(out)
}

/// Identity embedding for keep filters; contraction along the filter matrix
/// for costate filters.
fn default_filter_transfer(step: &StepOperator) -> Result<TransferMatrix> {
    let m = step.matrix();
    let from = step.from_space();
    let to = step.to_space();
    let mut t = DMatrix::zeros(to.dim(), from.dim());
    let mut defined = vec![false; from.dim()];
    for j in 0..from.dim() {
        let best = (0..to.dim())
            .filter(|&i| m[(i, j)].norm() > SUPPORT_EPS)
            .max_by(|&a, &b| m[(a, j)].norm().total_cmp(&m[(b, j)].norm()));
        if let Some(i) = best {
            t[(i, j)] = 1.0;
            defined[j] = true;
        }
    }
    TransferMatrix::new(from.clone(), to.clone(), t, defined)
}

fn survival_rule(step: &StepOperator, born_survival: f64) -> SurvivalRule {
    match step.filter_spec() {
        None => SurvivalRule::Always,
        Some(Filter::Keep(_)) => {
            let to = step.to_space();
            SurvivalRule::Keep(step.from_space().labels().iter().map(|l| to.index_of(l).is_some()).collect())
        }
        Some(Filter::Costate(_)) => SurvivalRule::Uniform(born_survival),
    }
}

fn surviving(rule: &SurvivalRule, rho: &Distribution) -> (f64, Vec<f64>) {
    let w: Vec<f64> = rho
        .weights()
        .iter()
        .enumerate()
        .map(|(j, p)| p * rule.probability(j))
        .collect();
    (w.iter().sum(), w)
}

/// Propagates the wave and the particle ensemble through every stage.
///
/// Tabulated transfers are checked against Born transport and rejected with
/// the offending step when they fail it.
pub fn propagate_exact(spec: &ExperimentSpec) -> Result<ExactRun> {
    let waves = born_stages(spec)?;
    let initial = born_distribution(spec.initial_state())?;
    let mut stages = vec![StageResult {
        stage: 0,
        wave: waves[0].0.clone(),
        born: Some(initial.clone()),
        particle: Some(initial.clone()),
        survival: 1.0,
        particle_survival: 1.0,
        repaired: false,
    }];
    let mut kernels = Vec::with_capacity(spec.steps().len());

    for (t, step) in spec.steps().iter().enumerate() {
        let prev = &stages[t];
        let wave_in = waves[t].0.as_ref();
        let (wave_out, surv_out) = &waves[t + 1];
        let born_out = wave_out.as_ref().map(born_distribution).transpose()?;
        let step_survival = if prev.survival > 0.0 { surv_out / prev.survival } else { 0.0 };
        let rule = survival_rule(step, step_survival);
        let mask = spec.masks()[t].as_ref();

        let (particle_out, part_surv, transfer) = match (&prev.particle, wave_in, &born_out) {
            (Some(rho), Some(psi), Some(target)) => {
                let (kept, w) = surviving(&rule, rho);
                let transfer = match (spec.policy(), step.is_filter()) {
                    (PolicyKind::Flow, false) => transfer_from_flow_with_mask(&flow_matrix(step, psi)?, mask)?,
                    (PolicyKind::Flow, true) => {
                        if kept <= SUPPORT_EPS {
                            default_filter_transfer(step)?
                        } else {
                            let filtered = apply_step(step, psi)?;
                            let pref = DMatrix::from_fn(step.to_space().dim(), step.from_space().dim(), |i, j| {
                                (filtered.amplitudes()[i].conj() * step.matrix()[(i, j)] * psi.amplitudes()[j]).re
                            });
                            let rho_surv = Distribution::subnormalized(rho.space().clone(), w.clone())?;
                            transport_with_preference(&rho_surv, target, &pref, mask)?
                        }
                    }
                    (PolicyKind::Table, filter) => match (&spec.tables()[t], filter) {
                        (Some(table), _) => {
                            if !filter {
                                let born_in = born_distribution(psi)?;
                                let dev = table.transport_error(&born_in, target)?;
                                if dev > TRANSPORT_TOL {
                                    return Err(Error::BornTransport {
                                        step: t,
                                        from: t,
                                        to: t + 1,
                                        deviation: dev,
                                    });
                                }
                            }
                            table.clone()
                        }
                        (None, true) => default_filter_transfer(step)?,
                        (None, false) => {
                            return Err(Error::InvalidExperiment(format!("no table for step {t}")));
                        }
                    },
                };
                let particle = if kept > SUPPORT_EPS {
                    let rho_surv = Distribution::subnormalized(rho.space().clone(), w)?.renormalize()?;
                    Some(transfer.apply(&rho_surv)?.renormalize()?)
                } else {
                    None
                };
                (particle, prev.particle_survival * kept, transfer)
            }
            _ => {
                let transfer = if step.is_filter() {
                    default_filter_transfer(step)?
                } else if let (PolicyKind::Table, Some(tab)) = (spec.policy(), &spec.tables()[t]) {
                    tab.clone()
                } else {
                    TransferMatrix::new(
                        step.from_space().clone(),
                        step.to_space().clone(),
                        DMatrix::zeros(step.to_space().dim(), step.from_space().dim()),
                        vec![false; step.from_space().dim()],
                    )?
                };
                (None, 0.0, transfer)
            }
        };
        let repaired = transfer.repaired();
        kernels.push(Kernel {
            survival: rule,
            transfer,
        });
        stages.push(StageResult {
            stage: t + 1,
            wave: wave_out.clone(),
            born: born_out,
            particle: particle_out,
            survival: *surv_out,
            particle_survival: part_surv,
            repaired,
        });
    }
    let chain = ParticleChain::new(initial, kernels)?;
    Ok(ExactRun { stages, chain })
}
