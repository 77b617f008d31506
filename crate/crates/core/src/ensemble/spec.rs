use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{SupportMask, TransferMatrix};
use crate::state::{ConfigSpace, StepOperator, WaveFunction, TOL};

/// Which transfer matrices guide the particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Derived from the flow matrix of each step and the current wave.
    Flow,
    /// Taken from the spec's tables.
    Table,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(PolicyKind::Flow),
            "table" => Ok(PolicyKind::Table),
            other => Err(Error::InvalidExperiment(format!("unknown policy '{other}'"))),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyKind::Flow => "flow",
            PolicyKind::Table => "table",
        })
    }
}

/// A complete experiment: stages, steps, optional masks and tables, the
/// initial state, and the transfer policy.
///
/// Step `t` maps stage `t` to stage `t + 1`. Filter steps postselect.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    name: String,
    spaces: Vec<ConfigSpace>,
    steps: Vec<StepOperator>,
    masks: Vec<Option<SupportMask>>,
    tables: Vec<Option<TransferMatrix>>,
    initial: WaveFunction,
    policy: PolicyKind,
}

impl ExperimentSpec {
    /// Chains `steps` from `initial`; masks and tables start empty and the
    /// policy is flow-derived.
    pub fn new(name: impl Into<String>, initial: WaveFunction, steps: Vec<StepOperator>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidExperiment(format!("bad experiment name '{name}'")));
        }
        if !initial.is_normalized() {
            return Err(Error::NotNormalized {
                norm_sqr: initial.norm_sqr(),
            });
        }
        let mut spaces = vec![initial.space().clone()];
        for (t, step) in steps.iter().enumerate() {
            let prev = &spaces[t];
            if step.from_space() != prev {
                return Err(Error::InvalidExperiment(format!(
                    "step {t} starts at stage {} but stage {t} is {}",
                    step.from_space().stage(),
                    prev
                )));
            }
            if step.to_space().stage() != t + 1 {
                return Err(Error::InvalidExperiment(format!(
                    "step {t} ends at stage {} instead of {}",
                    step.to_space().stage(),
                    t + 1
                )));
            }
            spaces.push(step.to_space().clone());
        }
        if spaces[0].stage() != 0 {
            return Err(Error::InvalidExperiment("the first stage must be stage 0".into()));
        }
        let n = steps.len();
        Ok(Self {
            name,
            spaces,
            steps,
            masks: vec![None; n],
            tables: vec![None; n],
            initial,
            policy: PolicyKind::Flow,
        })
    }

    pub fn with_mask(mut self, step: usize, mask: SupportMask) -> Result<Self> {
        self.check_step_spaces(step, mask.from_space(), mask.to_space(), "mask")?;
        self.masks[step] = Some(mask);
        Ok(self)
    }

    pub fn without_masks(mut self) -> Self {
        self.masks.iter_mut().for_each(|m| *m = None);
        self
    }

    pub fn with_table(mut self, step: usize, table: TransferMatrix) -> Result<Self> {
        self.check_step_spaces(step, table.from_space(), table.to_space(), "table")?;
        self.tables[step] = Some(table);
        Ok(self)
    }

    /// Selects the policy; a table policy needs a table for every
    /// evolution step.
    pub fn with_policy(mut self, policy: PolicyKind) -> Result<Self> {
        if policy == PolicyKind::Table {
            if let Some(t) = (0..self.steps.len()).find(|&t| !self.steps[t].is_filter() && self.tables[t].is_none()) {
                return Err(Error::InvalidExperiment(format!(
                    "table policy needs a table for step {t}->{}",
                    t + 1
                )));
            }
        }
        self.policy = policy;
        Ok(self)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn check_step_spaces(&self, step: usize, from: &ConfigSpace, to: &ConfigSpace, what: &str) -> Result<()> {
        let s = self
            .steps
            .get(step)
            .ok_or_else(|| Error::InvalidExperiment(format!("{what} for missing step {step}")))?;
        if s.from_space().labels() != from.labels() || s.to_space().labels() != to.labels() {
            return Err(Error::InvalidExperiment(format!(
                "{what} spaces do not match step {step}->{}",
                step + 1
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spaces(&self) -> &[ConfigSpace] {
        &self.spaces
    }

    pub fn steps(&self) -> &[StepOperator] {
        &self.steps
    }

    pub fn masks(&self) -> &[Option<SupportMask>] {
        &self.masks
    }

    pub fn tables(&self) -> &[Option<TransferMatrix>] {
        &self.tables
    }

    pub fn initial_state(&self) -> &WaveFunction {
        &self.initial
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn stage_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn has_masks(&self) -> bool {
        self.masks.iter().any(Option::is_some)
    }

    /// Structural equality with amplitude and probability tolerance [`TOL`].
    pub fn approx_eq(&self, other: &ExperimentSpec) -> bool {
        let close_c = |a: &nalgebra::DMatrix<crate::state::C64>, b: &nalgebra::DMatrix<crate::state::C64>| {
            a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= TOL)
        };
        let steps_eq = self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.kind() == b.kind()
                    && a.from_space() == b.from_space()
                    && a.to_space() == b.to_space()
                    && close_c(a.matrix(), b.matrix())
            });
        let masks_eq = self.masks.len() == other.masks.len()
            && self.masks.iter().zip(&other.masks).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => a.allowed() == b.allowed(),
                _ => false,
            });
        let tables_eq = self.tables.len() == other.tables.len()
            && self.tables.iter().zip(&other.tables).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.defined() == b.defined()
                        && a.entries().iter().zip(b.entries().iter()).all(|(x, y)| (x - y).abs() <= TOL)
                }
                _ => false,
            });
        self.name == other.name
            && self.spaces == other.spaces
            && self.policy == other.policy
            && self.initial.max_deviation(&other.initial).is_some_and(|d| d <= TOL)
            && steps_eq
            && masks_eq
            && tables_eq
    }
}
