//! Stochastic guidance: transfer matrices that carry Born distributions from
//! one stage to the next, and exact feasibility of such transport under
//! support constraints.
//!
//! The flow matrix `A[i,j] = conj((Uψ)_i)·U[i,j]·ψ_j` has column sums equal to
//! the source Born weights and row sums equal to the target Born weights. When
//! its real part is nonnegative it yields a transfer matrix directly; when it
//! is not, the least-modification transport consistent with both marginals is
//! computed exactly.

mod transport;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::{ensure_same_space, ConfigSpace, Distribution, StepOperator, WaveFunction, C64, SUPPORT_EPS, TOL};

pub(crate) use transport::SCALE;

/// Cost multiplier separating the flow-sign objective from the mask
/// tie-break in lexicographic transport.
const PRIMARY_COST: i128 = 1 << 40;

/// Born weights `|a_i|²` of a wave function.
///
/// Sub-normalized states yield a sub-normalized distribution carrying their
/// survival mass.
pub fn born_distribution(psi: &WaveFunction) -> Result<Distribution> {
    let w = psi.born_weights();
    if psi.is_normalized() {
        Distribution::new(psi.space().clone(), w)
    } else {
        Distribution::subnormalized(psi.space().clone(), w)
    }
}

/// Column-stochastic jump probabilities `T[out, in]` between two stages.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    from: ConfigSpace,
    to: ConfigSpace,
    entries: DMatrix<f64>,
    defined: Vec<bool>,
    repaired: bool,
}

impl TransferMatrix {
    /// Validates a matrix whose `defined` columns must be stochastic.
    /// Undefined columns are stored as uniform.
    pub fn new(
        from: ConfigSpace,
        to: ConfigSpace,
        mut entries: DMatrix<f64>,
        defined: Vec<bool>,
    ) -> Result<Self> {
        if entries.nrows() != to.dim() || entries.ncols() != from.dim() || defined.len() != from.dim() {
            return Err(Error::InvalidTransfer(format!(
                "shape {}x{} does not match spaces {}x{}",
                entries.nrows(),
                entries.ncols(),
                to.dim(),
                from.dim()
            )));
        }
        let uniform = 1.0 / to.dim() as f64;
        for (j, &is_defined) in defined.iter().enumerate() {
            if !is_defined {
                entries.column_mut(j).fill(uniform);
                continue;
            }
            if let Some(v) = entries.column(j).iter().find(|v| **v < -TOL || **v > 1.0 + TOL) {
                return Err(Error::InvalidTransfer(format!(
                    "entry {v} in column '{}' outside [0,1]",
                    from.label(j)
                )));
            }
            let sum: f64 = entries.column(j).sum();
            if (sum - 1.0).abs() > TOL {
                return Err(Error::InvalidTransfer(format!(
                    "column '{}' sums to {sum}",
                    from.label(j)
                )));
            }
            for v in entries.column_mut(j).iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self {
            from,
            to,
            entries,
            defined,
            repaired: false,
        })
    }

    /// Builds a table from `(in, probability, out)` rules. Columns that
    /// appear in a rule are defined; the rest are undefined.
    pub fn tabulated<'a, I>(from: ConfigSpace, to: ConfigSpace, rules: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64, &'a str)>,
    {
        let mut m = DMatrix::zeros(to.dim(), from.dim());
        let mut defined = vec![false; from.dim()];
        for (input, p, output) in rules {
            let j = from.require(input)?;
            let i = to.require(output)?;
            m[(i, j)] += p;
            defined[j] = true;
        }
        Self::new(from, to, m, defined)
    }

    /// Deterministic map sending each input label to one output label.
    pub fn deterministic<'a, I>(from: ConfigSpace, to: ConfigSpace, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::tabulated(from, to, pairs.into_iter().map(|(a, b)| (a, 1.0, b)))
    }

    pub fn from_space(&self) -> &ConfigSpace {
        &self.from
    }

    pub fn to_space(&self) -> &ConfigSpace {
        &self.to
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Whether column `in_index` is part of the source support.
    pub fn is_defined(&self, in_index: usize) -> bool {
        self.defined[in_index]
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }

    /// True when negative flows forced the transport repair.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    /// `T[out, in]` by label.
    pub fn probability(&self, output: &str, input: &str) -> Option<f64> {
        let i = self.to.index_of(output)?;
        let j = self.from.index_of(input)?;
        Some(self.entries[(i, j)])
    }

    /// `T·ρ` on the target space.
    pub fn apply(&self, rho: &Distribution) -> Result<Distribution> {
        if rho.space().labels() != self.from.labels() {
            return Err(Error::SpaceMismatch {
                expected: self.from.stage(),
                found: rho.space().stage(),
            });
        }
        let w: Vec<f64> = (0..self.to.dim())
            .map(|i| {
                (0..self.from.dim())
                    .map(|j| self.entries[(i, j)] * rho.weights()[j])
                    .sum()
            })
            .collect();
        Distribution::subnormalized(self.to.clone(), w)
    }

    /// Largest deviation of `T·ρ_in` from `ρ_out`.
    pub fn transport_error(&self, rho_in: &Distribution, rho_out: &Distribution) -> Result<f64> {
        let moved = self.apply(rho_in)?;
        if moved.space().labels() != rho_out.space().labels() {
            return Err(Error::SpaceMismatch {
                expected: self.to.stage(),
                found: rho_out.space().stage(),
            });
        }
        Ok(moved.max_deviation(rho_out).expect("labels checked"))
    }
}

/// Complex flow `A[i,j] = conj((Uψ)_i)·U[i,j]·ψ_j` for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    from: ConfigSpace,
    to: ConfigSpace,
    entries: DMatrix<C64>,
    source: Vec<f64>,
    target: Vec<f64>,
}

impl FlowMatrix {
    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn from_space(&self) -> &ConfigSpace {
        &self.from
    }

    pub fn to_space(&self) -> &ConfigSpace {
        &self.to
    }

    /// Born weights of the source state.
    pub fn source_weights(&self) -> &[f64] {
        &self.source
    }

    /// Born weights of the evolved state.
    pub fn target_weights(&self) -> &[f64] {
        &self.target
    }

    pub fn column_sums(&self) -> Vec<C64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    pub fn row_sums(&self) -> Vec<C64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn entry(&self, output: &str, input: &str) -> Option<C64> {
        let i = self.to.index_of(output)?;
        let j = self.from.index_of(input)?;
        Some(self.entries[(i, j)])
    }
}

fn flow_entries(matrix: &DMatrix<C64>, psi: &[C64], evolved: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| {
        evolved[i].conj() * matrix[(i, j)] * psi[j]
    })
}

/// Flow matrix of an evolution step acting on `psi`.
pub fn flow_matrix(step: &StepOperator, psi: &WaveFunction) -> Result<FlowMatrix> {
    if step.is_filter() {
        return Err(Error::FilterStep);
    }
    ensure_same_space(step.from_space(), psi.space())?;
    let evolved = crate::state::apply_step(step, psi)?;
    Ok(FlowMatrix {
        from: step.from_space().clone(),
        to: step.to_space().clone(),
        entries: flow_entries(step.matrix(), psi.amplitudes(), evolved.amplitudes()),
        source: psi.born_weights(),
        target: evolved.born_weights(),
    })
}

/// Transfer matrix induced by a flow.
///
/// With nonnegative real flow, `T[i,j] = Re A[i,j] / ρ_j`. Otherwise the
/// minimum-cost transport between the two Born marginals is used, where
/// shipping along a non-positive flow entry costs one unit per mass; the
/// result is then flagged as repaired.
pub fn transfer_from_flow(flow: &FlowMatrix) -> Result<TransferMatrix> {
    transfer_from_flow_with_mask(flow, None)
}

/// As [`transfer_from_flow`]; when a repair is needed, ties in the flow-sign
/// objective are broken in favour of transitions the mask allows.
pub fn transfer_from_flow_with_mask(flow: &FlowMatrix, mask: Option<&SupportMask>) -> Result<TransferMatrix> {
    let re = flow.entries.map(|a| a.re);
    let negative = re.iter().any(|v| *v < -TOL);
    if !negative {
        let defined: Vec<bool> = flow.source.iter().map(|w| *w > SUPPORT_EPS).collect();
        let mut t = DMatrix::zeros(flow.to.dim(), flow.from.dim());
        for j in 0..flow.from.dim() {
            if !defined[j] {
                continue;
            }
            let col: f64 = (0..flow.to.dim()).map(|i| re[(i, j)].max(0.0)).sum();
            for i in 0..flow.to.dim() {
                t[(i, j)] = re[(i, j)].max(0.0) / col;
            }
        }
        return TransferMatrix::new(flow.from.clone(), flow.to.clone(), t, defined);
    }
    let rho_in = Distribution::subnormalized(flow.from.clone(), flow.source.clone())?;
    let rho_out = Distribution::subnormalized(flow.to.clone(), flow.target.clone())?;
    transport_with_preference(&rho_in, &rho_out, &re, mask)
}

/// Transport from `rho_in` to `rho_out` that prefers positive entries of
/// `preference` (and, among those plans, transitions allowed by `mask`).
///
/// If shipping along the positive entries alone reproduces `rho_out`
/// exactly, that plan is returned unflagged.
pub fn transport_with_preference(
    rho_in: &Distribution,
    rho_out: &Distribution,
    preference: &DMatrix<f64>,
    mask: Option<&SupportMask>,
) -> Result<TransferMatrix> {
    let from = rho_in.space();
    let to = rho_out.space();
    if preference.nrows() != to.dim() || preference.ncols() != from.dim() {
        return Err(Error::InvalidTransfer("preference shape mismatch".into()));
    }
    let defined: Vec<bool> = rho_in.weights().iter().map(|w| *w > SUPPORT_EPS).collect();

    // direct: proportional to positive preference, if it already transports
    let direct = direct_transfer(from, to, preference, &defined);
    if let Some(t) = direct {
        let rin = rho_in.renormalize()?;
        let rout = rho_out.renormalize()?;
        if t.transport_error(&rin, &rout)? <= TOL {
            return Ok(t);
        }
    }

    let supply = transport::scale_weights(rho_in.weights(), SUPPORT_EPS)
        .ok_or_else(|| Error::InvalidDistribution("source has no mass".into()))?;
    let demand = transport::scale_weights(rho_out.weights(), SUPPORT_EPS)
        .ok_or_else(|| Error::InvalidDistribution("target has no mass".into()))?;
    let cost: Vec<Vec<Option<i128>>> = (0..to.dim())
        .map(|i| {
            (0..from.dim())
                .map(|j| {
                    let primary = if preference[(i, j)] > SUPPORT_EPS { 0 } else { PRIMARY_COST };
                    let secondary = match mask {
                        Some(m) if !m.allows_index(i, j) => 1,
                        _ => 0,
                    };
                    Some(primary + secondary)
                })
                .collect()
        })
        .collect();
    let plan = transport::solve(&supply, &demand, &cost);
    let mut t = plan_to_transfer(from, to, &plan, &defined, None)?;
    t.repaired = true;
    Ok(t)
}

fn direct_transfer(
    from: &ConfigSpace,
    to: &ConfigSpace,
    preference: &DMatrix<f64>,
    defined: &[bool],
) -> Option<TransferMatrix> {
    let mut t = DMatrix::zeros(to.dim(), from.dim());
    for j in 0..from.dim() {
        if !defined[j] {
            continue;
        }
        let col: f64 = (0..to.dim()).map(|i| preference[(i, j)].max(0.0)).sum();
        if col <= SUPPORT_EPS * SUPPORT_EPS {
            return None;
        }
        for i in 0..to.dim() {
            t[(i, j)] = preference[(i, j)].max(0.0) / col;
        }
    }
    TransferMatrix::new(from.clone(), to.clone(), t, defined.to_vec()).ok()
}

/// Converts an integer plan into a column-stochastic matrix. Source mass the
/// plan could not route (only possible within rounding of a feasible
/// instance) goes to the first allowed target.
fn plan_to_transfer(
    from: &ConfigSpace,
    to: &ConfigSpace,
    plan: &transport::Plan,
    defined: &[bool],
    mask: Option<&SupportMask>,
) -> Result<TransferMatrix> {
    let mut t = DMatrix::zeros(to.dim(), from.dim());
    let mut defined = defined.to_vec();
    for j in 0..from.dim() {
        if !defined[j] {
            continue;
        }
        let s = plan.supply[j];
        if s <= 0 {
            defined[j] = false;
            continue;
        }
        let routed: i64 = (0..to.dim()).map(|i| plan.flow[i][j]).sum();
        for i in 0..to.dim() {
            t[(i, j)] = plan.flow[i][j] as f64 / s as f64;
        }
        if routed < s {
            let spill = (0..to.dim())
                .find(|&i| mask.is_none_or(|m| m.allows_index(i, j)))
                .unwrap_or(0);
            t[(spill, j)] += (s - routed) as f64 / s as f64;
        }
    }
    TransferMatrix::new(from.clone(), to.clone(), t, defined)
}

/// Allowed transitions `M[out, in]` between two stages.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask {
    from: ConfigSpace,
    to: ConfigSpace,
    allowed: DMatrix<bool>,
    description: String,
}

impl SupportMask {
    pub fn new(
        from: ConfigSpace,
        to: ConfigSpace,
        allowed: DMatrix<bool>,
        description: impl Into<String>,
    ) -> Result<Self> {
        if allowed.nrows() != to.dim() || allowed.ncols() != from.dim() {
            return Err(Error::InvalidTransfer("mask shape mismatch".into()));
        }
        Ok(Self {
            from,
            to,
            allowed,
            description: description.into(),
        })
    }

    /// Every transition allowed.
    pub fn full(from: ConfigSpace, to: ConfigSpace) -> Self {
        let allowed = DMatrix::from_element(to.dim(), from.dim(), true);
        Self {
            from,
            to,
            allowed,
            description: "unconstrained".into(),
        }
    }

    /// Mask given by a predicate on `(out, in)` labels.
    pub fn from_fn(
        from: ConfigSpace,
        to: ConfigSpace,
        description: impl Into<String>,
        allow: impl Fn(&str, &str) -> bool,
    ) -> Self {
        let allowed = DMatrix::from_fn(to.dim(), from.dim(), |i, j| allow(to.label(i), from.label(j)));
        Self {
            from,
            to,
            allowed,
            description: description.into(),
        }
    }

    /// Mask from `(in, [outs])` rules; unlisted inputs allow nothing.
    pub fn from_rules<'a, I, O>(
        from: ConfigSpace,
        to: ConfigSpace,
        description: impl Into<String>,
        rules: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, O)>,
        O: IntoIterator<Item = &'a str>,
    {
        let mut allowed = DMatrix::from_element(to.dim(), from.dim(), false);
        for (input, outs) in rules {
            let j = from.require(input)?;
            for out in outs {
                allowed[(to.require(out)?, j)] = true;
            }
        }
        Self::new(from, to, allowed, description)
    }

    pub fn from_space(&self) -> &ConfigSpace {
        &self.from
    }

    pub fn to_space(&self) -> &ConfigSpace {
        &self.to
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn allowed(&self) -> &DMatrix<bool> {
        &self.allowed
    }

    pub fn allows_index(&self, out: usize, input: usize) -> bool {
        self.allowed[(out, input)]
    }

    pub fn allows(&self, output: &str, input: &str) -> bool {
        match (self.to.index_of(output), self.from.index_of(input)) {
            (Some(i), Some(j)) => self.allowed[(i, j)],
            _ => false,
        }
    }

    /// Outputs allowed from one input.
    pub fn targets_of(&self, input: usize) -> Vec<usize> {
        (0..self.to.dim()).filter(|&i| self.allowed[(i, input)]).collect()
    }

    /// A copy with one transition removed.
    pub fn without(&self, out: usize, input: usize) -> Self {
        let mut m = self.clone();
        m.allowed[(out, input)] = false;
        m
    }
}

/// Witness that no mask-respecting transport exists: the target set `S`
/// needs more Born mass than the sources that can reach it hold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub targets: Vec<String>,
    pub reaching_sources: Vec<String>,
    pub required: f64,
    pub reachable: f64,
}

impl Certificate {
    /// Re-derives both sides of the cut by direct summation and checks
    /// `required > reachable + 1e-9`.
    pub fn verify(&self, rho_in: &Distribution, rho_out: &Distribution, mask: &SupportMask) -> bool {
        let targets: Vec<usize> = match self
            .targets
            .iter()
            .map(|l| rho_out.space().index_of(l))
            .collect::<Option<Vec<_>>>()
        {
            Some(t) => t,
            None => return false,
        };
        let required: f64 = targets.iter().map(|&i| rho_out.weights()[i]).sum();
        let reachable: f64 = (0..rho_in.space().dim())
            .filter(|&j| targets.iter().any(|&i| mask.allows_index(i, j)))
            .map(|j| rho_in.weights()[j])
            .sum();
        (required - self.required).abs() <= 1e-12
            && (reachable - self.reachable).abs() <= 1e-12
            && required > reachable + 1e-9
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeasibilityResult {
    Feasible { witness: TransferMatrix },
    Infeasible(Certificate),
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityResult::Feasible { .. })
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            FeasibilityResult::Infeasible(c) => Some(c),
            FeasibilityResult::Feasible { .. } => None,
        }
    }
}

/// Decides whether some transfer matrix supported on `mask` carries
/// `rho_in` exactly onto `rho_out`.
pub fn feasibility_check(
    rho_in: &Distribution,
    rho_out: &Distribution,
    mask: &SupportMask,
) -> Result<FeasibilityResult> {
    if rho_in.space().labels() != mask.from.labels() || rho_out.space().labels() != mask.to.labels() {
        return Err(Error::InvalidTransfer(
            "mask spaces do not match the distributions".into(),
        ));
    }
    for d in [rho_in, rho_out] {
        if !d.is_normalized() {
            return Err(Error::InvalidDistribution(format!(
                "stage {} distribution has mass {}",
                d.space().stage(),
                d.mass()
            )));
        }
    }
    let support = rho_in.support();
    for &j in &support {
        if mask.targets_of(j).is_empty() {
            return Err(Error::IllPosedMask(rho_in.space().label(j).to_string()));
        }
    }

    let supply = transport::scale_weights(rho_in.weights(), SUPPORT_EPS)
        .ok_or_else(|| Error::InvalidDistribution("source has no mass".into()))?;
    let demand = transport::scale_weights(rho_out.weights(), SUPPORT_EPS)
        .ok_or_else(|| Error::InvalidDistribution("target has no mass".into()))?;
    let cost: Vec<Vec<Option<i128>>> = (0..mask.to.dim())
        .map(|i| {
            (0..mask.from.dim())
                .map(|j| mask.allows_index(i, j).then_some(0))
                .collect()
        })
        .collect();
    let plan = transport::solve(&supply, &demand, &cost);

    if plan.shipped < SCALE {
        let targets: Vec<usize> = plan
            .cut_targets
            .iter()
            .copied()
            .filter(|&i| rho_out.weights()[i] > SUPPORT_EPS)
            .collect();
        let sources: Vec<usize> = (0..mask.from.dim())
            .filter(|&j| rho_in.weights()[j] > SUPPORT_EPS)
            .filter(|&j| targets.iter().any(|&i| mask.allows_index(i, j)))
            .collect();
        let required: f64 = targets.iter().map(|&i| rho_out.weights()[i]).sum();
        let reachable: f64 = (0..mask.from.dim())
            .filter(|&j| targets.iter().any(|&i| mask.allows_index(i, j)))
            .map(|j| rho_in.weights()[j])
            .sum();
        if required > reachable + 1e-9 {
            return Ok(FeasibilityResult::Infeasible(Certificate {
                targets: targets.iter().map(|&i| mask.to.label(i).to_string()).collect(),
                reaching_sources: sources.iter().map(|&j| mask.from.label(j).to_string()).collect(),
                required,
                reachable,
            }));
        }
    }
    let defined: Vec<bool> = rho_in.weights().iter().map(|w| *w > SUPPORT_EPS).collect();
    let witness = plan_to_transfer(&mask.from, &mask.to, &plan, &defined, Some(mask))?;
    Ok(FeasibilityResult::Feasible { witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{apply_step, StepOperator};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pm(stage: usize) -> ConfigSpace {
        ConfigSpace::new(stage, ["+", "-"]).unwrap()
    }

    fn lr(stage: usize) -> ConfigSpace {
        ConfigSpace::new(stage, ["L", "R"]).unwrap()
    }

    fn bs1() -> StepOperator {
        let r = FRAC_1_SQRT_2;
        StepOperator::from_rules(
            pm(0),
            lr(1),
            [("+", c(r), "L"), ("+", c(r), "R"), ("-", c(r), "L"), ("-", c(-r), "R")],
        )
        .unwrap()
    }

    fn bs2() -> StepOperator {
        let r = FRAC_1_SQRT_2;
        StepOperator::from_rules(
            lr(1),
            pm(2),
            [("L", c(r), "+"), ("L", c(r), "-"), ("R", c(r), "+"), ("R", c(-r), "-")],
        )
        .unwrap()
    }

    #[test]
    fn born_of_split_state() {
        let psi = apply_step(&bs1(), &WaveFunction::basis(pm(0), "+").unwrap()).unwrap();
        let rho = born_distribution(&psi).unwrap();
        assert!((rho.weight("L").unwrap() - 0.5).abs() < TOL);
        assert!((rho.weight("R").unwrap() - 0.5).abs() < TOL);
    }

    // Expected entries below: direct complex arithmetic, (1/√2)(1/√2)(1) = 1/2.
    #[test]
    fn first_splitter_flow_and_transfer() {
        let plus = WaveFunction::basis(pm(0), "+").unwrap();
        let flow = flow_matrix(&bs1(), &plus).unwrap();
        assert!((flow.entry("L", "+").unwrap() - c(0.5)).norm() < TOL);
        assert!((flow.entry("R", "+").unwrap() - c(0.5)).norm() < TOL);
        let t = transfer_from_flow(&flow).unwrap();
        assert_eq!(t.probability("L", "+"), Some(0.5));
        assert_eq!(t.probability("R", "+"), Some(0.5));
        assert!(!t.is_defined(1));
        assert!(!t.repaired());
    }

    #[test]
    fn second_splitter_sends_everything_to_plus() {
        let psi = apply_step(&bs1(), &WaveFunction::basis(pm(0), "+").unwrap()).unwrap();
        let flow = flow_matrix(&bs2(), &psi).unwrap();
        assert!((flow.entry("+", "L").unwrap() - c(0.5)).norm() < TOL);
        assert!((flow.entry("+", "R").unwrap() - c(0.5)).norm() < TOL);
        assert!(flow.entry("-", "L").unwrap().norm() < TOL);
        assert!(flow.entry("-", "R").unwrap().norm() < TOL);
        let t = transfer_from_flow(&flow).unwrap();
        assert_eq!(t.probability("+", "L"), Some(1.0));
        assert_eq!(t.probability("+", "R"), Some(1.0));
        assert_eq!(t.probability("-", "L"), Some(0.0));
    }

    #[test]
    fn identity_flow_is_diagonal() {
        let psi = WaveFunction::new(lr(0), [("L", c(0.6)), ("R", c(-0.8))]).unwrap();
        let flow = flow_matrix(&StepOperator::identity(lr(0), 1), &psi).unwrap();
        assert!((flow.entry("L", "L").unwrap() - c(0.36)).norm() < TOL);
        assert!(flow.entry("R", "L").unwrap().norm() < TOL);
        let t = transfer_from_flow(&flow).unwrap();
        assert_eq!(t.entries(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn flow_rejects_filters() {
        let step = StepOperator::filter(pm(0), crate::state::Filter::keep(["+"]), 1).unwrap();
        let psi = WaveFunction::basis(pm(0), "+").unwrap();
        assert_eq!(flow_matrix(&step, &psi).unwrap_err(), Error::FilterStep);
    }

    #[test]
    fn negative_flow_is_repaired_with_marginals() {
        // ψ = (L + R)/√2 through a splitter whose flow has negative entries
        let r = FRAC_1_SQRT_2;
        let psi = WaveFunction::new(lr(0), [("L", c(0.6)), ("R", c(0.8))]).unwrap();
        let step = StepOperator::from_rules(
            lr(0),
            pm(1),
            [("L", c(r), "+"), ("L", c(r), "-"), ("R", c(r), "+"), ("R", c(-r), "-")],
        )
        .unwrap();
        let flow = flow_matrix(&step, &psi).unwrap();
        assert!(flow.entries().iter().any(|a| a.re < -TOL));
        let t = transfer_from_flow(&flow).unwrap();
        assert!(t.repaired());
        let rin = born_distribution(&psi).unwrap();
        let rout = born_distribution(&apply_step(&step, &psi).unwrap()).unwrap();
        assert!(t.transport_error(&rin, &rout).unwrap() < 1e-10);
    }

    #[test]
    fn straight_mask_certificate_on_second_splitter() {
        let rho_in = Distribution::new(lr(1), vec![0.5, 0.5]).unwrap();
        let rho_out = Distribution::point(pm(2), "+").unwrap();
        let mask = SupportMask::from_rules(lr(1), pm(2), "straight", [("L", ["-"]), ("R", ["+"])]).unwrap();
        let res = feasibility_check(&rho_in, &rho_out, &mask).unwrap();
        let cert = res.certificate().expect("infeasible");
        assert_eq!(cert.targets, vec!["+".to_string()]);
        assert!((cert.reachable - 0.5).abs() < TOL);
        assert!((cert.required - 1.0).abs() < TOL);
        assert!(cert.verify(&rho_in, &rho_out, &mask));
    }

    #[test]
    fn identity_mask_is_feasible_with_identity_witness() {
        let rho = Distribution::new(lr(0), vec![0.25, 0.75]).unwrap();
        let mask = SupportMask::from_fn(lr(0), lr(1), "identity", |o, i| o == i);
        let rho_out = Distribution::new(lr(1), vec![0.25, 0.75]).unwrap();
        match feasibility_check(&rho, &rho_out, &mask).unwrap() {
            FeasibilityResult::Feasible { witness } => {
                assert_eq!(witness.entries(), &DMatrix::identity(2, 2));
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn ill_posed_mask_is_rejected() {
        let rho = Distribution::new(lr(0), vec![0.5, 0.5]).unwrap();
        let mask = SupportMask::from_rules(lr(0), lr(1), "partial", [("L", ["L"])]).unwrap();
        let rho_out = Distribution::new(lr(1), vec![0.5, 0.5]).unwrap();
        assert_eq!(
            feasibility_check(&rho, &rho_out, &mask).unwrap_err(),
            Error::IllPosedMask("R".into())
        );
    }
}
