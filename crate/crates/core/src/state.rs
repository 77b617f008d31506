//! State algebra: configuration spaces, wave functions, step operators,
//! tensor products and projection filters.
//!
//! Everything here is an immutable value. Amplitudes are stored verbatim in
//! the declared label order of their space; equality checks use the absolute
//! tolerance [`TOL`].

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex amplitude type used throughout the crate.
pub type C64 = Complex64;

/// Absolute tolerance for amplitude and probability comparisons.
pub const TOL: f64 = 1e-12;

/// Born weights at or below this value count as "no support".
pub const SUPPORT_EPS: f64 = 1e-14;

/// Characters that cannot appear in a label outside a parenthesized tuple.
const RESERVED: &[char] = &['{', '}', ':', ';', '#', ','];

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::InvalidSpace("empty label".into()));
    }
    if label.chars().any(char::is_whitespace) || label.contains("->") {
        return Err(Error::InvalidSpace(format!("malformed label '{label}'")));
    }
    let tuple = label.starts_with('(') && label.ends_with(')') && label.len() > 2;
    let bad = label
        .chars()
        .any(|c| RESERVED.contains(&c) && !(tuple && c == ','));
    if bad {
        return Err(Error::InvalidSpace(format!("malformed label '{label}'")));
    }
    if tuple && components(label).iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidSpace(format!("empty tuple component in '{label}'")));
    }
    Ok(())
}

/// Splits a composite label into its factor components.
///
/// `(A,a,R)` yields `[A, a, R]`, `x⊗y` yields `[x, y]`; any other label is a
/// single component.
pub fn components(label: &str) -> Vec<&str> {
    if label.len() > 2 && label.starts_with('(') && label.ends_with(')') {
        label[1..label.len() - 1].split(',').collect()
    } else if label.contains('⊗') {
        label.split('⊗').collect()
    } else {
        vec![label]
    }
}

/// How product labels are spelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelJoin {
    /// `x⊗y`
    Tensor,
    /// `(x,y)`, flattening nested tuples.
    Tuple,
}

impl LabelJoin {
    pub fn join(self, parts: &[&str]) -> String {
        match (self, parts.len()) {
            (_, 1) => parts[0].to_string(),
            (LabelJoin::Tensor, _) => parts.join("⊗"),
            (LabelJoin::Tuple, _) => format!("({})", parts.join(",")),
        }
    }

    fn of(label: &str) -> Self {
        if label.starts_with('(') {
            LabelJoin::Tuple
        } else {
            LabelJoin::Tensor
        }
    }
}

/// An ordered finite set of configuration labels at one stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigSpace {
    stage: usize,
    labels: Vec<String>,
}

impl ConfigSpace {
    /// Builds a space whose canonical order is the declared order.
    pub fn new<I, S>(stage: usize, labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidSpace(format!("stage {stage} has no labels")));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            check_label(label)?;
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate label '{label}' in stage {stage}"
                )));
            }
        }
        Ok(Self { stage, labels })
    }

    /// Builds a space in lexicographic label order.
    pub fn sorted<I, S>(stage: usize, labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        Self::new(stage, labels)
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_string(),
            stage: self.stage,
        })
    }

    pub fn with_stage(&self, stage: usize) -> Self {
        Self {
            stage,
            labels: self.labels.clone(),
        }
    }

    /// Position of the factor whose values include every label in `values`,
    /// if the space is a product space with such a factor.
    pub fn factor_containing(&self, values: &[&str]) -> Option<usize> {
        let arity = components(&self.labels[0]).len();
        if arity < 2 || self.labels.iter().any(|l| components(l).len() != arity) {
            return None;
        }
        (0..arity).find(|&k| {
            let present: HashSet<&str> = self.labels.iter().map(|l| components(l)[k]).collect();
            values.iter().all(|v| present.contains(v))
        })
    }
}

impl fmt::Display for ConfigSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C_{} = {{{}}}", self.stage, self.labels.join(", "))
    }
}

/// Complex amplitudes over a [`ConfigSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    space: ConfigSpace,
    amps: Vec<C64>,
    normalized: bool,
}

fn collect_amplitudes<I, S>(space: &ConfigSpace, amplitudes: I) -> Result<Vec<C64>>
where
    I: IntoIterator<Item = (S, C64)>,
    S: AsRef<str>,
{
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    let mut seen = vec![false; space.dim()];
    for (label, amp) in amplitudes {
        let i = space.require(label.as_ref())?;
        if seen[i] {
            return Err(Error::DuplicateLabel(label.as_ref().to_string()));
        }
        seen[i] = true;
        amps[i] = amp;
    }
    Ok(amps)
}

fn norm_sqr_of(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

impl WaveFunction {
    /// Builds a normalized state; labels missing from `amplitudes` are zero.
    pub fn new<I, S>(space: ConfigSpace, amplitudes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, C64)>,
        S: AsRef<str>,
    {
        let amps = collect_amplitudes(&space, amplitudes)?;
        Self::from_vec(space, amps)
    }

    /// Builds a state whose squared norm may be below one (e.g. after a
    /// filter). The deficit is recorded, not corrected.
    pub fn subnormalized<I, S>(space: ConfigSpace, amplitudes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, C64)>,
        S: AsRef<str>,
    {
        let amps = collect_amplitudes(&space, amplitudes)?;
        Self::subnormalized_vec(space, amps)
    }

    pub fn from_vec(space: ConfigSpace, amps: Vec<C64>) -> Result<Self> {
        let state = Self::subnormalized_vec(space, amps)?;
        if !state.normalized {
            return Err(Error::NotNormalized {
                norm_sqr: state.norm_sqr(),
            });
        }
        Ok(state)
    }

    pub fn subnormalized_vec(space: ConfigSpace, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::InvalidSpace(format!(
                "{} amplitudes for {} labels",
                amps.len(),
                space.dim()
            )));
        }
        let n = norm_sqr_of(&amps);
        if n <= TOL * TOL {
            return Err(Error::ZeroState);
        }
        if n > 1.0 + TOL {
            return Err(Error::NotNormalized { norm_sqr: n });
        }
        Ok(Self {
            space,
            amps,
            normalized: (n - 1.0).abs() <= TOL,
        })
    }

    /// Unchecked constructor for linear images of valid states.
    pub(crate) fn raw(space: ConfigSpace, amps: Vec<C64>) -> Self {
        let normalized = (norm_sqr_of(&amps) - 1.0).abs() <= TOL;
        Self {
            space,
            amps,
            normalized,
        }
    }

    /// The basis state `|label⟩`.
    pub fn basis(space: ConfigSpace, label: &str) -> Result<Self> {
        Self::new(space, [(label, C64::new(1.0, 0.0))])
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, label: &str) -> Option<C64> {
        self.space.index_of(label).map(|i| self.amps[i])
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr_of(&self.amps)
    }

    /// Squared moduli of the amplitudes, in label order.
    pub fn born_weights(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Rescales to unit norm.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= TOL * TOL {
            return Err(Error::ZeroState);
        }
        let s = 1.0 / n.sqrt();
        Ok(Self::raw(
            self.space.clone(),
            self.amps.iter().map(|a| a * s).collect(),
        ))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &WaveFunction) -> Result<C64> {
        ensure_same_space(&self.space, &other.space)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Same amplitudes on a space with the same labels at another stage.
    pub fn at_stage(&self, stage: usize) -> Self {
        Self {
            space: self.space.with_stage(stage),
            amps: self.amps.clone(),
            normalized: self.normalized,
        }
    }

    /// Largest amplitude deviation from `other`, or `None` if the spaces
    /// differ.
    pub fn max_deviation(&self, other: &WaveFunction) -> Option<f64> {
        if self.space.labels != other.space.labels {
            return None;
        }
        Some(
            self.amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        )
    }

    pub(crate) fn as_vector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.amps)
    }
}

/// Builds a wave function; see [`WaveFunction::new`].
pub fn make_wavefunction<I, S>(space: ConfigSpace, amplitudes: I) -> Result<WaveFunction>
where
    I: IntoIterator<Item = (S, C64)>,
    S: AsRef<str>,
{
    WaveFunction::new(space, amplitudes)
}

pub(crate) fn ensure_same_space(expected: &ConfigSpace, found: &ConfigSpace) -> Result<()> {
    if expected != found {
        return Err(Error::SpaceMismatch {
            expected: expected.stage,
            found: found.stage,
        });
    }
    Ok(())
}

/// True iff every amplitude is real once one global phase is removed.
pub fn is_real_wave(psi: &WaveFunction) -> bool {
    let Some(pivot) = psi
        .amps
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
    else {
        return true;
    };
    if pivot.norm() <= TOL {
        return true;
    }
    let unphase = pivot.conj() / pivot.norm();
    psi.amps.iter().all(|a| (a * unphase).im.abs() <= TOL)
}

/// Product state `a ⊗ b` with `⊗`-joined labels; `a`'s labels vary slowest.
pub fn tensor(a: &WaveFunction, b: &WaveFunction) -> Result<WaveFunction> {
    tensor_with(a, b, LabelJoin::Tensor)
}

pub fn tensor_with(a: &WaveFunction, b: &WaveFunction, join: LabelJoin) -> Result<WaveFunction> {
    let space = product_space(&a.space, &b.space, join)?;
    let amps = a
        .amps
        .iter()
        .flat_map(|x| b.amps.iter().map(move |y| x * y))
        .collect();
    Ok(WaveFunction::raw(space, amps))
}

/// Product of two spaces at the first space's stage.
pub fn product_space(a: &ConfigSpace, b: &ConfigSpace, join: LabelJoin) -> Result<ConfigSpace> {
    let labels = a.labels.iter().flat_map(|x| {
        b.labels.iter().map(move |y| {
            let mut parts = components(x);
            parts.extend(components(y));
            join.join(&parts)
        })
    });
    ConfigSpace::new(a.stage, labels)
}

/// Kronecker product of two amplitude matrices.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// The structural kind of a [`StepOperator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Unitary,
    Isometry,
    Filter,
}

/// A projective filter, either in place on a space or as a stage change.
#[derive(Clone, Debug, PartialEq)]
pub enum Filter {
    /// Keep the listed labels.
    Keep(Vec<String>),
    /// Project onto a costate `⟨F|`, given by the ket amplitudes of `|F⟩`.
    ///
    /// When the labels are those of the whole space the projector is
    /// `|F⟩⟨F|`; when they are values of one factor of a product space the
    /// factor is contracted away.
    Costate(Vec<(String, C64)>),
}

impl Filter {
    pub fn keep<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Filter::Keep(labels.into_iter().map(Into::into).collect())
    }

    fn costate_norm_sqr(amps: &[(String, C64)]) -> f64 {
        amps.iter().map(|(_, a)| a.norm_sqr()).sum()
    }
}

/// Outcome of a projection that may annihilate the state.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditional {
    State(WaveFunction),
    /// The filter removed all amplitude; there is no conditional state.
    Empty,
}

impl Conditional {
    pub fn state(&self) -> Option<&WaveFunction> {
        match self {
            Conditional::State(s) => Some(s),
            Conditional::Empty => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Squared norm of the projected component.
    pub survival: f64,
    pub conditional: Conditional,
}

/// Complex amplitude matrix mapping one stage's space to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOperator {
    from: ConfigSpace,
    to: ConfigSpace,
    matrix: DMatrix<C64>,
    kind: StepKind,
    filter: Option<Filter>,
}

impl StepOperator {
    /// Builds an evolution step from a matrix `U[out, in]`, classifying it as
    /// unitary (square) or isometry (`U†U = 1`).
    pub fn new(from: ConfigSpace, to: ConfigSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != to.dim() || matrix.ncols() != from.dim() {
            return Err(Error::InvalidSpace(format!(
                "matrix is {}x{} but spaces need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                to.dim(),
                from.dim()
            )));
        }
        check_isometry(&from, &matrix)?;
        let kind = if from.dim() == to.dim() {
            StepKind::Unitary
        } else {
            StepKind::Isometry
        };
        Ok(Self {
            from,
            to,
            matrix,
            kind,
            filter: None,
        })
    }

    /// Builds a step from transition amplitudes `(in, amplitude, out)`.
    pub fn from_rules<'a, I>(from: ConfigSpace, to: ConfigSpace, rules: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, C64, &'a str)>,
    {
        let mut m = DMatrix::zeros(to.dim(), from.dim());
        for (input, amp, output) in rules {
            let j = from.require(input)?;
            let i = to.require(output)?;
            m[(i, j)] += amp;
        }
        Self::new(from, to, m)
    }

    pub fn identity(from: ConfigSpace, to_stage: usize) -> Self {
        let n = from.dim();
        Self {
            to: from.with_stage(to_stage),
            from,
            matrix: DMatrix::identity(n, n),
            kind: StepKind::Unitary,
            filter: None,
        }
    }

    /// Builds a filter step from `from` into stage `to_stage`.
    ///
    /// Keep filters shrink the space to the kept labels (in `from`'s order);
    /// costate filters contract one factor of a product space.
    pub fn filter(from: ConfigSpace, filter: Filter, to_stage: usize) -> Result<Self> {
        let (to, matrix) = match &filter {
            Filter::Keep(kept) => {
                if kept.is_empty() {
                    return Err(Error::InvalidFilter("empty keep set".into()));
                }
                let mut idx = Vec::with_capacity(kept.len());
                for label in kept {
                    let j = from.require(label)?;
                    if idx.contains(&j) {
                        return Err(Error::DuplicateLabel(label.clone()));
                    }
                    idx.push(j);
                }
                idx.sort_unstable();
                let to = ConfigSpace::new(to_stage, idx.iter().map(|&j| from.label(j)))?;
                let mut m = DMatrix::zeros(idx.len(), from.dim());
                for (i, &j) in idx.iter().enumerate() {
                    m[(i, j)] = C64::new(1.0, 0.0);
                }
                (to, m)
            }
            Filter::Costate(amps) => contraction(&from, amps, to_stage)?,
        };
        Ok(Self {
            from,
            to,
            matrix,
            kind: StepKind::Filter,
            filter: Some(filter),
        })
    }

    pub fn from_space(&self) -> &ConfigSpace {
        &self.from
    }

    pub fn to_space(&self) -> &ConfigSpace {
        &self.to
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kind(&self) -> StepKind {
        self.kind
    }

    pub fn filter_spec(&self) -> Option<&Filter> {
        self.filter.as_ref()
    }

    pub fn is_filter(&self) -> bool {
        self.kind == StepKind::Filter
    }

    /// Entry `U[out, in]` by label.
    pub fn amplitude(&self, output: &str, input: &str) -> Option<C64> {
        let i = self.to.index_of(output)?;
        let j = self.from.index_of(input)?;
        Some(self.matrix[(i, j)])
    }

    /// Conjugate-transpose action, mapping a ket on `to` back onto `from`.
    pub fn adjoint_apply(&self, phi: &WaveFunction) -> Result<WaveFunction> {
        ensure_same_space(&self.to, &phi.space)?;
        let v = self.matrix.adjoint() * phi.as_vector();
        Ok(WaveFunction::raw(self.from.clone(), v.iter().copied().collect()))
    }
}

fn check_isometry(from: &ConfigSpace, m: &DMatrix<C64>) -> Result<()> {
    let gram = m.adjoint() * m;
    for j in 0..m.ncols() {
        let d = gram[(j, j)].re;
        if (d - 1.0).abs() > TOL {
            return Err(Error::NotIsometry {
                column: from.label(j).to_string(),
                norm: d,
            });
        }
        for k in (j + 1)..m.ncols() {
            let o = gram[(j, k)].norm();
            if o > TOL {
                return Err(Error::NotOrthogonal {
                    first: from.label(j).to_string(),
                    second: from.label(k).to_string(),
                    overlap: o,
                });
            }
        }
    }
    Ok(())
}

/// Matrix of `⟨F| ⊗ 1` contracting the factor that carries the costate labels.
fn contraction(
    from: &ConfigSpace,
    amps: &[(String, C64)],
    to_stage: usize,
) -> Result<(ConfigSpace, DMatrix<C64>)> {
    check_costate(amps)?;
    let values: Vec<&str> = amps.iter().map(|(l, _)| l.as_str()).collect();
    let factor = from.factor_containing(&values).ok_or_else(|| {
        Error::InvalidFilter(format!(
            "no factor of stage {} carries labels {{{}}}",
            from.stage(),
            values.join(", ")
        ))
    })?;
    let join = LabelJoin::of(from.label(0));
    let rest = |label: &str| {
        let mut parts = components(label);
        parts.remove(factor);
        join.join(&parts)
    };
    let mut out: Vec<String> = Vec::new();
    for label in from.labels() {
        let r = rest(label);
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out.sort();
    let to = ConfigSpace::new(to_stage, out)?;
    let mut m = DMatrix::zeros(to.dim(), from.dim());
    for (j, label) in from.labels().iter().enumerate() {
        let value = components(label)[factor];
        if let Some((_, f)) = amps.iter().find(|(l, _)| l == value) {
            let i = to.require(&rest(label))?;
            m[(i, j)] = f.conj();
        }
    }
    Ok((to, m))
}

fn check_costate(amps: &[(String, C64)]) -> Result<()> {
    if amps.is_empty() {
        return Err(Error::InvalidFilter("empty costate".into()));
    }
    let mut seen = HashSet::new();
    for (l, _) in amps {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    let n = Filter::costate_norm_sqr(amps);
    if (n - 1.0).abs() > TOL {
        return Err(Error::InvalidFilter(format!(
            "costate not normalized (squared norm {n})"
        )));
    }
    Ok(())
}

/// `U·ψ` on the step's target space.
///
/// For filter steps the result is the unnormalized filtered state; its
/// squared norm is the survival probability.
pub fn apply_step(step: &StepOperator, psi: &WaveFunction) -> Result<WaveFunction> {
    ensure_same_space(&step.from, &psi.space)?;
    let v = &step.matrix * psi.as_vector();
    Ok(WaveFunction::raw(step.to.clone(), v.iter().copied().collect()))
}

/// Applies a filter to `psi` and returns the survival probability together
/// with the renormalized conditional state.
///
/// Keep filters and whole-space costates act in place; a costate on one
/// factor of a product space contracts that factor away.
pub fn project(filter: &Filter, psi: &WaveFunction) -> Result<Projection> {
    let projected = match filter {
        Filter::Keep(kept) => {
            let mut mask = vec![false; psi.space.dim()];
            for label in kept {
                mask[psi.space.require(label)?] = true;
            }
            let amps = psi
                .amps
                .iter()
                .zip(&mask)
                .map(|(a, &k)| if k { *a } else { C64::new(0.0, 0.0) })
                .collect();
            WaveFunction::raw(psi.space.clone(), amps)
        }
        Filter::Costate(amps) => {
            check_costate(amps)?;
            let whole = amps.iter().all(|(l, _)| psi.space.index_of(l).is_some());
            if whole {
                let f = WaveFunction::new(psi.space.clone(), amps.iter().map(|(l, a)| (l, *a)))?;
                let c = f.inner(psi)?;
                WaveFunction::raw(psi.space.clone(), f.amps.iter().map(|a| a * c).collect())
            } else {
                let (to, m) = contraction(&psi.space, amps, psi.space.stage())?;
                let v = m * psi.as_vector();
                WaveFunction::raw(to, v.iter().copied().collect())
            }
        }
    };
    let survival = projected.norm_sqr();
    let conditional = if survival <= TOL * TOL {
        Conditional::Empty
    } else {
        Conditional::State(projected.normalize()?)
    };
    Ok(Projection {
        survival,
        conditional,
    })
}

/// Probability weights over a [`ConfigSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    space: ConfigSpace,
    weights: Vec<f64>,
    normalized: bool,
}

impl Distribution {
    /// Builds a distribution whose weights sum to one within [`TOL`].
    pub fn new(space: ConfigSpace, weights: Vec<f64>) -> Result<Self> {
        let d = Self::subnormalized(space, weights)?;
        if !d.normalized {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {}",
                d.mass()
            )));
        }
        Ok(d)
    }

    /// Builds a distribution whose mass may be below one (e.g. the survival
    /// after a filter).
    pub fn subnormalized(space: ConfigSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.dim() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for {} labels",
                weights.len(),
                space.dim()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= -TOL && **w <= 1.0 + TOL)) {
            return Err(Error::InvalidDistribution(format!("weight {w} outside [0,1]")));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w.clamp(0.0, 1.0)).collect();
        let mass: f64 = weights.iter().sum();
        if mass > 1.0 + TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {mass}")));
        }
        Ok(Self {
            space,
            normalized: (mass - 1.0).abs() <= TOL,
            weights,
        })
    }

    pub fn point(space: ConfigSpace, label: &str) -> Result<Self> {
        let i = space.require(label)?;
        let mut w = vec![0.0; space.dim()];
        w[i] = 1.0;
        Self::new(space, w)
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, label: &str) -> Option<f64> {
        self.space.index_of(label).map(|i| self.weights[i])
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Indices of labels carrying positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > SUPPORT_EPS)
            .collect()
    }

    /// Largest absolute weight difference, or `None` on different labels.
    pub fn max_deviation(&self, other: &Distribution) -> Option<f64> {
        if self.space.labels != other.space.labels {
            return None;
        }
        Some(
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Rescales a sub-normalized distribution to unit mass.
    pub fn renormalize(&self) -> Result<Self> {
        let m = self.mass();
        if m <= SUPPORT_EPS {
            return Err(Error::InvalidDistribution("zero mass".into()));
        }
        Self::new(
            self.space.clone(),
            self.weights.iter().map(|w| w / m).collect(),
        )
    }

    /// Weights marginalized onto one factor of a product space.
    pub fn marginal(&self, factor: usize) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for (label, w) in self.space.labels.iter().zip(&self.weights) {
            let parts = components(label);
            let Some(v) = parts.get(factor) else { continue };
            match out.iter_mut().find(|(l, _)| l == v) {
                Some((_, acc)) => *acc += w,
                None => out.push((v.to_string(), *w)),
            }
        }
        out
    }
}
