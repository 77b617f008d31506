//! Two-state vectors: a forward state evolved from preselection paired with
//! a backward costate evolved from postselection, plus the quantities built
//! from them (ABL probabilities, weak values, combined guidance waves).

use nalgebra::DMatrix;

use crate::ensemble::{born_stages, ExperimentSpec, Kernel, ParticleChain, SurvivalRule};
use crate::error::{Error, Result};
use crate::guidance::{born_distribution, transport_with_preference};
use crate::state::{ensure_same_space, ConfigSpace, Distribution, WaveFunction, C64, TOL};

/// Forward state and backward costate at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStateVector {
    stage: usize,
    forward: WaveFunction,
    backward: WaveFunction,
    overlap: C64,
}

impl TwoStateVector {
    pub fn new(forward: WaveFunction, backward: WaveFunction) -> Result<Self> {
        ensure_same_space(forward.space(), backward.space())?;
        let overlap = backward.inner(&forward)?;
        Ok(Self {
            stage: forward.space().stage(),
            forward,
            backward,
            overlap,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn forward(&self) -> &WaveFunction {
        &self.forward
    }

    pub fn backward(&self) -> &WaveFunction {
        &self.backward
    }

    /// `⟨backward|forward⟩`.
    pub fn overlap(&self) -> C64 {
        self.overlap
    }

    pub fn space(&self) -> &ConfigSpace {
        self.forward.space()
    }

    fn check_operator(&self, op: &DMatrix<C64>) -> Result<()> {
        let n = self.space().dim();
        if op.shape() != (n, n) {
            return Err(Error::InvalidOperator(format!(
                "operator is {}x{} on a {n}-dimensional space",
                op.nrows(),
                op.ncols()
            )));
        }
        Ok(())
    }

    /// `⟨backward|op|forward⟩`.
    pub fn chain_amplitude(&self, op: &DMatrix<C64>) -> Result<C64> {
        self.check_operator(op)?;
        let f = nalgebra::DVector::from_column_slice(self.forward.amplitudes());
        let b = nalgebra::DVector::from_column_slice(self.backward.amplitudes());
        Ok(b.dotc(&(op * f)))
    }
}

/// Costates at every stage, from `post` on the final stage back to stage 0.
///
/// Rejects specs with filter steps: the interval must lie between two
/// measurements.
pub fn backward_evolve(post: &WaveFunction, spec: &ExperimentSpec) -> Result<Vec<WaveFunction>> {
    if let Some(t) = spec.steps().iter().position(|s| s.is_filter()) {
        return Err(Error::InvalidExperiment(format!(
            "step {t}->{} is a filter; two-state intervals must not contain measurements",
            t + 1
        )));
    }
    let last = spec.spaces().last().expect("at least one stage");
    ensure_same_space(last, post.space())?;
    let mut out = vec![post.clone()];
    for step in spec.steps().iter().rev() {
        let prev = out.last().expect("nonempty");
        out.push(step.adjoint_apply(prev)?);
    }
    out.reverse();
    Ok(out)
}

/// Two-state vectors at every stage of a filter-free spec.
pub fn two_state_vectors(spec: &ExperimentSpec, post: &WaveFunction) -> Result<Vec<TwoStateVector>> {
    let backward = backward_evolve(post, spec)?;
    let forward = born_stages(spec)?;
    forward
        .into_iter()
        .zip(backward)
        .map(|((f, _), b)| TwoStateVector::new(f.expect("no filters, so no empty stage"), b))
        .collect()
}

/// Projector onto the span of `labels`.
pub fn projector(space: &ConfigSpace, labels: &[&str]) -> Result<DMatrix<C64>> {
    let mut m = DMatrix::zeros(space.dim(), space.dim());
    for l in labels {
        let i = space.require(l)?;
        m[(i, i)] = C64::new(1.0, 0.0);
    }
    Ok(m)
}

/// The two-outcome family `{Π_S, 1 − Π_S}`, named `in S` / `not S`.
pub fn box_family(space: &ConfigSpace, labels: &[&str]) -> Result<Vec<(String, DMatrix<C64>)>> {
    let p = projector(space, labels)?;
    let rest = DMatrix::identity(space.dim(), space.dim()) - &p;
    let name = labels.join("+");
    Ok(vec![(format!("in {name}"), p), (format!("not {name}"), rest)])
}

/// ABL probabilities of an intermediate projective measurement.
pub fn abl_probability(tsv: &TwoStateVector, projectors: &[(String, DMatrix<C64>)]) -> Result<Vec<(String, f64)>> {
    if projectors.is_empty() {
        return Err(Error::InvalidOperator("empty projector family".into()));
    }
    let n = tsv.space().dim();
    let mut sum = DMatrix::<C64>::zeros(n, n);
    for (name, p) in projectors {
        tsv.check_operator(p)?;
        let idempotent = (p * p - p).iter().all(|x| x.norm() <= 1e-9);
        let hermitian = (p.adjoint() - p).iter().all(|x| x.norm() <= 1e-9);
        if !idempotent || !hermitian {
            return Err(Error::InvalidOperator(format!("'{name}' is not an orthogonal projector")));
        }
        sum += p;
    }
    let id = DMatrix::<C64>::identity(n, n);
    if (sum - id).iter().any(|x| x.norm() > 1e-9) {
        return Err(Error::InvalidOperator("projectors do not sum to the identity".into()));
    }
    let weights: Vec<f64> = projectors
        .iter()
        .map(|(_, p)| tsv.chain_amplitude(p).map(|a| a.norm_sqr()))
        .collect::<Result<_>>()?;
    let total: f64 = weights.iter().sum();
    if total <= TOL * TOL {
        return Err(Error::Incompatible("every chain amplitude vanishes".into()));
    }
    Ok(projectors
        .iter()
        .zip(weights)
        .map(|((name, _), w)| (name.clone(), w / total))
        .collect())
}

/// `⟨backward|op|forward⟩ / ⟨backward|forward⟩`.
pub fn weak_value(tsv: &TwoStateVector, op: &DMatrix<C64>) -> Result<C64> {
    let overlap = tsv.overlap();
    if overlap.norm() <= TOL {
        return Err(Error::UndefinedWeakValue(overlap.norm()));
    }
    Ok(tsv.chain_amplitude(op)? / overlap)
}

/// Normalized `forward + weight·e^{iφ}·backward`, with `e^{iφ}` the unit
/// phase of the overlap (1 when the overlap vanishes).
pub fn combined_guidance_wave_weighted(tsv: &TwoStateVector, weight: f64) -> Result<WaveFunction> {
    let o = tsv.overlap();
    let phase = if o.norm() <= TOL { C64::new(1.0, 0.0) } else { o / o.norm() };
    let amps: Vec<C64> = tsv
        .forward
        .amplitudes()
        .iter()
        .zip(tsv.backward.amplitudes())
        .map(|(f, b)| f + b * phase * weight)
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm <= TOL {
        return Err(Error::Incompatible("forward and backward waves cancel everywhere".into()));
    }
    WaveFunction::from_vec(tsv.space().clone(), amps.into_iter().map(|a| a / norm).collect())
}

/// Equal-weight combined guidance wave.
pub fn combined_guidance_wave(tsv: &TwoStateVector) -> Result<WaveFunction> {
    combined_guidance_wave_weighted(tsv, 1.0)
}

/// Exact particle dynamics guided by the per-stage combined waves.
#[derive(Clone, Debug, PartialEq)]
pub struct RetroRun {
    pub waves: Vec<WaveFunction>,
    pub distributions: Vec<Distribution>,
    pub chain: ParticleChain,
}

/// Guides a particle by the combined wave of each stage. Each combined wave
/// is renormalized on its own stage; transfers carry one stage's Born
/// distribution to the next, preferring transitions with positive flow.
pub fn retro_guided(spec: &ExperimentSpec, post: &WaveFunction) -> Result<RetroRun> {
    let tsvs = two_state_vectors(spec, post)?;
    let waves: Vec<WaveFunction> = tsvs.iter().map(combined_guidance_wave).collect::<Result<_>>()?;
    let distributions: Vec<Distribution> = waves.iter().map(born_distribution).collect::<Result<_>>()?;
    let mut kernels = Vec::with_capacity(spec.steps().len());
    for (t, step) in spec.steps().iter().enumerate() {
        let (a, b) = (&waves[t], &waves[t + 1]);
        let pref = DMatrix::from_fn(b.space().dim(), a.space().dim(), |i, j| {
            (b.amplitudes()[i].conj() * step.matrix()[(i, j)] * a.amplitudes()[j]).re
        });
        let transfer = transport_with_preference(&distributions[t], &distributions[t + 1], &pref, None)?;
        kernels.push(Kernel {
            survival: SurvivalRule::Always,
            transfer,
        });
    }
    let chain = ParticleChain::new(distributions[0].clone(), kernels)?;
    Ok(RetroRun {
        waves,
        distributions,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{build_single_mzi, three_box_atom_states};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn single_mzi_costates_at_t1() {
        let spec = build_single_mzi().unwrap();
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let plus = WaveFunction::basis(spec.spaces()[2].clone(), "+").unwrap();
        let minus = WaveFunction::basis(spec.spaces()[2].clone(), "-").unwrap();
        let b = backward_evolve(&plus, &spec).unwrap();
        assert!((b[1].amplitudes()[0] - c(r2)).norm() < 1e-12);
        assert!((b[1].amplitudes()[1] - c(r2)).norm() < 1e-12);
        let b = backward_evolve(&minus, &spec).unwrap();
        assert!((b[1].amplitudes()[1] - c(-r2)).norm() < 1e-12);
    }

    #[test]
    fn minus_post_cancels_the_right_arm() {
        let spec = build_single_mzi().unwrap();
        let minus = WaveFunction::basis(spec.spaces()[2].clone(), "-").unwrap();
        let tsvs = two_state_vectors(&spec, &minus).unwrap();
        let w = combined_guidance_wave(&tsvs[1]).unwrap();
        assert!((w.amplitudes()[0] - c(1.0)).norm() < 1e-12);
        assert!(w.amplitudes()[1].norm() < 1e-12);
        let plus = WaveFunction::basis(spec.spaces()[2].clone(), "+").unwrap();
        let w = combined_guidance_wave(&two_state_vectors(&spec, &plus).unwrap()[1]).unwrap();
        assert!((w.amplitudes()[1] - c(std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn three_box_weak_values_and_abl() {
        let (pre, post) = three_box_atom_states().unwrap();
        let tsv = TwoStateVector::new(pre, post).unwrap();
        let s = tsv.space().clone();
        let wv = |l: &str| weak_value(&tsv, &projector(&s, &[l]).unwrap()).unwrap();
        assert!((wv("A") - c(1.0)).norm() < 1e-12);
        assert!((wv("B") - c(1.0)).norm() < 1e-12);
        assert!((wv("C") - c(-1.0)).norm() < 1e-12);
        let abl = abl_probability(&tsv, &box_family(&s, &["C"]).unwrap()).unwrap();
        assert!((abl[0].1 - 0.2).abs() < 1e-12);
        assert_eq!(abl[0].0, "in C");
    }

    #[test]
    fn cancelling_waves_are_rejected() {
        let s = ConfigSpace::new(0, ["L", "R"]).unwrap();
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let f = WaveFunction::new(s.clone(), [("L", c(r2)), ("R", c(r2))]).unwrap();
        let b = WaveFunction::new(s, [("L", c(-r2)), ("R", c(-r2))]).unwrap();
        let tsv = TwoStateVector::new(f, b).unwrap();
        assert!(tsv.overlap().norm() > 0.5);
        // phase-aligned sums never cancel; a negative weight can
        assert!(combined_guidance_wave(&tsv).is_ok());
        assert!(combined_guidance_wave_weighted(&tsv, -1.0).is_err());
    }
}
