//! Serializable reports. Every report carries `schema: 1`.

use pilotwave::audit::{audit, chi_square, chi_square_quantile, AuditReport, Conclusion};
use pilotwave::ensemble::{propagate_exact, ExperimentSpec, TrajectoryEnsemble};
use pilotwave::experiments::three_box_atom_states;
use pilotwave::state::{ConfigSpace, Distribution, WaveFunction, C64};
use pilotwave::twostate::{
    abl_probability, combined_guidance_wave, projector, retro_guided, two_state_vectors, weak_value,
    TwoStateVector,
};
use serde::{Deserialize, Serialize};

use crate::input::CliError;

pub const SCHEMA: u32 = 1;
pub const TOOL: &str = "pwl";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: u32,
    pub tool: String,
    pub version: String,
}

impl Default for Header {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            tool: TOOL.into(),
            version: VERSION.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub labels: Vec<String>,
    /// `[re, im]` per label; absent once the wave is annihilated.
    pub wave: Option<Vec<[f64; 2]>>,
    pub born: Option<Vec<f64>>,
    pub particle: Option<Vec<f64>>,
    pub survival: f64,
    pub particle_survival: f64,
    pub repaired: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledStage {
    pub stage: usize,
    pub reached: u64,
    pub counts: Vec<u64>,
    pub empirical: Option<Vec<f64>>,
    pub chi_square: Option<f64>,
    pub dof: usize,
    pub quantile: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n: u64,
    pub seed: u64,
    pub survivors: u64,
    pub survival_fraction: f64,
    /// Binomial standard deviation of the survival fraction around the
    /// exact particle survival.
    pub survival_sigma: f64,
    pub stages: Vec<SampledStage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub header: Header,
    pub scenario: String,
    pub policy: String,
    pub stages: Vec<StageReport>,
    pub survival: f64,
    pub final_labels: Vec<String>,
    pub final_distribution: Option<Vec<f64>>,
    pub ensemble: Option<EnsembleReport>,
    pub notes: Vec<String>,
}

fn wave_pairs(w: &WaveFunction) -> Vec<[f64; 2]> {
    w.amplitudes().iter().map(|a| [a.re, a.im]).collect()
}

fn weights(d: &Option<Distribution>) -> Option<Vec<f64>> {
    d.as_ref().map(|d| d.weights().to_vec())
}

/// Notes on modelling choices that differ from published tables.
pub fn scenario_notes(spec: &ExperimentSpec) -> Vec<String> {
    let name = spec.name();
    let mut notes = Vec::new();
    if name.starts_with("crossed_mzi") {
        notes.push(
            "crossing-stage particle table follows the step operator: (L,r) and (R,l) pass through, \
             (L,l)->(B,b) and (R,r)->(T,t); a tabulated listing with (R,l)+(R,r) would not transport \
             the Born distribution"
                .into(),
        );
    }
    if name.starts_with("three_boxes") {
        notes.push(
            "the 1/9 factor of the postselected state is its survival probability; the conditional \
             photon state is ((a,R)+(b,R))/sqrt2"
                .into(),
        );
    }
    notes
}

/// Exact propagation, plus sampled statistics when an ensemble is given.
pub fn run_report(spec: &ExperimentSpec, ensemble: Option<&TrajectoryEnsemble>) -> Result<RunReport, CliError> {
    let exact = propagate_exact(spec)?;
    let stages: Vec<StageReport> = exact
        .stages
        .iter()
        .map(|s| StageReport {
            stage: s.stage,
            labels: spec.spaces()[s.stage].labels().to_vec(),
            wave: s.wave.as_ref().map(wave_pairs),
            born: weights(&s.born),
            particle: weights(&s.particle),
            survival: s.survival,
            particle_survival: s.particle_survival,
            repaired: s.repaired,
        })
        .collect();
    let last = exact.final_stage();
    let mut notes = scenario_notes(spec);
    for s in &exact.stages {
        if s.repaired {
            notes.push(format!("negative-flow repair used for the transfer into stage {}", s.stage));
        }
    }
    let ensemble = ensemble.map(|ens| {
        let counts = ens.counts();
        let n = ens.len() as u64;
        let p = last.particle_survival;
        let stages = counts
            .iter()
            .enumerate()
            .map(|(t, c)| {
                let reached = ens.reached(t);
                let expected = exact.stages[t].particle.as_ref();
                let (chi, dof) = match expected {
                    Some(e) if reached > 0 => {
                        let (stat, dof) = chi_square(c, e.weights());
                        (Some(stat), dof)
                    }
                    _ => (None, 0),
                };
                SampledStage {
                    stage: t,
                    reached,
                    counts: c.clone(),
                    empirical: ens.empirical(t).map(|d| d.weights().to_vec()),
                    chi_square: chi.filter(|_| dof > 0),
                    dof,
                    quantile: (dof > 0).then(|| chi_square_quantile(dof)),
                }
            })
            .collect();
        EnsembleReport {
            n,
            seed: ens.seed,
            survivors: ens.survivor_count(),
            survival_fraction: ens.survival_fraction(),
            survival_sigma: if n > 0 { (p * (1.0 - p) / n as f64).sqrt() } else { 0.0 },
            stages,
        }
    });
    Ok(RunReport {
        header: Header::default(),
        scenario: spec.name().to_string(),
        policy: spec.policy().to_string(),
        stages,
        survival: last.survival,
        final_labels: spec.spaces().last().expect("stage 0").labels().to_vec(),
        final_distribution: weights(&last.particle),
        ensemble,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditOutput {
    #[serde(flatten)]
    pub header: Header,
    pub n: u64,
    pub seed: u64,
    pub policy: String,
    #[serde(flatten)]
    pub report: AuditReport,
    pub notes: Vec<String>,
}

pub fn audit_output(spec: &ExperimentSpec, ensemble: &TrajectoryEnsemble) -> Result<AuditOutput, CliError> {
    Ok(AuditOutput {
        header: Header::default(),
        n: ensemble.len() as u64,
        seed: ensemble.seed,
        policy: spec.policy().to_string(),
        report: audit(spec, ensemble)?,
        notes: scenario_notes(spec),
    })
}

impl AuditOutput {
    pub fn conclusion(&self) -> Conclusion {
        self.report.conclusion
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStateStage {
    pub stage: usize,
    pub labels: Vec<String>,
    pub forward: Vec<[f64; 2]>,
    pub backward: Vec<[f64; 2]>,
    pub overlap: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    pub operator: String,
    pub stage: usize,
    pub value: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedStage {
    pub stage: usize,
    pub labels: Vec<String>,
    pub wave: Vec<[f64; 2]>,
    pub distribution: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStateReport {
    #[serde(flatten)]
    pub header: Header,
    pub scenario: String,
    pub post: String,
    pub stage: usize,
    pub vectors: Vec<TwoStateStage>,
    pub abl: Option<Vec<Outcome>>,
    pub weak: Option<WeakReport>,
    pub combined_guidance: Option<Vec<GuidedStage>>,
    pub notes: Vec<String>,
}

/// What to compute in a two-state report.
#[derive(Clone, Debug, Default)]
pub struct TwoStateRequest {
    /// Post-selected label (or `plus` / `minus`) on the final stage.
    pub post: Option<String>,
    /// Stage for ABL and weak values; the first intermediate stage by default.
    pub stage: Option<usize>,
    /// Labels of the box whose two-outcome family is evaluated.
    pub abl: Option<Vec<String>>,
    /// Operator spelled `PiX` or `PiX+Y` (projector), or `I`.
    pub weak: Option<String>,
    pub combined_guidance: bool,
}

fn post_label(space: &ConfigSpace, post: &str) -> Result<String, CliError> {
    let label = match post {
        "plus" => "+",
        "minus" => "-",
        other => other,
    };
    space.require(label)?;
    Ok(label.to_string())
}

fn operator(space: &ConfigSpace, spelled: &str) -> Result<nalgebra::DMatrix<C64>, CliError> {
    if matches!(spelled, "I" | "identity") {
        return Ok(nalgebra::DMatrix::identity(space.dim(), space.dim()));
    }
    let labels = spelled.strip_prefix("Pi").unwrap_or(spelled);
    let labels: Vec<&str> = labels.split('+').collect();
    Ok(projector(space, &labels)?)
}

fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

fn tsv_stage(stage: usize, tsv: &TwoStateVector) -> TwoStateStage {
    TwoStateStage {
        stage,
        labels: tsv.space().labels().to_vec(),
        forward: wave_pairs(tsv.forward()),
        backward: wave_pairs(tsv.backward()),
        overlap: pair(tsv.overlap()),
    }
}

/// Two-state quantities. The boxes use their atom-only pre/post pair; other
/// experiments evolve the post state backward through the whole spec.
pub fn twostate_report(spec: &ExperimentSpec, req: &TwoStateRequest) -> Result<TwoStateReport, CliError> {
    let mut notes = Vec::new();
    let (tsvs, post, guided) = if spec.name().starts_with("three_boxes") {
        if req.post.is_some() {
            return Err(CliError::Usage("three_boxes has a fixed post state".into()));
        }
        let (pre, post) = three_box_atom_states()?;
        let tsv = TwoStateVector::new(pre, post)?;
        let guided = if req.combined_guidance {
            let w = combined_guidance_wave(&tsv)?;
            Some(vec![GuidedStage {
                stage: 0,
                labels: w.space().labels().to_vec(),
                wave: wave_pairs(&w),
                distribution: w.born_weights(),
            }])
        } else {
            None
        };
        (vec![tsv], "(A+B-C)/sqrt3".to_string(), guided)
    } else {
        let last = spec.spaces().last().expect("stage 0").clone();
        let label = post_label(&last, req.post.as_deref().unwrap_or("plus"))?;
        let post = WaveFunction::basis(last, &label)?;
        let tsvs = two_state_vectors(spec, &post)?;
        let guided = if req.combined_guidance {
            let run = retro_guided(spec, &post)?;
            notes.push("combined guidance waves are renormalized at every stage".into());
            Some(
                run.waves
                    .iter()
                    .zip(&run.distributions)
                    .enumerate()
                    .map(|(t, (w, d))| GuidedStage {
                        stage: t,
                        labels: w.space().labels().to_vec(),
                        wave: wave_pairs(w),
                        distribution: d.weights().to_vec(),
                    })
                    .collect(),
            )
        } else {
            None
        };
        (tsvs, label, guided)
    };
    let stage = req.stage.unwrap_or(if tsvs.len() > 1 { 1 } else { 0 });
    let tsv = tsvs
        .get(stage)
        .ok_or_else(|| CliError::Usage(format!("no stage {stage}; the interval has {} stages", tsvs.len())))?;
    let abl = match &req.abl {
        Some(labels) => {
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            let family = pilotwave::twostate::box_family(tsv.space(), &labels)?;
            Some(
                abl_probability(tsv, &family)?
                    .into_iter()
                    .map(|(name, probability)| Outcome { name, probability })
                    .collect(),
            )
        }
        None => None,
    };
    let weak = match &req.weak {
        Some(op) => {
            let m = operator(tsv.space(), op)?;
            Some(WeakReport {
                operator: op.clone(),
                stage,
                value: pair(weak_value(tsv, &m)?),
            })
        }
        None => None,
    };
    Ok(TwoStateReport {
        header: Header::default(),
        scenario: spec.name().to_string(),
        post,
        stage,
        vectors: tsvs.iter().enumerate().map(|(t, v)| tsv_stage(t, v)).collect(),
        abl,
        weak,
        combined_guidance: guided,
        notes,
    })
}
