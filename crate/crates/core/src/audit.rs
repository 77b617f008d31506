//! Mechanical checks of the four guidance principles:
//!
//! - (A) the wave evolves independently of the particle,
//! - (B) the particle ensemble follows the Born distribution,
//! - (C) real waves under identity dynamics leave the particle at rest,
//! - (D) transitions respect a declared locality/momentum mask.
//!
//! Every violation carries evidence that can be re-derived independently:
//! cut certificates by summation, trajectories by replay from their seed,
//! distribution mismatches by recomputation.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::{propagate_exact, replay, ExactRun, ExperimentSpec, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::guidance::{feasibility_check, Certificate, FeasibilityResult};
use crate::state::{components, is_real_wave, Distribution, SUPPORT_EPS};

/// Quantile used for the chi-square acceptance test.
pub const CHI_SQUARE_LEVEL: f64 = 0.9999;

/// Upper `CHI_SQUARE_LEVEL` quantile with `dof` degrees of freedom.
pub fn chi_square_quantile(dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(CHI_SQUARE_LEVEL)
}

/// Pearson statistic of `counts` against `expected` probabilities, over
/// labels with positive expectation. Returns `(statistic, dof)`.
pub fn chi_square(counts: &[u64], expected: &[f64]) -> (f64, usize) {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells: usize = 0;
    for (&c, &p) in counts.iter().zip(expected) {
        if p > SUPPORT_EPS {
            let e = p * n as f64;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    (stat, cells.saturating_sub(1))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// Runs occupying labels whose Born weight is zero.
    ZeroAmplitudeOccupancy {
        stage: usize,
        labels: Vec<String>,
        count: u64,
        seed: u64,
        runs: Vec<u64>,
    },
    /// Empirical counts too far from the Born distribution.
    ChiSquare {
        stage: usize,
        labels: Vec<String>,
        counts: Vec<u64>,
        statistic: f64,
        dof: usize,
        quantile: f64,
    },
    /// A transfer column that moves the particle although a conserved
    /// component of a real wave says it must stay.
    Column {
        step: usize,
        input: String,
        output: String,
        probability: f64,
        component: usize,
    },
    /// Runs whose transition leaves the mask.
    Trajectories {
        step: usize,
        count: u64,
        of: u64,
        fraction: f64,
        seed: u64,
        runs: Vec<u64>,
    },
    /// No transfer supported on the mask carries the Born marginals.
    Certificate { step: usize, certificate: Certificate },
}

/// Cap on run indices kept as evidence.
const MAX_EVIDENCE_RUNS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds { detail: String },
    Violated { detail: String, evidence: Vec<Evidence> },
    NotApplicable { detail: String },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    pub fn violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds { .. } => "holds",
            Verdict::Violated { .. } => "violated",
            Verdict::NotApplicable { .. } => "not-applicable",
        }
    }
}

fn check_spaces(spec: &ExperimentSpec, ensemble: &TrajectoryEnsemble) -> Result<()> {
    let same = spec.spaces().len() == ensemble.spaces.len()
        && spec
            .spaces()
            .iter()
            .zip(&ensemble.spaces)
            .all(|(a, b)| a.labels() == b.labels());
    if same {
        Ok(())
    } else {
        Err(Error::InvalidExperiment(format!(
            "ensemble '{}' does not match the stages of '{}'",
            ensemble.name,
            spec.name()
        )))
    }
}

fn evidence_runs(ensemble: &TrajectoryEnsemble, hit: impl Fn(&crate::ensemble::Trajectory) -> bool) -> (u64, Vec<u64>) {
    let mut count = 0;
    let mut runs = Vec::new();
    for tr in &ensemble.trajectories {
        if hit(tr) {
            count += 1;
            if runs.len() < MAX_EVIDENCE_RUNS {
                runs.push(tr.run_index);
            }
        }
    }
    (count, runs)
}

/// Principle (B): empirical distributions against the exact Born
/// distributions at every stage.
pub fn check_born(spec: &ExperimentSpec, ensemble: &TrajectoryEnsemble) -> Result<Verdict> {
    check_spaces(spec, ensemble)?;
    if ensemble.is_empty() {
        return Ok(Verdict::NotApplicable {
            detail: "empty ensemble".into(),
        });
    }
    let exact = propagate_exact(spec)?;
    born_against(&exact, ensemble)
}

fn born_against(exact: &ExactRun, ensemble: &TrajectoryEnsemble) -> Result<Verdict> {
    let counts = ensemble.counts();
    let mut evidence = Vec::new();
    let mut checked = 0;
    for (t, stage) in exact.stages.iter().enumerate() {
        let Some(born) = &stage.born else { continue };
        if counts[t].iter().sum::<u64>() == 0 {
            continue;
        }
        checked += 1;
        let zero: Vec<usize> = (0..born.space().dim())
            .filter(|&i| born.weights()[i] <= SUPPORT_EPS && counts[t][i] > 0)
            .collect();
        if !zero.is_empty() {
            let (count, runs) = evidence_runs(ensemble, |tr| tr.at(t).is_some_and(|l| zero.contains(&l)));
            evidence.push(Evidence::ZeroAmplitudeOccupancy {
                stage: t,
                labels: zero.iter().map(|&i| born.space().label(i).to_string()).collect(),
                count,
                seed: ensemble.seed,
                runs,
            });
            continue;
        }
        let (statistic, dof) = chi_square(&counts[t], born.weights());
        if dof == 0 {
            continue;
        }
        let quantile = chi_square_quantile(dof);
        if statistic > quantile {
            evidence.push(Evidence::ChiSquare {
                stage: t,
                labels: born.space().labels().to_vec(),
                counts: counts[t].clone(),
                statistic,
                dof,
                quantile,
            });
        }
    }
    Ok(if evidence.is_empty() {
        Verdict::Holds {
            detail: format!("{checked} stages match the Born distribution"),
        }
    } else {
        let stages: Vec<String> = evidence
            .iter()
            .map(|e| match e {
                Evidence::ZeroAmplitudeOccupancy { stage, .. } | Evidence::ChiSquare { stage, .. } => {
                    format!("t{stage}")
                }
                _ => unreachable!("born evidence"),
            })
            .collect();
        Verdict::Violated {
            detail: format!("particle ensemble departs from the Born distribution at {}", stages.join(", ")),
            evidence,
        }
    })
}

/// Components of the label that the step leaves untouched, for every
/// transition with nonzero amplitude.
fn conserved_components(spec: &ExperimentSpec, t: usize) -> Vec<usize> {
    let step = &spec.steps()[t];
    let from = step.from_space();
    let to = step.to_space();
    let arity = |l: &str| components(l).len();
    let k_max = from
        .labels()
        .iter()
        .chain(to.labels())
        .map(|l| arity(l))
        .min()
        .unwrap_or(0);
    let mut keep: Vec<usize> = (0..k_max).collect();
    let m = step.matrix();
    for j in 0..from.dim() {
        for i in 0..to.dim() {
            if m[(i, j)].norm() > SUPPORT_EPS {
                let ci = components(from.label(j));
                let co = components(to.label(i));
                keep.retain(|&k| ci[k] == co[k]);
            }
        }
    }
    keep
}

/// Principle (C): where the wave is real and the step leaves a component of
/// the configuration unchanged, the transfer must leave it unchanged too.
pub fn check_stationarity(spec: &ExperimentSpec) -> Result<Verdict> {
    let exact = propagate_exact(spec)?;
    let mut checked = Vec::new();
    let mut evidence = Vec::new();
    for (t, step) in spec.steps().iter().enumerate() {
        if step.is_filter() {
            continue;
        }
        let Some(psi) = &exact.stages[t].wave else { continue };
        if !is_real_wave(psi) {
            continue;
        }
        let conserved = conserved_components(spec, t);
        if conserved.is_empty() {
            continue;
        }
        checked.push(format!("t{t}->t{}", t + 1));
        let transfer = &exact.chain.kernels()[t].transfer;
        let from = step.from_space();
        let to = step.to_space();
        'cols: for j in psi.born_weights().iter().enumerate().filter(|(_, w)| **w > SUPPORT_EPS).map(|(j, _)| j) {
            for i in 0..to.dim() {
                let p = transfer.entries()[(i, j)];
                if p <= SUPPORT_EPS {
                    continue;
                }
                let ci = components(from.label(j));
                let co = components(to.label(i));
                if let Some(&k) = conserved.iter().find(|&&k| ci[k] != co[k]) {
                    evidence.push(Evidence::Column {
                        step: t,
                        input: from.label(j).to_string(),
                        output: to.label(i).to_string(),
                        probability: p,
                        component: k,
                    });
                    continue 'cols;
                }
            }
        }
    }
    Ok(if checked.is_empty() {
        Verdict::NotApplicable {
            detail: "no step has a real wave with a conserved component".into(),
        }
    } else if evidence.is_empty() {
        Verdict::Holds {
            detail: format!("conserved components stay put at {}", checked.join(", ")),
        }
    } else {
        Verdict::Violated {
            detail: format!("transfer moves a conserved component at {} column(s)", evidence.len()),
            evidence,
        }
    })
}

/// Principle (D): counts sampled transitions that leave the step masks.
pub fn check_locality(spec: &ExperimentSpec, ensemble: &TrajectoryEnsemble) -> Result<Verdict> {
    check_spaces(spec, ensemble)?;
    if !spec.has_masks() {
        return Ok(Verdict::NotApplicable {
            detail: "no locality mask declared".into(),
        });
    }
    if ensemble.is_empty() {
        return Ok(Verdict::NotApplicable {
            detail: "empty ensemble".into(),
        });
    }
    let mut evidence = Vec::new();
    let mut checked = Vec::new();
    for (t, mask) in spec.masks().iter().enumerate() {
        let Some(mask) = mask else { continue };
        checked.push(format!("t{t}->t{}", t + 1));
        let leaves = |tr: &crate::ensemble::Trajectory| match (tr.at(t), tr.at(t + 1)) {
            (Some(a), Some(b)) => !mask.allows_index(b, a),
            _ => false,
        };
        let (count, runs) = evidence_runs(ensemble, leaves);
        if count > 0 {
            let of = ensemble.reached(t + 1);
            evidence.push(Evidence::Trajectories {
                step: t,
                count,
                of,
                fraction: count as f64 / of as f64,
                seed: ensemble.seed,
                runs,
            });
        }
    }
    Ok(if evidence.is_empty() {
        Verdict::Holds {
            detail: format!("all sampled transitions respect the masks at {}", checked.join(", ")),
        }
    } else {
        Verdict::Violated {
            detail: format!("{} step(s) with transitions outside the mask", evidence.len()),
            evidence,
        }
    })
}

/// Feasibility under the mask of one step, on the exact Born marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFeasibility {
    pub step: usize,
    pub rho_in: Distribution,
    pub rho_out: Distribution,
    pub result: FeasibilityResult,
}

/// Feasibility of every masked step. The source is the Born distribution of
/// the particles that survive the step; the target is the Born distribution
/// of the next stage's conditional wave.
pub fn feasibility_by_step(spec: &ExperimentSpec) -> Result<Vec<StepFeasibility>> {
    let exact = propagate_exact(spec)?;
    let mut out = Vec::new();
    for (t, mask) in spec.masks().iter().enumerate() {
        let Some(mask) = mask else { continue };
        let (Some(born_in), Some(born_out)) = (&exact.stages[t].born, &exact.stages[t + 1].born) else {
            continue;
        };
        let rule = &exact.chain.kernels()[t].survival;
        let w: Vec<f64> = born_in
            .weights()
            .iter()
            .enumerate()
            .map(|(j, p)| p * rule.probability(j))
            .collect();
        let rho_in = Distribution::subnormalized(born_in.space().clone(), w)?.renormalize()?;
        let rho_out = born_out.clone();
        let result = feasibility_check(&rho_in, &rho_out, mask)?;
        out.push(StepFeasibility {
            step: t,
            rho_in,
            rho_out,
            result,
        });
    }
    Ok(out)
}

/// The first masked step at which no Born-respecting transfer exists.
pub fn incompatibility_certificate(spec: &ExperimentSpec) -> Result<Option<StepFeasibility>> {
    Ok(feasibility_by_step(spec)?.into_iter().find(|s| !s.result.is_feasible()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    /// Every audited principle holds.
    Consistent,
    /// Some principle is violated but no certificate was found.
    Violated,
    /// A cut certificate shows the principles cannot all hold.
    Incompatible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipleVerdict {
    pub principle: char,
    pub name: &'static str,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub scenario: String,
    pub principles: Vec<PrincipleVerdict>,
    pub certificate: Option<Evidence>,
    pub conclusion: Conclusion,
}

/// Runs every principle check and the certificate search.
pub fn audit(spec: &ExperimentSpec, ensemble: &TrajectoryEnsemble) -> Result<AuditReport> {
    let a = Verdict::Holds {
        detail: "wave evolution never reads particle labels".into(),
    };
    let principles = vec![
        PrincipleVerdict {
            principle: 'A',
            name: "autonomous wave evolution",
            verdict: a,
        },
        PrincipleVerdict {
            principle: 'B',
            name: "Born distribution",
            verdict: check_born(spec, ensemble)?,
        },
        PrincipleVerdict {
            principle: 'C',
            name: "stationarity for real waves",
            verdict: check_stationarity(spec)?,
        },
        PrincipleVerdict {
            principle: 'D',
            name: "locality and momentum conservation",
            verdict: check_locality(spec, ensemble)?,
        },
    ];
    let certificate = incompatibility_certificate(spec)?.map(|s| Evidence::Certificate {
        step: s.step,
        certificate: s.result.certificate().expect("infeasible").clone(),
    });
    let conclusion = if certificate.is_some() {
        Conclusion::Incompatible
    } else if principles.iter().any(|p| p.verdict.violated()) {
        Conclusion::Violated
    } else {
        Conclusion::Consistent
    };
    Ok(AuditReport {
        scenario: spec.name().to_string(),
        principles,
        certificate,
        conclusion,
    })
}

impl Evidence {
    /// Re-derives the evidence from the spec alone: certificates by
    /// summation, trajectories by replay, distributions by recomputation.
    pub fn reverify(&self, spec: &ExperimentSpec) -> Result<bool> {
        match self {
            Evidence::Certificate { step, certificate } => {
                let Some(mask) = spec.masks().get(*step).and_then(Option::as_ref) else {
                    return Ok(false);
                };
                let located = feasibility_by_step(spec)?;
                let Some(s) = located.iter().find(|s| s.step == *step) else {
                    return Ok(false);
                };
                Ok(certificate.verify(&s.rho_in, &s.rho_out, mask))
            }
            Evidence::Trajectories { step, seed, runs, .. } => {
                let Some(mask) = spec.masks().get(*step).and_then(Option::as_ref) else {
                    return Ok(false);
                };
                for &r in runs {
                    let tr = replay(spec, *seed, r)?;
                    match (tr.at(*step), tr.at(step + 1)) {
                        (Some(a), Some(b)) if !mask.allows_index(b, a) => {}
                        _ => return Ok(false),
                    }
                }
                Ok(!runs.is_empty())
            }
            Evidence::ZeroAmplitudeOccupancy {
                stage, labels, seed, runs, ..
            } => {
                let exact = propagate_exact(spec)?;
                let Some(born) = &exact.stages[*stage].born else {
                    return Ok(false);
                };
                let zero = labels.iter().all(|l| born.weight(l).is_some_and(|w| w <= SUPPORT_EPS));
                for &r in runs {
                    let tr = replay(spec, *seed, r)?;
                    let hit = tr
                        .at(*stage)
                        .is_some_and(|i| labels.iter().any(|l| l == born.space().label(i)));
                    if !hit {
                        return Ok(false);
                    }
                }
                Ok(zero && !runs.is_empty())
            }
            Evidence::ChiSquare {
                stage,
                counts,
                statistic,
                dof,
                ..
            } => {
                let exact = propagate_exact(spec)?;
                let Some(born) = &exact.stages[*stage].born else {
                    return Ok(false);
                };
                let (s, d) = chi_square(counts, born.weights());
                Ok(d == *dof && (s - statistic).abs() <= 1e-9 * s.max(1.0) && s > chi_square_quantile(d))
            }
            Evidence::Column {
                step,
                input,
                output,
                component,
                ..
            } => {
                let exact = propagate_exact(spec)?;
                let t = &exact.chain.kernels()[*step].transfer;
                let moved = components(input)[*component] != components(output)[*component];
                Ok(moved && t.probability(output, input).is_some_and(|p| p > SUPPORT_EPS))
            }
        }
    }
}
