//! Built-in scenarios: the single Mach-Zehnder interferometer, two crossed
//! interferometers with postselection, and the three-box experiment.
//!
//! Every beam splitter uses the same sign convention: the first input goes
//! to the even superposition, the second input picks up the minus sign on the
//! second output.

use std::fmt;
use std::str::FromStr;

use crate::ensemble::{ExperimentSpec, PolicyKind};
use crate::error::{Error, Result};
use crate::guidance::{SupportMask, TransferMatrix};
use crate::state::{components, ConfigSpace, Filter, StepOperator, WaveFunction, C64};

const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Canonical scenario identifiers.
pub const SCENARIOS: &[&str] = &[
    "single_mzi",
    "crossed_mzi",
    "crossed_mzi_obstacle_after_crossing",
    "crossed_mzi_localized_blocker",
    "three_boxes",
];

/// Which support masks to attach to a built-in scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskPreset {
    /// The masks the scenario ships with (locality rule for the boxes).
    #[default]
    Default,
    None,
    /// Momentum-conserving straight-through at the final splitters.
    Straight,
}

impl FromStr for MaskPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(MaskPreset::Default),
            "none" => Ok(MaskPreset::None),
            "straight" => Ok(MaskPreset::Straight),
            other => Err(Error::InvalidExperiment(format!("unknown mask preset '{other}'"))),
        }
    }
}

/// Variants of the crossed interferometers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossedVariant {
    Plain,
    /// Absorber on particle 1's left arm after the crossing region.
    ObstacleAfterCrossing,
    /// Absorber on particle 1's left arm before the crossing region.
    LocalizedBlocker,
}

impl FromStr for CrossedVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(CrossedVariant::Plain),
            "obstacle_after_crossing" => Ok(CrossedVariant::ObstacleAfterCrossing),
            "localized_blocker" => Ok(CrossedVariant::LocalizedBlocker),
            other => Err(Error::UnknownScenario(format!("crossed_mzi variant '{other}'"))),
        }
    }
}

impl fmt::Display for CrossedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrossedVariant::Plain => "plain",
            CrossedVariant::ObstacleAfterCrossing => "obstacle_after_crossing",
            CrossedVariant::LocalizedBlocker => "localized_blocker",
        })
    }
}

/// Looks up a scenario by its canonical name.
pub fn scenario(name: &str, masks: MaskPreset) -> Result<ExperimentSpec> {
    match name {
        "single_mzi" => single_mzi_with(masks),
        "crossed_mzi" => crossed_mzi_with(CrossedVariant::Plain, masks),
        "crossed_mzi_obstacle_after_crossing" => crossed_mzi_with(CrossedVariant::ObstacleAfterCrossing, masks),
        "crossed_mzi_localized_blocker" => crossed_mzi_with(CrossedVariant::LocalizedBlocker, masks),
        "three_boxes" => match masks {
            MaskPreset::Default => build_three_boxes(),
            MaskPreset::None => Ok(build_three_boxes()?.without_masks()),
            MaskPreset::Straight => Err(Error::InvalidExperiment(
                "three_boxes has no straight-through mask".into(),
            )),
        },
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

fn space(stage: usize, labels: &[&str]) -> ConfigSpace {
    ConfigSpace::sorted(stage, labels.iter().copied()).expect("built-in labels are valid")
}

/// First splitter: `+ -> (L+R)/√2`, `- -> (L-R)/√2`, on arbitrary labels.
fn splitter_rules<'a>(p: &'a str, m: &'a str, l: &'a str, r: &'a str) -> [(&'a str, f64, &'a str); 4] {
    [(p, R2, l), (p, R2, r), (m, R2, l), (m, -R2, r)]
}

fn single_spaces() -> [ConfigSpace; 3] {
    [space(0, &["+", "-"]), space(1, &["L", "R"]), space(2, &["+", "-"])]
}

/// Single Mach-Zehnder interferometer with the tabulated transfers attached.
pub fn build_single_mzi() -> Result<ExperimentSpec> {
    single_mzi_with(MaskPreset::Default)
}

fn single_mzi_with(masks: MaskPreset) -> Result<ExperimentSpec> {
    let [c0, c1, c2] = single_spaces();
    let bs1 = StepOperator::from_rules(
        c0.clone(),
        c1.clone(),
        splitter_rules("+", "-", "L", "R").map(|(i, a, o)| (i, re(a), o)),
    )?;
    // time-reversed action of the first splitter
    let bs2 = StepOperator::from_rules(
        c1.clone(),
        c2.clone(),
        [("L", re(R2), "+"), ("L", re(R2), "-"), ("R", re(R2), "+"), ("R", re(-R2), "-")],
    )?;
    let init = WaveFunction::basis(c0.clone(), "+")?;
    let t1 = TransferMatrix::tabulated(
        c0.clone(),
        c1.clone(),
        [("+", 0.5, "L"), ("+", 0.5, "R"), ("-", 0.5, "L"), ("-", 0.5, "R")],
    )?;
    let t2 = TransferMatrix::deterministic(c1.clone(), c2.clone(), [("L", "+"), ("R", "+")])?;
    let mut spec = ExperimentSpec::new("single_mzi", init, vec![bs1, bs2])?
        .with_table(0, t1)?
        .with_table(1, t2)?;
    if masks == MaskPreset::Straight {
        spec = spec
            .with_mask(0, SupportMask::full(c0, c1.clone()))?
            .with_mask(
                1,
                SupportMask::from_rules(c1, c2, "momentum-conserving straight-through", [
                    ("L", ["-"]),
                    ("R", ["+"]),
                ])?,
            )?;
    }
    Ok(spec)
}

const PM: [&str; 4] = ["(+,+)", "(+,-)", "(-,+)", "(-,-)"];
const INNER: [&str; 4] = ["(L,l)", "(L,r)", "(R,l)", "(R,r)"];
const CROSSED: [&str; 6] = ["(B,b)", "(L,l)", "(L,r)", "(R,l)", "(R,r)", "(T,t)"];
const OUTPUT: [&str; 6] = ["(+,+)", "(+,-)", "(-,+)", "(-,-)", "(B,b)", "(T,t)"];

/// Amplitudes of the two final splitters. Particle 2's splitter is mounted
/// mirrored, so `r` plays the role `L` plays for particle 1.
fn final_splitter(arm1: &str, arm2: &str) -> Vec<(&'static str, f64)> {
    let p1: [(&str, f64); 2] = match arm1 {
        "L" => [("+", R2), ("-", R2)],
        _ => [("+", R2), ("-", -R2)],
    };
    let p2: [(&str, f64); 2] = match arm2 {
        "r" => [("+", R2), ("-", R2)],
        _ => [("+", -R2), ("-", R2)],
    };
    let mut out = Vec::new();
    for (a, x) in p1 {
        for (b, y) in p2 {
            let label = PM
                .iter()
                .find(|l| **l == format!("({a},{b})"))
                .expect("pm labels");
            out.push((*label, x * y));
        }
    }
    out
}

/// Rules of the crossing region, restricted to the labels of `from`.
fn crossing_rules(from: &ConfigSpace) -> Vec<(&str, C64, &'static str)> {
    from.labels()
        .iter()
        .map(|l| {
            let out = match l.as_str() {
                "(L,l)" => "(B,b)",
                "(R,r)" => "(T,t)",
                "(L,r)" => "(L,r)",
                "(R,l)" => "(R,l)",
                _ => unreachable!("crossing input labels"),
            };
            (l.as_str(), re(1.0), out)
        })
        .collect()
}

/// Final splitters on both inner arms, pass-through for diverted labels.
fn output_rules(from: &ConfigSpace) -> Vec<(&str, C64, &'static str)> {
    let mut rules = Vec::new();
    for l in from.labels() {
        match l.as_str() {
            "(B,b)" => rules.push((l.as_str(), re(1.0), "(B,b)")),
            "(T,t)" => rules.push((l.as_str(), re(1.0), "(T,t)")),
            other => {
                let c = components(other);
                for (out, a) in final_splitter(c[0], c[1]) {
                    rules.push((l.as_str(), re(a), out));
                }
            }
        }
    }
    rules
}

fn straight_output_mask(from: &ConfigSpace, to: &ConfigSpace) -> SupportMask {
    SupportMask::from_fn(from.clone(), to.clone(), "momentum-conserving straight-through", |out, input| {
        let ci = components(input);
        let co = components(out);
        match (ci[0], ci[1]) {
            ("B", "b") | ("T", "t") => out == input,
            (a1, a2) => {
                let s1 = if a1 == "L" { "-" } else { "+" };
                let s2 = if a2 == "r" { "-" } else { "+" };
                co == [s1, s2]
            }
        }
    })
}

/// Two interferometers whose inner arms cross, postselected on nothing in
/// the diverted paths.
pub fn build_crossed_mzi(variant: CrossedVariant) -> Result<ExperimentSpec> {
    crossed_mzi_with(variant, MaskPreset::Default)
}

fn crossed_mzi_with(variant: CrossedVariant, masks: MaskPreset) -> Result<ExperimentSpec> {
    let c0 = space(0, &PM);
    let c1 = space(1, &INNER);
    let bs1_rules: Vec<(&str, C64, &str)> = {
        let single: Vec<(&str, f64, &str)> = splitter_rules("+", "-", "L", "R").to_vec();
        let second: Vec<(&str, f64, &str)> = splitter_rules("+", "-", "l", "r").to_vec();
        let mut rules = Vec::new();
        for &(i1, a1, o1) in &single {
            for &(i2, a2, o2) in &second {
                let input = PM.iter().find(|l| **l == format!("({i1},{i2})")).expect("pm");
                let output = INNER.iter().find(|l| **l == format!("({o1},{o2})")).expect("inner");
                rules.push((*input, re(a1 * a2), *output));
            }
        }
        rules
    };
    let bs1 = StepOperator::from_rules(c0.clone(), c1.clone(), bs1_rules)?;
    let init = WaveFunction::basis(c0.clone(), "(+,+)")?;
    let name = match variant {
        CrossedVariant::Plain => "crossed_mzi".to_string(),
        v => format!("crossed_mzi_{v}"),
    };

    let mut steps = vec![bs1];
    let mut cur = c1.clone();
    if variant == CrossedVariant::LocalizedBlocker {
        let f = StepOperator::filter(cur.clone(), Filter::keep(["(R,l)", "(R,r)"]), steps.len() + 1)?;
        cur = f.to_space().clone();
        steps.push(f);
    }
    let crossed = space(steps.len() + 1, &CROSSED);
    let crossing = StepOperator::from_rules(cur.clone(), crossed.clone(), crossing_rules(&cur))?;
    let crossing_step = steps.len();
    steps.push(crossing);
    cur = crossed;
    if variant == CrossedVariant::ObstacleAfterCrossing {
        let f = StepOperator::filter(
            cur.clone(),
            Filter::keep(["(B,b)", "(R,l)", "(R,r)", "(T,t)"]),
            steps.len() + 1,
        )?;
        cur = f.to_space().clone();
        steps.push(f);
    }
    let out = space(steps.len() + 1, &OUTPUT);
    let bs2 = StepOperator::from_rules(cur.clone(), out.clone(), output_rules(&cur))?;
    let output_step = steps.len();
    steps.push(bs2);
    let post = StepOperator::filter(out.clone(), Filter::keep(PM), steps.len() + 1)?;
    steps.push(post);

    let mut spec = ExperimentSpec::new(name, init, steps)?;
    if variant == CrossedVariant::Plain {
        let t0 = TransferMatrix::tabulated(c0.clone(), c1.clone(), INNER.iter().map(|&o| ("(+,+)", 0.25, o)))?;
        let t1 = TransferMatrix::deterministic(
            c1.clone(),
            space(2, &CROSSED),
            [("(L,l)", "(B,b)"), ("(L,r)", "(L,r)"), ("(R,l)", "(R,l)"), ("(R,r)", "(T,t)")],
        )?;
        let t2 = TransferMatrix::tabulated(
            space(2, &CROSSED),
            space(3, &OUTPUT),
            [
                ("(B,b)", 1.0, "(B,b)"),
                ("(T,t)", 1.0, "(T,t)"),
                ("(L,r)", 0.5, "(+,-)"),
                ("(L,r)", 0.5, "(-,+)"),
                ("(R,l)", 0.5, "(+,-)"),
                ("(R,l)", 0.5, "(-,+)"),
            ],
        )?;
        spec = spec.with_table(0, t0)?.with_table(crossing_step, t1)?.with_table(output_step, t2)?;
    }
    if masks == MaskPreset::Straight {
        let step = &spec.steps()[output_step];
        let mask = straight_output_mask(step.from_space(), step.to_space());
        spec = spec.with_mask(output_step, mask)?;
    }
    Ok(spec)
}

const ATOMS: [&str; 3] = ["A", "B", "C"];
const PHOTON_PATHS: [&str; 2] = ["a", "b"];

/// Whether the photon path passes through the atom's box.
fn co_located(atom: &str, path: &str) -> bool {
    atom.eq_ignore_ascii_case(path)
}

/// Costate amplitudes of the final atom filter, as ket amplitudes.
pub fn three_box_post_amplitudes() -> [(&'static str, f64); 3] {
    let r3 = 1.0 / 3f64.sqrt();
    [("A", r3), ("B", r3), ("C", -r3)]
}

/// Atom-only pre- and postselected states `(A+B+C)/√3` and `(A+B-C)/√3`.
pub fn three_box_atom_states() -> Result<(WaveFunction, WaveFunction)> {
    let atoms = space(0, &ATOMS);
    let r3 = 1.0 / 3f64.sqrt();
    let pre = WaveFunction::new(atoms.clone(), ATOMS.map(|a| (a, re(r3))))?;
    let post = WaveFunction::new(atoms, three_box_post_amplitudes().map(|(a, x)| (a, re(x))))?;
    Ok((pre, post))
}

/// Atom in three boxes probed by a photon on two paths; the photon reflects
/// only off an atom in its own box. Postselected on the atom state `F`.
pub fn build_three_boxes() -> Result<ExperimentSpec> {
    let c0 = space(0, &["(Init,gamma)"]);
    let pairs: Vec<String> = ATOMS
        .iter()
        .flat_map(|a| PHOTON_PATHS.iter().map(move |p| format!("({a},{p})")))
        .collect();
    let c1 = ConfigSpace::sorted(1, pairs.clone())?;
    let triples: Vec<String> = ATOMS
        .iter()
        .flat_map(|a| {
            PHOTON_PATHS
                .iter()
                .flat_map(move |p| ["R", "T"].map(|w| format!("({a},{p},{w})")))
        })
        .collect();
    let c2 = ConfigSpace::sorted(2, triples)?;
    let w_of = |atom: &str, path: &str| if co_located(atom, path) { "R" } else { "T" };

    let amp = 1.0 / 6f64.sqrt();
    let prepare = StepOperator::from_rules(
        c0.clone(),
        c1.clone(),
        pairs.iter().map(|p| ("(Init,gamma)", re(amp), p.as_str())),
    )?;
    let interaction_rules: Vec<(String, String)> = pairs
        .iter()
        .map(|p| {
            let c = components(p);
            (p.clone(), format!("({},{},{})", c[0], c[1], w_of(c[0], c[1])))
        })
        .collect();
    let interact = StepOperator::from_rules(
        c1.clone(),
        c2.clone(),
        interaction_rules.iter().map(|(i, o)| (i.as_str(), re(1.0), o.as_str())),
    )?;
    let filter = StepOperator::filter(
        c2.clone(),
        Filter::Costate(
            three_box_post_amplitudes()
                .iter()
                .map(|(l, x)| (l.to_string(), re(*x)))
                .collect(),
        ),
        3,
    )?;
    let c3 = filter.to_space().clone();
    let init = WaveFunction::basis(c0.clone(), "(Init,gamma)")?;

    let t0 = TransferMatrix::tabulated(c0.clone(), c1.clone(), pairs.iter().map(|p| ("(Init,gamma)", 1.0 / 6.0, p.as_str())))?;
    let t1 = TransferMatrix::deterministic(
        c1.clone(),
        c2.clone(),
        interaction_rules.iter().map(|(i, o)| (i.as_str(), o.as_str())),
    )?;

    let m0 = SupportMask::full(c0, c1.clone());
    let m1 = SupportMask::from_fn(c1, c2.clone(), "photon state change only when co-located", |out, input| {
        let i = components(input);
        let o = components(out);
        o[0] == i[0] && o[1] == i[1] && o[2] == w_of(i[0], i[1])
    });
    let m2 = SupportMask::from_fn(c2, c3, "photon state change only when co-located", |out, input| {
        let atom = components(input)[0];
        let o = components(out);
        (o[1] == "R") == co_located(atom, o[0])
    });

    ExperimentSpec::new("three_boxes", init, vec![prepare, interact, filter])?
        .with_table(0, t0)?
        .with_table(1, t1)?
        .with_mask(0, m0)?
        .with_mask(1, m1)?
        .with_mask(2, m2)
}

/// The three-box experiment with the particle following the locality table.
pub fn build_three_boxes_locality() -> Result<ExperimentSpec> {
    build_three_boxes()?.with_policy(PolicyKind::Table)
}
