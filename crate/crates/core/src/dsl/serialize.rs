use std::fmt::Write;

use super::literal::{format_amplitude, format_probability};
use crate::ensemble::{ExperimentSpec, PolicyKind};
use crate::state::{ConfigSpace, Filter, StepOperator};

fn basis(space: &ConfigSpace) -> String {
    space.labels().join(", ")
}

fn step_body(step: &StepOperator) -> String {
    let (from, to, m) = (step.from_space(), step.to_space(), step.matrix());
    let groups: Vec<String> = (0..from.dim())
        .map(|j| {
            let outs: Vec<String> = (0..to.dim())
                .filter(|&i| m[(i, j)].norm_sqr() > 0.0)
                .map(|i| format!("{}: {}", format_amplitude(m[(i, j)]), to.label(i)))
                .collect();
            format!("{} -> {}", from.label(j), outs.join(", "))
        })
        .collect();
    groups.join("; ")
}

/// Canonical text for an experiment; parsing it gives the experiment back.
pub fn serialize_experiment(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let spaces = spec.spaces();
    writeln!(out, "experiment {}", spec.name()).unwrap();
    if spec.policy() != PolicyKind::Flow {
        writeln!(out, "policy {}", spec.policy()).unwrap();
    }
    writeln!(out, "stage 0 basis {{ {} }}", basis(&spaces[0])).unwrap();
    let psi = spec.initial_state();
    let init: Vec<String> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > 0.0)
        .map(|(j, a)| format!("{}: {}", format_amplitude(*a), spaces[0].label(j)))
        .collect();
    writeln!(out, "init {{ {} }}", init.join(", ")).unwrap();

    for (t, step) in spec.steps().iter().enumerate() {
        match step.filter_spec() {
            Some(Filter::Keep(_)) => {
                writeln!(out, "filter {} keep {{ {} }}", t + 1, basis(step.to_space())).unwrap();
            }
            Some(Filter::Costate(amps)) => {
                let mut amps = amps.clone();
                amps.sort_by(|a, b| a.0.cmp(&b.0));
                let items: Vec<String> = amps
                    .iter()
                    .map(|(l, a)| format!("{}: {l}", format_amplitude(*a)))
                    .collect();
                writeln!(out, "filter {} costate {{ {} }}", t + 1, items.join(", ")).unwrap();
            }
            None => {
                writeln!(out, "stage {} basis {{ {} }}", t + 1, basis(step.to_space())).unwrap();
                writeln!(out, "step {t}->{} {{ {} }}", t + 1, step_body(step)).unwrap();
            }
        }
        if let Some(mask) = &spec.masks()[t] {
            let (from, to) = (mask.from_space(), mask.to_space());
            let groups: Vec<String> = (0..from.dim())
                .filter_map(|j| {
                    let outs = mask.targets_of(j);
                    (!outs.is_empty()).then(|| {
                        let outs: Vec<&str> = outs.iter().map(|&i| to.label(i)).collect();
                        format!("{} -> {}", from.label(j), outs.join(", "))
                    })
                })
                .collect();
            writeln!(out, "mask {t}->{} {{ {} }}", t + 1, groups.join("; ")).unwrap();
        }
        if let Some(table) = &spec.tables()[t] {
            let (from, to, m) = (table.from_space(), table.to_space(), table.entries());
            let groups: Vec<String> = (0..from.dim())
                .filter(|&j| table.is_defined(j))
                .map(|j| {
                    let outs: Vec<String> = (0..to.dim())
                        .filter(|&i| m[(i, j)] > 0.0)
                        .map(|i| format!("{}: {}", format_probability(m[(i, j)]), to.label(i)))
                        .collect();
                    format!("{} -> {}", from.label(j), outs.join(", "))
                })
                .collect();
            writeln!(out, "table {t}->{} {{ {} }}", t + 1, groups.join("; ")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_experiment;
    use crate::experiments::{build_single_mzi, build_three_boxes};

    #[test]
    fn single_mzi_text() {
        let text = serialize_experiment(&build_single_mzi().unwrap());
        assert!(text.contains("R2: L, R2: R"), "{text}");
        let back = parse_experiment(&text).unwrap();
        assert_eq!(serialize_experiment(&back), text);
    }

    #[test]
    fn three_box_costate_line() {
        let text = serialize_experiment(&build_three_boxes().unwrap());
        assert!(text.contains("filter 3 costate { R3: A, R3: B, -R3: C }"), "{text}");
    }
}
