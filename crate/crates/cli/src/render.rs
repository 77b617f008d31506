//! Output formats: JSON with fixed 17-significant-digit floats, CSV
//! distributions and plain-text tables.

use std::fmt::Write;

use pilotwave::audit::{Evidence, Verdict};
use serde::Serialize;
use serde_json::Value;

use crate::report::{AuditOutput, RunReport, TwoStateReport};

/// Pretty JSON with sorted keys; every float is printed as `{:.16e}`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("reports serialize");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

/// Re-renders parsed JSON text in the canonical layout.
pub fn canonical_json(text: &str) -> Result<String, serde_json::Error> {
    let v: Value = serde_json::from_str(text)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.push_str(&"  ".repeat(n));
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => {
            if n.is_f64() {
                write!(out, "{:.16e}", n.as_f64().expect("float")).unwrap();
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, x) in items.iter().enumerate() {
                    pad(out, indent + 1);
                    write_value(out, x, indent + 1);
                    out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(out, indent);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, x)) in map.iter().enumerate() {
                pad(out, indent + 1);
                write!(out, "{}: ", Value::String(key.clone())).unwrap();
                write_value(out, x, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// `label,probability` rows in the space's label order.
pub fn distribution_csv(labels: &[String], weights: &[f64]) -> String {
    let mut out = String::from("label,probability\n");
    for (l, w) in labels.iter().zip(weights) {
        let l = if l.contains([',', '"']) { format!("\"{}\"", l.replace('"', "\"\"")) } else { l.clone() };
        writeln!(out, "{l},{w:.16e}").unwrap();
    }
    out
}

/// Rounds to 10 decimals and prints the shortest form (`0.5`, `1.0`).
pub fn num(x: f64) -> String {
    let r = (x * 1e10).round() / 1e10;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:?}")
}

pub fn complex(c: [f64; 2]) -> String {
    let (re, im) = ((c[0] * 1e10).round() / 1e10, (c[1] * 1e10).round() / 1e10);
    if im == 0.0 {
        num(re)
    } else if re == 0.0 {
        format!("{}i", num(im))
    } else if im < 0.0 {
        format!("{}-{}i", num(re), num(-im))
    } else {
        format!("{}+{}i", num(re), num(im))
    }
}

fn rows(out: &mut String, labels: &[String], cols: &[&[f64]], skip_zero: bool) {
    let w = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    for (i, l) in labels.iter().enumerate() {
        if skip_zero && cols.iter().all(|c| c[i].abs() < 5e-11) {
            continue;
        }
        write!(out, "  {l:<w$}").unwrap();
        for c in cols {
            write!(out, "  {:<14}", num(c[i])).unwrap();
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
}

pub fn run_table(r: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "scenario {} (policy {})", r.scenario, r.policy).unwrap();
    for s in &r.stages {
        writeln!(out, "stage {}  survival {}", s.stage, num(s.survival)).unwrap();
        match (&s.born, &s.particle) {
            (Some(b), Some(p)) => {
                writeln!(out, "  born / particle").unwrap();
                rows(&mut out, &s.labels, &[b, p], true);
            }
            _ => writeln!(out, "  (no surviving amplitude)").unwrap(),
        }
        if s.repaired {
            writeln!(out, "  transfer used negative-flow repair").unwrap();
        }
    }
    writeln!(out, "final distribution  survival {}", num(r.survival)).unwrap();
    match &r.final_distribution {
        Some(d) => rows(&mut out, &r.final_labels, &[d], true),
        None => writeln!(out, "  (empty)").unwrap(),
    }
    if let Some(e) = &r.ensemble {
        writeln!(
            out,
            "sampled n {} seed {}  survivors {}  fraction {} (sigma {})",
            e.n,
            e.seed,
            e.survivors,
            num(e.survival_fraction),
            num(e.survival_sigma)
        )
        .unwrap();
        for s in &e.stages {
            let chi = match (s.chi_square, s.quantile) {
                (Some(c), Some(q)) => format!("  chi2 {} (dof {}, limit {})", num(c), s.dof, num(q)),
                _ => String::new(),
            };
            writeln!(out, "stage {}  reached {}{chi}", s.stage, s.reached).unwrap();
            if let Some(emp) = &s.empirical {
                rows(&mut out, &r.stages[s.stage].labels, &[emp], true);
            }
        }
    }
    for n in &r.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    out
}

fn evidence_line(e: &Evidence) -> String {
    match e {
        Evidence::ZeroAmplitudeOccupancy { stage, labels, count, seed, runs } => format!(
            "{count} runs occupy zero-amplitude labels {} at stage {stage} (seed {seed}, runs {runs:?})",
            labels.join(" ")
        ),
        Evidence::ChiSquare { stage, statistic, dof, quantile, .. } => format!(
            "chi2 {} exceeds {} (dof {dof}) at stage {stage}",
            num(*statistic),
            num(*quantile)
        ),
        Evidence::Column { step, input, output, probability, component } => format!(
            "step {step}->{}: {input} moves to {output} with probability {} although component {component} is conserved",
            step + 1,
            num(*probability)
        ),
        Evidence::Trajectories { step, count, of, fraction, seed, runs } => format!(
            "step {step}->{}: {count} of {of} runs ({}) leave the mask (seed {seed}, runs {runs:?})",
            step + 1,
            num(*fraction)
        ),
        Evidence::Certificate { step, certificate: c } => format!(
            "step {step}->{}: targets {{{}}} need {} but the sources that may reach them ({{{}}}) hold {}",
            step + 1,
            c.targets.join(", "),
            num(c.required),
            c.reaching_sources.join(", "),
            num(c.reachable)
        ),
    }
}

pub fn audit_table(a: &AuditOutput) -> String {
    let mut out = String::new();
    let r = &a.report;
    writeln!(out, "audit {} (policy {}, n {}, seed {})", r.scenario, a.policy, a.n, a.seed).unwrap();
    for p in &r.principles {
        let detail = match &p.verdict {
            Verdict::Holds { detail } | Verdict::Violated { detail, .. } | Verdict::NotApplicable { detail } => detail,
        };
        writeln!(out, "({}) {}: {} - {detail}", p.principle, p.name, p.verdict.label()).unwrap();
        if let Verdict::Violated { evidence, .. } = &p.verdict {
            for e in evidence {
                writeln!(out, "    {}", evidence_line(e)).unwrap();
            }
        }
    }
    if let Some(c) = &r.certificate {
        writeln!(out, "certificate: {}", evidence_line(c)).unwrap();
    }
    let conclusion = match r.conclusion {
        pilotwave::audit::Conclusion::Consistent => "consistent",
        pilotwave::audit::Conclusion::Violated => "violated",
        pilotwave::audit::Conclusion::Incompatible => "incompatible: no transfer satisfies (B) and (D) together",
    };
    writeln!(out, "conclusion: {conclusion}").unwrap();
    for n in &a.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    out
}

pub fn twostate_table(r: &TwoStateReport) -> String {
    let mut out = String::new();
    writeln!(out, "scenario {}  post {}", r.scenario, r.post).unwrap();
    for v in &r.vectors {
        writeln!(out, "stage {}  overlap {}", v.stage, complex(v.overlap)).unwrap();
    }
    if let Some(abl) = &r.abl {
        writeln!(out, "ABL at stage {}", r.stage).unwrap();
        for o in abl {
            writeln!(out, "  {}: {}", o.name, num(o.probability)).unwrap();
        }
    }
    if let Some(w) = &r.weak {
        writeln!(out, "weak value {} at stage {}: {}", w.operator, w.stage, complex(w.value)).unwrap();
    }
    if let Some(g) = &r.combined_guidance {
        writeln!(out, "combined guidance").unwrap();
        for s in g {
            writeln!(out, "stage {}", s.stage).unwrap();
            rows(&mut out, &s.labels, &[&s.distribution], true);
        }
    }
    for n in &r.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_json(&serde_json::json!({"b": [0.5, 1], "a": -0.1}));
        assert_eq!(s, "{\n  \"a\": -1.0000000000000001e-1,\n  \"b\": [5.0000000000000000e-1, 1]\n}\n");
        assert_eq!(canonical_json(&s).unwrap(), s);
    }

    #[test]
    fn table_numbers() {
        assert_eq!(num(0.49999999999999994), "0.5");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(-1e-17), "0.0");
        assert_eq!(complex([-1.0, 1e-18]), "-1.0");
        assert_eq!(complex([0.5, -0.25]), "0.5-0.25i");
    }

    #[test]
    fn csv_quotes_tuple_labels() {
        let csv = distribution_csv(&["(+,-)".into(), "L".into()], &[0.5, 0.5]);
        assert_eq!(csv.lines().next(), Some("label,probability"));
        assert!(csv.contains("\"(+,-)\",5.0000000000000000e-1"));
    }
}
