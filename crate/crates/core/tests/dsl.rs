use nalgebra::DMatrix;
use pilotwave::dsl::{parse_experiment, serialize_experiment, DslError};
use pilotwave::ensemble::{ExperimentSpec, PolicyKind};
use pilotwave::error::Error;
use pilotwave::experiments::{build_single_mzi, build_three_boxes_locality, scenario, MaskPreset, SCENARIOS};
use pilotwave::guidance::{SupportMask, TransferMatrix};
use pilotwave::state::{ConfigSpace, Filter, StepOperator, WaveFunction, C64};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SINGLE_MZI: &str = "\
experiment single_mzi
stage 0 basis { +, - }
stage 1 basis { L, R }
stage 2 basis { +, - }
step 0->1 { + -> R2: L, R2: R; - -> R2: L, -R2: R }
step 1->2 { L -> R2: +, R2: -; R -> R2: +, -R2: - }
init { 1: + }
table 0->1 { + -> 1/2: L, 1/2: R; - -> 0.5: L, 0.5: R }
table 1->2 { L -> 1: +; R -> 1: + }
";

fn round_trip(spec: &ExperimentSpec) {
    let text = serialize_experiment(spec);
    let back = parse_experiment(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    assert!(spec.approx_eq(&back), "{text}");
    assert_eq!(serialize_experiment(&back), text);
}

#[test]
fn built_in_scenarios_round_trip() {
    for name in SCENARIOS {
        for preset in [MaskPreset::Default, MaskPreset::None, MaskPreset::Straight] {
            if let Ok(spec) = scenario(name, preset) {
                round_trip(&spec);
            }
        }
    }
    round_trip(&build_three_boxes_locality().unwrap());
}

#[test]
fn nine_line_source_matches_constructor() {
    assert_eq!(SINGLE_MZI.lines().count(), 9);
    let parsed = parse_experiment(SINGLE_MZI).unwrap();
    assert!(parsed.approx_eq(&build_single_mzi().unwrap()));
}

#[test]
fn validation_errors_are_named() {
    let bad = "experiment x\nstage 0 basis { + }\nstage 1 basis { L, R }\nstep 0->1 { + -> 0.6: L, 0.6: R }\ninit { 1: + }";
    let e = parse_experiment(bad).unwrap_err();
    assert!(e.to_string().ends_with("step not an isometry (column norm 0.72)"), "{e}");

    let unnormalized = "experiment x\nstage 0 basis { +, - }\ninit { 0.5: + }";
    assert!(matches!(
        parse_experiment(unnormalized),
        Err(DslError::Invalid { source: Error::NotNormalized { .. }, .. })
    ));

    let table = "experiment x\nstage 0 basis { + }\nstage 1 basis { L, R }\nstep 0->1 { + -> R2: L, R2: R }\ninit { 1: + }\ntable 0->1 { + -> 1/2: L }";
    assert!(matches!(
        parse_experiment(table),
        Err(DslError::Invalid { line: 6, source: Error::InvalidTransfer(_), .. })
    ));

    match parse_experiment("") {
        Err(DslError::Syntax(p)) => {
            assert_eq!((p.line, p.col), (1, 1));
            assert!(p.message.starts_with("expected 'experiment'"));
        }
        other => panic!("{other:?}"),
    }
}

fn random_isometry(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(rows, rows, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let q = g.qr().q();
    q.columns(0, cols).into_owned()
}

fn random_space(rng: &mut ChaCha8Rng, stage: usize, dim: usize) -> ConfigSpace {
    let mut pool: Vec<String> = ["+", "-", "L", "R", "a", "b", "(A,a)", "(B,b)", "(T,t)", "x0", "x1", "y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    pool.shuffle(rng);
    ConfigSpace::new(stage, pool.into_iter().take(dim)).unwrap()
}

fn random_spec(seed: u64) -> ExperimentSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(1..=6);
    let s0 = random_space(&mut rng, 0, d0);
    let init = random_isometry(&mut rng, d0, 1);
    let initial = WaveFunction::from_vec(s0.clone(), init.iter().copied().collect()).unwrap();
    let n_steps = rng.random_range(1..=4);
    let mut steps = Vec::new();
    let mut from = s0;
    for t in 0..n_steps {
        let step = if t > 0 && from.dim() > 1 && rng.random_bool(0.25) {
            let keep: Vec<String> =
                from.labels().iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
            let keep = if keep.is_empty() { vec![from.label(0).to_string()] } else { keep };
            StepOperator::filter(from.clone(), Filter::Keep(keep), t + 1).unwrap()
        } else {
            let d = rng.random_range(from.dim()..=6);
            let to = random_space(&mut rng, t + 1, d);
            let m = random_isometry(&mut rng, d, from.dim());
            StepOperator::new(from.clone(), to, m).unwrap()
        };
        from = step.to_space().clone();
        steps.push(step);
    }
    let mut spec = ExperimentSpec::new(format!("random_{seed}"), initial, steps).unwrap();
    let all_tables = rng.random_bool(0.3);
    for t in 0..n_steps {
        let (a, b) = (spec.spaces()[t].clone(), spec.spaces()[t + 1].clone());
        if rng.random_bool(0.4) {
            let allowed = DMatrix::from_fn(b.dim(), a.dim(), |_, _| rng.random_bool(0.7));
            let mask = SupportMask::new(a.clone(), b.clone(), allowed, "random").unwrap();
            spec = spec.with_mask(t, mask).unwrap();
        }
        if spec.steps()[t].is_filter() || !(all_tables || rng.random_bool(0.3)) {
            continue;
        }
        let mut entries = DMatrix::from_fn(b.dim(), a.dim(), |_, _| {
            if rng.random_bool(0.5) { rng.random_range(1..=12) as f64 } else { 0.0 }
        });
        let defined: Vec<bool> = (0..a.dim()).map(|_| rng.random_bool(0.8)).collect();
        for mut col in entries.column_iter_mut() {
            if col.sum() == 0.0 {
                col[0] = 1.0;
            }
            let s = col.sum();
            col /= s;
        }
        let table = TransferMatrix::new(a, b, entries, defined).unwrap();
        spec = spec.with_table(t, table).unwrap();
    }
    if all_tables {
        spec = spec.with_policy(PolicyKind::Table).unwrap();
    }
    spec
}

#[test]
fn five_hundred_random_specs_round_trip() {
    for seed in 0..500 {
        round_trip(&random_spec(seed));
    }
}

#[test]
fn serialization_is_deterministic() {
    for seed in [3, 77, 401] {
        assert_eq!(serialize_experiment(&random_spec(seed)), serialize_experiment(&random_spec(seed)));
    }
}

fn check_located(src: &str) {
    let Err(e) = parse_experiment(src) else { return };
    let (line, col) = e.location();
    let lines: Vec<&str> = src.split('\n').collect();
    assert!(line >= 1 && line <= lines.len(), "line {line} outside source: {e}\n{src}");
    assert!(col >= 1 && col <= lines[line - 1].chars().count() + 1, "col {col} outside line: {e}\n{src}");
}

#[test]
fn fuzzed_sources_give_located_errors() {
    let corpus: Vec<String> = SCENARIOS
        .iter()
        .map(|n| serialize_experiment(&scenario(n, MaskPreset::Default).unwrap()))
        .chain([SINGLE_MZI.to_string()])
        .collect();
    let alphabet: Vec<char> = "{}();:,->#+-RiI 0123456789./\nexperimentstagesteptablefilterkeep".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3_000 {
        let base = corpus.choose(&mut rng).unwrap();
        let mut chars: Vec<char> = base.chars().collect();
        for _ in 0..rng.random_range(1..=4) {
            let k = rng.random_range(0..=chars.len());
            match rng.random_range(0..4) {
                0 if k < chars.len() => {
                    chars.remove(k);
                }
                1 => chars.insert(k, *alphabet.choose(&mut rng).unwrap()),
                2 if k < chars.len() => chars[k] = *alphabet.choose(&mut rng).unwrap(),
                _ => chars.truncate(k),
            }
        }
        check_located(&chars.into_iter().collect::<String>());
    }
    for _ in 0..1_000 {
        let n = rng.random_range(0..80);
        let s: String = (0..n).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        check_located(&s);
        check_located(&format!("experiment e\n{s}"));
    }
}
