use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use pilotwave::audit::chi_square_quantile;
use pilotwave::ensemble::{propagate_exact, sample_trajectories, ExperimentSpec};
use pilotwave::experiments::build_single_mzi;
use pilotwave::guidance::{
    born_distribution, feasibility_check, flow_matrix, transfer_from_flow, FeasibilityResult, SupportMask,
};
use pilotwave::state::{
    apply_step, is_real_wave, project, tensor, Conditional, ConfigSpace, Distribution, Filter, StepOperator,
    WaveFunction, C64,
};
use pilotwave::twostate::{abl_probability, box_family, retro_guided, two_state_vectors, weak_value, projector};
use pilotwave::ensemble::sample_chain;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn isometry(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(rows, rows, |_, _| gaussian(rng));
    g.qr().q().columns(0, cols).into_owned()
}

fn space(stage: usize, prefix: &str, dim: usize) -> ConfigSpace {
    ConfigSpace::new(stage, (0..dim).map(|k| format!("{prefix}{k}"))).unwrap()
}

fn state(rng: &mut ChaCha8Rng, space: ConfigSpace) -> WaveFunction {
    let v: Vec<C64> = (0..space.dim()).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    WaveFunction::from_vec(space, v.into_iter().map(|a| a / n).collect()).unwrap()
}

/// A filter-free chain of random isometries with dimensions at most `max_dim`.
fn random_chain(seed: u64, steps: usize, max_dim: usize) -> ExperimentSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut from = space(0, "s", rng.random_range(1..=max_dim));
    let initial = state(&mut rng, from.clone());
    let mut ops = Vec::new();
    for t in 0..steps {
        let d = rng.random_range(from.dim()..=max_dim);
        let to = space(t + 1, "s", d);
        let op = StepOperator::new(from.clone(), to.clone(), isometry(&mut rng, d, from.dim())).unwrap();
        ops.push(op);
        from = to;
    }
    ExperimentSpec::new(format!("chain_{seed}"), initial, ops).unwrap()
}

fn born(psi: &WaveFunction) -> Vec<f64> {
    psi.amplitudes().iter().map(|a| a.norm_sqr()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn steps_preserve_norm(seed in any::<u64>(), d_in in 1usize..=8, extra in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_out = (d_in + extra).min(8);
        let op = StepOperator::new(space(0, "a", d_in), space(1, "b", d_out), isometry(&mut rng, d_out, d_in)).unwrap();
        let psi = state(&mut rng, space(0, "a", d_in));
        let out = apply_step(&op, &psi).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn flow_marginals_and_born_transport(seed in any::<u64>(), d_in in 1usize..=8, extra in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_out = (d_in + extra).min(8);
        let op = StepOperator::new(space(0, "a", d_in), space(1, "b", d_out), isometry(&mut rng, d_out, d_in)).unwrap();
        let psi = state(&mut rng, space(0, "a", d_in));
        // oracle: direct matrix-vector product
        let out = op.matrix() * DVector::from_column_slice(psi.amplitudes());
        let rho_in = born(&psi);
        let rho_out: Vec<f64> = out.iter().map(|a| a.norm_sqr()).collect();
        let flow = flow_matrix(&op, &psi).unwrap();
        for (s, r) in flow.column_sums().iter().zip(&rho_in) {
            prop_assert!((s - C64::new(*r, 0.0)).norm() <= 1e-10);
        }
        for (s, r) in flow.row_sums().iter().zip(&rho_out) {
            prop_assert!((s - C64::new(*r, 0.0)).norm() <= 1e-10);
        }
        let t = transfer_from_flow(&flow).unwrap();
        let mapped = t.apply(&born_distribution(&psi).unwrap()).unwrap();
        for (m, r) in mapped.weights().iter().zip(&rho_out) {
            prop_assert!((m - r).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn tensor_is_associative_and_born_factorizes(seed in any::<u64>(), da in 1usize..=3, db in 1usize..=3, dc in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = state(&mut rng, space(0, "a", da));
        let b = state(&mut rng, space(0, "b", db));
        let c = state(&mut rng, space(0, "c", dc));
        let left = tensor(&tensor(&a, &b).unwrap(), &c).unwrap();
        let right = tensor(&a, &tensor(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left.space().labels(), right.space().labels());
        prop_assert!(left.max_deviation(&right).unwrap() <= 1e-14);
        let w = born(&left);
        let (wa, wb, wc) = (born(&a), born(&b), born(&c));
        for i in 0..da {
            for j in 0..db {
                for k in 0..dc {
                    prop_assert!((w[(i * db + j) * dc + k] - wa[i] * wb[j] * wc[k]).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_survival_is_kept_mass(seed in any::<u64>(), d in 1usize..=8, bits in any::<u8>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = space(0, "x", d);
        let psi = state(&mut rng, s.clone());
        let kept: Vec<usize> = (0..d).filter(|k| bits >> k & 1 == 1).collect();
        prop_assume!(!kept.is_empty());
        let filter = Filter::keep(kept.iter().map(|&k| s.label(k).to_string()));
        let expected: f64 = kept.iter().map(|&k| psi.amplitudes()[k].norm_sqr()).sum();
        let once = project(&filter, &psi).unwrap();
        prop_assert!((once.survival - expected).abs() <= 1e-12);
        if let Conditional::State(c) = &once.conditional {
            let twice = project(&filter, c).unwrap();
            prop_assert!((twice.survival - 1.0).abs() <= 1e-12);
            match twice.conditional {
                Conditional::State(c2) => prop_assert!(c2.max_deviation(c).unwrap() <= 1e-12),
                Conditional::Empty => prop_assert!(false, "second projection emptied the state"),
            }
        }
    }

    #[test]
    fn identity_step_on_real_wave_gives_identity_transfer(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = space(0, "x", d);
        let v: Vec<C64> = (0..d).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect();
        let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi = WaveFunction::from_vec(s.clone(), v.into_iter().map(|a| a / n).collect()).unwrap();
        prop_assert!(is_real_wave(&psi));
        let op = StepOperator::identity(s, 1);
        let t = transfer_from_flow(&flow_matrix(&op, &psi).unwrap()).unwrap();
        for j in 0..d {
            if psi.amplitudes()[j].norm_sqr() > 0.0 {
                for i in 0..d {
                    prop_assert_eq!(t.entries()[(i, j)], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn overlap_is_constant_and_two_state_sums_hold(seed in any::<u64>(), steps in 1usize..=3) {
        let spec = random_chain(seed, steps, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let last = spec.spaces().last().unwrap().clone();
        let post = state(&mut rng, last);
        let tsvs = two_state_vectors(&spec, &post).unwrap();
        let o0 = tsvs[0].overlap();
        for tsv in &tsvs {
            prop_assert!((tsv.overlap() - o0).norm() <= 1e-12);
            let s = tsv.space();
            let labels: Vec<&str> = s.labels().iter().take(s.dim().div_ceil(2)).map(String::as_str).collect();
            let abl = abl_probability(tsv, &box_family(s, &labels).unwrap());
            if let Ok(abl) = abl {
                prop_assert!((abl.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            if o0.norm() > 1e-6 {
                let total: C64 = s
                    .labels()
                    .iter()
                    .map(|l| weak_value(tsv, &projector(s, &[l.as_str()]).unwrap()).unwrap())
                    .sum();
                prop_assert!((total - C64::new(1.0, 0.0)).norm() <= 1e-12 / o0.norm().min(1.0));
            }
        }
    }

    #[test]
    fn abl_marginalized_over_post_basis_is_born(seed in any::<u64>(), steps in 1usize..=3) {
        let spec = random_chain(seed, steps, 5);
        let exact = propagate_exact(&spec).unwrap();
        let last = spec.spaces().last().unwrap().clone();
        let forward_post = exact.final_stage().wave.clone().unwrap();
        let posts: Vec<WaveFunction> =
            last.labels().iter().map(|l| WaveFunction::basis(last.clone(), l).unwrap()).collect();
        for stage in 0..spec.stage_count() {
            let s = spec.spaces()[stage].clone();
            let family = box_family(&s, &[s.label(0)]).unwrap();
            let p = exact.stages[stage].born.as_ref().unwrap().weights()[0];
            // oracle: Pr(f, k) = |<f|U Pi_k psi>|^2 summed over the post basis gives p_k
            let mut marginal = 0.0;
            for post in &posts {
                let tsv = &two_state_vectors(&spec, post).unwrap()[stage];
                let weight: f64 = family.iter().map(|(_, pk)| tsv.chain_amplitude(pk).unwrap().norm_sqr()).sum();
                if weight > 1e-14 {
                    marginal += weight * abl_probability(tsv, &family).unwrap()[0].1;
                }
            }
            prop_assert!((marginal - p).abs() <= 1e-10);
            // with the post equal to the forward state, ABL weights are p^2 : (1-p)^2
            let tsv = &two_state_vectors(&spec, &forward_post).unwrap()[stage];
            let abl = abl_probability(tsv, &family).unwrap();
            let expected = p * p / (p * p + (1.0 - p) * (1.0 - p));
            prop_assert!((abl[0].1 - expected).abs() <= 1e-10);
        }
    }
}

/// Exact feasibility by exhaustive search over couplings with entries on a
/// 1/64 grid, column by column, remembering dead ends. With supplies and
/// demands on that grid, a feasible coupling exists iff one exists on it.
fn grid_feasible(supply: &[u32], demand: &[u32], allowed: &DMatrix<bool>) -> bool {
    struct Search<'a> {
        supply: &'a [u32],
        allowed: &'a DMatrix<bool>,
        dead: HashSet<(usize, Vec<u32>)>,
    }
    impl Search<'_> {
        fn column(&mut self, j: usize, demand: &mut Vec<u32>) -> bool {
            if j == self.supply.len() {
                return demand.iter().all(|&d| d == 0);
            }
            if self.dead.contains(&(j, demand.clone())) {
                return false;
            }
            let targets: Vec<usize> = (0..demand.len()).filter(|&i| self.allowed[(i, j)]).collect();
            let ok = self.split(j, 0, self.supply[j], &targets, demand);
            if !ok {
                self.dead.insert((j, demand.clone()));
            }
            ok
        }
        fn split(&mut self, j: usize, k: usize, left: u32, targets: &[usize], demand: &mut Vec<u32>) -> bool {
            if k == targets.len() {
                return left == 0 && self.column(j + 1, demand);
            }
            let i = targets[k];
            for x in 0..=left.min(demand[i]) {
                demand[i] -= x;
                let ok = self.split(j, k + 1, left - x, targets, demand);
                demand[i] += x;
                if ok {
                    return true;
                }
            }
            false
        }
    }
    let mut s = Search { supply, allowed, dead: HashSet::new() };
    s.column(0, &mut demand.to_vec())
}

fn composition() -> impl Strategy<Value = Vec<u32>> {
    (1usize..=3).prop_flat_map(|d| proptest::collection::vec(0u32..=64, d)).prop_filter_map("mass", |v| {
        let s: u32 = v.iter().sum();
        if s == 0 {
            return None;
        }
        // rescale onto 64 units, pushing the rounding remainder into the largest cell
        let mut w: Vec<u32> = v.iter().map(|x| x * 64 / s).collect();
        let r = 64 - w.iter().sum::<u32>();
        let k = (0..w.len()).max_by_key(|&k| w[k]).unwrap();
        w[k] += r;
        Some(w)
    })
}

fn dist(stage: usize, w: &[u32]) -> Distribution {
    Distribution::new(space(stage, "q", w.len()), w.iter().map(|&x| x as f64 / 64.0).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn feasibility_agrees_with_grid_oracle(
        supply in composition(),
        demand in composition(),
        bits in any::<u16>(),
        drop in any::<proptest::sample::Index>(),
    ) {
        let (n_in, n_out) = (supply.len(), demand.len());
        let allowed = DMatrix::from_fn(n_out, n_in, |i, j| bits >> (i * 3 + j) & 1 == 1);
        let (rin, rout) = (dist(0, &supply), dist(1, &demand));
        let mask = SupportMask::new(rin.space().clone(), rout.space().clone(), allowed.clone(), "random").unwrap();
        let ill_posed = (0..n_in).any(|j| supply[j] > 0 && (0..n_out).all(|i| !allowed[(i, j)]));
        let result = feasibility_check(&rin, &rout, &mask);
        if ill_posed {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let oracle = grid_feasible(&supply, &demand, &allowed);
        match result.unwrap() {
            FeasibilityResult::Feasible { witness } => {
                prop_assert!(oracle);
                let mapped = witness.apply(&rin).unwrap();
                prop_assert!(mapped.max_deviation(&rout).unwrap() <= 1e-10);
                for j in 0..n_in {
                    for i in 0..n_out {
                        if supply[j] > 0 && !allowed[(i, j)] {
                            prop_assert_eq!(witness.entries()[(i, j)], 0.0);
                        }
                    }
                }
            }
            FeasibilityResult::Infeasible(cert) => {
                prop_assert!(!oracle);
                prop_assert!(cert.verify(&rin, &rout, &mask));
                // shrinking the mask keeps it infeasible
                let on: Vec<(usize, usize)> = (0..n_out)
                    .flat_map(|i| (0..n_in).map(move |j| (i, j)))
                    .filter(|&(i, j)| allowed[(i, j)])
                    .collect();
                if !on.is_empty() {
                    let (i, j) = on[drop.index(on.len())];
                    let smaller = mask.without(i, j);
                    if let Ok(r) = feasibility_check(&rin, &rout, &smaller) {
                        prop_assert!(!r.is_feasible());
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sampled_stages_pass_chi_square(seed in any::<u64>()) {
        let spec = random_chain(seed, 3, 4);
        // oracle: Born weights by repeated matrix-vector products
        let mut v = DVector::from_column_slice(spec.initial_state().amplitudes());
        let mut expected = vec![v.iter().map(|a| a.norm_sqr()).collect::<Vec<f64>>()];
        for op in spec.steps() {
            v = op.matrix() * v;
            expected.push(v.iter().map(|a| a.norm_sqr()).collect());
        }
        let ens = sample_trajectories(&spec, 100_000, seed).unwrap();
        for (stage, (counts, p)) in ens.counts().iter().zip(&expected).enumerate() {
            let n: u64 = counts.iter().sum();
            let mut stat = 0.0;
            let mut cells = 0;
            for (&c, &q) in counts.iter().zip(p) {
                if q > 1e-12 {
                    let e = q * n as f64;
                    stat += (c as f64 - e).powi(2) / e;
                    cells += 1;
                } else {
                    prop_assert_eq!(c, 0, "occupied zero-weight cell at stage {}", stage);
                }
            }
            if cells > 1 {
                prop_assert!(stat < chi_square_quantile(cells - 1), "stage {stage}: {stat}");
            }
        }
    }
}

#[test]
fn retro_guidance_with_minus_post_confines_to_l() {
    let spec = build_single_mzi().unwrap();
    let minus = WaveFunction::basis(spec.spaces()[2].clone(), "-").unwrap();
    let retro = retro_guided(&spec, &minus).unwrap();
    let ens = sample_chain("retro", &retro.chain, 20_000, 9, 0).unwrap();
    let at_t1 = &ens.counts()[1];
    let l = spec.spaces()[1].index_of("L").unwrap();
    assert_eq!(at_t1[l], 20_000);
}
