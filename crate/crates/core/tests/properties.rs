//! Property tests over randomly drawn inputs.

mod common;

use dmvqe_core::bp::{variance_of_partial, TargetParam};
use dmvqe_core::conditioning::encode_hamiltonian;
use dmvqe_core::pauli::{build_heisenberg, build_hubbard, build_ising, exact_ground_energy, prompts_for, Boundary, Pauli, PauliString, PauliSum};
use dmvqe_core::simulator::{energy, prepare_state_raw, Axis, CircuitLayout, ParamGrid, StateVector};
use dmvqe_core::vqe::{epochs_to_target, optimize_from, run_rpvqe, OptimizerConfig, TargetOutcome};
use proptest::prelude::*;

fn pauli() -> impl Strategy<Value = Pauli> {
    prop_oneof![Just(Pauli::I), Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
}

fn terms(n: usize) -> impl Strategy<Value = Vec<(f64, PauliString)>> {
    prop::collection::vec((-2.0f64..2.0, prop::collection::vec(pauli(), n).prop_map(PauliString::new)), 0..12)
}

fn sum_with_qubits() -> impl Strategy<Value = (usize, Vec<(f64, PauliString)>)> {
    (1usize..=3).prop_flat_map(|n| (Just(n), terms(n)))
}

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
}

fn dense_of(n: usize, terms: &[(f64, PauliString)]) -> common::CMat {
    let dim = 1 << n;
    let mut m = common::CMat::zeros(dim, dim);
    for (c, s) in terms {
        m += common::pauli_string(&s.to_string()).scale(*c);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_preserves_the_matrix((n, raw) in sum_with_qubits()) {
        let sum = PauliSum::new(n, raw.clone()).unwrap();
        prop_assert!(common::max_abs_diff(&sum.to_dense(), &dense_of(n, &raw)) < 1e-12);
        let strings: Vec<&PauliString> = sum.terms().iter().map(|(_, s)| s).collect();
        prop_assert!(strings.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sum.terms().iter().all(|(c, _)| *c != 0.0));
    }

    #[test]
    fn canonical_form_ignores_term_order((n, raw) in sum_with_qubits()) {
        let mut reversed = raw.clone();
        reversed.reverse();
        let a = PauliSum::new(n, raw).unwrap();
        let b = PauliSum::new(n, reversed).unwrap();
        prop_assert_eq!(a.terms().len(), b.terms().len());
        for ((ca, sa), (cb, sb)) in a.terms().iter().zip(b.terms()) {
            prop_assert_eq!(sa, sb);
            prop_assert!((ca - cb).abs() < 1e-12);
        }
    }

    #[test]
    fn builders_are_pure(n in 2usize..6, j in -5.0f64..5.0, h in -5.0f64..5.0, periodic in any::<bool>()) {
        let b = if periodic { Boundary::Periodic } else { Boundary::Open };
        prop_assert_eq!(build_heisenberg(n, j, h, b).unwrap(), build_heisenberg(n, j, h, b).unwrap());
        prop_assert_eq!(build_ising(n, j, h, b).unwrap(), build_ising(n, j, h, b).unwrap());
        prop_assert_eq!(build_hubbard(n / 2 + 1, j, h).unwrap(), build_hubbard(n / 2 + 1, j, h).unwrap());
    }

    #[test]
    fn energy_respects_variational_bound(
        n in 2usize..5,
        l in 1usize..4,
        j in 0.0f64..4.0,
        h in 0.0f64..4.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = CircuitLayout::new(n, l);
        let grid = ParamGrid::for_layout(&layout, (0..n * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for ham in [build_heisenberg(n, j, h, Boundary::Periodic).unwrap(), build_ising(n, j, h, Boundary::Open).unwrap()] {
            prop_assert!(energy(&layout, &grid, &ham).unwrap() >= exact_ground_energy(&ham).unwrap() - 1e-9);
        }
    }

    #[test]
    fn grids_are_clamped(values in prop::collection::vec(-10.0f64..10.0, 6)) {
        let g = ParamGrid::new(2, 3, values.clone()).unwrap();
        for (v, c) in values.iter().zip(g.values()) {
            prop_assert_eq!(*c, v.clamp(-1.0, 1.0));
        }
    }

    #[test]
    fn gates_preserve_norm_and_invert(
        n in 1usize..5,
        ops in prop::collection::vec((axis(), 0usize..5, -7.0f64..7.0), 1..20),
    ) {
        let mut psi = StateVector::zero_state(n);
        for (a, q, theta) in &ops {
            psi.apply_rotation(*a, q % n, *theta);
            if n > 1 {
                psi.apply_cz(q % n, (q + 1) % n);
            }
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
        let before = psi.clone();
        let (a, q, theta) = ops[0];
        psi.apply_rotation(a, q % n, theta);
        psi.apply_rotation(a, q % n, -theta);
        for (x, y) in psi.amplitudes().iter().zip(before.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn cz_is_symmetric(n in 2usize..5, values in prop::collection::vec(-1.0f64..1.0, 4), a in 0usize..5, b in 0usize..5) {
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let layout = CircuitLayout::new(n, 1);
        let mut v = values;
        v.resize(n, 0.3);
        let psi = prepare_state_raw(&layout, &v).unwrap();
        let (mut x, mut y) = (psi.clone(), psi);
        x.apply_cz(a, b);
        y.apply_cz(b, a);
        prop_assert_eq!(x.amplitudes(), y.amplitudes());
    }

    #[test]
    fn loosening_the_target_never_costs_epochs(
        trace in prop::collection::vec(-3.0f64..0.0, 1..60),
        exact in -3.0f64..-0.5,
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
        cap in 0usize..80,
    ) {
        let (tight, loose) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        match (epochs_to_target(&trace, exact, tight, cap), epochs_to_target(&trace, exact, loose, cap)) {
            (TargetOutcome::Reached(a), TargetOutcome::Reached(b)) => prop_assert!(b <= a),
            (TargetOutcome::Reached(_), TargetOutcome::Trapped) => prop_assert!(false, "looser target trapped"),
            _ => {}
        }
    }

    #[test]
    fn embeddings_are_unit_norm_and_order_free(j in 0.0f64..5.0, h in 0.0f64..5.0, seed in any::<u64>()) {
        let ham = build_heisenberg(4, j, h, Boundary::Periodic).unwrap();
        let prompts = prompts_for(&ham);
        let e = encode_hamiltonian(&prompts, seed).unwrap();
        let norm = e.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let mut shuffled = prompts.clone();
        shuffled.reverse();
        shuffled.rotate_left(prompts.len() / 3);
        let f = encode_hamiltonian(&shuffled, seed).unwrap();
        prop_assert_eq!(e.as_slice(), f.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn vqe_traces_stay_above_ground_energy(j in 0.5f64..4.0, h in 0.0f64..4.0, seed in any::<u64>()) {
        let ham = build_heisenberg(3, j, h, Boundary::Periodic).unwrap();
        let exact = exact_ground_energy(&ham).unwrap();
        let layout = CircuitLayout::new(3, 2);
        let run = run_rpvqe(&ham, &layout, &OptimizerConfig::new(30, seed)).unwrap();
        prop_assert!(run.energy_trace.iter().all(|e| *e >= exact - 1e-9));
        prop_assert_eq!(run.energy_trace.len(), 31);
    }

    #[test]
    fn fixed_initializer_gives_identical_traces(seed in any::<u64>()) {
        let ham = build_ising(3, 1.0, 2.0, Boundary::Open).unwrap();
        let layout = CircuitLayout::new(3, 2);
        let init = ParamGrid::for_layout(&layout, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        let a = optimize_from(&ham, &layout, &init, &OptimizerConfig::new(20, seed)).unwrap();
        let b = optimize_from(&ham, &layout, &init, &OptimizerConfig::new(20, seed.wrapping_add(1))).unwrap();
        let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.energy_trace), bits(&b.energy_trace));
    }
}

#[test]
fn bp_variance_is_non_negative_and_stderr_scales() {
    let ham = build_heisenberg(4, 1.0, 1.0, Boundary::Periodic).unwrap();
    let layout = CircuitLayout::new(4, 3);
    let target = TargetParam::default();
    // Quadrupling the sample count halves the standard error.
    let mut ratios = Vec::new();
    for seed in 0..6 {
        let small = variance_of_partial(&layout, &ham, 100, target, seed).unwrap();
        let large = variance_of_partial(&layout, &ham, 400, target, seed + 100).unwrap();
        assert!(small.variance >= 0.0 && large.variance >= 0.0);
        ratios.push(small.stderr / large.stderr);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2.0).abs() < 0.6, "ratio {mean}");
}
