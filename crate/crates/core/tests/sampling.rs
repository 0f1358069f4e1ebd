//! Generation from an untrained network: batching, seeding and best-of-k.

use dmvqe_core::diffusion::{
    candidate_seed, condition_for, generate_best_of, generate_candidates, make_linear_schedule, sample, sample_batch,
    NoisePredictor, SampleOptions, SamplingManifest, UNetConfig,
};
use dmvqe_core::pauli::{build_heisenberg, Boundary};
use dmvqe_core::simulator::CircuitLayout;

fn tiny_model() -> NoisePredictor {
    let config = UNetConfig {
        base_width: 8,
        res_blocks: 1,
        time_dim: 16,
        groups: 4,
    };
    NoisePredictor::new((3, 4), config, make_linear_schedule(12, 1e-4, 0.1).unwrap(), 0, 5).unwrap()
}

#[test]
fn batching_does_not_change_samples() {
    let model = tiny_model();
    let conds: Vec<_> = [(1.0, 1.0), (2.0, 0.5), (3.5, 4.0)]
        .iter()
        .map(|(j, h)| condition_for(&build_heisenberg(4, *j, *h, Boundary::Periodic).unwrap(), 0).unwrap())
        .collect();
    let refs: Vec<_> = conds.iter().collect();
    let seeds = [7, 8, 9];
    for options in [SampleOptions::default(), SampleOptions { deterministic: true }] {
        let batched = sample_batch(&model, &refs, &seeds, options).unwrap();
        for i in 0..3 {
            let alone = sample_batch(&model, &refs[i..=i], &seeds[i..=i], options).unwrap();
            let a: Vec<u64> = alone[0].values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = batched[i].values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "sample {i}");
        }
    }
}

#[test]
fn samples_are_clamped_and_reproducible() {
    let model = tiny_model();
    let h = build_heisenberg(4, 2.0, 1.0, Boundary::Periodic).unwrap();
    let cond = condition_for(&h, 0).unwrap();
    let a = sample(&model, &cond, 3, SampleOptions::default()).unwrap();
    let b = sample(&model, &cond, 3, SampleOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.n_layers(), a.n_qubits()), (3, 4));
    assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    let c = sample(&model, &cond, 4, SampleOptions::default()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn best_of_k_is_monotone_in_k() {
    let model = tiny_model();
    let layout = CircuitLayout::new(4, 3);
    let h = build_heisenberg(4, 1.5, 2.0, Boundary::Periodic).unwrap();
    let mut previous = f64::INFINITY;
    for k in [1, 2, 4, 8] {
        let (_, e) = generate_best_of(&model, &h, &layout, k, 21).unwrap();
        assert!(e <= previous, "k={k}: {e} > {previous}");
        previous = e;
    }
    let candidates = generate_candidates(&model, &h, &layout, 8, 21, SampleOptions::default()).unwrap();
    let min = candidates.iter().map(|c| c.energy).fold(f64::INFINITY, f64::min);
    assert_eq!(previous, min);
    // The first candidate is the plain sample.
    let cond = condition_for(&h, 0).unwrap();
    assert_eq!(candidates[0].grid, sample(&model, &cond, 21, SampleOptions::default()).unwrap());
    assert_ne!(candidate_seed(21, 0), candidate_seed(21, 1));
}

#[test]
fn best_of_rejects_bad_requests() {
    let model = tiny_model();
    let h = build_heisenberg(4, 1.0, 1.0, Boundary::Periodic).unwrap();
    assert!(generate_best_of(&model, &h, &CircuitLayout::new(4, 3), 0, 1).is_err());
    assert!(generate_best_of(&model, &h, &CircuitLayout::new(4, 2), 1, 1).is_err());
}

#[test]
fn manifest_records_schedule_and_model() {
    let model = tiny_model();
    let m = SamplingManifest::new(&model, 4, 9, SampleOptions::default()).unwrap();
    assert_eq!((m.seed, m.k, m.steps), (9, 4, 12));
    assert_eq!(m.model_hash.len(), 64);
    let json = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<SamplingManifest>(&json).unwrap(), m);
}
