//! Closed forms against brute-force evolution on random protocols.

use ancilla_core::analytic::{ancilla_bloch, big_gamma, gamma, qfi_protocol};
use ancilla_core::model::{AncillaStateSpec, BlochVector, ProtocolSpec};
use ancilla_core::oracle::{
    big_gamma_direct, gamma_direct, initial_joint_state, reduced_ancilla, JointEvolver, NumericQfi,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn random_case(rng: &mut impl Rng, n_probes: usize) -> (ProtocolSpec, BlochVector, AncillaStateSpec) {
    let spec = ProtocolSpec {
        omega: rng.gen_range(0.3..2.0),
        omega_a: rng.gen_range(-2.0..2.0),
        g: rng.gen_range(0.1..1.5),
        lambda: rng.gen_range(0.5..1.5),
        m: unit(rng),
        n: unit(rng),
        a: [rng.gen_range(0.2..1.5), rng.gen_range(-1.5..-0.2)],
        h: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        n_probes,
    }
    .validate()
    .unwrap();
    let v = BlochVector::from_array(unit(rng));
    let a = AncillaStateSpec::new(rng.gen_range(0.1..1.4), rng.gen_range(-3.0..3.0));
    (spec, v, a)
}

#[test]
fn overlaps_and_reduced_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..10 {
        let n = 1 + case % 5;
        let (spec, v, a) = random_case(&mut rng, n);
        let evolver = JointEvolver::new(&spec).unwrap();
        let init = initial_joint_state(&spec, v, a).unwrap();
        for j in 0..8 {
            let t = 0.37 + 1.13 * j as f64;
            let g = gamma(&spec, v, t).unwrap().value;
            assert!((g - gamma_direct(&spec, v, t).unwrap()).norm() < 1e-10);
            let bg = big_gamma(&spec, v, t).unwrap().value;
            assert!((bg - big_gamma_direct(&spec, v, t).unwrap()).norm() < 1e-9);
            let rho = reduced_ancilla(&evolver.evolve(&init, t)).unwrap();
            let (r, _) = ancilla_bloch(&spec, v, a, t).unwrap();
            assert!(rho.max_abs_diff(&r.density_matrix()) < 1e-10, "case {case} t {t}");
        }
    }
}

#[test]
fn qfi_against_finite_differences_of_the_reduced_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..6 {
        let (spec, v, a) = random_case(&mut rng, 1 + case % 3);
        let oracle = NumericQfi::with_default_step(&spec).unwrap();
        for t in [0.8, 2.9, 5.5] {
            let exact = qfi_protocol(&spec, v, a, t).unwrap();
            let num = oracle.eval(v, a, t).unwrap();
            assert!((num - exact).abs() <= 1e-5 * exact.max(1e-3), "case {case} t {t}: {num} vs {exact}");
        }
    }
}
