//! Where the QFI sits relative to the noiseless and dephased envelopes.

use ancilla_core::analytic::{envelope, optimal_time_points, qfi_protocol};
use ancilla_core::model::{AncillaStateSpec, BlochVector, ProtocolSpec};
use ancilla_core::noise::{f_env, qfi_noisy, r_perturbative, t_opt, NoiseSpec};

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

#[test]
fn noiseless_qfi_touches_the_envelope_and_overshoot_decays() {
    let spec = ProtocolSpec::default();
    let v = BlochVector::from_array(spec.n).scale(-1.0);
    let a = AncillaStateSpec::OPTIMAL;
    for tp in optimal_time_points(&spec, 6, 64).unwrap() {
        let ratio = qfi_protocol(&spec, v, a, tp.t).unwrap() / envelope(&spec, tp.t);
        assert!((ratio - 1.0).abs() < 1e-8);
    }
    // between peaks the fixed probe state can exceed the envelope, by a
    // margin that shrinks roughly as 1/t
    let excess = |lo: f64, hi: f64| {
        linspace(lo, hi, 3000)
            .map(|t| qfi_protocol(&spec, v, a, t).unwrap() / envelope(&spec, t) - 1.0)
            .fold(f64::MIN, f64::max)
    };
    let windows = [(1.0, 5.0), (5.0, 10.0), (10.0, 20.0), (20.0, 40.0), (40.0, 80.0)];
    let ex: Vec<f64> = windows.iter().map(|&(lo, hi)| excess(lo, hi)).collect();
    assert!(ex.windows(2).all(|w| w[1] < w[0]), "{ex:?}");
    assert!(ex[0] < 0.1 && ex[4] < 0.01, "{ex:?}");
}

#[test]
fn noisy_qfi_is_dominated_after_the_first_oscillation() {
    let ns = NoiseSpec::new(ProtocolSpec::default().with_probes(10), 1e-3).unwrap();
    let n = 10;
    let tau = std::f64::consts::PI / ns.omega_big();
    let ratio = |t: f64| {
        let r = r_perturbative(&ns, t).unwrap();
        qfi_noisy(r.value, r.d_omega, n).unwrap() / f_env(&ns, n, t)
    };
    let worst = linspace(tau, 3.0 * t_opt(n, 1e-3).closed_form, 20000)
        .map(ratio)
        .fold(f64::MIN, f64::max);
    assert!(worst <= 1.02, "{worst}");
    let first = linspace(1e-3, tau, 2000).map(ratio).fold(f64::MIN, f64::max);
    assert!(first > 1.02 && first < 1.1, "{first}");
}
