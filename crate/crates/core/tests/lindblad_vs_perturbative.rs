//! Dense Lindblad evolution against the first-order closed form `R^N`.

use ancilla_core::model::{AncillaStateSpec, BlochVector, ProtocolSpec};
use ancilla_core::noise::{r_perturbative, NoiseSpec};
use ancilla_core::oracle::{
    extract_offdiag, lindblad_evolve, reduced_ancilla_of, DissipatorVariant, LindbladConfig,
};

fn relative_errors(
    n: usize,
    gamma: f64,
    variant: DissipatorVariant,
    rate_factor: f64,
    grid: &[f64],
) -> Vec<f64> {
    let spec = ProtocolSpec::default().with_probes(n);
    let ns = NoiseSpec::new(spec.clone(), gamma).unwrap();
    let v = BlochVector::from_array(spec.n);
    let cfg = LindbladConfig {
        rate_factor,
        step_scale: 0.03,
        ..LindbladConfig::new(gamma, variant)
    };
    let traj = lindblad_evolve(&spec, v, AncillaStateSpec::OPTIMAL, &cfg, grid).unwrap();
    grid.iter()
        .zip(&traj.states)
        .map(|(&t, rho)| {
            let off = extract_offdiag(&reduced_ancilla_of(rho, n).unwrap());
            let closed = r_perturbative(&ns, t).unwrap().value.powi(n as i32);
            (off - closed).norm() / closed.norm()
        })
        .collect()
}

fn improvement(n: usize, variant: DissipatorVariant, rate_factor: f64, grid: &[f64]) -> f64 {
    let hi = relative_errors(n, 1e-3, variant, rate_factor, grid);
    let lo = relative_errors(n, 1e-4, variant, rate_factor, grid);
    let worst = |e: &[f64]| e.iter().cloned().fold(0.0, f64::max);
    worst(&hi) / worst(&lo)
}

#[test]
fn only_probe_dephasing_at_double_rate_is_matched_to_first_order() {
    let grid = [0.5, 1.5, 3.0];
    for variant in DissipatorVariant::ALL {
        for rate in [1.0, 2.0] {
            let ratio = improvement(2, variant, rate, &grid);
            let matched = variant == DissipatorVariant::ProbesOnly && rate == 2.0;
            if matched {
                assert!((70.0..130.0).contains(&ratio), "{variant:?} x{rate}: {ratio}");
            } else {
                // a wrong channel leaves a first-order residual
                assert!(ratio < 20.0, "{variant:?} x{rate}: {ratio}");
            }
        }
    }
}

#[test]
fn four_probes_over_a_longer_window() {
    let grid = [1.0, 3.0, 5.0];
    let ratio = improvement(4, DissipatorVariant::ProbesOnly, 2.0, &grid);
    assert!((70.0..130.0).contains(&ratio), "{ratio}");
    let errs = relative_errors(4, 1e-4, DissipatorVariant::ProbesOnly, 2.0, &grid);
    assert!(errs.iter().all(|&e| e < 1e-5), "{errs:?}");
}
