//! Closed-form quantities for the dephased protocol: the first-order
//! single-probe factor `R`, the resulting ancilla QFI, its envelope, the
//! optimal interrogation time and the restart-based segmented strategy.
//!
//! All formulas assume the optimized interaction, `m . n = 0` and `g = lambda omega`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{dot, ProtocolSpec};

/// Tolerance on the configuration constraints `m . n = 0` and `g = lambda omega`.
pub const CONFIG_TOL: f64 = 1e-10;
/// Largest `gamma t` accepted by [`r_perturbative`].
pub const MAX_GAMMA_T: f64 = 10.0;
/// Above this many probes the envelope is evaluated in log space.
pub const LOG_SPACE_PROBES: usize = 30;

/// A protocol in the optimized configuration with a dephasing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub base: ProtocolSpec,
    pub gamma_noise: f64,
    omega_big: f64,
}

impl NoiseSpec {
    pub fn new(base: ProtocolSpec, gamma_noise: f64) -> Result<Self> {
        let base = base.validate()?;
        if dot(base.m, base.n).abs() >= CONFIG_TOL {
            return Err(Error::InvalidSpec {
                field: "m",
                reason: format!("noise formulas need m . n = 0, got {}", dot(base.m, base.n)),
            });
        }
        if (base.g - base.u()).abs() >= CONFIG_TOL {
            return Err(Error::InvalidSpec {
                field: "g",
                reason: format!("noise formulas need g = lambda omega, got g = {}, lambda omega = {}", base.g, base.u()),
            });
        }
        if !(gamma_noise >= 0.0) || !gamma_noise.is_finite() {
            return Err(Error::InvalidSpec {
                field: "gamma_noise",
                reason: format!("must be finite and non-negative, got {gamma_noise}"),
            });
        }
        let omega_big = base.g.hypot(base.u());
        Ok(Self {
            base,
            gamma_noise,
            omega_big,
        })
    }

    /// `Omega = sqrt(g^2 + lambda^2 omega^2)`.
    pub fn omega_big(&self) -> f64 {
        self.omega_big
    }

    pub fn n_probes(&self) -> usize {
        self.base.n_probes
    }
}

/// `R` and its derivative with respect to `omega` at fixed `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RValue {
    pub value: Complex64,
    pub d_omega: Complex64,
}

/// First-order-in-`gamma` single-probe factor of the ancilla coherence,
/// including the per-probe share of the ancilla phase, so that the
/// coherence is `R^N`.
pub fn r_perturbative(ns: &NoiseSpec, t: f64) -> Result<RValue> {
    let gam = ns.gamma_noise;
    if gam * t.abs() > MAX_GAMMA_T {
        return Err(Error::RangeGuard(format!(
            "gamma t = {} exceeds {MAX_GAMMA_T}",
            gam * t.abs()
        )));
    }
    let g = ns.base.g;
    let om = ns.omega_big;
    let (om2, g2) = (om * om, g * g);
    let i = Complex64::i();

    let e = (-4.0 * gam * t * (g2 + om2) / om2).exp();
    let f = (4.0 * gam * t).exp();
    let gg = (6.0 * gam * g2 * t / om2).exp();
    let (s, c) = (2.0 * t * om).sin_cos();

    let a = f * (om2 - g2) + g * gg * (g * c - i * om * s);
    let b = -2.0 * i * f * om * (om2 - g2)
        + gg * (g * (4.0 * om2 - 3.0 * g2) * s + 2.0 * i * om * (om2 - g2) * c);
    let r = e * a / om2 + gam * g * e * b / om.powi(5);

    // d/dOmega, then chain rule dOmega/domega = lambda^2 omega / Omega
    let de = e * 8.0 * gam * t * g2 / om.powi(3);
    let dgg = gg * (-12.0 * gam * g2 * t / om.powi(3));
    let (dc, ds) = (-2.0 * t * s, 2.0 * t * c);
    let da = 2.0 * om * f
        + g * dgg * (g * c - i * om * s)
        + g * gg * (g * dc - i * s - i * om * ds);
    let db = -2.0 * i * f * (3.0 * om2 - g2)
        + dgg * (g * (4.0 * om2 - 3.0 * g2) * s + 2.0 * i * om * (om2 - g2) * c)
        + gg * (8.0 * g * om * s
            + g * (4.0 * om2 - 3.0 * g2) * ds
            + 2.0 * i * (3.0 * om2 - g2) * c
            + 2.0 * i * om * (om2 - g2) * dc);
    let d1 = de * a / om2 + e * da / om2 - 2.0 * e * a / om.powi(3);
    let d2 = gam * g * (de * b / om.powi(5) + e * db / om.powi(5) - 5.0 * e * b / om.powi(6));
    let dr = (d1 + d2) * (ns.base.lambda * ns.base.u() / om);

    let spec = &ns.base;
    let phase = Complex64::from_polar(
        1.0,
        -t * spec.omega_a * (spec.h[0] - spec.h[1]) / spec.n_probes as f64,
    );
    Ok(RValue {
        value: r * phase,
        d_omega: dr * phase,
    })
}

/// Ancilla QFI for coherence `R^N` with the optimal ancilla state.
pub fn qfi_noisy(r: Complex64, dr: Complex64, n: usize) -> Result<f64> {
    let r2 = r.norm_sqr();
    if !(r2 < 1.0) {
        return Err(Error::DomainError(format!(
            "|R| = {} must be below 1; use the noiseless formulas",
            r2.sqrt()
        )));
    }
    let nf = n as f64;
    let p = r2.powi(n as i32 - 1);
    let im = (r.conj() * dr).im;
    let value = nf * nf * (p * dr.norm_sqr() - p * p * im * im) / (1.0 - p * r2);
    Ok(value.max(0.0))
}

/// Envelope `lambda^2 N^2 t^2 4^(1-N) e^(-6 gamma N t) (e^(gamma t) + 1)^(2N-2)`.
pub fn f_env(ns: &NoiseSpec, n: usize, t: f64) -> f64 {
    if n > LOG_SPACE_PROBES {
        f_env_log(ns.base.lambda, ns.gamma_noise, n, t)
    } else {
        f_env_direct(ns.base.lambda, ns.gamma_noise, n, t)
    }
}

pub fn f_env_direct(lambda: f64, gamma_noise: f64, n: usize, t: f64) -> f64 {
    let nf = n as f64;
    let shape = 4f64.powi(1 - n as i32)
        * (-6.0 * gamma_noise * nf * t).exp()
        * ((gamma_noise * t).exp() + 1.0).powi(2 * n as i32 - 2);
    (lambda * nf * t).powi(2) * shape
}

pub fn f_env_log(lambda: f64, gamma_noise: f64, n: usize, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let gt = gamma_noise * t;
    // ln(e^x + 1) - ln 2 without overflow
    let half_soft = gt.max(0.0) + (-gt.abs()).exp().ln_1p() - std::f64::consts::LN_2;
    let log = 2.0 * (lambda * nf * t).abs().ln() - 6.0 * gt * nf + (2.0 * nf - 2.0) * half_soft;
    log.exp()
}

/// Optimal interrogation time, leading-order formula and numeric argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTime {
    /// `2 / (5 N gamma)`.
    pub closed_form: f64,
    /// Argmax of the envelope.
    pub numeric: f64,
}

pub fn t_opt(n: usize, gamma_noise: f64) -> OptimalTime {
    let nf = n as f64;
    let closed_form = 2.0 / (5.0 * nf * gamma_noise);
    // d ln f / dt is decreasing through its single root
    let slope = |t: f64| {
        let x = gamma_noise * t;
        2.0 / t - 6.0 * gamma_noise * nf + (2.0 * nf - 2.0) * gamma_noise / (1.0 + (-x).exp())
    };
    let mut lo = closed_form * 1e-3;
    let mut hi = closed_form * 4.0;
    while slope(hi) > 0.0 {
        hi *= 2.0;
    }
    while slope(lo) < 0.0 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    OptimalTime {
        closed_form,
        numeric: 0.5 * (lo + hi),
    }
}

/// Envelope maximum `4 lambda^2 e^(-9/(25N) - 2) / (25 gamma^2)`.
pub fn f_env_max(lambda: f64, gamma_noise: f64, n: usize) -> f64 {
    4.0 * lambda * lambda * (-9.0 / (25.0 * n as f64) - 2.0).exp() / (25.0 * gamma_noise * gamma_noise)
}

/// Decay rate below which restarting at `t_opt` beats the first oscillation.
pub fn gamma_threshold(lambda: f64, omega: f64, n: usize) -> f64 {
    4.0 * std::f64::consts::SQRT_2 * lambda * omega / (5.0 * std::f64::consts::PI * n as f64)
}

/// Number of complete `t_opt` segments that fit in `total_time`.
pub fn segment_count(n: usize, gamma_noise: f64, total_time: f64) -> u64 {
    let t_op = t_opt(n, gamma_noise).closed_form;
    (total_time / t_op + 1e-9).floor().max(0.0) as u64
}

/// QFI accumulated over `total_time` by restarting with fresh probes every
/// `t_opt`. Leftover time shorter than a segment is discarded.
pub fn segmented_qfi(ns: &NoiseSpec, n: usize, total_time: f64) -> f64 {
    let lambda = ns.base.lambda;
    let gam = ns.gamma_noise;
    match segment_count(n, gam, total_time) {
        0 => f_env(ns, n, total_time.max(0.0)),
        m => m as f64 * f_env_max(lambda, gam, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::model::BlochVector;
    use crate::qfi::qfi_bloch;

    fn fig3(gamma: f64) -> NoiseSpec {
        let base = ProtocolSpec::default().with_probes(10);
        NoiseSpec::new(base, gamma).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn noise_spec_constraints() {
        let ns = fig3(1e-3);
        assert!((ns.omega_big().powi(2) - 2.0).abs() < 1e-12);
        let skew = ProtocolSpec {
            n: [0.6, 0.0, 0.8],
            ..ProtocolSpec::default()
        };
        assert!(matches!(NoiseSpec::new(skew, 1e-3), Err(Error::InvalidSpec { field: "m", .. })));
        let weak = ProtocolSpec {
            g: 0.5,
            ..ProtocolSpec::default()
        };
        assert!(matches!(NoiseSpec::new(weak, 1e-3), Err(Error::InvalidSpec { field: "g", .. })));
        assert!(NoiseSpec::new(ProtocolSpec::default(), -1.0).is_err());
    }

    #[test]
    fn r_noiseless_limit() {
        let ns = fig3(0.0);
        assert!((r_perturbative(&ns, 0.0).unwrap().value - 1.0).norm() < 1e-15);
        let period = std::f64::consts::PI / ns.omega_big();
        for k in 1..5 {
            let r = r_perturbative(&ns, k as f64 * period).unwrap().value;
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
        // reproduces the single-probe factor, phase included
        let v = BlochVector::from_array(ns.base.n);
        for t in [0.3, 1.7, 4.4, 9.0] {
            let r = r_perturbative(&ns, t).unwrap();
            let gam = analytic::gamma(&ns.base, v, t).unwrap();
            assert!((r.value - gam.value).norm() < 1e-12, "t {t}");
            assert!((r.d_omega - gam.d_omega).norm() < 1e-10, "t {t}");
        }
        assert!(matches!(
            r_perturbative(&fig3(1.0), 10.5),
            Err(Error::RangeGuard(_))
        ));
    }

    #[test]
    fn r_derivative_matches_finite_difference() {
        for gamma in [0.0, 1e-3, 0.05] {
            let ns = fig3(gamma);
            let h = 1e-6;
            // g stays fixed while omega moves, so the shifted specs are built by hand
            let shifted = |d: f64| NoiseSpec {
                base: ns.base.with_omega(ns.base.omega + d),
                gamma_noise: gamma,
                omega_big: ns.base.g.hypot(ns.base.lambda * (ns.base.omega + d)),
            };
            for t in [0.8, 3.1, 7.5] {
                let r = r_perturbative(&ns, t).unwrap();
                let fd = (r_perturbative(&shifted(h), t).unwrap().value
                    - r_perturbative(&shifted(-h), t).unwrap().value)
                    / (2.0 * h);
                assert!((fd - r.d_omega).norm() < 1e-7 * (1.0 + r.d_omega.norm()), "gamma {gamma} t {t}");
            }
        }
    }

    #[test]
    fn qfi_noisy_examples() {
        assert_eq!(qfi_noisy(Complex64::new(0.5, 0.2), Complex64::new(0.0, 0.0), 4).unwrap(), 0.0);
        assert!(matches!(
            qfi_noisy(Complex64::new(1.0, 0.0), Complex64::new(0.1, 0.0), 3),
            Err(Error::DomainError(_))
        ));

        // N = 1 against the Bloch-vector formula for r = (Re R, -Im R, 0)
        let (r0, th, dth, dr0) = (0.8f64, 0.7f64, 1.3, -0.2);
        let r = Complex64::from_polar(r0, th);
        let dr = Complex64::from_polar(1.0, th) * Complex64::new(dr0, r0 * dth);
        let bloch = BlochVector::new(r.re, -r.im, 0.0);
        let dbloch = BlochVector::new(dr.re, -dr.im, 0.0);
        let want = qfi_bloch(bloch, dbloch).unwrap();
        assert!(rel(qfi_noisy(r, dr, 1).unwrap(), want) < 1e-12);
        // pure phase motion at fixed modulus
        let phase_only = qfi_noisy(r, Complex64::i() * r * dth, 1).unwrap();
        assert!(rel(phase_only, r0 * r0 * dth * dth) < 1e-12);

        // N probes: closed form against the Bloch formula on Gamma = R^N
        for n in [2, 5, 10] {
            let big = r.powi(n as i32);
            let dbig = dr * r.powi(n as i32 - 1) * n as f64;
            let want = qfi_bloch(
                BlochVector::new(big.re, -big.im, 0.0),
                BlochVector::new(dbig.re, -dbig.im, 0.0),
            )
            .unwrap();
            assert!(rel(qfi_noisy(r, dr, n).unwrap(), want) < 1e-10);
        }
    }

    #[test]
    fn qfi_noisy_continuity_at_unit_modulus() {
        // on the noiseless peaks the mixed-state formula tends to the pure one
        let spec = ProtocolSpec::default().with_probes(4);
        let t_peak = 2.0 * std::f64::consts::PI / 2f64.sqrt();
        let v = BlochVector::from_array(spec.n);
        let pure = analytic::qfi_protocol(&spec, v, Default::default(), t_peak).unwrap();
        let mut last = f64::INFINITY;
        for gamma in [1e-3, 1e-4, 1e-5, 1e-6] {
            let r = r_perturbative(&NoiseSpec::new(spec.clone(), gamma).unwrap(), t_peak).unwrap();
            let q = qfi_noisy(r.value, r.d_omega, 4).unwrap();
            let err = rel(q, pure);
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn f_env_examples() {
        let ns0 = fig3(0.0);
        for n in [1, 3, 10, 50] {
            for t in [0.5, 7.0, 40.0] {
                assert!(rel(f_env(&ns0, n, t), (n as f64 * t).powi(2)) < 1e-12);
            }
        }
        assert_eq!(f_env(&fig3(1e-3), 10, 0.0), 0.0);
        let (d, l) = (f_env_direct(1.0, 1e-3, 10, 40.0), f_env_log(1.0, 1e-3, 10, 40.0));
        assert!(rel(l, d) < 1e-12);
        // direct evaluation hits 0 * inf, log space stays near (N t)^2
        let big = f_env(&fig3(1e-6), 2000, 10.0);
        assert!(rel(big, 4e8) < 0.1);
        assert!(f_env_direct(1.0, 1e-6, 2000, 10.0).is_nan());
    }

    #[test]
    fn f_env_noiseless_continuity() {
        for n in [3, 10] {
            for t in [1.0, 10.0, 50.0] {
                let target = (n as f64 * t).powi(2);
                let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                    .iter()
                    .map(|&g| (f_env_direct(1.0, g, n, t) - target).abs())
                    .collect();
                assert!(errs[0] > errs[1] && errs[1] > errs[2]);
            }
        }
    }

    #[test]
    fn t_opt_examples() {
        assert!(rel(t_opt(10, 1e-3).closed_form, 40.0) < 1e-14);
        assert!(rel(t_opt(20, 1e-3).closed_form, 20.0) < 1e-14);
        let opt = t_opt(10, 1e-3);
        assert!(rel(opt.numeric, 40.0) < 0.05);
        // the numeric argmax really is a maximum
        let f = |t: f64| f_env_direct(1.0, 1e-3, 10, t);
        assert!(f(opt.numeric) >= f(opt.numeric * 1.001));
        assert!(f(opt.numeric) >= f(opt.numeric * 0.999));

        let residual = |n: usize| {
            let o = t_opt(n, 1e-3);
            (o.numeric - o.closed_form).abs() / o.closed_form
        };
        let res: Vec<f64> = [5, 10, 20, 40].iter().map(|&n| residual(n)).collect();
        assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    }

    #[test]
    fn f_env_max_examples() {
        let want = 160000.0 * (-9.0f64 / 250.0 - 2.0).exp();
        assert!(rel(f_env_max(1.0, 1e-3, 10), want) < 1e-14);
        assert!(rel(f_env_max(1.0, 1e-3, 10), 2.089e4) < 5e-4);
        assert!(rel(f_env_max(1.0, 5e-4, 10), 4.0 * f_env_max(1.0, 1e-3, 10)) < 1e-14);
        let at_opt = f_env(&fig3(1e-3), 10, t_opt(10, 1e-3).closed_form);
        assert!(rel(at_opt, f_env_max(1.0, 1e-3, 10)) < 0.05);
    }

    #[test]
    fn gamma_threshold_examples() {
        let th = gamma_threshold(1.0, 1.0, 10);
        assert!(rel(th, 4.0 * 2f64.sqrt() / (50.0 * std::f64::consts::PI)) < 1e-14);
        assert!((th - 0.036).abs() < 5e-4);
        assert!(rel(gamma_threshold(1.0, 1.0, 20), th / 2.0) < 1e-14);
        assert!(1e-3 < th);
    }

    #[test]
    fn segmented_examples() {
        let ns = fig3(1e-3);
        let t_op = t_opt(10, 1e-3).closed_form;
        let one = f_env_max(1.0, 1e-3, 10);
        assert_eq!(segmented_qfi(&ns, 10, t_op), one);
        for k in 1..=12u32 {
            assert_eq!(segmented_qfi(&ns, 10, k as f64 * t_op), k as f64 * segmented_qfi(&ns, 10, t_op));
        }
        assert_eq!(segmented_qfi(&ns, 10, 5.0 * t_op), 5.0 * one);
        let slope = (segmented_qfi(&ns, 10, 20.0 * t_op) - segmented_qfi(&ns, 10, 10.0 * t_op)) / (10.0 * t_op);
        let predicted_slope = 2.0 * 10.0 / (5.0 * std::f64::consts::E.powi(2) * 1e-3);
        assert!(rel(slope, predicted_slope) < 0.05);
        let half = segmented_qfi(&ns, 10, t_op / 2.0);
        assert_eq!(half, f_env(&ns, 10, t_op / 2.0));
        assert!(half < one);
        // leftover time is discarded
        assert_eq!(segmented_qfi(&ns, 10, 2.7 * t_op), 2.0 * one);
    }
}
