//! Closed forms for the protocol: the single-probe overlap `gamma(t)`, the
//! ancilla coherence `Gamma = gamma^N`, the `k(t)` vector, the ancilla Bloch
//! vector, the protocol QFI, optimal time points and probe states, and the
//! noiseless upper envelope.
//!
//! Every `d_omega` here is an exact chain-rule derivative taken at fixed
//! coupling `g`; finite differences only appear in tests.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{
    cross, dot, mu, AncillaStateSpec, BlochVector, Branch, ProtocolSpec, Vec3, UNIT_TOL,
};
use crate::qfi::BLOCH_FLOOR;

/// Default largest convergent denominator for irrational frequency ratios.
pub const DEFAULT_DENOMINATOR_BOUND: u64 = 64;
/// A convergent within this (times the ratio) counts as reproducing it.
pub const RATIONAL_TOL: f64 = 1e-12;
/// Largest denominator tried when looking for an exact common period.
pub const MAX_COMMON_PERIOD_DENOMINATOR: u64 = 1_000_000;
/// `|x - p/q| q^2` must be below this for an exact match; generic
/// irrationals sit near `1/sqrt(5)`, so this separates the two even when the
/// absolute error of a large-q convergent dips under `RATIONAL_TOL`.
const RATIONAL_DIOPHANTINE_TOL: f64 = 1e-3;

/// Single-probe overlap together with its decomposition and derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaValue {
    /// `exp(i global_phase) (gamma_r + i gamma_i)`.
    pub value: Complex64,
    pub gamma_r: f64,
    pub gamma_i: f64,
    /// `-t omega_a (h1 - h2) / N`.
    pub global_phase: f64,
    /// `d value / d omega`.
    pub d_omega: Complex64,
}

/// `Gamma = gamma^N` with its `omega` derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigGammaValue {
    pub value: Complex64,
    pub d_omega: Complex64,
}

/// How a time point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimePointKind {
    /// Both branch frequencies are equal; `t = 2 pi k / mu`.
    SingleFrequency,
    /// Integer multiple of an exact common period of both branches.
    ExactCommonPeriod,
    /// Multiple of an approximate common period from a convergent of `mu1/mu2`.
    RationalApproximation,
}

impl TimePointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimePointKind::SingleFrequency => "single-frequency",
            TimePointKind::ExactCommonPeriod => "exact-common-period",
            TimePointKind::RationalApproximation => "rational-approximation",
        }
    }
}

/// A time at which both branch rotations (nearly) close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePoint {
    pub t: f64,
    pub kind: TimePointKind,
    /// Bound on the distance from `t` to a true period multiple of either branch.
    pub approximation_error: f64,
    /// Which multiple of the (approximate) common period this is, from 1.
    pub multiple: u64,
    /// Convergent `(p, q)` with `mu1 / mu2 ~ p / q`.
    pub convergent: (u64, u64),
}

impl TimePoint {
    /// Total rotation-angle mismatch `(mu1 + mu2) * approximation_error`.
    pub fn phase_mismatch(&self, spec: &ProtocolSpec) -> Result<f64> {
        Ok((mu(spec, Branch::First)? + mu(spec, Branch::Second)?) * self.approximation_error)
    }

    /// Guaranteed lower bound on `|gamma(t)|`: the two branch rotations each
    /// miss the identity by at most their phase mismatch, so the product is a
    /// rotation by at most the sum.
    pub fn gamma_lower_bound(&self, spec: &ProtocolSpec) -> Result<f64> {
        Ok(self.phase_mismatch(spec)?.min(PI / 2.0).cos())
    }

    /// Relative tolerance for the QFI at this point to match the envelope:
    /// `1 - lb^{2N}` with `lb` the bound on `|gamma|`, i.e. the worst-case
    /// loss of `|Gamma|^2`, floored at `1e-6` for exact points.
    pub fn qfi_relative_tolerance(&self, spec: &ProtocolSpec) -> Result<f64> {
        let lb = self.gamma_lower_bound(spec)?;
        Ok((1.0 - lb.powi(2 * spec.n_probes as i32)).max(1e-6))
    }
}

/// `gamma_r`, `k` and their `omega` derivatives at one time.
struct Kernel {
    gamma_r: f64,
    d_gamma_r: f64,
    k: Vec3,
    dk: Vec3,
}

fn kernel(spec: &ProtocolSpec, t: f64) -> Result<Kernel> {
    let mu1 = mu(spec, Branch::First)?;
    let mu2 = mu(spec, Branch::Second)?;
    let (u, g, lambda, mn) = (spec.u(), spec.g, spec.lambda, spec.m_dot_n());
    let [a1, a2] = spec.a;

    let dmu1 = lambda * (a1 * g * mn + u) / mu1;
    let dmu2 = lambda * (a2 * g * mn + u) / mu2;
    let (s1, c1) = (mu1 * t).sin_cos();
    let (s2, c2) = (mu2 * t).sin_cos();
    let (ds1, dc1) = (t * c1 * dmu1, -t * s1 * dmu1);
    let (ds2, dc2) = (t * c2 * dmu2, -t * s2 * dmu2);

    // gamma_r = c1 c2 + P s1 s2, with P the cosine between the branch axes
    let d_axes = u * u + u * g * (a1 + a2) * mn + g * g * a1 * a2;
    let dd_axes = 2.0 * u * lambda + lambda * g * (a1 + a2) * mn;
    let mu12 = mu1 * mu2;
    let log_dmu = dmu1 / mu1 + dmu2 / mu2;
    let p = d_axes / mu12;
    let dp = dd_axes / mu12 - p * log_dmu;
    let gamma_r = c1 * c2 + p * s1 * s2;
    let d_gamma_r = dc1 * c2 + c1 * dc2 + dp * s1 * s2 + p * (ds1 * s2 + s1 * ds2);

    let f1 = c1 * s2 / mu2;
    let f2 = s1 * c2 / mu1;
    let df1 = (dc1 * s2 + c1 * ds2) / mu2 - f1 * dmu2 / mu2;
    let df2 = (ds1 * c2 + s1 * dc2) / mu1 - f2 * dmu1 / mu1;
    let q = s1 * s2 / mu12;
    let dq = (ds1 * s2 + s1 * ds2) / mu12 - q * log_dmu;

    let c_m = u * (f1 - f2);
    let c_n = g * (a2 * f1 - a1 * f2);
    let c_mn = (a1 - a2) * g * u * q;
    let dc_m = lambda * (f1 - f2) + u * (df1 - df2);
    let dc_n = g * (a2 * df1 - a1 * df2);
    let dc_mn = (a1 - a2) * g * (lambda * q + u * dq);

    let mxn = cross(spec.m, spec.n);
    let combine = |cm: f64, cn: f64, cmn: f64| -> Vec3 {
        [
            cm * spec.m[0] + cn * spec.n[0] + cmn * mxn[0],
            cm * spec.m[1] + cn * spec.n[1] + cmn * mxn[1],
            cm * spec.m[2] + cn * spec.n[2] + cmn * mxn[2],
        ]
    };
    Ok(Kernel {
        gamma_r,
        d_gamma_r,
        k: combine(c_m, c_n, c_mn),
        dk: combine(dc_m, dc_n, dc_mn),
    })
}

/// `k(t) = c_m m + c_n n + c_mn m x n`, so that `gamma_i = k . v`.
pub fn k_vector(spec: &ProtocolSpec, t: f64) -> Result<BlochVector> {
    Ok(BlochVector::from_array(kernel(spec, t)?.k))
}

/// `d k / d omega`.
pub fn k_vector_derivative(spec: &ProtocolSpec, t: f64) -> Result<BlochVector> {
    Ok(BlochVector::from_array(kernel(spec, t)?.dk))
}

/// `-t omega_a (h1 - h2) / N`.
pub fn global_phase(spec: &ProtocolSpec, t: f64) -> f64 {
    -t * spec.omega_a * (spec.h[0] - spec.h[1]) / spec.n_probes as f64
}

fn check_probe(v: BlochVector) -> Result<()> {
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidBloch { norm: v.norm() });
    }
    Ok(())
}

/// Single-probe overlap `<phi| exp(i t theta_2) exp(-i t theta_1) |phi>`.
pub fn gamma(spec: &ProtocolSpec, v: BlochVector, t: f64) -> Result<GammaValue> {
    check_probe(v)?;
    let kn = kernel(spec, t)?;
    let v = v.to_array();
    let gamma_i = dot(kn.k, v);
    let d_gamma_i = dot(kn.dk, v);
    let phase_angle = global_phase(spec, t);
    let phase = Complex64::from_polar(1.0, phase_angle);
    Ok(GammaValue {
        value: phase * Complex64::new(kn.gamma_r, gamma_i),
        gamma_r: kn.gamma_r,
        gamma_i,
        global_phase: phase_angle,
        d_omega: phase * Complex64::new(kn.d_gamma_r, d_gamma_i),
    })
}

/// `Gamma = gamma^N`, `d Gamma = N gamma^{N-1} d gamma`.
pub fn big_gamma(spec: &ProtocolSpec, v: BlochVector, t: f64) -> Result<BigGammaValue> {
    Ok(raise(&gamma(spec, v, t)?, spec.n_probes))
}

fn raise(g: &GammaValue, n: usize) -> BigGammaValue {
    let n_i = n as i32;
    BigGammaValue {
        value: g.value.powi(n_i),
        d_omega: g.value.powi(n_i - 1) * g.d_omega * n as f64,
    }
}

/// Ancilla Bloch vector and its `omega` derivative.
pub fn ancilla_bloch(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
    t: f64,
) -> Result<(BlochVector, BlochVector)> {
    let bg = big_gamma(spec, v, t)?;
    Ok(bloch_from_coherence(bg, a))
}

/// Bloch vector of the ancilla whose off-diagonal element is
/// `cos(alpha) sin(alpha) exp(i phi) Gamma`.
pub fn bloch_from_coherence(bg: BigGammaValue, a: AncillaStateSpec) -> (BlochVector, BlochVector) {
    let s2a = (2.0 * a.alpha).sin();
    let rot = Complex64::from_polar(s2a, a.phi);
    let w = rot * bg.value;
    let dw = rot * bg.d_omega;
    (
        BlochVector::new(w.re, -w.im, (2.0 * a.alpha).cos()),
        BlochVector::new(dw.re, -dw.im, 0.0),
    )
}

/// Protocol QFI about `omega`.
///
/// Equal to `qfi_bloch` on the ancilla Bloch vector, written directly in
/// terms of `Gamma` so that small `sin(2 alpha)` does not trip the purity
/// floor. Where `1 - |Gamma|^2` drops below the floor the pure-state limit
/// `sin^2(2 alpha) N^2 (d_omega arg gamma)^2` is used.
pub fn qfi_protocol(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
    t: f64,
) -> Result<f64> {
    let g = gamma(spec, v, t)?;
    Ok(qfi_from_gamma(&g, spec.n_probes, a))
}

fn qfi_from_gamma(g: &GammaValue, n: usize, a: AncillaStateSpec) -> f64 {
    let s2 = (2.0 * a.alpha).sin().powi(2);
    let bg = raise(g, n);
    let gap = 1.0 - bg.value.norm_sqr();
    if gap < BLOCH_FLOOR {
        let d_arg = (g.value.conj() * g.d_omega).im / g.value.norm_sqr();
        let nf = n as f64;
        return s2 * nf * nf * d_arg * d_arg;
    }
    let radial = (bg.value.conj() * bg.d_omega).re;
    s2 * (bg.d_omega.norm_sqr() + radial * radial / gap)
}

/// Reduced form `N^2 |gamma|^{2N-2} |d gamma|^2`, which drops the radial
/// term of the full expression and agrees with it only where `|gamma| = 1`.
pub fn qfi_eq33(spec: &ProtocolSpec, v: BlochVector, t: f64) -> Result<f64> {
    let g = gamma(spec, v, t)?;
    let n = spec.n_probes as f64;
    Ok(n * n * g.value.norm_sqr().powi(spec.n_probes as i32 - 1) * g.d_omega.norm_sqr())
}

/// Continued-fraction convergents `(p, q)` of `x > 0` with `q <= max_den`.
pub fn convergents(x: f64, max_den: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    if !(x > 0.0) || !x.is_finite() {
        return out;
    }
    let (mut p_prev, mut p) = (1u128, x.floor() as u128);
    let (mut q_prev, mut q) = (0u128, 1u128);
    out.push((p as u64, q as u64));
    let mut rem = x - x.floor();
    while rem > 1e-15 {
        let inv = 1.0 / rem;
        let a = inv.floor();
        if !a.is_finite() || a > 1e15 {
            break;
        }
        let a_int = a as u128;
        let (p_next, q_next) = (a_int * p + p_prev, a_int * q + q_prev);
        if q_next > max_den as u128 || p_next > u64::MAX as u128 {
            break;
        }
        (p_prev, p, q_prev, q) = (p, p_next, q, q_next);
        out.push((p as u64, q as u64));
        rem = inv - a;
    }
    out
}

fn exact_match(x: f64, p: u64, q: u64) -> bool {
    let err = (x - p as f64 / q as f64).abs();
    let qf = q as f64;
    err <= RATIONAL_TOL * x.max(1.0) && err * qf * qf <= RATIONAL_DIOPHANTINE_TOL
}

/// The first `count` times at which both branch rotations return to the
/// identity, exactly when `mu1 / mu2` is rational and approximately otherwise.
pub fn optimal_time_points(
    spec: &ProtocolSpec,
    count: usize,
    denominator_bound: u64,
) -> Result<Vec<TimePoint>> {
    let mu1 = mu(spec, Branch::First)?;
    let mu2 = mu(spec, Branch::Second)?;
    let ratio = mu1 / mu2;

    let exact = convergents(ratio, MAX_COMMON_PERIOD_DENOMINATOR)
        .into_iter()
        .find(|&(p, q)| p > 0 && exact_match(ratio, p, q));
    if let Some((p, q)) = exact {
        // both branches close after p turns of branch 1 and q of branch 2
        let period = PI * (p as f64 / mu1 + q as f64 / mu2);
        let kind = if (p, q) == (1, 1) {
            TimePointKind::SingleFrequency
        } else {
            TimePointKind::ExactCommonPeriod
        };
        return Ok((1..=count as u64)
            .map(|j| TimePoint {
                t: j as f64 * period,
                kind,
                approximation_error: 0.0,
                multiple: j,
                convergent: (p, q),
            })
            .collect());
    }

    let (p, q) = convergents(ratio, denominator_bound.max(1))
        .into_iter()
        .rev()
        .find(|&(p, _)| p > 0)
        .unwrap_or((1, 1));
    let t1 = 2.0 * PI * p as f64 / mu1;
    let t2 = 2.0 * PI * q as f64 / mu2;
    let period = 0.5 * (t1 + t2);
    let half_gap = 0.5 * (t1 - t2).abs();
    Ok((1..=count as u64)
        .map(|j| TimePoint {
            t: j as f64 * period,
            kind: TimePointKind::RationalApproximation,
            approximation_error: j as f64 * half_gap,
            multiple: j,
            convergent: (p, q),
        })
        .collect())
}

/// Probe Bloch vector `d_omega k / |d_omega k|` at a time point.
pub fn optimal_probe_bloch(spec: &ProtocolSpec, tp: &TimePoint) -> Result<BlochVector> {
    optimal_probe_bloch_at(spec, tp.t)
}

/// As [`optimal_probe_bloch`] at an arbitrary time.
pub fn optimal_probe_bloch_at(spec: &ProtocolSpec, t: f64) -> Result<BlochVector> {
    let dk = k_vector_derivative(spec, t)?;
    let norm = dk.norm();
    if !(norm > 1e-12) {
        return Err(Error::ZeroSensitivity { norm });
    }
    Ok(dk.scale(1.0 / norm))
}

/// Noiseless upper envelope
/// `(a1-a2)^2 t^2 N^2 g^2 lambda^4 omega^2 (1 - (m.n)^2) / (mu1^2 mu2^2)`.
pub fn envelope(spec: &ProtocolSpec, t: f64) -> f64 {
    let transverse = (1.0 - spec.m_dot_n().powi(2)).max(0.0);
    if transverse == 0.0 {
        return 0.0;
    }
    let da = spec.a[0] - spec.a[1];
    let n = spec.n_probes as f64;
    let (g, lambda, omega) = (spec.g, spec.lambda, spec.omega);
    let mu_sq = |k: Branch| crate::model::norm(spec.branch_axis(k)).powi(2);
    let denom = mu_sq(Branch::First) * mu_sq(Branch::Second);
    da * da * t * t * n * n * g * g * lambda.powi(4) * omega * omega * transverse / denom
}
