//! Brute-force ground truth: joint probe-ancilla evolution in the full
//! Hilbert space, direct operator-exponential overlaps, finite-difference
//! QFI and a fixed-step Lindblad integrator.

use log::debug;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{
    ancilla_state, mu, probe_state, probes_state, theta_full, total_hamiltonian, vartheta,
    AncillaStateSpec, BlochVector, Branch, ProtocolSpec, MAX_JOINT_PROBES,
};
use crate::numkit::{
    hermitian_eig, partial_trace, pauli, ComplexMatrix, Propagator, StateVector,
};
use crate::qfi::{default_step, qfi_mixed};

/// Largest probe count for dense density-matrix integration.
pub const MAX_LINDBLAD_PROBES: usize = 8;

/// Joint pure state, probes first and the ancilla last.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub amplitudes: StateVector,
    pub n_probes: usize,
}

impl JointState {
    pub fn density_matrix(&self) -> ComplexMatrix {
        self.amplitudes.projector()
    }
}

fn guard(spec: &ProtocolSpec, limit: usize) -> Result<()> {
    if spec.n_probes > limit {
        return Err(Error::SizeGuard {
            what: "n_probes",
            value: spec.n_probes,
            limit,
        });
    }
    Ok(())
}

/// Initial product state `|phi_p>^{(x)N} (x) |psi_a>`.
pub fn initial_joint_state(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
) -> Result<StateVector> {
    Ok(probes_state(v, spec.n_probes)?.kron(&ancilla_state(a)))
}

/// Cached spectral decomposition of the total Hamiltonian.
#[derive(Debug, Clone)]
pub struct JointEvolver {
    n_probes: usize,
    propagator: Propagator,
}

impl JointEvolver {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        guard(spec, MAX_JOINT_PROBES)?;
        Ok(Self {
            n_probes: spec.n_probes,
            propagator: Propagator::new(&total_hamiltonian(spec)?)?,
        })
    }

    pub fn evolve(&self, initial: &StateVector, t: f64) -> JointState {
        JointState {
            amplitudes: self.propagator.apply(t, initial),
            n_probes: self.n_probes,
        }
    }
}

/// `exp(-i H_tot t)` applied to the product initial state.
pub fn evolve_joint(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
    t: f64,
) -> Result<JointState> {
    let evolver = JointEvolver::new(spec)?;
    Ok(evolver.evolve(&initial_joint_state(spec, v, a)?, t))
}

/// Ancilla state with the probes traced out.
pub fn reduced_ancilla(js: &JointState) -> Result<ComplexMatrix> {
    reduced_ancilla_of(&js.density_matrix(), js.n_probes)
}

/// Ancilla block of a joint density matrix on `n_probes` probes.
pub fn reduced_ancilla_of(rho: &ComplexMatrix, n_probes: usize) -> Result<ComplexMatrix> {
    partial_trace(rho, &vec![2; n_probes + 1], &[n_probes])
}

/// `<phi| exp(i t theta_2) exp(-i t theta_1) |phi>` by eigendecomposition.
pub fn gamma_direct(spec: &ProtocolSpec, v: BlochVector, t: f64) -> Result<Complex64> {
    let phi = probe_state(v)?;
    let u1 = Propagator::new(&vartheta(spec, Branch::First))?;
    let u2 = Propagator::new(&vartheta(spec, Branch::Second))?;
    Ok(u2.apply(t, &phi).inner(&u1.apply(t, &phi)))
}

/// Cached branch propagators on all probes for repeated `Gamma` evaluations.
#[derive(Debug, Clone)]
pub struct BigGammaOracle {
    n_probes: usize,
    branch1: Propagator,
    branch2: Propagator,
}

impl BigGammaOracle {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        guard(spec, MAX_JOINT_PROBES)?;
        Ok(Self {
            n_probes: spec.n_probes,
            branch1: Propagator::new(&theta_full(spec, Branch::First)?)?,
            branch2: Propagator::new(&theta_full(spec, Branch::Second)?)?,
        })
    }

    pub fn eval(&self, v: BlochVector, t: f64) -> Result<Complex64> {
        let psi = probes_state(v, self.n_probes)?;
        Ok(self.branch2.apply(t, &psi).inner(&self.branch1.apply(t, &psi)))
    }
}

/// `<psi_p| exp(i t Theta_2) exp(-i t Theta_1) |psi_p>` on all probes.
pub fn big_gamma_direct(spec: &ProtocolSpec, v: BlochVector, t: f64) -> Result<Complex64> {
    BigGammaOracle::new(spec)?.eval(v, t)
}

/// Finite-difference ancilla QFI with joint evolvers cached at `omega` and
/// `omega +- h`.
#[derive(Debug, Clone)]
pub struct NumericQfi {
    n_probes: usize,
    h: f64,
    center: JointEvolver,
    plus: JointEvolver,
    minus: JointEvolver,
}

impl NumericQfi {
    pub fn new(spec: &ProtocolSpec, h: f64) -> Result<Self> {
        Ok(Self {
            n_probes: spec.n_probes,
            h,
            center: JointEvolver::new(spec)?,
            plus: JointEvolver::new(&spec.with_omega(spec.omega + h))?,
            minus: JointEvolver::new(&spec.with_omega(spec.omega - h))?,
        })
    }

    /// Default step `1e-6 max(1, |omega|)`.
    pub fn with_default_step(spec: &ProtocolSpec) -> Result<Self> {
        Self::new(spec, default_step(spec.omega))
    }

    /// Ancilla state and its central-difference derivative.
    pub fn ancilla_family(
        &self,
        initial: &StateVector,
        t: f64,
    ) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let rho = reduced_ancilla(&self.center.evolve(initial, t))?;
        let rp = reduced_ancilla(&self.plus.evolve(initial, t))?;
        let rm = reduced_ancilla(&self.minus.evolve(initial, t))?;
        Ok((rho, (&rp - &rm).scale_real(0.5 / self.h)))
    }

    pub fn eval(&self, v: BlochVector, a: AncillaStateSpec, t: f64) -> Result<f64> {
        let initial = probes_state(v, self.n_probes)?.kron(&ancilla_state(a));
        let (rho, drho) = self.ancilla_family(&initial, t)?;
        qfi_mixed(&rho, &drho)
    }
}

/// Ancilla QFI from central differences of the brute-force reduced state.
pub fn qfi_numeric(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
    t: f64,
    h: f64,
) -> Result<f64> {
    NumericQfi::new(spec, h)?.eval(v, a, t)
}

/// `2 rho_01`, the coherence of a 2x2 ancilla state.
pub fn extract_offdiag(rho_a: &ComplexMatrix) -> Complex64 {
    rho_a[(0, 1)] * 2.0
}

/// Which qubits carry a sigma_z dephasing channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DissipatorVariant {
    ProbesOnly,
    ProbesAndAncilla,
}

impl DissipatorVariant {
    pub const ALL: [DissipatorVariant; 2] =
        [DissipatorVariant::ProbesOnly, DissipatorVariant::ProbesAndAncilla];

    pub fn as_str(self) -> &'static str {
        match self {
            DissipatorVariant::ProbesOnly => "probes-only",
            DissipatorVariant::ProbesAndAncilla => "probes-and-ancilla",
        }
    }
}

impl std::str::FromStr for DissipatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probes-only" => Ok(DissipatorVariant::ProbesOnly),
            "probes-and-ancilla" => Ok(DissipatorVariant::ProbesAndAncilla),
            other => Err(Error::InvalidSpec {
                field: "variant",
                reason: format!("unknown dissipator variant `{other}`"),
            }),
        }
    }
}

/// Dephasing model and integrator controls.
///
/// Each affected qubit gets `kappa D[sigma_z]` with
/// `kappa = rate_factor * gamma_noise` and
/// `D[L] rho = L rho L^dagger - {L^dagger L, rho} / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladConfig {
    pub gamma_noise: f64,
    pub variant: DissipatorVariant,
    pub rate_factor: f64,
    /// The step is `step_scale / max(spectral spread, dephasing scale)`.
    pub step_scale: f64,
    /// Optional hard cap on the step.
    pub max_step: Option<f64>,
    /// Run a half-step shadow trajectory and bound the error by their difference.
    pub error_estimate: bool,
    /// Largest accepted elementwise error estimate.
    pub tolerance: f64,
}

impl LindbladConfig {
    pub fn new(gamma_noise: f64, variant: DissipatorVariant) -> Self {
        Self {
            gamma_noise,
            variant,
            ..Self::default()
        }
    }

    pub fn kappa(&self) -> f64 {
        self.rate_factor * self.gamma_noise
    }
}

impl Default for LindbladConfig {
    fn default() -> Self {
        Self {
            gamma_noise: 0.0,
            variant: DissipatorVariant::ProbesOnly,
            rate_factor: 1.0,
            step_scale: 0.01,
            max_step: None,
            error_estimate: true,
            tolerance: 1e-8,
        }
    }
}

/// A linear generator of density-matrix dynamics.
pub trait Liouvillian {
    fn dim(&self) -> usize;
    /// `out = L(rho)`; `out` is overwritten.
    fn apply(&self, rho: &ComplexMatrix, out: &mut ComplexMatrix);
    /// Spread of the Hamiltonian spectrum, the fastest coherent frequency.
    fn spectral_spread(&self) -> f64;
    /// Fastest decay rate of any matrix element.
    fn dissipation_scale(&self) -> f64;
}

/// `-i[H, rho] + sum_k rate_k D[L_k] rho` with dense operators.
#[derive(Debug, Clone)]
pub struct DenseLiouvillian {
    h: ComplexMatrix,
    jumps: Vec<(f64, ComplexMatrix, ComplexMatrix)>,
    spread: f64,
}

impl DenseLiouvillian {
    pub fn new(h: ComplexMatrix, jumps: Vec<(f64, ComplexMatrix)>) -> Result<Self> {
        let eig = hermitian_eig(&h)?;
        let spread = eig.eigenvalues.last().unwrap() - eig.eigenvalues[0];
        for (_, l) in &jumps {
            if (l.rows(), l.cols()) != (h.rows(), h.cols()) {
                return Err(Error::DimensionMismatch("jump operator size".into()));
            }
        }
        let jumps = jumps
            .into_iter()
            .map(|(rate, l)| {
                let ldl = &l.adjoint() * &l;
                (rate, l, ldl)
            })
            .collect();
        Ok(Self { h, jumps, spread })
    }
}

impl Liouvillian for DenseLiouvillian {
    fn dim(&self) -> usize {
        self.h.rows()
    }

    fn apply(&self, rho: &ComplexMatrix, out: &mut ComplexMatrix) {
        let hr = &self.h * rho;
        let rh = rho * &self.h;
        let mut acc = (&hr - &rh).scale(Complex64::new(0.0, -1.0));
        for (rate, l, ldl) in &self.jumps {
            let sandwich = &(l * rho) * &l.adjoint();
            let anti = &(ldl * rho) + &(rho * ldl);
            acc += &(&sandwich - &anti.scale_real(0.5)).scale_real(*rate);
        }
        *out = acc;
    }

    fn spectral_spread(&self) -> f64 {
        self.spread
    }

    fn dissipation_scale(&self) -> f64 {
        self.jumps
            .iter()
            .map(|(rate, l, _)| rate * l.max_abs().powi(2) * 2.0)
            .sum()
    }
}

/// The protocol generator with sigma_z dephasing, applied through its
/// Kronecker structure instead of a dense Hamiltonian.
#[derive(Debug, Clone)]
pub struct ProtocolLiouvillian {
    n_probes: usize,
    /// One-probe operator `lambda omega m.sigma + g a_b n.sigma` by ancilla bit.
    probe_ops: [[Complex64; 4]; 2],
    /// `omega_a h_b` by ancilla bit.
    ancilla_energy: [f64; 2],
    kappa: f64,
    mask: usize,
    spread: f64,
}

impl ProtocolLiouvillian {
    pub fn new(spec: &ProtocolSpec, cfg: &LindbladConfig) -> Result<Self> {
        guard(spec, MAX_LINDBLAD_PROBES)?;
        let n = spec.n_probes;
        let op = |k: Branch| {
            let m = pauli::dot(spec.branch_axis(k));
            [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
        };
        let full = (1usize << (n + 1)) - 1;
        let mask = match cfg.variant {
            DissipatorVariant::ProbesOnly => full & !1,
            DissipatorVariant::ProbesAndAncilla => full,
        };
        let energy = [spec.omega_a * spec.h[0], spec.omega_a * spec.h[1]];
        let nf = n as f64;
        let mus = [
            crate::model::norm(spec.branch_axis(Branch::First)),
            crate::model::norm(spec.branch_axis(Branch::Second)),
        ];
        let top = (0..2).map(|b| energy[b] + nf * mus[b]).fold(f64::MIN, f64::max);
        let bottom = (0..2).map(|b| energy[b] - nf * mus[b]).fold(f64::MAX, f64::min);
        Ok(Self {
            n_probes: n,
            probe_ops: [op(Branch::First), op(Branch::Second)],
            ancilla_energy: energy,
            kappa: cfg.kappa(),
            mask,
            spread: top - bottom,
        })
    }
}

impl Liouvillian for ProtocolLiouvillian {
    fn dim(&self) -> usize {
        1 << (self.n_probes + 1)
    }

    fn apply(&self, rho: &ComplexMatrix, out: &mut ComplexMatrix) {
        let d = self.dim();
        let src = rho.as_slice();
        let y = out.as_mut_slice();
        // y = H rho, built in place: ancilla energies, then one row pair per probe
        for (r, (yr, sr)) in y.chunks_exact_mut(d).zip(src.chunks_exact(d)).enumerate() {
            let e = self.ancilla_energy[r & 1];
            for (o, s) in yr.iter_mut().zip(sr) {
                *o = s * e;
            }
        }
        for q in 0..self.n_probes {
            let stride = 1usize << (self.n_probes - q);
            for r0 in (0..d).filter(|r| r & stride == 0) {
                let r1 = r0 | stride;
                let [o00, o01, o10, o11] = self.probe_ops[r0 & 1];
                let (lo, hi) = y.split_at_mut(r1 * d);
                let y0 = &mut lo[r0 * d..(r0 + 1) * d];
                let y1 = &mut hi[..d];
                let s0 = &src[r0 * d..(r0 + 1) * d];
                let s1 = &src[r1 * d..(r1 + 1) * d];
                for (((y0, y1), &a), &b) in y0.iter_mut().zip(y1.iter_mut()).zip(s0).zip(s1) {
                    *y0 += o00 * a + o01 * b;
                    *y1 += o10 * a + o11 * b;
                }
            }
        }
        // -i [H, rho] = -i (y - y^dagger) for Hermitian rho, in place over
        // mirrored tiles, plus the dephasing decay
        const TILE: usize = 32;
        let minus_i = Complex64::new(0.0, -1.0);
        let decay = |r: usize, c: usize| 2.0 * self.kappa * ((r ^ c) & self.mask).count_ones() as f64;
        for r0 in (0..d).step_by(TILE) {
            for c0 in (r0..d).step_by(TILE) {
                for r in r0..(r0 + TILE).min(d) {
                    for c in c0.max(r)..(c0 + TILE).min(d) {
                        let (rc, cr) = (r * d + c, c * d + r);
                        let (a, b) = (y[rc], y[cr]);
                        let k = decay(r, c);
                        y[rc] = minus_i * (a - b.conj()) - src[rc] * k;
                        y[cr] = minus_i * (b - a.conj()) - src[cr] * k;
                    }
                }
            }
        }
    }

    fn spectral_spread(&self) -> f64 {
        self.spread
    }

    fn dissipation_scale(&self) -> f64 {
        2.0 * self.kappa * self.mask.count_ones() as f64
    }
}

/// Joint density matrices along a Lindblad trajectory.
#[derive(Debug, Clone)]
pub struct LindbladTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
    pub step: f64,
    pub steps: usize,
    /// Largest `|rho_h - rho_{h/2}| / 15` seen, if the shadow run was enabled.
    pub error_estimate: Option<f64>,
    pub max_trace_deviation: f64,
    pub max_hermiticity_defect: f64,
    /// Most negative eigenvalue seen (0 if none), when positivity was checked.
    pub min_eigenvalue: f64,
}

fn rk4_step<L: Liouvillian>(l: &L, rho: &mut ComplexMatrix, h: f64, scratch: &mut [ComplexMatrix; 5]) {
    let [k1, k2, k3, k4, tmp] = scratch;
    let axpy = |dst: &mut ComplexMatrix, base: &ComplexMatrix, k: &ComplexMatrix, s: f64| {
        for ((o, b), k) in dst.as_mut_slice().iter_mut().zip(base.as_slice()).zip(k.as_slice()) {
            *o = b + k * s;
        }
    };
    l.apply(rho, k1);
    axpy(tmp, rho, k1, 0.5 * h);
    l.apply(tmp, k2);
    axpy(tmp, rho, k2, 0.5 * h);
    l.apply(tmp, k3);
    axpy(tmp, rho, k3, h);
    l.apply(tmp, k4);
    let w = h / 6.0;
    for i in 0..rho.as_slice().len() {
        let inc = (k1.as_slice()[i] + k4.as_slice()[i]) + (k2.as_slice()[i] + k3.as_slice()[i]) * 2.0;
        rho.as_mut_slice()[i] += inc * w;
    }
}

fn scratch(d: usize) -> [ComplexMatrix; 5] {
    std::array::from_fn(|_| ComplexMatrix::zeros(d, d))
}

/// Fixed-step RK4 through an ascending time grid starting from `rho0` at `t = 0`.
///
/// Each grid interval is split into equal steps no longer than `h`.
fn rk4_through<L: Liouvillian>(l: &L, rho0: &ComplexMatrix, grid: &[f64], h: f64) -> (Vec<ComplexMatrix>, usize) {
    let mut rho = rho0.clone();
    let mut buf = scratch(l.dim());
    let mut out = Vec::with_capacity(grid.len());
    let mut now = 0.0;
    let mut steps = 0;
    for &t in grid {
        let span = t - now;
        if span > 0.0 {
            let n = (span / h).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            for _ in 0..n {
                rk4_step(l, &mut rho, dt, &mut buf);
            }
            steps += n;
        }
        now = t;
        out.push(rho.clone());
    }
    (out, steps)
}

/// Step actually used for a given generator and configuration.
pub fn lindblad_step<L: Liouvillian>(l: &L, cfg: &LindbladConfig) -> f64 {
    let scale = l.spectral_spread().max(l.dissipation_scale()).max(1e-12);
    let h = cfg.step_scale / scale;
    cfg.max_step.map_or(h, |cap| h.min(cap))
}

/// Integrates any [`Liouvillian`] and checks the physical invariants at
/// every grid point.
pub fn integrate<L: Liouvillian>(
    l: &L,
    rho0: &ComplexMatrix,
    t_grid: &[f64],
    cfg: &LindbladConfig,
    check_positivity: bool,
) -> Result<LindbladTrajectory> {
    if t_grid.first().is_some_and(|&t| t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::DomainError("time grid must be ascending from t >= 0".into()));
    }
    let h = lindblad_step(l, cfg);
    let (states, steps) = rk4_through(l, rho0, t_grid, h);
    let mut error_estimate = None;
    let states = if cfg.error_estimate {
        let (fine, _) = rk4_through(l, rho0, t_grid, 0.5 * h);
        let est = states
            .iter()
            .zip(&fine)
            .map(|(a, b)| a.max_abs_diff(b) / 15.0)
            .fold(0.0, f64::max);
        debug!("lindblad step {h:e}, {steps} steps, error estimate {est:e}");
        if est > cfg.tolerance {
            return Err(Error::IntegratorFailure(format!(
                "step {h:e} gives error estimate {est:e} above tolerance {:e}",
                cfg.tolerance
            )));
        }
        error_estimate = Some(est);
        fine
    } else {
        states
    };

    let mut max_trace_deviation = 0.0f64;
    let mut max_hermiticity_defect = 0.0f64;
    let mut min_eigenvalue = 0.0f64;
    for rho in &states {
        max_trace_deviation = max_trace_deviation.max((rho.trace() - 1.0).norm());
        let defect = rho.hermiticity_defect();
        max_hermiticity_defect = max_hermiticity_defect.max(defect);
        if check_positivity {
            let lowest = hermitian_eig(&rho.hermitian_part())?.eigenvalues[0];
            min_eigenvalue = min_eigenvalue.min(lowest);
        }
    }
    if max_trace_deviation > 1e-8 || max_hermiticity_defect > 1e-8 || min_eigenvalue < -1e-8 {
        return Err(Error::IntegratorFailure(format!(
            "trajectory left the state space: trace dev {max_trace_deviation:e}, \
             hermiticity {max_hermiticity_defect:e}, min eigenvalue {min_eigenvalue:e}"
        )));
    }
    if min_eigenvalue < 0.0 {
        debug!("negative eigenvalue {min_eigenvalue:e} within tolerance, clipped downstream");
    }
    let step = if cfg.error_estimate { 0.5 * h } else { h };
    Ok(LindbladTrajectory {
        times: t_grid.to_vec(),
        states,
        step,
        steps,
        error_estimate,
        max_trace_deviation,
        max_hermiticity_defect,
        min_eigenvalue,
    })
}

/// Lindblad evolution of the protocol with sigma_z dephasing.
pub fn lindblad_evolve(
    spec: &ProtocolSpec,
    v: BlochVector,
    a: AncillaStateSpec,
    cfg: &LindbladConfig,
    t_grid: &[f64],
) -> Result<LindbladTrajectory> {
    if !(cfg.gamma_noise >= 0.0) || !(cfg.rate_factor >= 0.0) {
        return Err(Error::InvalidSpec {
            field: "gamma_noise",
            reason: format!("rates must be non-negative, got {}", cfg.kappa()),
        });
    }
    let l = ProtocolLiouvillian::new(spec, cfg)?;
    let rho0 = initial_joint_state(spec, v, a)?.projector();
    integrate(&l, &rho0, t_grid, cfg, true)
}

/// Time scale `pi / Omega` of the branch rotation, used to pick comparison times.
pub fn rotation_period(spec: &ProtocolSpec) -> Result<f64> {
    Ok(std::f64::consts::PI / mu(spec, Branch::First)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::numkit::{c, embed_single, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig2() -> ProtocolSpec {
        ProtocolSpec::default()
    }

    #[test]
    fn evolve_joint_examples() {
        let v = BlochVector::new(0.0, 1.0, 0.0);
        let a = AncillaStateSpec::OPTIMAL;
        let js = evolve_joint(&fig2(), v, a, 0.0).unwrap();
        let init = initial_joint_state(&fig2(), v, a).unwrap();
        assert!(js.amplitudes.max_abs_diff(&init) < 1e-14);

        let js = evolve_joint(&fig2(), v, a, 3.7).unwrap();
        assert!((js.amplitudes.norm() - 1.0).abs() < 1e-10);

        // uncoupled: the ancilla stays pure
        let free = ProtocolSpec { g: 0.0, ..fig2() };
        for t in [0.5, 2.5] {
            let rho_a = reduced_ancilla(&evolve_joint(&free, v, a, t).unwrap()).unwrap();
            let purity = (&rho_a * &rho_a).trace().re;
            assert!((purity - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            evolve_joint(&fig2().with_probes(11), v, a, 1.0),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn step_composition() {
        let spec = fig2().with_probes(2);
        let h = total_hamiltonian(&spec).unwrap();
        let psi = initial_joint_state(&spec, BlochVector::new(1.0, 0.0, 0.0), AncillaStateSpec::OPTIMAL)
            .unwrap();
        let p = Propagator::new(&h).unwrap();
        let once = p.apply(0.7, &psi);
        let half = p.unitary(0.35);
        let twice = half.apply(&half.apply(&psi));
        assert!(once.max_abs_diff(&twice) < 1e-11);
    }

    #[test]
    fn gamma_direct_examples() {
        let v = BlochVector::new(0.0, 0.0, 1.0);
        assert!((gamma_direct(&fig2(), v, 0.0).unwrap() - 1.0).norm() < 1e-15);
        let same = ProtocolSpec {
            g: 0.0,
            h: [0.4, 0.4],
            ..fig2()
        };
        for t in [0.3, 4.0] {
            assert!((gamma_direct(&same, v, t).unwrap() - 1.0).norm() < 1e-13);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let spec = ProtocolSpec {
                omega: rng.gen_range(0.5..1.5),
                g: rng.gen_range(0.2..1.5),
                n: [0.6, 0.0, 0.8],
                ..fig2()
            };
            let v = BlochVector::new(0.0, 0.6, 0.8);
            let direct = gamma_direct(&spec, v, 1.3).unwrap();
            assert!(direct.norm() <= 1.0 + 1e-12);
            assert!((direct - analytic::gamma(&spec, v, 1.3).unwrap().value).norm() < 1e-10);
        }
    }

    #[test]
    fn big_gamma_direct_examples() {
        let v = BlochVector::new(0.0, 1.0, 0.0);
        let spec1 = fig2().with_probes(1);
        let a = big_gamma_direct(&spec1, v, 0.9).unwrap();
        assert!((a - gamma_direct(&spec1, v, 0.9).unwrap()).norm() < 1e-13);
        assert!((big_gamma_direct(&fig2(), v, 0.0).unwrap() - 1.0).norm() < 1e-13);
        let spec4 = fig2().with_probes(4);
        let g = gamma_direct(&spec4, v, 1.9).unwrap();
        assert!((big_gamma_direct(&spec4, v, 1.9).unwrap() - g.powi(4)).norm() < 1e-9);
    }

    #[test]
    fn qfi_numeric_examples() {
        let v = BlochVector::new(0.0, 1.0, 0.0);
        let free = ProtocolSpec { g: 0.0, ..fig2() };
        let h = default_step(1.0);
        assert!(qfi_numeric(&free, v, AncillaStateSpec::OPTIMAL, 1.4, h).unwrap() < 1e-8);
        let silent = AncillaStateSpec::new(0.0, 0.0);
        assert!(qfi_numeric(&fig2(), v, silent, 1.4, h).unwrap() < 1e-12);

        let oracle = NumericQfi::with_default_step(&fig2()).unwrap();
        for t in [0.7, 1.9, 3.3, 6.0] {
            let num = oracle.eval(v, AncillaStateSpec::OPTIMAL, t).unwrap();
            let exact = analytic::qfi_protocol(&fig2(), v, AncillaStateSpec::OPTIMAL, t).unwrap();
            assert!((num - exact).abs() < 1e-4 * exact, "t {t}: {num} vs {exact}");
        }
    }

    #[test]
    fn extract_offdiag_examples() {
        let mixed = ComplexMatrix::identity(2).scale_real(0.5);
        assert_eq!(extract_offdiag(&mixed), ZERO);
        let plus = BlochVector::new(1.0, 0.0, 0.0).density_matrix();
        assert!((extract_offdiag(&plus) - 1.0).norm() < 1e-15);

        let v = BlochVector::new(0.0, 1.0, 0.0);
        let js = evolve_joint(&fig2(), v, AncillaStateSpec::OPTIMAL, 2.2).unwrap();
        let off = extract_offdiag(&reduced_ancilla(&js).unwrap());
        let big = analytic::big_gamma(&fig2(), v, 2.2).unwrap().value;
        assert!((off - big).norm() < 1e-10);
    }

    #[test]
    fn pure_dephasing_of_one_qubit() {
        let gamma = 0.3;
        let l = DenseLiouvillian::new(ComplexMatrix::zeros(2, 2), vec![(gamma, pauli::z())]).unwrap();
        let rho0 = BlochVector::new(1.0, 0.0, 0.0).density_matrix();
        let grid = [0.5, 1.0, 2.0];
        let cfg = LindbladConfig::default();
        let traj = integrate(&l, &rho0, &grid, &cfg, true).unwrap();
        for (t, rho) in grid.iter().zip(&traj.states) {
            assert!((rho[(0, 1)].re - 0.5 * (-2.0 * gamma * t).exp()).abs() < 1e-10);
            // populations are untouched by pure dephasing
            assert_eq!(rho[(0, 0)], rho0[(0, 0)]);
            assert_eq!(rho[(1, 1)], rho0[(1, 1)]);
        }
    }

    #[test]
    fn noiseless_lindblad_matches_unitary() {
        let spec = fig2().with_probes(2);
        let v = BlochVector::new(0.0, 1.0, 0.0);
        let a = AncillaStateSpec::OPTIMAL;
        let grid = [0.4, 1.1, 2.0];
        let traj = lindblad_evolve(&spec, v, a, &LindbladConfig::default(), &grid).unwrap();
        for (t, rho) in grid.iter().zip(&traj.states) {
            let exact = evolve_joint(&spec, v, a, *t).unwrap().density_matrix();
            assert!(rho.max_abs_diff(&exact) < 1e-8);
        }
    }

    fn dense_protocol(spec: &ProtocolSpec, cfg: &LindbladConfig) -> DenseLiouvillian {
        let n = spec.n_probes;
        let mut jumps = Vec::new();
        let sites = match cfg.variant {
            DissipatorVariant::ProbesOnly => n,
            DissipatorVariant::ProbesAndAncilla => n + 1,
        };
        for q in 0..sites {
            jumps.push((cfg.kappa(), embed_single(&pauli::z(), q, n + 1)));
        }
        DenseLiouvillian::new(total_hamiltonian(spec).unwrap(), jumps).unwrap()
    }

    #[test]
    fn structured_generator_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for variant in DissipatorVariant::ALL {
            let spec = ProtocolSpec {
                omega: 0.8,
                omega_a: -0.6,
                g: 1.2,
                n: [0.6, 0.0, 0.8],
                h: [0.3, -0.9],
                a: [1.1, -0.7],
                ..fig2().with_probes(3)
            };
            let cfg = LindbladConfig {
                gamma_noise: 0.05,
                variant,
                rate_factor: 1.5,
                ..Default::default()
            };
            let dense = dense_protocol(&spec, &cfg);
            let fast = ProtocolLiouvillian::new(&spec, &cfg).unwrap();
            let psi = StateVector::new((0..16).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                .normalized();
            let rho = psi.projector();
            let mut a = ComplexMatrix::zeros(16, 16);
            let mut b = ComplexMatrix::zeros(16, 16);
            dense.apply(&rho, &mut a);
            fast.apply(&rho, &mut b);
            assert!(a.max_abs_diff(&b) < 1e-13);
            assert!((dense.spectral_spread() - fast.spectral_spread()).abs() < 1e-10);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let spec = fig2().with_probes(2);
        let cfg = LindbladConfig {
            gamma_noise: 0.05,
            error_estimate: false,
            ..Default::default()
        };
        let l = ProtocolLiouvillian::new(&spec, &cfg).unwrap();
        let rho0 = initial_joint_state(&spec, BlochVector::new(0.0, 1.0, 0.0), AncillaStateSpec::OPTIMAL)
            .unwrap()
            .projector();
        let grid = [1.5];
        let h = 0.05;
        let (coarse, _) = rk4_through(&l, &rho0, &grid, h);
        let (fine, _) = rk4_through(&l, &rho0, &grid, h / 2.0);
        let (reference, _) = rk4_through(&l, &rho0, &grid, h / 4.0);
        let e1 = coarse[0].max_abs_diff(&reference[0]);
        let e2 = fine[0].max_abs_diff(&reference[0]);
        // against a quarter-step reference: (1 - 4^-4) / (2^-4 - 4^-4) = 17
        let ratio = e1 / e2;
        assert!((13.0..21.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn trajectory_invariants_and_failure() {
        let spec = fig2().with_probes(2);
        let cfg = LindbladConfig::new(0.1, DissipatorVariant::ProbesAndAncilla);
        let grid: Vec<f64> = (1..=5).map(|k| k as f64 * 0.4).collect();
        let traj = lindblad_evolve(&spec, BlochVector::new(1.0, 0.0, 0.0), AncillaStateSpec::OPTIMAL, &cfg, &grid)
            .unwrap();
        assert!(traj.max_trace_deviation < 1e-8);
        assert!(traj.max_hermiticity_defect < 1e-8);
        assert!(traj.min_eigenvalue > -1e-8);
        for rho in &traj.states {
            let ra = reduced_ancilla_of(rho, 2).unwrap();
            assert!((ra.trace() - 1.0).norm() < 1e-10);
        }

        let coarse = LindbladConfig {
            step_scale: 2.0,
            ..cfg
        };
        assert!(matches!(
            lindblad_evolve(&spec, BlochVector::new(1.0, 0.0, 0.0), AncillaStateSpec::OPTIMAL, &coarse, &grid),
            Err(Error::IntegratorFailure(_))
        ));
        assert!(matches!(
            lindblad_evolve(&fig2().with_probes(9), BlochVector::new(1.0, 0.0, 0.0), AncillaStateSpec::OPTIMAL, &cfg, &grid),
            Err(Error::SizeGuard { .. })
        ));
    }
}
