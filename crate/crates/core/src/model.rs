//! Protocol parameters, one-probe generators, the total Hamiltonian and the
//! initial probe and ancilla states.
//!
//! The ancilla eigenbasis `{|a1>, |a2>}` is the computational basis
//! `{|0>, |1>}`, so the ancilla observable `A = diag(a1, a2)` and free
//! Hamiltonian `H_a = diag(h1, h2)` commute by construction.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numkit::{self, c, kron, kron_sum, pauli, ComplexMatrix, StateVector};

/// Real 3-vector.
pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Tolerance on unit norms for vectors that were already normalized.
pub const UNIT_TOL: f64 = 1e-12;
/// Vectors this close to unit length are silently renormalized by `validate`.
pub const RENORMALIZE_TOL: f64 = 1e-6;
/// Branch frequencies below this are treated as degenerate.
pub const MU_FLOOR: f64 = 1e-12;
/// Dense-size limit for a single branch generator on the probes.
pub const MAX_THETA_PROBES: usize = 12;
/// Dense-size limit for the joint probe-ancilla Hamiltonian.
pub const MAX_JOINT_PROBES: usize = 10;

/// Ancilla branch label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    First,
    Second,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::First, Branch::Second];

    /// Zero-based index, which is also the ancilla basis label.
    pub fn index(self) -> usize {
        match self {
            Branch::First => 0,
            Branch::Second => 1,
        }
    }

    /// Branch from a 1-based label.
    pub fn from_label(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Branch::First),
            2 => Ok(Branch::Second),
            _ => Err(Error::InvalidSpec {
                field: "branch",
                reason: format!("branch label must be 1 or 2, got {k}"),
            }),
        }
    }
}

/// Every parameter of the probe-ancilla protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    /// Probe frequency, the estimated parameter.
    pub omega: f64,
    /// Ancilla frequency.
    pub omega_a: f64,
    /// Probe-ancilla coupling strength.
    pub g: f64,
    /// Level-splitting scale of the probe Hamiltonian.
    pub lambda: f64,
    /// Probe Hamiltonian axis.
    pub m: Vec3,
    /// Interaction axis on the probes.
    pub n: Vec3,
    /// Eigenvalues of the ancilla coupling observable.
    pub a: [f64; 2],
    /// Eigenvalues of the ancilla free Hamiltonian.
    pub h: [f64; 2],
    pub n_probes: usize,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            omega: 1.0,
            omega_a: 2.0,
            g: 1.0,
            lambda: 1.0,
            m: [0.0, 0.0, 1.0],
            n: [1.0, 0.0, 0.0],
            a: [1.0, -1.0],
            h: [1.0, -1.0],
            n_probes: 3,
        }
    }
}

impl ProtocolSpec {
    /// `lambda * omega`.
    pub fn u(&self) -> f64 {
        self.lambda * self.omega
    }

    pub fn m_dot_n(&self) -> f64 {
        dot(self.m, self.n)
    }

    pub fn a_k(&self, k: Branch) -> f64 {
        self.a[k.index()]
    }

    pub fn h_k(&self, k: Branch) -> f64 {
        self.h[k.index()]
    }

    /// Bloch vector `b_k` of the traceless part of the branch-k generator.
    pub fn branch_axis(&self, k: Branch) -> Vec3 {
        let (u, ga) = (self.u(), self.g * self.a_k(k));
        [
            u * self.m[0] + ga * self.n[0],
            u * self.m[1] + ga * self.n[1],
            u * self.m[2] + ga * self.n[2],
        ]
    }

    /// Copy with a different probe count.
    pub fn with_probes(&self, n_probes: usize) -> Self {
        Self {
            n_probes,
            ..self.clone()
        }
    }

    /// Copy with a different estimated frequency.
    pub fn with_omega(&self, omega: f64) -> Self {
        Self {
            omega,
            ..self.clone()
        }
    }

    pub fn validate(self) -> Result<Self> {
        validate(self)
    }
}

fn unit_or_reject(field: &'static str, v: Vec3) -> Result<Vec3> {
    let len = norm(v);
    if !len.is_finite() || (len - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidSpec {
            field,
            reason: format!("must be a unit vector, |{field}| = {len}"),
        });
    }
    Ok([v[0] / len, v[1] / len, v[2] / len])
}

/// Checks every invariant; `m` and `n` are renormalized when within
/// `RENORMALIZE_TOL` of unit length.
pub fn validate(mut spec: ProtocolSpec) -> Result<ProtocolSpec> {
    let scalars = [
        ("omega", spec.omega),
        ("omega_a", spec.omega_a),
        ("g", spec.g),
        ("lambda", spec.lambda),
        ("a1", spec.a[0]),
        ("a2", spec.a[1]),
        ("h1", spec.h[0]),
        ("h2", spec.h[1]),
    ];
    for (field, value) in scalars {
        if !value.is_finite() {
            return Err(Error::InvalidSpec {
                field,
                reason: format!("must be finite, got {value}"),
            });
        }
    }
    if spec.lambda <= 0.0 {
        return Err(Error::InvalidSpec {
            field: "lambda",
            reason: format!("must be positive, got {}", spec.lambda),
        });
    }
    if spec.n_probes == 0 {
        return Err(Error::InvalidSpec {
            field: "n_probes",
            reason: "at least one probe is required".into(),
        });
    }
    if spec.a[0] == spec.a[1] {
        return Err(Error::InvalidSpec {
            field: "a",
            reason: format!(
                "a1 = a2 = {} leaves the ancilla branches indistinguishable",
                spec.a[0]
            ),
        });
    }
    spec.m = unit_or_reject("m", spec.m)?;
    spec.n = unit_or_reject("n", spec.n)?;
    Ok(spec)
}

/// Branch frequency `mu_k = |lambda omega m + g a_k n|`.
///
/// Evaluated as a vector norm, which equals the expanded square-root form
/// for unit `m`, `n` and avoids cancellation near the degenerate point.
pub fn mu(spec: &ProtocolSpec, k: Branch) -> Result<f64> {
    let value = norm(spec.branch_axis(k));
    if value < MU_FLOOR {
        return Err(Error::DegenerateFrequency {
            branch: k.index() + 1,
            value,
        });
    }
    Ok(value)
}

/// Expanded form `sqrt(a^2 g^2 + 2 a g lambda omega m.n + lambda^2 omega^2)`,
/// kept for cross-checks.
pub fn mu_expanded(spec: &ProtocolSpec, k: Branch) -> f64 {
    let (ak, g, u) = (spec.a_k(k), spec.g, spec.u());
    (ak * ak * g * g + 2.0 * ak * g * u * spec.m_dot_n() + u * u)
        .max(0.0)
        .sqrt()
}

/// One-probe generator `lambda omega m.sigma + (omega_a h_k / N) I + g a_k n.sigma`.
pub fn vartheta(spec: &ProtocolSpec, k: Branch) -> ComplexMatrix {
    let shift = spec.omega_a * spec.h_k(k) / spec.n_probes as f64;
    let mut th = pauli::dot(spec.branch_axis(k));
    th[(0, 0)] += shift;
    th[(1, 1)] += shift;
    th
}

/// Branch-k generator on all probes: the Kronecker sum of `vartheta`.
pub fn theta_full(spec: &ProtocolSpec, k: Branch) -> Result<ComplexMatrix> {
    if spec.n_probes > MAX_THETA_PROBES {
        return Err(Error::SizeGuard {
            what: "n_probes",
            value: spec.n_probes,
            limit: MAX_THETA_PROBES,
        });
    }
    Ok(kron_sum(&vartheta(spec, k), spec.n_probes))
}

/// `omega H_p (x) I + omega_a I (x) H_a + g B (x) A`, built term by term
/// from the Pauli sums rather than from `theta_full`.
pub fn total_hamiltonian(spec: &ProtocolSpec) -> Result<ComplexMatrix> {
    let n = spec.n_probes;
    if n > MAX_JOINT_PROBES {
        return Err(Error::SizeGuard {
            what: "n_probes",
            value: n,
            limit: MAX_JOINT_PROBES,
        });
    }
    let hp = kron_sum(&pauli::dot(spec.m), n).scale_real(spec.lambda);
    let b = kron_sum(&pauli::dot(spec.n), n);
    let id_p = ComplexMatrix::identity(1 << n);
    let ha = ComplexMatrix::diagonal(&[c(spec.h[0], 0.0), c(spec.h[1], 0.0)]);
    let a = ComplexMatrix::diagonal(&[c(spec.a[0], 0.0), c(spec.a[1], 0.0)]);

    let mut h = kron(&hp, &pauli::identity()).scale_real(spec.omega);
    h += &kron(&id_p, &ha).scale_real(spec.omega_a);
    h += &kron(&b, &a).scale_real(spec.g);
    Ok(h)
}

/// Bloch vector of a qubit state; also used for `k(t)` and derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Unchecked constructor.
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(v: Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// A state vector inside the Bloch ball.
    pub fn state(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Self::new(x, y, z);
        if !(v.norm() <= 1.0 + UNIT_TOL) {
            return Err(Error::InvalidBloch { norm: v.norm() });
        }
        Ok(v)
    }

    /// A pure-state vector on the sphere.
    pub fn pure(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Self::new(x, y, z);
        if !((v.norm() - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::InvalidBloch { norm: v.norm() });
        }
        Ok(v)
    }

    pub fn to_array(self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Self) -> f64 {
        dot(self.to_array(), other.to_array())
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Self {
        self.scale(1.0 / self.norm())
    }

    pub fn max_abs_diff(self, other: Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    /// `(I + v.sigma) / 2`.
    pub fn density_matrix(self) -> ComplexMatrix {
        let mut rho = pauli::dot(self.to_array()).scale_real(0.5);
        rho[(0, 0)] += 0.5;
        rho[(1, 1)] += 0.5;
        rho
    }

    /// Bloch vector of a 2x2 density matrix.
    pub fn from_density_matrix(rho: &ComplexMatrix) -> Result<Self> {
        if rho.rows() != 2 || rho.cols() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "Bloch vector of a {}x{} matrix",
                rho.rows(),
                rho.cols()
            )));
        }
        let off = rho[(0, 1)];
        Ok(Self::new(
            2.0 * off.re,
            -2.0 * off.im,
            (rho[(0, 0)] - rho[(1, 1)]).re,
        ))
    }
}

impl std::ops::Add for BlochVector {
    type Output = BlochVector;

    fn add(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for BlochVector {
    type Output = BlochVector;

    fn sub(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Ancilla preparation `cos(alpha)|a1> + exp(-i phi) sin(alpha)|a2>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncillaStateSpec {
    pub alpha: f64,
    pub phi: f64,
}

impl AncillaStateSpec {
    /// `(|a1> + |a2>) / sqrt(2)`.
    pub const OPTIMAL: AncillaStateSpec = AncillaStateSpec {
        alpha: std::f64::consts::FRAC_PI_4,
        phi: 0.0,
    };

    pub fn new(alpha: f64, phi: f64) -> Self {
        Self { alpha, phi }
    }
}

impl Default for AncillaStateSpec {
    fn default() -> Self {
        Self::OPTIMAL
    }
}

/// Pure probe state with Bloch vector `v`, real non-negative amplitude on `|0>`.
pub fn probe_state(v: BlochVector) -> Result<StateVector> {
    if !((v.norm() - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::InvalidBloch { norm: v.norm() });
    }
    let a0 = ((1.0 + v.z) / 2.0).max(0.0).sqrt();
    let a1 = if a0 > 1e-8 {
        c(v.x, v.y) / (2.0 * a0)
    } else {
        // south pole: any phase on |1> gives the same projector; pick the
        // one that stays continuous when approached along the real x axis
        let t = c(v.x, v.y);
        if t.norm() > 0.0 {
            t / t.norm() * ((1.0 - v.z) / 2.0).max(0.0).sqrt()
        } else {
            numkit::ONE
        }
    };
    Ok(StateVector::new(vec![c(a0, 0.0), a1]).normalized())
}

pub fn ancilla_state(a: AncillaStateSpec) -> StateVector {
    StateVector::new(vec![
        c(a.alpha.cos(), 0.0),
        Complex64::from_polar(a.alpha.sin(), -a.phi),
    ])
}

/// Product state `|phi_p>^{(x)N}` of identical probes.
pub fn probes_state(v: BlochVector, n_probes: usize) -> Result<StateVector> {
    Ok(probe_state(v)?.kron_power(n_probes))
}
