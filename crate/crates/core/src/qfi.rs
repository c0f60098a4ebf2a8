//! Classical and quantum Fisher information for one-parameter families.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::BlochVector;
use crate::numkit::{hermitian_eig, ComplexMatrix, StateVector, ZERO};

/// Pairs of SLD eigenvalues summing to at most this (times the trace) are skipped.
pub const EIG_FLOOR: f64 = 1e-10;
/// Distance from the Bloch sphere below which a qubit state counts as pure.
pub const BLOCH_FLOOR: f64 = 1e-9;
/// Largest `|r.dr|` tolerated at a pure point.
pub const PURE_R_DOT_DR_TOL: f64 = 1e-9;
/// Outcome probabilities below this are skipped by `cfi`.
pub const P_FLOOR: f64 = 1e-12;

/// Default central-difference step around `theta`.
pub fn default_step(theta: f64) -> f64 {
    1e-6 * theta.abs().max(1.0)
}

/// How `StateFamily` obtains its parameter derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    /// Central difference with a fixed step; `None` uses [`default_step`].
    CentralDifference { h: Option<f64> },
}

type MatrixFn<'a> = Box<dyn Fn(f64) -> ComplexMatrix + Send + Sync + 'a>;
type ProbFn<'a> = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync + 'a>;

/// A density-matrix valued function of one parameter.
pub struct StateFamily<'a> {
    evaluator: MatrixFn<'a>,
    derivative: Option<MatrixFn<'a>>,
    mode: DerivativeMode,
}

impl<'a> StateFamily<'a> {
    /// Family differentiated by central differences at the default step.
    pub fn new(evaluator: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'a) -> Self {
        Self {
            evaluator: Box::new(evaluator),
            derivative: None,
            mode: DerivativeMode::CentralDifference { h: None },
        }
    }

    /// Family with a closed-form derivative.
    pub fn with_derivative(
        evaluator: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'a,
        derivative: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'a,
    ) -> Self {
        Self {
            evaluator: Box::new(evaluator),
            derivative: Some(Box::new(derivative)),
            mode: DerivativeMode::Analytic,
        }
    }

    /// Switches to central differences with step `h`.
    pub fn central_difference(mut self, h: f64) -> Self {
        self.mode = DerivativeMode::CentralDifference { h: Some(h) };
        self
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn rho(&self, theta: f64) -> ComplexMatrix {
        (self.evaluator)(theta)
    }

    pub fn drho(&self, theta: f64) -> ComplexMatrix {
        match (self.mode, &self.derivative) {
            (DerivativeMode::Analytic, Some(d)) => d(theta),
            (mode, _) => {
                let h = match mode {
                    DerivativeMode::CentralDifference { h: Some(h) } => h,
                    _ => default_step(theta),
                };
                (&self.rho(theta + h) - &self.rho(theta - h)).scale_real(0.5 / h)
            }
        }
    }

    pub fn qfi(&self, theta: f64) -> Result<f64> {
        qfi_mixed(&self.rho(theta), &self.drho(theta))
    }
}

/// Outcome distribution of a measurement as a function of the parameter.
pub struct ProbabilityFamily<'a> {
    pub outcomes: Vec<String>,
    evaluator: ProbFn<'a>,
}

impl<'a> ProbabilityFamily<'a> {
    pub fn new(
        outcomes: Vec<String>,
        evaluator: impl Fn(f64) -> Vec<f64> + Send + Sync + 'a,
    ) -> Self {
        Self {
            outcomes,
            evaluator: Box::new(evaluator),
        }
    }

    /// Projective measurement of `family` in the orthonormal `basis`.
    pub fn projective(family: &'a StateFamily<'a>, basis: Vec<StateVector>) -> Self {
        let outcomes = (0..basis.len()).map(|i| i.to_string()).collect();
        Self::new(outcomes, move |theta| {
            let rho = family.rho(theta);
            basis.iter().map(|b| rho.sandwich(b, b).re).collect()
        })
    }

    pub fn probabilities(&self, theta: f64) -> Vec<f64> {
        (self.evaluator)(theta)
    }
}

/// Classical Fisher information and the number of outcomes skipped for
/// falling below `P_FLOOR`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cfi {
    pub value: f64,
    pub skipped: usize,
}

/// `sum_x (d_theta p)^2 / p`, with central-difference derivatives of step `h`.
pub fn cfi(family: &ProbabilityFamily<'_>, theta: f64, h: f64) -> Cfi {
    let p = family.probabilities(theta);
    let plus = family.probabilities(theta + h);
    let minus = family.probabilities(theta - h);
    let mut value = 0.0;
    let mut skipped = 0;
    for i in 0..p.len() {
        if p[i] <= P_FLOOR {
            skipped += 1;
            continue;
        }
        let dp = (plus[i] - minus[i]) / (2.0 * h);
        value += dp * dp / p[i];
    }
    Cfi { value, skipped }
}

fn check_pair(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<()> {
    if !rho.is_square() || (rho.rows(), rho.cols()) != (drho.rows(), drho.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "rho is {}x{}, drho is {}x{}",
            rho.rows(),
            rho.cols(),
            drho.rows(),
            drho.cols()
        )));
    }
    Ok(())
}

/// `drho` expressed in the eigenbasis of `rho`, with the eigenvalues.
fn in_eigenbasis(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix, ComplexMatrix)> {
    check_pair(rho, drho)?;
    let eig = hermitian_eig(rho)?;
    let v = &eig.eigenvectors;
    let d = &(&v.adjoint() * drho) * v;
    Ok((eig.eigenvalues, d, eig.eigenvectors))
}

fn floor_for(rho: &ComplexMatrix) -> f64 {
    EIG_FLOOR * rho.trace().re.abs().max(1.0)
}

/// Symmetric logarithmic derivative `L` with `(rho L + L rho) / 2 = drho`
/// on the support of `rho`.
pub fn sld(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (lam, d, v) = in_eigenbasis(rho, drho)?;
    let floor = floor_for(rho);
    let dim = lam.len();
    let mut l = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let s = lam[i] + lam[j];
            l[(i, j)] = if s > floor { d[(i, j)] * (2.0 / s) } else { ZERO };
        }
    }
    Ok(&(&v * &l) * &v.adjoint())
}

/// Mixed-state QFI `sum_{l_i + l_j > floor} 2 |<i|drho|j>|^2 / (l_i + l_j)`.
pub fn qfi_mixed(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<f64> {
    let (lam, d, _) = in_eigenbasis(rho, drho)?;
    let floor = floor_for(rho);
    let mut acc = 0.0;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            let s = lam[i] + lam[j];
            if s > floor {
                acc += 2.0 * d[(i, j)].norm_sqr() / s;
            }
        }
    }
    Ok(acc)
}

/// Pure-state QFI `4 (<dpsi|dpsi> - |<psi|dpsi>|^2)`.
pub fn qfi_pure(psi: &StateVector, dpsi: &StateVector) -> f64 {
    let overlap = psi.inner(dpsi);
    (4.0 * (dpsi.inner(dpsi).re - overlap.norm_sqr())).max(0.0)
}

/// `4 t^2 Var(G)` where `generator` is the parameter derivative of the Hamiltonian.
pub fn qfi_unitary(psi0: &StateVector, generator: &ComplexMatrix, t: f64) -> Result<f64> {
    let defect = generator.hermiticity_defect();
    if defect > crate::numkit::HERMITIAN_TOL {
        return Err(Error::NonHermitianInput { max_dev: defect });
    }
    if generator.rows() != psi0.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generator of dim {} on a state of dim {}",
            generator.rows(),
            psi0.dim()
        )));
    }
    let g_psi = generator.apply(psi0);
    let mean: Complex64 = psi0.inner(&g_psi);
    let second = g_psi.inner(&g_psi).re;
    Ok((4.0 * t * t * (second - mean.re * mean.re)).max(0.0))
}

/// Qubit QFI from the Bloch vector: `|dr|^2 + (r.dr)^2 / (1 - |r|^2)`.
///
/// At the sphere the second term is dropped when `r.dr` vanishes; a large
/// `r.dr` there means the family would leave the ball, so it is rejected.
pub fn qfi_bloch(r: BlochVector, dr: BlochVector) -> Result<f64> {
    let first = dr.norm_sqr();
    let r_dot_dr = r.dot(dr);
    let gap = 1.0 - r.norm_sqr();
    if gap < BLOCH_FLOOR {
        if r_dot_dr.abs() < PURE_R_DOT_DR_TOL {
            return Ok(first);
        }
        return Err(Error::SingularFamily { r_dot_dr });
    }
    Ok(first + r_dot_dr * r_dot_dr / gap)
}

/// `N t^2 gap^2`: best QFI with uncorrelated probes.
pub fn max_qfi_product(gap: f64, n: usize, t: f64) -> f64 {
    n as f64 * t * t * gap * gap
}

/// `N^2 t^2 gap^2`: best QFI with an entangled probe state.
pub fn max_qfi_entangled(gap: f64, n: usize, t: f64) -> f64 {
    let n = n as f64;
    n * n * t * t * gap * gap
}
