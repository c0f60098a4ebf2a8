//! Quantum Fisher information for N uncorrelated qubit probes coupled to a
//! single ancilla qubit.
//!
//! * [`numkit`]: dense complex linear algebra.
//! * [`model`]: protocol parameters, Hamiltonians and initial states.
//! * [`qfi`]: general classical and quantum Fisher information estimators.
//! * [`analytic`]: closed forms for the ancilla coherence and protocol QFI.
//! * [`oracle`]: brute-force joint evolution, unitary and Lindblad.
//! * [`noise`]: closed forms for the dephased protocol.

// negated comparisons are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod model;
pub mod noise;
pub mod numkit;
pub mod oracle;
pub mod qfi;

pub use error::{Error, Result};
