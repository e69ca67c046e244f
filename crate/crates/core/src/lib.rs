//! Trajectory-based simulation of exact two-state quantum population dynamics
//! on constraint coordinate-momentum phase space.
//!
//! The crate provides:
//!
//! - [`propagator`]: the exact 2x2 evolution matrix, its angle
//!   parameterization `(xi, Phi, phi, psi)`, reference populations, and a
//!   fixed-step RK4 integrator used as an independent cross-check;
//! - [`phase_space`]: mapping variables `(x, p) <-> (e, theta)` on the
//!   constraint sphere, the scaled action difference `y`, window functions,
//!   and all initial-condition samplers;
//! - [`representations`]: the family of isomorphic population
//!   representations, i.e. paired weight generators `f(y)` and normalization
//!   profiles `Xi(xi)`, together with the Abel-equation solver that
//!   constructs `f` from an admissible `Xi`;
//! - [`estimator`]: Monte Carlo ensembles for every method (novel-class
//!   windows, squeezed SQC, original SQC triangle windows, covariant kernel
//!   pair) plus deterministic quadrature oracles and closed forms;
//! - [`specfun`]: complete elliptic integrals, `arctanh`, Gauss-Legendre
//!   rules, and streaming moment accumulators.
//!
//! All samplers take an explicit random stream and all ensembles derive
//! per-trajectory generators from a master seed, so results are bit-for-bit
//! reproducible regardless of thread count.

pub mod estimator;
pub mod phase_space;
pub mod propagator;
pub mod representations;
pub mod specfun;

pub use estimator::{CorrelationEstimate, EnsembleConfig, PopulationSeries};
pub use phase_space::{ActionAngle, PhasePoint, State, WindowKind};
pub use propagator::{Coefficients2, Hamiltonian2, PropagatorAngles, Unitary2};
pub use representations::{FGenerator, IsomorphismRep, XiProfile};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    /// A normalization profile failed the admissibility conditions.
    #[error("xi profile rejected:\n{0}")]
    InvalidXiProfile(representations::XiValidation),

    /// Successive quadrature refinements failed to agree.
    #[error("quadrature refinements disagree at y = {y}: {coarse} vs {fine}")]
    QuadratureDisagreement { y: f64, coarse: f64, fine: f64 },

    /// A weight generator and normalization profile do not satisfy the
    /// pairing integral equation.
    #[error("pairing residual {residual:.3e} exceeds {tol:.1e} at xi = {xi}")]
    PairingResidual { xi: f64, residual: f64, tol: f64 },

    /// The estimated normalization factor collapsed below the safe floor,
    /// so normalized populations would be meaningless.
    #[error("normalization factor {cbar:.3e} below {floor:.1e} at t = {time}; \
             the representation is degenerate on this ensemble")]
    DegenerateNormalization { cbar: f64, floor: f64, time: f64 },

    /// A tabulated profile was malformed.
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
