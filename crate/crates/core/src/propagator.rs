//! Exact propagation of the two-state system: the closed-form evolution
//! matrix, its angle parameterization, exact reference populations, and an
//! independent fixed-step ODE integrator used only for cross-validation.
//!
//! The evolution matrix of a 2x2 Hermitian generator is written as
//!
//! ```text
//!             ( e^{i psi} cos xi     e^{i phi} sin xi )
//! U = e^{-iP} (                                       )
//!             ( -e^{-i phi} sin xi   e^{-i psi} cos xi )
//! ```
//!
//! with `xi` in `[0, pi/2]`, so `sin^2 xi` is the transition probability.
//! These four angles drive everything downstream: the scaled action
//! difference evolves in closed form through `(xi, phi - psi)` alone.

use num_complex::Complex64;

use crate::{Error, Result};

/// Relative threshold below which the discriminant counts as zero and the
/// propagator degenerates to a scalar phase.
const DELTA_ZERO_REL: f64 = 1e-14;

/// A 2x2 Hermitian generator in units with `hbar = 1`.
///
/// Hermiticity is structural: the off-diagonal element is
/// `h12_re + i h12_im` and its conjugate sits below the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian2 {
    pub h11: f64,
    pub h22: f64,
    pub h12_re: f64,
    pub h12_im: f64,
}

impl Hamiltonian2 {
    pub fn new(h11: f64, h22: f64, h12_re: f64, h12_im: f64) -> Result<Self> {
        for (what, v) in
            [("h11", h11), ("h22", h22), ("h12_re", h12_re), ("h12_im", h12_im)]
        {
            if !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(Hamiltonian2 { h11, h22, h12_re, h12_im })
    }

    /// Diagonal energies plus a real coupling `lambda`.
    pub fn with_real_coupling(h11: f64, h22: f64, lambda: f64) -> Result<Self> {
        Self::new(h11, h22, lambda, 0.0)
    }

    fn offdiag_sq(&self) -> f64 {
        self.h12_re * self.h12_re + self.h12_im * self.h12_im
    }

    fn frobenius_sq(&self) -> f64 {
        self.h11 * self.h11 + self.h22 * self.h22 + 2.0 * self.offdiag_sq()
    }

    fn delta_is_zero(&self) -> bool {
        discriminant(self) < DELTA_ZERO_REL * self.frobenius_sq().max(1.0)
    }
}

/// Discriminant `(h22 - h11)^2 + 4 |h12|^2`, the squared Rabi frequency.
pub fn discriminant(h: &Hamiltonian2) -> f64 {
    let d = h.h22 - h.h11;
    d * d + 4.0 * h.offdiag_sq()
}

/// A 2x2 complex matrix that is unitary by construction.
#[derive(Debug, Clone, Copy)]
pub struct Unitary2 {
    pub u11: Complex64,
    pub u12: Complex64,
    pub u21: Complex64,
    pub u22: Complex64,
}

impl Unitary2 {
    pub fn identity() -> Self {
        Unitary2 {
            u11: Complex64::new(1.0, 0.0),
            u12: Complex64::new(0.0, 0.0),
            u21: Complex64::new(0.0, 0.0),
            u22: Complex64::new(1.0, 0.0),
        }
    }

    pub fn det(&self) -> Complex64 {
        self.u11 * self.u22 - self.u12 * self.u21
    }

    /// Max entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let c = |z: Complex64| z.conj();
        let e11 = c(self.u11) * self.u11 + c(self.u21) * self.u21 - 1.0;
        let e12 = c(self.u11) * self.u12 + c(self.u21) * self.u22;
        let e22 = c(self.u12) * self.u12 + c(self.u22) * self.u22 - 1.0;
        e11.norm().max(e12.norm()).max(e22.norm())
    }
}

/// The `(xi, Phi, phi, psi, Delta)` parameterization of the evolution matrix.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorAngles {
    /// Mixing angle in `[0, pi/2]`; `sin^2 xi` is the transition probability.
    pub xi: f64,
    /// Global phase `Phi = (h11 + h22) t / 2`.
    pub phi_total: f64,
    /// Off-diagonal phase `phi` in `[0, 2 pi)`; 0 by convention where the
    /// defining equations are indeterminate.
    pub varphi: f64,
    /// Diagonal phase `psi` in `[0, 2 pi)`.
    pub psi: f64,
    /// The discriminant value used to derive the angles.
    pub delta: f64,
}

impl PropagatorAngles {
    /// Rebuild the evolution matrix from the four angles.
    pub fn to_unitary(&self) -> Unitary2 {
        let phase = Complex64::from_polar(1.0, -self.phi_total);
        let (s, c) = self.xi.sin_cos();
        let epsi = Complex64::from_polar(1.0, self.psi);
        let ephi = Complex64::from_polar(1.0, self.varphi);
        Unitary2 {
            u11: phase * epsi * c,
            u12: phase * ephi * s,
            u21: -phase * ephi.conj() * s,
            u22: phase * epsi.conj() * c,
        }
    }

    /// `phi - psi`, the only angle combination entering the closed-form
    /// evolution of the scaled action difference.
    pub fn phase_difference(&self) -> f64 {
        self.varphi - self.psi
    }
}

/// Complex state-coefficient pair `g = x + i p`.
///
/// On constraint phase space `|g1|^2 + |g2|^2 = 2 (1 + 2 gamma)`, and the
/// norm is conserved under propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients2 {
    pub g1: Complex64,
    pub g2: Complex64,
}

impl Coefficients2 {
    pub fn new(g1: Complex64, g2: Complex64) -> Self {
        Coefficients2 { g1, g2 }
    }

    pub fn norm_sq(&self) -> f64 {
        self.g1.norm_sqr() + self.g2.norm_sqr()
    }
}

/// Closed-form evolution matrix `U(t) = exp(-i H t)`.
///
/// When the discriminant vanishes the generator is proportional to the
/// identity and `U = e^{-i h11 t} 1`.
pub fn evolution_matrix(h: &Hamiltonian2, t: f64) -> Unitary2 {
    if h.delta_is_zero() {
        let phase = Complex64::from_polar(1.0, -h.h11 * t);
        return Unitary2 {
            u11: phase,
            u12: Complex64::new(0.0, 0.0),
            u21: Complex64::new(0.0, 0.0),
            u22: phase,
        };
    }
    let delta = discriminant(h);
    let sd = delta.sqrt();
    let (s, c) = (0.5 * sd * t).sin_cos();
    let phase = Complex64::from_polar(1.0, -0.5 * (h.h11 + h.h22) * t);
    let diag_im = s * (h.h22 - h.h11) / sd;
    let off = 2.0 * s / sd;
    Unitary2 {
        u11: phase * Complex64::new(c, diag_im),
        u12: phase * Complex64::new(off * h.h12_im, -off * h.h12_re),
        u21: -phase * Complex64::new(off * h.h12_im, off * h.h12_re),
        u22: phase * Complex64::new(c, -diag_im),
    }
}

/// The angle parameterization of `U(t)`.
///
/// `xi = arcsin(2 |sin(sqrt(Delta) t / 2)| sqrt(|h12|^2 / Delta))` clamped
/// into `[0, 1]` against rounding; `psi` and `phi` are recovered through
/// two-argument arctangents of their sine/cosine pairs and mapped into
/// `[0, 2 pi)`. Where the defining equations are indeterminate
/// (`sin(sqrt(Delta) t / 2) = 0`, or zero coupling) `phi = 0` by convention,
/// and a vanishing discriminant yields `xi = psi = phi = 0`,
/// `Phi = h11 t`.
pub fn propagator_angles(h: &Hamiltonian2, t: f64) -> PropagatorAngles {
    let delta = discriminant(h);
    if h.delta_is_zero() {
        return PropagatorAngles {
            xi: 0.0,
            phi_total: h.h11 * t,
            varphi: 0.0,
            psi: 0.0,
            delta,
        };
    }
    let sd = delta.sqrt();
    let (s, c) = (0.5 * sd * t).sin_cos();
    let off_sq = h.offdiag_sq();

    let arg = 2.0 * s.abs() * (off_sq / delta).sqrt();
    debug_assert!(arg <= 1.0 + 1e-12, "mixing-angle argument {arg} exceeds 1 beyond rounding");
    let xi = arg.clamp(0.0, 1.0).asin();

    // psi from (sin psi, cos psi) up to the common positive factor
    // 1 / sqrt(Delta cos^2 xi).
    let psi = wrap_two_pi(f64::atan2(s * (h.h22 - h.h11), c * sd));

    // phi is only determined when the off-diagonal block of U is nonzero.
    let varphi = if s == 0.0 || off_sq == 0.0 {
        0.0
    } else {
        let sign = if s > 0.0 { 1.0 } else { -1.0 };
        wrap_two_pi(f64::atan2(-sign * h.h12_re, sign * h.h12_im))
    };

    PropagatorAngles { xi, phi_total: 0.5 * (h.h11 + h.h22) * t, varphi, psi, delta }
}

fn wrap_two_pi(a: f64) -> f64 {
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Exact population matrix with entry `(m, n) = |U_mn(t)|^2`, the
/// probability of reaching state `m` at time `t` from state `n`.
/// Doubly stochastic for a 2x2 unitary.
pub fn exact_population_matrix(h: &Hamiltonian2, t: f64) -> [[f64; 2]; 2] {
    let u = evolution_matrix(h, t);
    [[u.u11.norm_sqr(), u.u12.norm_sqr()], [u.u21.norm_sqr(), u.u22.norm_sqr()]]
}

/// `g_t = U g_0`.
pub fn propagate_coefficients(u: &Unitary2, g0: &Coefficients2) -> Coefficients2 {
    Coefficients2 {
        g1: u.u11 * g0.g1 + u.u12 * g0.g2,
        g2: u.u21 * g0.g1 + u.u22 * g0.g2,
    }
}

/// Fixed-step classic fourth-order integration of `dg/dt = -i H g`.
///
/// The final partial step is shortened to land exactly on `t`. This is a
/// cross-check, not the production path: the closed form
/// [`evolution_matrix`] is exact.
pub fn ode_propagate(h: &Hamiltonian2, g0: &Coefficients2, t: f64, dt: f64) -> Result<Coefficients2> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Domain { what: "ode step dt", value: dt });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain { what: "ode final time t", value: t });
    }
    if !(g0.g1.is_finite() && g0.g2.is_finite()) {
        return Err(Error::Domain { what: "ode initial coefficient", value: f64::NAN });
    }

    let rhs = |g: &Coefficients2| -> Coefficients2 {
        let off = Complex64::new(h.h12_re, h.h12_im);
        let hg1 = h.h11 * g.g1 + off * g.g2;
        let hg2 = off.conj() * g.g1 + h.h22 * g.g2;
        let mi = Complex64::new(0.0, -1.0);
        Coefficients2 { g1: mi * hg1, g2: mi * hg2 }
    };
    let step = |g: &Coefficients2, dt: f64| -> Coefficients2 {
        let k1 = rhs(g);
        let k2 = rhs(&Coefficients2 {
            g1: g.g1 + 0.5 * dt * k1.g1,
            g2: g.g2 + 0.5 * dt * k1.g2,
        });
        let k3 = rhs(&Coefficients2 {
            g1: g.g1 + 0.5 * dt * k2.g1,
            g2: g.g2 + 0.5 * dt * k2.g2,
        });
        let k4 = rhs(&Coefficients2 {
            g1: g.g1 + dt * k3.g1,
            g2: g.g2 + dt * k3.g2,
        });
        let w = dt / 6.0;
        Coefficients2 {
            g1: g.g1 + w * (k1.g1 + 2.0 * (k2.g1 + k3.g1) + k4.g1),
            g2: g.g2 + w * (k1.g2 + 2.0 * (k2.g2 + k3.g2) + k4.g2),
        }
    };

    let n_full = (t / dt).floor() as u64;
    let mut g = *g0;
    for _ in 0..n_full {
        g = step(&g, dt);
    }
    let rem = t - n_full as f64 * dt;
    if rem > 1e-12 * dt {
        g = step(&g, rem);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_close(a: f64, b: f64, tol: f64, msg: &str) {
        assert!((a - b).abs() <= tol, "{msg}: got {a}, want {b} (diff {:e})", (a - b).abs());
    }

    fn assert_cclose(a: Complex64, b: Complex64, tol: f64, msg: &str) {
        assert!((a - b).norm() <= tol, "{msg}: got {a}, want {b} (diff {:e})", (a - b).norm());
    }

    /// Independent oracle: U = R exp(-i D t) R^dagger from the explicit
    /// eigendecomposition of the Hermitian generator. Shares no code with
    /// the production closed form.
    fn eig_expm(h: &Hamiltonian2, t: f64) -> Unitary2 {
        let b = Complex64::new(h.h12_re, h.h12_im);
        if b.norm() == 0.0 {
            return Unitary2 {
                u11: Complex64::from_polar(1.0, -h.h11 * t),
                u12: Complex64::new(0.0, 0.0),
                u21: Complex64::new(0.0, 0.0),
                u22: Complex64::from_polar(1.0, -h.h22 * t),
            };
        }
        let mean = 0.5 * (h.h11 + h.h22);
        let r = (0.25 * (h.h11 - h.h22).powi(2) + b.norm_sqr()).sqrt();
        let e_plus = mean + r;
        let e_minus = mean - r;
        // Eigenvector for e_plus: (b, e_plus - h11), normalized.
        let v1 = [b, Complex64::new(e_plus - h.h11, 0.0)];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let v1 = [v1[0] / n1, v1[1] / n1];
        // Orthogonal partner.
        let v2 = [-v1[1].conj(), v1[0].conj()];
        let ep = Complex64::from_polar(1.0, -e_plus * t);
        let em = Complex64::from_polar(1.0, -e_minus * t);
        Unitary2 {
            u11: ep * v1[0] * v1[0].conj() + em * v2[0] * v2[0].conj(),
            u12: ep * v1[0] * v1[1].conj() + em * v2[0] * v2[1].conj(),
            u21: ep * v1[1] * v1[0].conj() + em * v2[1] * v2[0].conj(),
            u22: ep * v1[1] * v1[1].conj() + em * v2[1] * v2[1].conj(),
        }
    }

    /// Deterministic pseudo-random stream for property sweeps.
    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn random_hamiltonian(state: &mut u64, scale: f64) -> Hamiltonian2 {
        Hamiltonian2::new(
            scale * (2.0 * lcg(state) - 1.0),
            scale * (2.0 * lcg(state) - 1.0),
            scale * (2.0 * lcg(state) - 1.0),
            scale * (2.0 * lcg(state) - 1.0),
        )
        .unwrap()
    }

    #[test]
    fn discriminant_values() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 2.0).unwrap();
        assert_eq!(discriminant(&h), 80.0);
        let h = Hamiltonian2::new(5.0, 5.0, 0.0, 0.0).unwrap();
        assert_eq!(discriminant(&h), 0.0);
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 20.0).unwrap();
        assert_eq!(discriminant(&h), 1664.0);
    }

    #[test]
    fn hamiltonian_rejects_non_finite() {
        assert!(Hamiltonian2::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(Hamiltonian2::new(0.0, f64::INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn evolution_at_zero_time_is_identity() {
        let h = Hamiltonian2::new(10.0, 2.0, 2.0, -1.0).unwrap();
        let u = evolution_matrix(&h, 0.0);
        assert_cclose(u.u11, Complex64::new(1.0, 0.0), 1e-15, "u11");
        assert_cclose(u.u12, Complex64::new(0.0, 0.0), 1e-15, "u12");
        assert_cclose(u.u21, Complex64::new(0.0, 0.0), 1e-15, "u21");
        assert_cclose(u.u22, Complex64::new(1.0, 0.0), 1e-15, "u22");
    }

    #[test]
    fn evolution_zero_coupling_is_diagonal_phases() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 0.0).unwrap();
        for &t in &[0.3, 1.7, 12.0] {
            let u = evolution_matrix(&h, t);
            assert_cclose(u.u11, Complex64::from_polar(1.0, -10.0 * t), 1e-12, "u11 phase");
            assert_cclose(u.u22, Complex64::from_polar(1.0, -2.0 * t), 1e-12, "u22 phase");
            assert_eq!(u.u12.norm(), 0.0);
            assert_eq!(u.u21.norm(), 0.0);
        }
    }

    #[test]
    fn evolution_rabi_anchor() {
        // Half a Rabi flop of the (10, 2, 2) model transfers 0.2.
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 2.0).unwrap();
        let t = FRAC_PI_2 / 20f64.sqrt();
        let u = evolution_matrix(&h, t);
        assert_close(u.u11.norm_sqr(), 0.8, 1e-12, "|u11|^2");
        assert_close(u.u21.norm_sqr(), 0.2, 1e-12, "|u21|^2");
        let oracle = eig_expm(&h, t);
        assert_cclose(u.u11, oracle.u11, 1e-11, "u11 vs eig");
        assert_cclose(u.u12, oracle.u12, 1e-11, "u12 vs eig");
        assert_cclose(u.u21, oracle.u21, 1e-11, "u21 vs eig");
        assert_cclose(u.u22, oracle.u22, 1e-11, "u22 vs eig");
    }

    #[test]
    fn evolution_matches_eigendecomposition_oracle() {
        let mut st = 0x9e3779b97f4a7c15_u64;
        for _ in 0..300 {
            let h = random_hamiltonian(&mut st, 10.0);
            let t = 4.0 * lcg(&mut st);
            let u = evolution_matrix(&h, t);
            let o = eig_expm(&h, t);
            for (a, b) in [(u.u11, o.u11), (u.u12, o.u12), (u.u21, o.u21), (u.u22, o.u22)] {
                assert_cclose(a, b, 1e-10, "closed form vs eigendecomposition");
            }
        }
    }

    #[test]
    fn unitarity_sweep() {
        let mut st = 0xdeadbeef_u64;
        for _ in 0..500 {
            let h = random_hamiltonian(&mut st, 25.0);
            let t = 10.0 * lcg(&mut st);
            let u = evolution_matrix(&h, t);
            assert!(u.unitarity_residual() <= 1e-12, "unitary residual {}", u.unitarity_residual());
            assert!((u.det().norm() - 1.0).abs() <= 1e-12, "det modulus");
        }
    }

    #[test]
    fn angles_at_zero_time() {
        let h = Hamiltonian2::new(10.0, 2.0, 2.0, 0.5).unwrap();
        let a = propagator_angles(&h, 0.0);
        assert_eq!(a.xi, 0.0);
        assert_eq!(a.phi_total, 0.0);
        assert_eq!(a.psi, 0.0);
        assert_eq!(a.varphi, 0.0);
    }

    #[test]
    fn angles_zero_coupling() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 0.0).unwrap();
        for &t in &[0.2, 1.0, 3.3] {
            let a = propagator_angles(&h, t);
            assert_eq!(a.xi, 0.0, "xi must vanish without coupling");
        }
    }

    #[test]
    fn angles_rabi_anchor() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 2.0).unwrap();
        let t = FRAC_PI_2 / 20f64.sqrt();
        let a = propagator_angles(&h, t);
        assert_close(a.xi, (4.0 / 80f64.sqrt()).asin(), 1e-14, "xi");
        assert_close(a.xi.sin().powi(2), 0.2, 1e-12, "sin^2 xi = |u21|^2");
    }

    #[test]
    fn angle_reconstruction_sweep() {
        let mut st = 0x1234_5678_u64;
        let mut checked = 0;
        for _ in 0..400 {
            let h = random_hamiltonian(&mut st, 15.0);
            let t = 6.0 * lcg(&mut st);
            if h.delta_is_zero() {
                continue;
            }
            let u = evolution_matrix(&h, t);
            let a = propagator_angles(&h, t);
            let r = a.to_unitary();
            for (x, y) in [(u.u11, r.u11), (u.u12, r.u12), (u.u21, r.u21), (u.u22, r.u22)] {
                assert_cclose(x, y, 1e-10, "angle reconstruction");
            }
            // Moduli identities of the parameterization.
            assert_close(a.xi.sin().powi(2), u.u21.norm_sqr(), 1e-10, "sin^2 xi");
            assert_close(a.xi.cos().powi(2), u.u11.norm_sqr(), 1e-10, "cos^2 xi");
            checked += 1;
        }
        assert!(checked > 350);
    }

    #[test]
    fn population_matrix_rows_and_anchor() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 2.0).unwrap();
        let p0 = exact_population_matrix(&h, 0.0);
        assert_eq!(p0, [[1.0, 0.0], [0.0, 1.0]]);
        let t = FRAC_PI_2 / 20f64.sqrt();
        let p = exact_population_matrix(&h, t);
        assert_close(p[0][0], 0.8, 1e-12, "p11");
        assert_close(p[0][1], 0.2, 1e-12, "p12");
        assert_close(p[1][0], 0.2, 1e-12, "p21");
        assert_close(p[1][1], 0.8, 1e-12, "p22");

        let mut st = 77_u64;
        for _ in 0..200 {
            let h = random_hamiltonian(&mut st, 20.0);
            let t = 5.0 * lcg(&mut st);
            let p = exact_population_matrix(&h, t);
            for (row, col) in [(p[0][0] + p[0][1], p[0][0] + p[1][0]), (p[1][0] + p[1][1], p[0][1] + p[1][1])] {
                assert_close(row, 1.0, 1e-12, "row sum");
                assert_close(col, 1.0, 1e-12, "column sum");
            }
        }
    }

    #[test]
    fn full_swap_at_xi_half_pi() {
        // Pure coupling reaches xi = pi/2 at t = pi/2, where the population
        // matrix is the antidiagonal swap.
        let h = Hamiltonian2::with_real_coupling(0.0, 0.0, 1.0).unwrap();
        let t = FRAC_PI_2;
        let a = propagator_angles(&h, t);
        assert_close(a.xi, FRAC_PI_2, 1e-12, "xi = pi/2");
        let p = exact_population_matrix(&h, t);
        assert_close(p[0][0], 0.0, 1e-12, "p11 swap");
        assert_close(p[1][0], 1.0, 1e-12, "p21 swap");
    }

    #[test]
    fn coefficient_propagation() {
        let g0 = Coefficients2::new(Complex64::new(1.2, -0.3), Complex64::new(0.4, 0.9));
        let id = Unitary2::identity();
        assert_eq!(propagate_coefficients(&id, &g0), g0);

        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 2.0).unwrap();
        let t = FRAC_PI_2 / 20f64.sqrt();
        let u = evolution_matrix(&h, t);
        let gamma: f64 = 0.5;
        let start = Coefficients2::new(
            Complex64::new((2.0 * (1.0 + 2.0 * gamma)).sqrt(), 0.0),
            Complex64::new(0.0, 0.0),
        );
        let gt = propagate_coefficients(&u, &start);
        assert_close(gt.g1.norm_sqr() / (2.0 * (1.0 + 2.0 * gamma)), 0.8, 1e-12, "population");
        assert_close(gt.norm_sq(), start.norm_sq(), 1e-12 * start.norm_sq(), "norm preserved");

        // Swap-type unitary exchanges the component moduli.
        let hs = Hamiltonian2::with_real_coupling(0.0, 0.0, 1.0).unwrap();
        let us = evolution_matrix(&hs, FRAC_PI_2);
        let gs = propagate_coefficients(&us, &g0);
        assert_close(gs.g1.norm(), g0.g2.norm(), 1e-12, "moduli swapped 1");
        assert_close(gs.g2.norm(), g0.g1.norm(), 1e-12, "moduli swapped 2");
    }

    #[test]
    fn ode_rejects_bad_inputs() {
        let h = Hamiltonian2::with_real_coupling(1.0, 0.0, 0.5).unwrap();
        let g = Coefficients2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        assert!(ode_propagate(&h, &g, 1.0, 0.0).is_err());
        assert!(ode_propagate(&h, &g, 1.0, -0.1).is_err());
        assert!(ode_propagate(&h, &g, -1.0, 0.1).is_err());
        assert!(ode_propagate(&h, &g, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn ode_zero_time_is_identity() {
        let h = Hamiltonian2::with_real_coupling(3.0, 1.0, 0.7).unwrap();
        let g = Coefficients2::new(Complex64::new(0.5, 0.5), Complex64::new(-1.0, 0.25));
        assert_eq!(ode_propagate(&h, &g, 0.0, 1e-3).unwrap(), g);
    }

    #[test]
    fn ode_diagonal_preserves_moduli() {
        let h = Hamiltonian2::with_real_coupling(7.0, -3.0, 0.0).unwrap();
        let g = Coefficients2::new(Complex64::new(1.0, 0.2), Complex64::new(-0.4, 0.8));
        let gt = ode_propagate(&h, &g, 1.0, 1e-3).unwrap();
        assert_close(gt.g1.norm(), g.g1.norm(), 1e-10, "|g1| constant");
        assert_close(gt.g2.norm(), g.g2.norm(), 1e-10, "|g2| constant");
    }

    #[test]
    fn ode_matches_closed_form_strong_coupling() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 20.0).unwrap();
        let g0 = Coefficients2::new(Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0));
        let gt = ode_propagate(&h, &g0, 1.0, 1e-3).unwrap();
        let want = propagate_coefficients(&evolution_matrix(&h, 1.0), &g0);
        assert!((gt.g1 - want.g1).norm() <= 1e-6, "g1 diff {:e}", (gt.g1 - want.g1).norm());
        assert!((gt.g2 - want.g2).norm() <= 1e-6, "g2 diff {:e}", (gt.g2 - want.g2).norm());
        // The shortened final step lands exactly on t even with a ragged dt.
        let gt2 = ode_propagate(&h, &g0, 1.0, 7.3e-4).unwrap();
        assert!((gt2.g1 - want.g1).norm() <= 1e-6);
    }

    #[test]
    fn ode_norm_conservation() {
        // Fourth-order amplitude drift per step is (omega dt)^6 / 72 in the
        // squared norm, so the attainable bound over unit time scales as
        // n (omega_max dt)^6 / 72. At dt = 1e-3 that is ~1e-10 only up to
        // moderate spectral radius; the generic bound below has an 8x
        // safety margin on the worst eigenfrequency.
        let g0 = Coefficients2::new(Complex64::new(1.5, 0.5), Complex64::new(-0.5, 1.0));
        let dt = 1e-3;

        let mut st = 0xabcdef_u64;
        for _ in 0..60 {
            let h = random_hamiltonian(&mut st, 25.0); // spectral radius <= 50
            let gt = ode_propagate(&h, &g0, 1.0, dt).unwrap();
            let drift = (gt.norm_sq() - g0.norm_sq()).abs();
            let radius = 0.5 * (h.h11 + h.h22).abs()
                + (0.25 * (h.h11 - h.h22).powi(2) + h.offdiag_sq()).sqrt();
            let bound = 8.0 * 1000.0 * (radius * dt).powi(6) / 72.0 * g0.norm_sq();
            assert!(drift <= bound.max(1e-13), "drift {drift:e} vs bound {bound:e}");
        }

        // Tight absolute bound in the regime where it is attainable.
        for _ in 0..60 {
            let h = random_hamiltonian(&mut st, 1.5); // spectral radius <= 3
            let gt = ode_propagate(&h, &g0, 1.0, dt).unwrap();
            let drift = (gt.norm_sq() - g0.norm_sq()).abs();
            assert!(drift <= 1e-10, "drift {drift:e} at small spectral radius");
        }
    }
}
