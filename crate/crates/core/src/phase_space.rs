//! Mapping variables on constraint phase space: `(x, p) <-> (e, theta)`
//! conversions, the scaled action difference `y`, window functions, and the
//! initial-condition samplers.
//!
//! The constraint sphere at zero-point parameter `gamma` is
//! `(x1^2 + p1^2 + x2^2 + p2^2) / 2 = 1 + 2 gamma`. The population
//! coordinate is `y = e1 / (1 + 2 gamma) - 1/2 in [-1/2, 1/2]`.
//!
//! Samplers draw in `(y, theta_d, theta_1)` space so that `gamma` enters
//! only the `(x, p)` reconstruction. Population estimates built on these
//! samples are therefore bit-identical across `gamma` for a fixed seed.

use std::f64::consts::TAU;

use rand_core::Rng;

use crate::propagator::{Coefficients2, PropagatorAngles};
use crate::{Error, Result};

/// Initial/target state tag for windows and samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    One,
    Two,
}

impl State {
    pub fn other(self) -> State {
        match self {
            State::One => State::Two,
            State::Two => State::One,
        }
    }

    /// Zero-based index for matrix storage.
    pub fn idx(self) -> usize {
        match self {
            State::One => 0,
            State::Two => 1,
        }
    }

    pub const BOTH: [State; 2] = [State::One, State::Two];
}

/// Window families assigning trajectories to states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Heaviside half-spaces `h(y)`, `h(-y)` with `y = 0` assigned to
    /// state 2, so the two windows partition phase space exactly.
    HalfSpace,
    /// Triangle region `1 <= e_n <= 2`, `e_n + e_n' <= 2` of action space.
    SqcTriangle,
    /// Binning region `e_m >= 1`, `e_m' <= 1` applied at the measurement
    /// time.
    SqcBin,
}

/// Mapping coordinates and momenta for the two states, tagged with the
/// zero-point parameter of the constraint sphere they (nominally) live on.
///
/// Triangle-window samples are deliberately off-constraint; everything else
/// in the crate keeps points on the sphere to 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x1: f64,
    pub x2: f64,
    pub p1: f64,
    pub p2: f64,
    pub gamma: f64,
}

impl PhasePoint {
    pub fn new(x1: f64, x2: f64, p1: f64, p2: f64, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= -0.5 {
            return Err(Error::Domain { what: "zero-point parameter gamma", value: gamma });
        }
        for (what, v) in [("x1", x1), ("x2", x2), ("p1", p1), ("p2", p2)] {
            if !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(PhasePoint { x1, x2, p1, p2, gamma })
    }

    /// Distance of the action sum from the constraint value `1 + 2 gamma`.
    pub fn constraint_residual(&self) -> f64 {
        let sum = 0.5 * (self.x1 * self.x1 + self.p1 * self.p1 + self.x2 * self.x2 + self.p2 * self.p2);
        (sum - (1.0 + 2.0 * self.gamma)).abs()
    }

    /// The complex coefficient pair `g = x + i p`.
    pub fn coefficients(&self) -> Coefficients2 {
        Coefficients2::new(
            num_complex::Complex64::new(self.x1, self.p1),
            num_complex::Complex64::new(self.x2, self.p2),
        )
    }

    pub fn from_coefficients(g: &Coefficients2, gamma: f64) -> Result<Self> {
        PhasePoint::new(g.g1.re, g.g2.re, g.g1.im, g.g2.im, gamma)
    }
}

/// Action-angle representation: `e_j = (x_j^2 + p_j^2) / 2`,
/// `theta_j = atan2(p_j, x_j)` in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionAngle {
    pub e1: f64,
    pub e2: f64,
    pub th1: f64,
    pub th2: f64,
}

impl ActionAngle {
    /// Quantum action `N_j = e_j - gamma` of state 1.
    pub fn n1(&self, gamma: f64) -> f64 {
        self.e1 - gamma
    }

    /// Quantum action `N_j = e_j - gamma` of state 2.
    pub fn n2(&self, gamma: f64) -> f64 {
        self.e2 - gamma
    }
}

/// `(x, p) -> (e, theta)` with angles in `[0, 2 pi)` and `theta = 0` pinned
/// at zero action.
pub fn to_action_angle(pt: &PhasePoint) -> ActionAngle {
    let e1 = 0.5 * (pt.x1 * pt.x1 + pt.p1 * pt.p1);
    let e2 = 0.5 * (pt.x2 * pt.x2 + pt.p2 * pt.p2);
    ActionAngle {
        e1,
        e2,
        th1: angle_of(pt.p1, pt.x1, e1),
        th2: angle_of(pt.p2, pt.x2, e2),
    }
}

fn angle_of(p: f64, x: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    let th = f64::atan2(p, x);
    if th < 0.0 {
        th + TAU
    } else {
        th
    }
}

/// `(e, theta) -> (x, p)` via `x_j + i p_j = sqrt(2 e_j) e^{i theta_j}`.
pub fn from_action_angle(aa: &ActionAngle, gamma: f64) -> Result<PhasePoint> {
    if aa.e1 < 0.0 {
        return Err(Error::Domain { what: "action e1", value: aa.e1 });
    }
    if aa.e2 < 0.0 {
        return Err(Error::Domain { what: "action e2", value: aa.e2 });
    }
    let r1 = (2.0 * aa.e1).sqrt();
    let r2 = (2.0 * aa.e2).sqrt();
    let (s1, c1) = aa.th1.sin_cos();
    let (s2, c2) = aa.th2.sin_cos();
    PhasePoint::new(r1 * c1, r2 * c2, r1 * s1, r2 * s2, gamma)
}

/// Scaled action difference `y = e1 / (1 + 2 gamma) - 1/2`.
///
/// Lies in `[-1/2, 1/2]` for on-constraint points.
pub fn scaled_action_difference(pt: &PhasePoint) -> f64 {
    let e1 = 0.5 * (pt.x1 * pt.x1 + pt.p1 * pt.p1);
    e1 / (1.0 + 2.0 * pt.gamma) - 0.5
}

/// Angle difference `theta_d = mod(theta_2 - theta_1, 2 pi)`.
pub fn angle_difference(aa: &ActionAngle) -> f64 {
    (aa.th2 - aa.th1).rem_euclid(TAU)
}

/// Closed-form evolution of the scaled action difference:
///
/// ```text
/// y_t = y_0 cos(2 xi) + sqrt(1/4 - y_0^2) sin(2 xi) cos(phi - psi + theta_d)
/// ```
///
/// The result is clamped into `[-1/2, 1/2]` against rounding.
pub fn y_t_closed_form(y0: f64, th0d: f64, ang: &PropagatorAngles) -> f64 {
    debug_assert!(y0.abs() <= 0.5 + 1e-12, "y0 {y0} outside [-1/2, 1/2]");
    let two_xi = 2.0 * ang.xi;
    let yt = y0 * two_xi.cos()
        + (0.25 - y0 * y0).max(0.0).sqrt() * two_xi.sin() * (ang.phase_difference() + th0d).cos();
    yt.clamp(-0.5, 0.5)
}

/// Half-space window value for state `n` at population coordinate `y`.
///
/// `K11 = [y > 0]`, `K22 = [y <= 0]`; the two windows sum to 1 everywhere.
pub fn half_space_window(n: State, y: f64) -> f64 {
    match n {
        State::One => crate::specfun::heaviside(y),
        State::Two => 1.0 - crate::specfun::heaviside(y),
    }
}

/// Triangle window of the initial sampling region in action space:
/// `1 <= e_n <= 2` and `e_n + e_n' <= 2`.
pub fn sqc_triangle_window(n: State, e1: f64, e2: f64) -> f64 {
    let (en, ep) = match n {
        State::One => (e1, e2),
        State::Two => (e2, e1),
    };
    if (1.0..=2.0).contains(&en) && en + ep <= 2.0 && ep >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Bin window applied at the measurement time: `e_m >= 1` and `e_m' <= 1`.
pub fn sqc_bin_window(m: State, e1: f64, e2: f64) -> f64 {
    let (em, ep) = match m {
        State::One => (e1, e2),
        State::Two => (e2, e1),
    };
    if em >= 1.0 && ep <= 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Uniform draw in `[0, 1)` from the top 53 bits of the stream.
#[inline]
pub(crate) fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `(y0, theta_d)` for the half-space window of state `n`: `|y0|` uniform on
/// `(0, 1/2]`, sign positive for state 1 and negative for state 2, and
/// `theta_d` uniform on `[0, 2 pi)`.
///
/// Draw order is `(y, theta_d)`; this is the single source of truth shared
/// by the phase-point sampler and the ensemble estimators.
#[inline]
pub(crate) fn draw_half_interval<R: Rng + ?Sized>(n: State, rng: &mut R) -> (f64, f64) {
    let mag = 0.5 * (1.0 - uniform01(rng));
    let y0 = match n {
        State::One => mag,
        State::Two => -mag,
    };
    (y0, TAU * uniform01(rng))
}

/// Uniform sample on the constraint sphere.
///
/// Parameterized as `y` uniform on `[-1/2, 1/2)`, `theta_d` and `theta_1`
/// independently uniform on `[0, 2 pi)`; equivalently `e1` uniform on
/// `[0, 1 + 2 gamma]` with both angles independently uniform. Draw order is
/// `(y, theta_d, theta_1)`.
pub fn sample_cps<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> PhasePoint {
    assert!(gamma > -0.5, "gamma must exceed -1/2");
    let y = uniform01(rng) - 0.5;
    let th_d = TAU * uniform01(rng);
    let th1 = TAU * uniform01(rng);
    reconstruct(y, th_d, th1, gamma)
}

fn reconstruct(y: f64, th_d: f64, th1: f64, gamma: f64) -> PhasePoint {
    let span = 1.0 + 2.0 * gamma;
    let e1 = (y + 0.5) * span;
    let e2 = span - e1;
    let th2 = (th1 + th_d).rem_euclid(TAU);
    from_action_angle(&ActionAngle { e1, e2, th1, th2 }, gamma)
        .expect("reconstruction actions are non-negative by construction")
}

/// Sample the initial window of state `n`.
///
/// - `HalfSpace`: the constraint-sphere measure conditioned on `y > 0`
///   (state 1) or `y < 0` (state 2), realized by drawing `y` uniformly on
///   the half-interval.
/// - `SqcTriangle`: `(e_n, e_n')` uniform on the triangle
///   `1 <= e_n <= 2, e_n + e_n' <= 2, e_n' >= 0` by rejection from
///   `[1, 2] x [0, 1]` (acceptance 1/2), with both angles uniform. The
///   resulting point is generally off the constraint sphere.
/// - `SqcBin`: the constraint-sphere measure conditioned on the bin of
///   state `n` (`e_n >= max(1, 2 gamma)` on the sphere), realized in `y`.
pub fn sample_initial_window<R: Rng + ?Sized>(
    n: State,
    kind: WindowKind,
    gamma: f64,
    rng: &mut R,
) -> PhasePoint {
    assert!(gamma > -0.5, "gamma must exceed -1/2");
    match kind {
        WindowKind::HalfSpace => {
            let (y, th_d) = draw_half_interval(n, rng);
            let th1 = TAU * uniform01(rng);
            reconstruct(y, th_d, th1, gamma)
        }
        WindowKind::SqcTriangle => {
            let (en, ep) = loop {
                let en = 1.0 + uniform01(rng);
                let ep = uniform01(rng);
                if en + ep <= 2.0 {
                    break (en, ep);
                }
            };
            let (e1, e2) = match n {
                State::One => (en, ep),
                State::Two => (ep, en),
            };
            let th1 = TAU * uniform01(rng);
            let th2 = TAU * uniform01(rng);
            from_action_angle(&ActionAngle { e1, e2, th1, th2 }, gamma)
                .expect("triangle actions are non-negative")
        }
        WindowKind::SqcBin => {
            let span = 1.0 + 2.0 * gamma;
            // On the sphere the bin conditions e_n >= 1 and e_n' <= 1 meet
            // at e_n >= max(1, span - 1); empty only for gamma <= 0 with
            // span < 1 handled by clamping to the upper cap.
            let lo = (1.0_f64.max(span - 1.0) / span - 0.5).min(0.5);
            let mag = lo + (0.5 - lo) * (1.0 - uniform01(rng));
            let y = match n {
                State::One => mag,
                State::Two => -mag,
            };
            let th_d = TAU * uniform01(rng);
            let th1 = TAU * uniform01(rng);
            reconstruct(y, th_d, th1, gamma)
        }
    }
}

/// Surface volume of the constraint sphere,
/// `Omega(gamma) = (2 pi)^F (1 + F gamma)^(F-1) / (F-1)!`.
pub fn cps_surface_volume(gamma: f64, f_states: usize) -> f64 {
    assert!(f_states >= 1, "need at least one state");
    assert!(gamma > -1.0 / f_states as f64, "gamma out of range");
    let f = f_states as f64;
    let factorial: f64 = (1..f_states).map(|k| k as f64).product();
    TAU.powi(f_states as i32) * (1.0 + f * gamma).powi(f_states as i32 - 1) / factorial
}
