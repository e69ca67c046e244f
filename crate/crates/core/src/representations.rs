//! The isomorphism family: weight generators `f(y)` paired with
//! normalization profiles `Xi(xi)`, admissibility validation, and the
//! Abel-equation solver that constructs `f` from an admissible `Xi`.
//!
//! An admissible profile is bounded and smooth on `[0, pi/2]` with
//!
//! ```text
//! Xi(pi/2 - xi) = Xi(xi),   Xi''(0) = 2 Xi(0) = 2.
//! ```
//!
//! Its weight generator is recovered from the singular Volterra equation
//!
//! ```text
//! B(z) = z sqrt(1-z^2) d/dz [ z^2 Xi(arcsin z) ]
//! f(y) = ∫_0^{2y} dz B'(z) / sqrt((2y)^2 - z^2)
//! ```
//!
//! evaluated after the substitution `z = 2y sin u`, which removes the
//! endpoint singularity exactly: `f(y) = ∫_0^{pi/2} B'(2y sin u) du`.
//! Violating the curvature condition makes `f` diverge logarithmically at
//! `y = 1/2`; the validator exists to catch that before any ensemble runs.

use std::fmt;
use std::io::{BufRead, Write as IoWrite};
use std::sync::Arc;

use crate::specfun::{arctanh, ellipe, ellipem1, ellipk, ellipkm1, CubicSpline, QuadratureRule};
use crate::{Error, Result};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Finite-difference step for profile derivatives when analytic ones are
/// not supplied.
const FD_STEP: f64 = 1e-4;

/// Switch to the cancellation-aware endpoint forms of the analytic weight
/// generators once `1 - 2y` drops below this.
const ENDPOINT_SWITCH: f64 = 1e-4;

/// `f(1/2)` of the second example generator, `6 ln 2`.
pub const F_CASE2_ENDPOINT: f64 = 4.1588830833596715;

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A time-dependent normalization profile `xi -> Xi(xi)` on `[0, pi/2]`,
/// with optional analytic first and second derivatives.
///
/// Absent derivatives fall back to fourth-order finite differences with
/// step 1e-4, using shifted stencils near the interval ends so the profile
/// is never evaluated outside its domain.
#[derive(Clone)]
pub struct XiProfile {
    value: Evaluator,
    d1: Option<Evaluator>,
    d2: Option<Evaluator>,
}

impl fmt::Debug for XiProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("XiProfile")
            .field("analytic_d1", &self.d1.is_some())
            .field("analytic_d2", &self.d2.is_some())
            .finish()
    }
}

impl XiProfile {
    pub fn from_fn<F>(value: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        XiProfile { value: Arc::new(value), d1: None, d2: None }
    }

    pub fn with_derivatives<F, G, H>(value: F, d1: G, d2: H) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        XiProfile { value: Arc::new(value), d1: Some(Arc::new(d1)), d2: Some(Arc::new(d2)) }
    }

    /// Normalization profile of the squeezed triangle-window scheme.
    pub fn squeezed() -> Self {
        XiProfile::with_derivatives(xi_sqz, xi_sqz_d1, xi_sqz_d2)
    }

    /// First example profile, `1 + sin^2(2 xi)/4 - 2 sin(2 xi)/pi`.
    pub fn case1() -> Self {
        XiProfile::with_derivatives(xi_case1, xi_case1_d1, xi_case1_d2)
    }

    /// Second example profile, `3 - 2 cos xi - 2 sin xi + sin(2 xi)/pi`.
    pub fn case2() -> Self {
        XiProfile::with_derivatives(xi_case2, xi_case2_d1, xi_case2_d2)
    }

    /// The constant profile `Xi = 1`. Symmetric and bounded but violates
    /// the curvature condition, so it must be rejected by validation;
    /// kept as a diagnostic for exactly that test.
    pub fn constant_one() -> Self {
        XiProfile::with_derivatives(|_| 1.0, |_| 0.0, |_| 0.0)
    }

    /// Tabulated profile, interpolated with a not-a-knot cubic spline so
    /// the solver gets usable first and second derivatives.
    pub fn from_table(xs: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        let spline = CubicSpline::new(xs, vals)?;
        let (lo, hi) = spline.domain();
        if lo > 1e-9 || hi < FRAC_PI_2 - 1e-9 {
            return Err(Error::InvalidTable(format!(
                "profile table must cover [0, pi/2], got [{lo}, {hi}]"
            )));
        }
        let s1 = spline.clone();
        let s2 = spline.clone();
        Ok(XiProfile {
            value: Arc::new(move |x| spline.value(x)),
            d1: Some(Arc::new(move |x| s1.derivative(x))),
            d2: Some(Arc::new(move |x| s2.second_derivative(x))),
        })
    }

    pub fn value(&self, xi: f64) -> f64 {
        (self.value)(xi)
    }

    pub fn d1(&self, xi: f64) -> f64 {
        match &self.d1 {
            Some(d) => d(xi),
            None => fd_derivative(&*self.value, xi, 1),
        }
    }

    pub fn d2(&self, xi: f64) -> f64 {
        match &self.d2 {
            Some(d) => d(xi),
            None => fd_derivative(&*self.value, xi, 2),
        }
    }
}

/// Fourth-order finite differences on `[0, pi/2]`, shifting to one-sided
/// stencils near the ends.
fn fd_derivative(f: &(dyn Fn(f64) -> f64 + Send + Sync), x: f64, order: u8) -> f64 {
    let h = FD_STEP;
    let near_lo = x < 2.0 * h;
    let near_hi = x > FRAC_PI_2 - 2.0 * h;
    match (order, near_lo, near_hi) {
        (1, false, false) => {
            (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
        }
        (1, true, _) => {
            (-25.0 * f(x) + 48.0 * f(x + h) - 36.0 * f(x + 2.0 * h) + 16.0 * f(x + 3.0 * h)
                - 3.0 * f(x + 4.0 * h))
                / (12.0 * h)
        }
        (1, _, true) => {
            (25.0 * f(x) - 48.0 * f(x - h) + 36.0 * f(x - 2.0 * h) - 16.0 * f(x - 3.0 * h)
                + 3.0 * f(x - 4.0 * h))
                / (12.0 * h)
        }
        (2, false, false) => {
            (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
                / (12.0 * h * h)
        }
        (2, true, _) => {
            (45.0 * f(x) - 154.0 * f(x + h) + 214.0 * f(x + 2.0 * h) - 156.0 * f(x + 3.0 * h)
                + 61.0 * f(x + 4.0 * h)
                - 10.0 * f(x + 5.0 * h))
                / (12.0 * h * h)
        }
        (2, _, true) => {
            (45.0 * f(x) - 154.0 * f(x - h) + 214.0 * f(x - 2.0 * h) - 156.0 * f(x - 3.0 * h)
                + 61.0 * f(x - 4.0 * h)
                - 10.0 * f(x - 5.0 * h))
                / (12.0 * h * h)
        }
        _ => unreachable!("derivative order is 1 or 2"),
    }
}

// --- stable trigonometric kernels -----------------------------------------

/// `g(theta) = sin(theta) - theta cos(theta)`, by series for small `theta`
/// where the direct form cancels catastrophically.
pub(crate) fn sin_minus_t_cos(theta: f64) -> f64 {
    let at = theta.abs();
    if at >= 1.0 {
        return theta.sin() - theta * theta.cos();
    }
    let t2 = theta * theta;
    let mut term = theta * t2 / 3.0;
    let mut sum = term;
    let mut k = 1.0_f64;
    for _ in 0..24 {
        term *= -t2 / (2.0 * k * (2.0 * k + 3.0));
        sum += term;
        k += 1.0;
        if term.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum
}

/// `G(theta) = g(theta) / sin^2(theta)` and its first two derivatives,
/// series-evaluated below `theta = 0.1`.
fn g_over_sin_sq(theta: f64) -> f64 {
    if theta < 0.1 {
        let t2 = theta * theta;
        return theta * (1.0 / 3.0 + t2 * (7.0 / 90.0 + t2 * (31.0 / 2520.0 + t2 * 127.0 / 75600.0)));
    }
    let s = theta.sin();
    sin_minus_t_cos(theta) / (s * s)
}

fn g_over_sin_sq_d1(theta: f64) -> f64 {
    if theta < 0.1 {
        let t2 = theta * theta;
        return 1.0 / 3.0 + t2 * (7.0 / 30.0 + t2 * (31.0 / 504.0 + t2 * 127.0 / 10800.0));
    }
    let s = theta.sin();
    let c = theta.cos();
    (theta * s * s - 2.0 * sin_minus_t_cos(theta) * c) / (s * s * s)
}

fn g_over_sin_sq_d2(theta: f64) -> f64 {
    if theta < 0.1 {
        let t2 = theta * theta;
        return theta * (7.0 / 15.0 + t2 * (31.0 / 126.0 + t2 * 127.0 / 1800.0));
    }
    let s = theta.sin();
    let c = theta.cos();
    let g = sin_minus_t_cos(theta);
    1.0 / s + 2.0 * g / (s * s) - 3.0 * theta * c / (s * s) + 6.0 * g * c * c / (s * s * s * s)
}

// --- the three analytic normalization profiles -----------------------------

/// Squeezed-scheme normalization factor.
///
/// Algebraically `1/cos^2(xi) - 4 (1 - 2 xi cot(2 xi)) / (pi sin(2 xi))`
/// regrouped into the manifestly finite form
/// `sec^2(a) - (4/pi) g(2a)/sin^2(2a) . 2^2 ...` evaluated at
/// `a = min(xi, pi/2 - xi)`; the regrouped expression is exactly symmetric
/// about `pi/4`, which also sidesteps the `inf - inf` form at the upper
/// endpoint. `Xi(0) = Xi(pi/2) = 1`.
pub fn xi_sqz(xi: f64) -> f64 {
    let a = xi.min(FRAC_PI_2 - xi);
    if a <= 0.0 {
        return 1.0;
    }
    let c = a.cos();
    1.0 / (c * c) - (4.0 / PI) * g_over_sin_sq(2.0 * a)
}

fn xi_sqz_d1(xi: f64) -> f64 {
    let mirrored = xi > FRAC_PI_4;
    let a = xi.min(FRAC_PI_2 - xi);
    if a <= 0.0 {
        let v = -8.0 / (3.0 * PI);
        return if mirrored { -v } else { v };
    }
    let c = a.cos();
    let sec2 = 1.0 / (c * c);
    let v = 2.0 * sec2 * a.tan() - (8.0 / PI) * g_over_sin_sq_d1(2.0 * a);
    if mirrored {
        -v
    } else {
        v
    }
}

fn xi_sqz_d2(xi: f64) -> f64 {
    let a = xi.min(FRAC_PI_2 - xi);
    if a <= 0.0 {
        return 2.0;
    }
    let c = a.cos();
    let sec2 = 1.0 / (c * c);
    let t = a.tan();
    2.0 * sec2 * (2.0 * t * t + sec2) - (16.0 / PI) * g_over_sin_sq_d2(2.0 * a)
}

/// First example profile, written via `cos^4 + sin^4 = 1 - sin^2(2 xi)/2`:
/// `Xi(xi) = 1 + sin^2(2 xi)/4 - 2 sin(2 xi)/pi`.
pub fn xi_case1(xi: f64) -> f64 {
    let s2 = (2.0 * xi).sin();
    1.0 + 0.25 * s2 * s2 - 2.0 * s2 / PI
}

fn xi_case1_d1(xi: f64) -> f64 {
    let (s2, c2) = (2.0 * xi).sin_cos();
    c2 * (s2 - 4.0 / PI)
}

fn xi_case1_d2(xi: f64) -> f64 {
    2.0 * (4.0 * xi).cos() + (8.0 / PI) * (2.0 * xi).sin()
}

/// Second example profile, `Xi(xi) = 3 - 2 cos xi - 2 sin xi + sin(2 xi)/pi`.
pub fn xi_case2(xi: f64) -> f64 {
    let (s, c) = xi.sin_cos();
    3.0 - 2.0 * c - 2.0 * s + (2.0 * xi).sin() / PI
}

fn xi_case2_d1(xi: f64) -> f64 {
    let (s, c) = xi.sin_cos();
    2.0 * s - 2.0 * c + 2.0 * (2.0 * xi).cos() / PI
}

fn xi_case2_d2(xi: f64) -> f64 {
    let (s, c) = xi.sin_cos();
    2.0 * c + 2.0 * s - 4.0 * (2.0 * xi).sin() / PI
}

// --- the three analytic weight generators ----------------------------------

/// Squeezed weight generator `f(y) = 2 - 1 / (2 (y + 1/2)^2)`.
///
/// `f(0) = 0`, `f(1/2) = 3/2`.
pub fn f_sqz(y: f64) -> f64 {
    debug_assert!((-1e-12..=0.5 + 1e-12).contains(&y), "f_sqz argument {y}");
    let half = y + 0.5;
    2.0 - 1.0 / (2.0 * half * half)
}

/// First example weight generator: quintic polynomial plus an
/// `arctanh(2y)` term whose coefficient vanishes at `y = 1/2`.
///
/// Near the endpoint the coefficient is evaluated in the factored form
/// `u (2-u) (9 - 105 (1-u)^4) / 8` with `u = 1 - 2y`, and the product with
/// the diverging `arctanh` is taken explicitly; `f(1/2) = 4.5`.
pub fn f_case1(y: f64) -> f64 {
    debug_assert!((-1e-12..=0.5 + 1e-12).contains(&y), "f_case1 argument {y}");
    let poly = y * (23.0 / 4.0 + y * (-36.0 + y * (70.0 + y * (240.0 - 420.0 * y))));
    let u = 1.0 - 2.0 * y;
    if u <= 0.0 {
        return 4.5;
    }
    if u < ENDPOINT_SWITCH {
        let om = 1.0 - u;
        let coeff = u * (2.0 - u) / 8.0 * (9.0 - 105.0 * om.powi(4));
        let at = 0.5 * ((2.0 - u).ln() - u.ln());
        return poly + coeff * at;
    }
    let y2 = y * y;
    let coeff = 9.0 / 8.0 + y2 * (-4.5 + y2 * (-210.0 + 840.0 * y2));
    poly + coeff * arctanh(2.0 * y).expect("2y < 1 here")
}

/// Second example weight generator: polynomial plus `arctanh(2y)` and the
/// complete elliptic integrals `E(4y^2)`, `K(4y^2)`.
///
/// The `arctanh` and `K` logarithmic divergences cancel at `y = 1/2`,
/// leaving `f(1/2) = 6 ln 2`. Near the endpoint the elliptic integrals are
/// evaluated through the complementary parameter `m1 = u (2 - u)` with
/// `u = 1 - 2y`, which keeps full precision where `1 - 4y^2` would not.
pub fn f_case2(y: f64) -> f64 {
    debug_assert!((-1e-12..=0.5 + 1e-12).contains(&y), "f_case2 argument {y}");
    let u = 1.0 - 2.0 * y;
    if u <= 0.0 {
        return F_CASE2_ENDPOINT;
    }
    let poly = y * (2.0 + y * (18.0 + y * (128.0 - 120.0 * y)));
    let y2 = y * y;
    let c_at = 3.0 - 36.0 * y2;
    let c_e = 2.0 - 64.0 * y2;
    let c_k = 2.0 - 32.0 * y2;
    let (at, e, k) = if u < ENDPOINT_SWITCH {
        let m1 = u * (2.0 - u);
        (
            0.5 * ((2.0 - u).ln() - u.ln()),
            ellipem1(m1).expect("m1 in (0, 1]"),
            ellipkm1(m1).expect("m1 in (0, 1]"),
        )
    } else {
        let m = 4.0 * y2;
        (
            arctanh(2.0 * y).expect("2y < 1 here"),
            ellipe(m).expect("m < 1 here"),
            ellipk(m).expect("m < 1 here"),
        )
    };
    poly + c_at * at + c_e * e - c_k * k
}

// --- weight generators as values -------------------------------------------

/// Where a weight generator came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FProvenance {
    AnalyticSqz,
    AnalyticCase1,
    AnalyticCase2,
    /// Solved from a profile (or imported) as a lookup table.
    AbelSolved,
}

#[derive(Clone)]
enum FKind {
    Sqz,
    Case1,
    Case2,
    Table { ys: Vec<f64>, fs: Vec<f64>, inv_step: Option<f64> },
}

/// A weight generator `y -> f(y)` on `[0, 1/2]`.
///
/// Either one of the three analytic forms or a table with linear
/// interpolation (the output of the Abel solver or an imported file).
#[derive(Clone)]
pub struct FGenerator {
    kind: FKind,
}

impl fmt::Debug for FGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FGenerator({:?})", self.provenance())
    }
}

impl FGenerator {
    pub fn analytic_sqz() -> Self {
        FGenerator { kind: FKind::Sqz }
    }

    pub fn analytic_case1() -> Self {
        FGenerator { kind: FKind::Case1 }
    }

    pub fn analytic_case2() -> Self {
        FGenerator { kind: FKind::Case2 }
    }

    /// Tabulated generator with linear interpolation between nodes.
    ///
    /// `ys` must be strictly increasing inside `[0, 1/2]`.
    pub fn from_table(ys: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if ys.len() != fs.len() || ys.len() < 2 {
            return Err(Error::InvalidTable(format!(
                "f table needs at least 2 matched points, got {} x {}",
                ys.len(),
                fs.len()
            )));
        }
        if ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTable("f table abscissae must be strictly increasing".into()));
        }
        if ys.iter().any(|v| !v.is_finite()) || ys[0] < -1e-12 || *ys.last().unwrap() > 0.5 + 1e-12 {
            return Err(Error::InvalidTable("f table abscissae must lie in [0, 1/2]".into()));
        }
        if fs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTable("f table contains non-finite values".into()));
        }
        let step = ys[1] - ys[0];
        let uniform = ys.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-12 * step.max(1e-300));
        let inv_step = uniform.then_some(1.0 / step);
        Ok(FGenerator { kind: FKind::Table { ys, fs, inv_step } })
    }

    pub fn provenance(&self) -> FProvenance {
        match self.kind {
            FKind::Sqz => FProvenance::AnalyticSqz,
            FKind::Case1 => FProvenance::AnalyticCase1,
            FKind::Case2 => FProvenance::AnalyticCase2,
            FKind::Table { .. } => FProvenance::AbelSolved,
        }
    }

    /// The table behind a solved generator, if any.
    pub fn table(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            FKind::Table { ys, fs, .. } => Some((ys, fs)),
            _ => None,
        }
    }

    /// Evaluate at `y in [0, 1/2]`; tables clamp to their end values.
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        match &self.kind {
            FKind::Sqz => f_sqz(y),
            FKind::Case1 => f_case1(y),
            FKind::Case2 => f_case2(y),
            FKind::Table { ys, fs, inv_step } => {
                let n = ys.len();
                if y <= ys[0] {
                    return fs[0];
                }
                if y >= ys[n - 1] {
                    return fs[n - 1];
                }
                let i = match inv_step {
                    Some(inv) => (((y - ys[0]) * inv) as usize).min(n - 2),
                    None => ys.partition_point(|&v| v <= y).saturating_sub(1).min(n - 2),
                };
                let w = (y - ys[i]) / (ys[i + 1] - ys[i]);
                fs[i] + w * (fs[i + 1] - fs[i])
            }
        }
    }

    /// Derivative `f'(y)`.
    ///
    /// Tables use the segment slope, refined to a three-point parabola on
    /// the first and last segments: the raw secant misses the endpoint
    /// derivative by `O(h)`, which is exactly where the induced-profile
    /// curvature check needs it. Analytic kinds use finite differences.
    pub fn derivative(&self, y: f64) -> f64 {
        match &self.kind {
            FKind::Table { ys, fs, inv_step } => {
                let n = ys.len();
                let yc = y.clamp(ys[0], ys[n - 1]);
                let i = match inv_step {
                    Some(inv) => (((yc - ys[0]) * inv) as usize).min(n - 2),
                    None => ys.partition_point(|&v| v <= yc).saturating_sub(1).min(n - 2),
                };
                if n >= 3 && (i == 0 || i == n - 2) {
                    let base = if i == 0 { 0 } else { n - 3 };
                    let (y0, y1, y2) = (ys[base], ys[base + 1], ys[base + 2]);
                    let s01 = (fs[base + 1] - fs[base]) / (y1 - y0);
                    let s12 = (fs[base + 2] - fs[base + 1]) / (y2 - y1);
                    return s01 + (s12 - s01) * (2.0 * yc - y0 - y1) / (y2 - y0);
                }
                (fs[i + 1] - fs[i]) / (ys[i + 1] - ys[i])
            }
            _ => {
                let h = 1e-5;
                let f = |t: f64| self.value(t);
                if y < 2.0 * h {
                    (-25.0 * f(y) + 48.0 * f(y + h) - 36.0 * f(y + 2.0 * h)
                        + 16.0 * f(y + 3.0 * h)
                        - 3.0 * f(y + 4.0 * h))
                        / (12.0 * h)
                } else if y > 0.5 - 2.0 * h {
                    (25.0 * f(y) - 48.0 * f(y - h) + 36.0 * f(y - 2.0 * h)
                        - 16.0 * f(y - 3.0 * h)
                        + 3.0 * f(y - 4.0 * h))
                        / (12.0 * h)
                } else {
                    (-f(y + 2.0 * h) + 8.0 * f(y + h) - 8.0 * f(y - h) + f(y - 2.0 * h))
                        / (12.0 * h)
                }
            }
        }
    }

    /// Rescale all table values (populations are invariant under a common
    /// scale of the weight generator).
    fn rescaled(&self, factor: f64) -> Self {
        match &self.kind {
            FKind::Table { ys, fs, inv_step } => FGenerator {
                kind: FKind::Table {
                    ys: ys.clone(),
                    fs: fs.iter().map(|v| v * factor).collect(),
                    inv_step: *inv_step,
                },
            },
            _ => self.clone(),
        }
    }

    /// Check `f(0) = 0`, non-negativity, and boundedness on a 1024-point
    /// grid over `[0, 1/2]`.
    pub fn validate(&self) -> Result<()> {
        let f0 = self.value(0.0);
        if f0.is_nan() || f0.abs() > 1e-8 {
            return Err(Error::Domain { what: "weight generator value at y = 0", value: f0 });
        }
        for k in 0..1024 {
            let y = 0.5 * k as f64 / 1023.0;
            let v = self.value(y);
            if !v.is_finite() {
                return Err(Error::Domain { what: "weight generator value", value: v });
            }
            if v < -1e-10 {
                return Err(Error::Domain { what: "weight generator negativity", value: v });
            }
        }
        Ok(())
    }
}

// --- admissibility validation ----------------------------------------------

/// Measured residuals of the admissibility conditions of a profile, with
/// per-condition pass/fail.
#[derive(Debug, Clone)]
pub struct XiValidation {
    /// `max |Xi(pi/2 - xi) - Xi(xi)|` over the check grid.
    pub symmetry_residual: f64,
    /// `|Xi(0) - 1|`.
    pub endpoint_residual: f64,
    /// `|Xi''(0) - 2|`.
    pub curvature_residual: f64,
    /// Largest absolute value on the grid.
    pub max_abs: f64,
    /// Smallest value on the grid (a normalization factor should stay
    /// meaningfully positive).
    pub min_value: f64,
    /// All grid values finite.
    pub finite: bool,
}

impl XiValidation {
    pub fn symmetry_ok(&self) -> bool {
        self.symmetry_residual <= 1e-10
    }

    pub fn endpoint_ok(&self) -> bool {
        self.endpoint_residual <= 1e-8
    }

    pub fn curvature_ok(&self) -> bool {
        self.curvature_residual <= 1e-4
    }

    pub fn bounded_ok(&self) -> bool {
        self.finite && self.max_abs.is_finite()
    }

    pub fn positive_ok(&self) -> bool {
        self.min_value >= 1e-6
    }

    pub fn passes(&self) -> bool {
        self.symmetry_ok()
            && self.endpoint_ok()
            && self.curvature_ok()
            && self.bounded_ok()
            && self.positive_ok()
    }
}

impl fmt::Display for XiValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(f, "  symmetry  {}  (residual {:.3e}, tol 1e-10)", line(self.symmetry_ok()), self.symmetry_residual)?;
        writeln!(f, "  Xi(0)=1   {}  (residual {:.3e}, tol 1e-8)", line(self.endpoint_ok()), self.endpoint_residual)?;
        writeln!(f, "  Xi''(0)=2 {}  (residual {:.3e}, tol 1e-4)", line(self.curvature_ok()), self.curvature_residual)?;
        writeln!(f, "  bounded   {}  (max |Xi| {:.6})", line(self.bounded_ok()), self.max_abs)?;
        write!(f, "  positive  {}  (min Xi {:.3e}, floor 1e-6)", line(self.positive_ok()), self.min_value)
    }
}

/// Check a profile against the admissibility conditions on a 1024-point
/// grid over `[0, pi/2]`.
pub fn validate_xi(xi: &XiProfile) -> XiValidation {
    const N: usize = 1024;
    let mut symmetry = 0.0_f64;
    let mut max_abs = 0.0_f64;
    let mut min_value = f64::INFINITY;
    let mut finite = true;
    for k in 0..N {
        let x = FRAC_PI_2 * k as f64 / (N - 1) as f64;
        let v = xi.value(x);
        let vm = xi.value(FRAC_PI_2 - x);
        if !v.is_finite() || !vm.is_finite() {
            finite = false;
            continue;
        }
        symmetry = symmetry.max((v - vm).abs());
        max_abs = max_abs.max(v.abs());
        min_value = min_value.min(v);
    }
    XiValidation {
        symmetry_residual: symmetry,
        endpoint_residual: (xi.value(0.0) - 1.0).abs(),
        curvature_residual: (xi.d2(0.0) - 2.0).abs(),
        max_abs,
        min_value,
        finite,
    }
}

// --- the Abel machinery -----------------------------------------------------

/// The Abel right-hand side `B(z) = z sqrt(1-z^2) d/dz [z^2 Xi(arcsin z)]`,
/// expanded by the chain rule to
/// `2 z^2 sqrt(1-z^2) Xi(xi) + z^3 Xi'(xi)` at `xi = arcsin z`.
pub fn abel_b(xi: &XiProfile, z: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain { what: "abel_b argument z", value: z });
    }
    let angle = z.asin();
    let c = (1.0 - z * z).sqrt();
    Ok(2.0 * z * z * c * xi.value(angle) + z * z * z * xi.d1(angle))
}

/// `B'(z)`, the integrand kernel of the solver:
/// `z [ ((4 - 6 z^2) Xi + z^2 Xi'') / sqrt(1-z^2) + 5 z Xi' ]`.
fn b_prime(xi: &XiProfile, z: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&z));
    let angle = z.asin();
    let z2 = z * z;
    let c = (1.0 - z2).sqrt();
    let singular = ((4.0 - 6.0 * z2) * xi.value(angle) + z2 * xi.d2(angle)) / c;
    z * (singular + 5.0 * z * xi.d1(angle))
}

/// `chi(z) = B'(z) / z`, kept as an internal diagnostic form for solver
/// self-tests.
#[cfg(test)]
pub(crate) fn chi(xi: &XiProfile, z: f64) -> f64 {
    b_prime(xi, z) / z
}

/// Raw single-rule evaluation of `f(y) = ∫_0^{pi/2} B'(2y sin u) du`.
///
/// No validation, no convergence control: this is the diagnostic entry
/// point used to demonstrate the endpoint divergence of inadmissible
/// profiles under quadrature refinement.
pub fn abel_f_at(xi: &XiProfile, y: f64, quad_order: usize) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let rule = QuadratureRule::gauss_legendre(quad_order);
    plain_integral(xi, y, &rule)
}

/// Keep the kernel argument strictly below 1: at `y = 1/2` a node close
/// enough to `pi/2` rounds `2y sin(u)` up to 1.0 and the `1/sqrt(1-z^2)`
/// factor overflows. The limit of `B'` there is finite for admissible
/// profiles, so capping `z` perturbs the integral far below tolerance.
const Z_CAP: f64 = 1.0 - 1e-12;

fn plain_integral(xi: &XiProfile, y: f64, rule: &QuadratureRule) -> f64 {
    let two_y = 2.0 * y;
    rule.integrate(0.0, FRAC_PI_2, |u| b_prime(xi, (two_y * u.sin()).min(Z_CAP)))
}

/// Composite rule graded geometrically toward `u = pi/2`, for arguments
/// close enough to the endpoint that `B'` develops the integrable
/// `1/sqrt(1-z^2)` growth inside the integration range.
fn graded_integral(xi: &XiProfile, y: f64, rule: &QuadratureRule) -> f64 {
    let two_y = 2.0 * y;
    let mut acc = 0.0;
    let mut lo = 0.0_f64;
    let mut width = FRAC_PI_4;
    for _ in 0..26 {
        let hi = FRAC_PI_2 - width;
        acc += rule.integrate(lo, hi, |u| b_prime(xi, (two_y * u.sin()).min(Z_CAP)));
        lo = hi;
        width *= 0.5;
    }
    acc += rule.integrate(lo, FRAC_PI_2, |u| b_prime(xi, (two_y * u.sin()).min(Z_CAP)));
    acc
}

/// Uniform grid of `n` points on `[0, 1/2]`, the solver's default target.
pub fn uniform_y_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|k| 0.5 * k as f64 / (n - 1) as f64).collect()
}

/// Threshold above which grading kicks in; below it the plain rule already
/// resolves the integrand spectrally.
const GRADING_THRESHOLD: f64 = 0.45;

/// Solve for the weight generator of an admissible profile.
///
/// For each grid `y`, integrates `B'(2y sin u)` over `u in [0, pi/2]` with
/// Gauss-Legendre of the requested order and cross-checks against the
/// doubled order; near `y = 1/2` a geometrically graded composite rule
/// handles the integrable endpoint growth. Fails loudly if the profile is
/// inadmissible (the solution would be unbounded) or if refinement does
/// not settle to 1e-6.
pub fn abel_solve_f(xi: &XiProfile, y_grid: &[f64], quad_order: usize) -> Result<FGenerator> {
    let report = validate_xi(xi);
    if !report.passes() {
        return Err(Error::InvalidXiProfile(report));
    }
    if y_grid.len() < 2
        || y_grid.iter().any(|v| !v.is_finite())
        || y_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidTable("solver grid must be increasing with >= 2 points".into()));
    }
    let order = quad_order.max(8);
    let coarse = QuadratureRule::gauss_legendre(order);
    let fine = QuadratureRule::gauss_legendre(2 * order);
    let panel_coarse = QuadratureRule::gauss_legendre(order.min(48));
    let panel_fine = QuadratureRule::gauss_legendre(2 * order.min(48));

    let mut fs = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let (a, b) = if y <= GRADING_THRESHOLD {
            (plain_integral(xi, y, &coarse), plain_integral(xi, y, &fine))
        } else {
            (graded_integral(xi, y, &panel_coarse), graded_integral(xi, y, &panel_fine))
        };
        if !(a - b).abs().is_finite() || (a - b).abs() > 1e-6 {
            return Err(Error::QuadratureDisagreement { y, coarse: a, fine: b });
        }
        fs.push(if y <= 0.0 { 0.0 } else { b });
    }
    FGenerator::from_table(y_grid.to_vec(), fs)
}

// --- the paired representation ----------------------------------------------

/// Tolerance of the pairing residual enforced at construction.
const PAIR_RESIDUAL_TOL: f64 = 1e-6;

/// A representation of the population dynamics: a weight generator paired
/// with its normalization profile.
///
/// Construction through [`IsomorphismRep::new`] enforces the pairing: the
/// integral-equation residual must stay below 1e-6 on 32 interior mixing
/// angles. The built-in constructors skip the check; their pairing is
/// covered by the test suite.
#[derive(Debug, Clone)]
pub struct IsomorphismRep {
    f: FGenerator,
    xi: XiProfile,
    name: String,
}

impl IsomorphismRep {
    /// Squeezed triangle-window representation.
    pub fn squeezed() -> Self {
        IsomorphismRep {
            f: FGenerator::analytic_sqz(),
            xi: XiProfile::squeezed(),
            name: "sqz".into(),
        }
    }

    /// First analytic example pair.
    pub fn case1() -> Self {
        IsomorphismRep {
            f: FGenerator::analytic_case1(),
            xi: XiProfile::case1(),
            name: "case1".into(),
        }
    }

    /// Second analytic example pair.
    pub fn case2() -> Self {
        IsomorphismRep {
            f: FGenerator::analytic_case2(),
            xi: XiProfile::case2(),
            name: "case2".into(),
        }
    }

    /// Pair an explicit generator and profile, enforcing validation and the
    /// integral-equation residual.
    pub fn new(name: impl Into<String>, f: FGenerator, xi: XiProfile) -> Result<Self> {
        let report = validate_xi(&xi);
        if !report.passes() {
            return Err(Error::InvalidXiProfile(report));
        }
        f.validate()?;
        let rep = IsomorphismRep { f, xi, name: name.into() };
        // Check with a higher-order rule than the 64-point default: the
        // tolerance is about the pair, and for tabulated generators the
        // piecewise-linear kinks slow Gauss-Legendre enough that a 64-point
        // evaluation would contribute errors of the tolerance's own size.
        let rule = QuadratureRule::gauss_legendre(256);
        let mut worst = 0.0_f64;
        let mut worst_xi = 0.0_f64;
        for k in 1..=32 {
            let angle = FRAC_PI_2 * k as f64 / 33.0;
            let r = residual_with_rule(&rep, angle, &rule);
            if r > worst {
                worst = r;
                worst_xi = angle;
            }
        }
        if worst > PAIR_RESIDUAL_TOL {
            return Err(Error::PairingResidual {
                xi: worst_xi,
                residual: worst,
                tol: PAIR_RESIDUAL_TOL,
            });
        }
        Ok(rep)
    }

    /// Pair without any validation. For diagnostics and fault-injection
    /// tests only: an unvalidated pair generally does not reproduce the
    /// exact dynamics.
    #[doc(hidden)]
    pub fn new_unchecked(name: impl Into<String>, f: FGenerator, xi: XiProfile) -> Self {
        IsomorphismRep { f, xi, name: name.into() }
    }

    /// Build a representation from a profile alone by solving for `f`.
    ///
    /// A 4096-point table: generators in this family can run up steeply
    /// into `y = 1/2` (curvature of order 10^3), and the integrated bias of
    /// a 1024-point linear table already exceeds the pairing tolerance.
    pub fn from_xi(name: impl Into<String>, xi: XiProfile) -> Result<Self> {
        let f = abel_solve_f(&xi, &uniform_y_grid(4096), 64)?;
        Self::new(name, f, xi)
    }

    /// Build a representation from a tabulated weight generator alone.
    ///
    /// Populations are invariant under a common scale of the generator, so
    /// the table is first rescaled to pin `Cbar(0) = 1` exactly (a
    /// tabulated generator always carries an `O(h^2)` interpolation bias in
    /// its normalization). The profile is then induced by forward
    /// quadrature, `Xi(xi) = p11(xi) + p12(xi)`, with its derivatives from
    /// the differentiated integral forms; validation checks that the table
    /// actually describes an admissible pair.
    pub fn from_f_table(name: impl Into<String>, f: FGenerator) -> Result<Self> {
        let rule = QuadratureRule::gauss_legendre(64);
        let norm = p_quadrature(&f, 0.0, false, &rule);
        if !norm.is_finite() || norm <= 1e-6 {
            return Err(Error::DegenerateNormalization { cbar: norm, floor: 1e-6, time: 0.0 });
        }
        let f = f.rescaled(1.0 / norm);

        let (fv, fd1, fd2) = (f.clone(), f.clone(), f.clone());
        let (rv, rd1, rd2) = (rule.clone(), rule.clone(), rule);
        let value = move |angle: f64| {
            p_quadrature(&fv, angle, false, &rv) + p_quadrature(&fv, angle, true, &rv)
        };
        // d/dxi of the two one-sided integrals: only the moving tau limits
        // contribute.
        let d1 = move |angle: f64| {
            let (s, c) = angle.sin_cos();
            (2.0 / PI)
                * rd1.integrate(0.0, FRAC_PI_2, |t| {
                    let st = t.sin();
                    st * (fd1.value((0.5 * st * s).min(0.5)) - fd1.value((0.5 * st * c).min(0.5)))
                })
        };
        let d2 = move |angle: f64| {
            let (s, c) = angle.sin_cos();
            (1.0 / PI)
                * rd2.integrate(0.0, FRAC_PI_2, |t| {
                    let st = t.sin();
                    st * st
                        * (c * fd2.derivative(0.5 * st * s) + s * fd2.derivative(0.5 * st * c))
                })
        };
        let xi = XiProfile::with_derivatives(value, d1, d2);
        Self::new(name, f, xi)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self) -> &FGenerator {
        &self.f
    }

    pub fn xi_profile(&self) -> &XiProfile {
        &self.xi
    }

    /// The normalization factor at mixing angle `xi`.
    pub fn normalization(&self, xi: f64) -> f64 {
        self.xi.value(xi)
    }

    /// Generalized two-time weight `f(min(|y0|, |yt|))`, clamped
    /// non-negative.
    pub fn weight(&self, y0: f64, yt: f64) -> Result<f64> {
        if y0.is_nan() || y0.abs() > 0.5 + 1e-12 {
            return Err(Error::Domain { what: "weight argument y0", value: y0 });
        }
        if yt.is_nan() || yt.abs() > 0.5 + 1e-12 {
            return Err(Error::Domain { what: "weight argument yt", value: yt });
        }
        Ok(self.weight_unchecked(y0, yt))
    }

    #[inline]
    pub(crate) fn weight_unchecked(&self, y0: f64, yt: f64) -> f64 {
        let m = y0.abs().min(yt.abs()).min(0.5);
        self.f.value(m).max(0.0)
    }
}

/// The one-sided population integral
/// `(2/pi) ∫_0^{pi/2} ds ∫_0^{limit} dtau sin(s) f(sin(s) sin(tau) / 2)`
/// with `limit = xi` (transition side) or `pi/2 - xi` (survival side).
pub(crate) fn p_quadrature(f: &FGenerator, xi: f64, transition: bool, rule: &QuadratureRule) -> f64 {
    let upper = if transition { xi } else { FRAC_PI_2 - xi };
    if upper <= 0.0 {
        return 0.0;
    }
    let outer = rule.integrate(0.0, FRAC_PI_2, |s| {
        let sin_s = s.sin();
        sin_s * rule.integrate(0.0, upper, |tau| f.value((0.5 * sin_s * tau.sin()).min(0.5)))
    });
    outer * 2.0 / PI
}

/// Residual of the integral equation pairing `f` with `Xi`:
///
/// ```text
/// | pi Xi(xi) sin^2(xi) / 2
///   - ∫_0^{pi/2} ds ∫_0^{xi} dtau sin(s) f(sin(s) sin(tau)/2) |
/// ```
///
/// evaluated with nested 64-point Gauss-Legendre.
pub fn residual_integral_equation(rep: &IsomorphismRep, xi: f64) -> f64 {
    residual_with_rule(rep, xi, &QuadratureRule::gauss_legendre(64))
}

fn residual_with_rule(rep: &IsomorphismRep, xi: f64, rule: &QuadratureRule) -> f64 {
    debug_assert!((0.0..=FRAC_PI_2).contains(&xi));
    let rhs = 0.5 * PI * p_quadrature(&rep.f, xi, true, rule);
    let s = xi.sin();
    let lhs = 0.5 * PI * rep.xi.value(xi) * s * s;
    (lhs - rhs).abs()
}

// --- tabulated import/export -------------------------------------------------

/// Write a solved generator as a two-column CSV `y,f` preceded by comment
/// lines.
pub fn export_f_table<W: IoWrite>(gen: &FGenerator, comments: &[String], w: &mut W) -> std::io::Result<()> {
    let (ys, fs): (Vec<f64>, Vec<f64>) = match gen.table() {
        Some((ys, fs)) => (ys.to_vec(), fs.to_vec()),
        None => {
            let ys = uniform_y_grid(1024);
            let fs = ys.iter().map(|&y| gen.value(y)).collect();
            (ys, fs)
        }
    };
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "y,f")?;
    for (y, fv) in ys.iter().zip(&fs) {
        writeln!(w, "{y:.16e},{fv:.16e}")?;
    }
    Ok(())
}

fn parse_two_columns<R: BufRead>(r: R, what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidTable(format!("{what}: {e}")))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split(',').map(str::trim);
        let (a, b) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidTable(format!("{what}: line {} needs two columns", lineno + 1))),
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(v)) => {
                xs.push(x);
                vs.push(v);
            }
            _ if xs.is_empty() => continue, // header row
            _ => {
                return Err(Error::InvalidTable(format!(
                    "{what}: line {} is not numeric: {t}",
                    lineno + 1
                )))
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidTable(format!("{what}: no data rows")));
    }
    Ok((xs, vs))
}

/// Read a two-column `y,f` table.
pub fn import_f_table<R: BufRead>(r: R) -> Result<FGenerator> {
    let (ys, fs) = parse_two_columns(r, "f table")?;
    FGenerator::from_table(ys, fs)
}

/// Read a two-column `xi,value` profile table (not yet validated).
pub fn import_xi_table<R: BufRead>(r: R) -> Result<XiProfile> {
    let (xs, vs) = parse_two_columns(r, "xi table")?;
    XiProfile::from_table(xs, vs)
}
