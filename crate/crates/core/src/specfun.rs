//! Special functions and numerical primitives: complete elliptic integrals,
//! `arctanh`, step functions, Gauss-Legendre rules, cubic splines, and
//! streaming moment accumulators.
//!
//! The elliptic integrals use the parameter convention `m = k^2` (the square
//! of the modulus). This matters: the weight generators evaluate `K(4y^2)`
//! and `E(4y^2)`, and passing the modulus `2y` instead silently produces
//! plausible-looking garbage. The complementary entry points `ellipkm1` /
//! `ellipem1` take `1 - m` directly for accurate evaluation near the
//! logarithmic singularity.

use std::f64::consts::PI;

use crate::{Error, Result};

const AGM_MAX_ITER: usize = 40;
const AGM_EPS: f64 = 1e-16;

/// Complete elliptic integral of the first kind `K(m)`.
///
/// ```text
/// K(m) = ∫₀^(π/2) dθ / √(1 - m sin²θ)
/// ```
///
/// Computed by the arithmetic-geometric mean, `K = π / (2 AGM(1, √(1-m)))`,
/// which converges quadratically. Domain `m ∈ [0, 1)`; `K(1)` diverges.
pub fn ellipk(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain { what: "ellipk parameter m", value: m });
    }
    Ok(agm_k(1.0 - m))
}

/// `K(1 - m1)` for complementary parameter `m1 ∈ (0, 1]`.
///
/// Avoids the catastrophic loss of `1 - m` when `m` is within rounding of 1.
pub fn ellipkm1(m1: f64) -> Result<f64> {
    if m1.is_nan() || m1 <= 0.0 || m1 > 1.0 {
        return Err(Error::Domain { what: "ellipkm1 complement m1", value: m1 });
    }
    Ok(agm_k(m1))
}

/// Complete elliptic integral of the second kind `E(m)`.
///
/// ```text
/// E(m) = ∫₀^(π/2) √(1 - m sin²θ) dθ
/// ```
///
/// AGM with the usual geometric sum, `E = K (1 - Σ 2^(j-1) c_j²)`.
/// Domain `m ∈ [0, 1]`, with `E(1) = 1`.
pub fn ellipe(m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Domain { what: "ellipe parameter m", value: m });
    }
    Ok(agm_e(1.0 - m, m))
}

/// `E(1 - m1)` for complementary parameter `m1 ∈ [0, 1]`.
pub fn ellipem1(m1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&m1) {
        return Err(Error::Domain { what: "ellipem1 complement m1", value: m1 });
    }
    Ok(agm_e(m1, 1.0 - m1))
}

fn agm_k(one_minus_m: f64) -> f64 {
    let mut a = 1.0_f64;
    let mut b = one_minus_m.sqrt();
    for _ in 0..AGM_MAX_ITER {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= AGM_EPS * an {
            return PI / (2.0 * an);
        }
        a = an;
        b = bn;
    }
    PI / (2.0 * a)
}

/// `m1 = 1 - m` and `c0_sq = m` are passed separately so each caller can
/// supply whichever it knows exactly.
fn agm_e(m1: f64, c0_sq: f64) -> f64 {
    if m1 == 0.0 {
        return 1.0;
    }
    let mut a = 1.0_f64;
    let mut b = m1.sqrt();
    let mut sum = c0_sq;
    let mut pow2 = 1.0_f64;
    for _ in 0..AGM_MAX_ITER {
        let c = 0.5 * (a - b);
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        pow2 *= 2.0;
        sum += pow2 * c * c;
        if c.abs() <= AGM_EPS * an {
            let k = PI / (2.0 * an);
            return k * (1.0 - 0.5 * sum);
        }
        a = an;
        b = bn;
    }
    let k = PI / (2.0 * a);
    k * (1.0 - 0.5 * sum)
}

/// Inverse hyperbolic tangent via `log1p`, `(1/2) ln((1+x)/(1-x))`.
///
/// Evaluated on `|x|` with the sign applied afterwards, so the odd symmetry
/// `arctanh(-x) = -arctanh(x)` holds exactly for every representable `x`.
/// Domain `|x| < 1`.
pub fn arctanh(x: f64) -> Result<f64> {
    if x.is_nan() || x.abs() >= 1.0 {
        return Err(Error::Domain { what: "arctanh argument", value: x });
    }
    let ax = x.abs();
    let v = 0.5 * (2.0 * ax / (1.0 - ax)).ln_1p();
    Ok(if x.is_sign_negative() { -v } else { v })
}

/// Heaviside step with the pinned convention `h(0) = 0`.
///
/// The two half-space windows `h(y)` and `h(-y)` then partition phase space
/// exactly, with `y = 0` assigned to state 2.
pub fn heaviside(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Positive part `[a]_+ = max(a, 0)`.
pub fn positive_part(a: f64) -> f64 {
    a.max(0.0)
}

/// Gauss-Legendre quadrature rule of order `n` on `[-1, 1]`.
///
/// Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
/// iteration from the Chebyshev initial guess; weights are
/// `2 / ((1 - x²) P_n'(x)²)`. Half of the nodes are computed and the rest
/// mirrored, so the rule is symmetric about 0 by construction.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n / 2;
        for i in 0..half {
            // Root i counted from the positive end.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_and_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            let (_, dp) = legendre_and_derivative(n, 0.0);
            nodes[half] = 0.0;
            weights[half] = 2.0 / (dp * dp);
        }
        QuadratureRule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (b - a);
        let d = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c * x + d);
        }
        c * acc
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0_f64;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Single-pass mean and variance accumulator (Welford update, Chan merge).
///
/// Accumulators are value types owned by one worker each; partial results
/// merge exactly like accumulation of the concatenated data up to rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct StreamingMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    /// Standard error of the accumulated mean.
    pub fn stderr_of_mean(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Cubic spline interpolant with not-a-knot end conditions.
///
/// Used for tabulated normalization profiles, where the Abel solver needs
/// first and second derivatives; natural end conditions would force the
/// endpoint curvature to zero and break the `Xi''(0) = 2` admissibility
/// check, so not-a-knot it is.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    d2: Vec<f64>,
}

impl CubicSpline {
    /// `xs` must be strictly increasing with at least 4 points.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() || n < 4 {
            return Err(Error::InvalidTable(format!(
                "spline needs at least 4 matched points, got {} x {}",
                n,
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTable("spline abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTable("spline table contains non-finite values".into()));
        }

        // Tridiagonal system for the interior knot second derivatives.
        // The not-a-knot relations
        //   h1 d0 = (h0 + h1) d1 - h0 d2
        //   h_{n-3} d_{n-1} = (h_{n-3} + h_{n-2}) d_{n-2} - h_{n-2} d_{n-3}
        // are substituted into the first and last interior rows, which keeps
        // the system tridiagonal with nonzero pivots.
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2; // unknowns d2[1..=n-2]
        let mut sub = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            sub[k] = h[i - 1];
            diag[k] = 2.0 * (h[i - 1] + h[i]);
            sup[k] = h[i];
            rhs[k] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        diag[0] += h[0] * (h[0] + h[1]) / h[1];
        sup[0] -= h[0] * h[0] / h[1];
        diag[m - 1] += h[n - 2] * (h[n - 2] + h[n - 3]) / h[n - 3];
        sub[m - 1] -= h[n - 2] * h[n - 2] / h[n - 3];

        // Thomas algorithm.
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        c[0] = sup[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for k in 1..m {
            let piv = diag[k] - sub[k] * c[k - 1];
            c[k] = if k < m - 1 { sup[k] / piv } else { 0.0 };
            d[k] = (rhs[k] - sub[k] * d[k - 1]) / piv;
        }
        let mut d2 = vec![0.0; n];
        d2[n - 2] = d[m - 1];
        for k in (0..m - 1).rev() {
            d2[k + 1] = d[k] - c[k] * d2[k + 2];
        }
        d2[0] = ((h[0] + h[1]) * d2[1] - h[0] * d2[2]) / h[1];
        d2[n - 1] = ((h[n - 3] + h[n - 2]) * d2[n - 2] - h[n - 2] * d2[n - 3]) / h[n - 3];

        Ok(CubicSpline { xs, ys, d2 })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.d2[i] + (b * b * b - b) * self.d2[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.d2[i + 1] - (3.0 * a * a - 1.0) * self.d2[i]) * h / 6.0
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.d2[i] + b * self.d2[i + 1]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }
}
