//! Monte Carlo and closed-form evaluation of the population-population
//! correlation function for every method: the generalized window/weight
//! ensembles, the original triangle-window scheme, the covariant
//! kernel-pair estimator, plus deterministic quadrature oracles.
//!
//! Raw estimates are normalized so that `Cbar(0) = 1`: with the initial
//! `y` drawn uniformly on the half-interval, `p_{n->m}` is just the sample
//! mean of `w K_mm(y_t)`, and the half-window measure factor is exactly 1.
//!
//! Determinism contract: trajectories are split into fixed-size chunks,
//! each chunk accumulates locally, and partials merge in trajectory-index
//! order. Per-trajectory generators are derived from the master seed by a
//! counter-based split, so the result is bit-identical for any worker
//! count.

use rand_core::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::phase_space::{
    draw_half_interval, sample_cps, sample_initial_window, sqc_bin_window, to_action_angle, State,
    WindowKind,
};
use crate::propagator::{evolution_matrix, propagator_angles, Hamiltonian2, Unitary2};
use crate::representations::{sin_minus_t_cos, IsomorphismRep};
use crate::specfun::QuadratureRule;
use crate::{Error, Result};

use std::f64::consts::{FRAC_PI_2, PI};

/// Trajectories per accumulator chunk. Fixed so that the merge order, and
/// therefore the result, is independent of the worker count.
const CHUNK: u64 = 16_384;

/// Abort threshold for the estimated normalization factor.
const CBAR_FLOOR: f64 = 1e-6;

/// Stream tags separating the random substreams of the different methods
/// and initial states.
const STREAM_NOVEL: [u64; 2] = [1, 2];
const STREAM_SQC: [u64; 2] = [3, 4];
const STREAM_COVARIANT: u64 = 5;

/// Ensemble parameters shared by all estimators.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_traj: u64,
    pub seed: u64,
    /// Zero-point parameter. Enters only where a method references it
    /// (covariant kernels, phase-point reconstruction); the window/weight
    /// methods are gamma-free by construction.
    pub gamma: f64,
    pub time_grid: Vec<f64>,
}

impl EnsembleConfig {
    pub fn new(n_traj: u64, seed: u64, gamma: f64, time_grid: Vec<f64>) -> Result<Self> {
        let cfg = EnsembleConfig { n_traj, seed, gamma, time_grid };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj < 1 {
            return Err(Error::Domain { what: "trajectory count", value: self.n_traj as f64 });
        }
        if !self.gamma.is_finite() || self.gamma <= -0.5 {
            return Err(Error::Domain { what: "zero-point parameter gamma", value: self.gamma });
        }
        for w in self.time_grid.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Domain { what: "time grid ordering", value: w[1] });
            }
        }
        if self.time_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain { what: "time grid entry", value: f64::NAN });
        }
        Ok(())
    }
}

/// The full correlation estimate at one time.
///
/// Index convention: `p[n][m]` is the raw estimate for initial state
/// `n+1` and final state `m+1`; `cbar[n]` its row normalization;
/// `pop[n][m] = p[n][m] / cbar[n]` for the normalized methods (the
/// covariant estimator is exact as-is and reports `pop = p`). The second
/// entry of each normalized row is computed as `1 - pop[n][0]`, so rows
/// sum to 1 exactly.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationEstimate {
    pub p: [[f64; 2]; 2],
    pub p_stderr: [[f64; 2]; 2],
    pub cbar: [f64; 2],
    pub cbar_stderr: [f64; 2],
    pub pop: [[f64; 2]; 2],
    pub stderr: [[f64; 2]; 2],
}

/// One time point of a run: the estimate plus the mixing angle there.
#[derive(Debug, Clone, Copy)]
pub struct SeriesEntry {
    pub time: f64,
    pub estimate: CorrelationEstimate,
    pub xi: f64,
}

/// Time-indexed population estimates of one ensemble run.
#[derive(Debug, Clone)]
pub struct PopulationSeries {
    pub entries: Vec<SeriesEntry>,
}

impl PopulationSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// --- deterministic parallel accumulation ------------------------------------

/// Welford/Chan accumulator for a pair of per-trajectory values; tracks
/// both variances and the cross moment so ratio errors can be propagated.
#[derive(Debug, Clone, Copy, Default)]
struct BivariateMoments {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    cxy: f64,
}

impl BivariateMoments {
    #[inline]
    fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    fn merge(&mut self, other: &BivariateMoments) {
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
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.m2_x += other.m2_x + dx * dx * na * nb / n;
        self.m2_y += other.m2_y + dy * dy * na * nb / n;
        self.cxy += other.cxy + dx * dy * na * nb / n;
        self.count += other.count;
    }

    /// Variance of the accumulated mean of `x`.
    fn var_mean_x(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        self.m2_x / ((n - 1.0) * n)
    }

    fn var_mean_y(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        self.m2_y / ((n - 1.0) * n)
    }

    /// Covariance of the two accumulated means.
    fn cov_mean(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        self.cxy / ((n - 1.0) * n)
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58476D1CE4E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    z
}

/// Counter-based per-trajectory stream: a hash of (master seed, method
/// stream, trajectory index) seeds an independent generator, so results
/// do not depend on scheduling.
fn traj_rng(master: u64, stream: u64, index: u64) -> Pcg64 {
    let a = splitmix64(master ^ stream.wrapping_mul(0x9E3779B97F4A7C15));
    let b = splitmix64(a ^ index.wrapping_mul(0xD1B54A32D192ED03));
    Pcg64::seed_from_u64(b)
}

/// Chunked, order-deterministic parallel accumulation.
///
/// `init` draws one trajectory from its private stream; `eval` produces
/// the `R` per-row value pairs at time index `j`. Returns accumulators
/// indexed `[time][row]`.
fn accumulate_rows<T, const R: usize>(
    n_traj: u64,
    n_times: usize,
    seed: u64,
    stream: u64,
    init: impl Fn(&mut Pcg64) -> T + Sync,
    eval: impl Fn(&T, usize) -> [(f64, f64); R] + Sync,
) -> Vec<[BivariateMoments; R]> {
    let n_chunks = n_traj.div_ceil(CHUNK);
    let partials: Vec<Vec<[BivariateMoments; R]>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n_traj);
            let mut acc = vec![[BivariateMoments::default(); R]; n_times];
            for i in lo..hi {
                let mut rng = traj_rng(seed, stream, i);
                let state = init(&mut rng);
                for (j, slot) in acc.iter_mut().enumerate() {
                    let vals = eval(&state, j);
                    for r in 0..R {
                        slot[r].push(vals[r].0, vals[r].1);
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![[BivariateMoments::default(); R]; n_times];
    for part in &partials {
        for (tot, par) in total.iter_mut().zip(part) {
            for r in 0..R {
                tot[r].merge(&par[r]);
            }
        }
    }
    total
}

/// One normalized row of the estimate: ratio populations with
/// delta-method errors.
struct RatioRow {
    p: [f64; 2],
    p_stderr: [f64; 2],
    cbar: f64,
    cbar_stderr: f64,
    pop: [f64; 2],
    stderr: [f64; 2],
}

/// Assemble the normalized estimate of one initial state from its
/// accumulator.
fn ratio_row(acc: &BivariateMoments, time: f64) -> Result<RatioRow> {
    let p1 = acc.mean_x;
    let p2 = acc.mean_y;
    let cbar = p1 + p2;
    if cbar.is_nan() || cbar <= CBAR_FLOOR {
        return Err(Error::DegenerateNormalization { cbar, floor: CBAR_FLOOR, time });
    }
    let vx = acc.var_mean_x();
    let vy = acc.var_mean_y();
    let cxy = acc.cov_mean();
    let var_cbar = (vx + vy + 2.0 * cxy).max(0.0);

    let pop1 = p1 / cbar;
    let pop2 = 1.0 - pop1;
    // First-order error of X/(X+Y) with correlated numerator and
    // denominator; identical for the complementary entry.
    let s4 = cbar.powi(4);
    let var_pop = ((p2 * p2 * vx + p1 * p1 * vy - 2.0 * p1 * p2 * cxy) / s4).max(0.0);
    let se_pop = var_pop.sqrt();

    Ok(RatioRow {
        p: [p1, p2],
        p_stderr: [vx.max(0.0).sqrt(), vy.max(0.0).sqrt()],
        cbar,
        cbar_stderr: var_cbar.sqrt(),
        pop: [pop1, pop2],
        stderr: [se_pop, se_pop],
    })
}

fn assemble_ratio_series(
    time_grid: &[f64],
    xis: &[f64],
    rows: [Vec<[BivariateMoments; 1]>; 2],
) -> Result<PopulationSeries> {
    let mut entries = Vec::with_capacity(time_grid.len());
    for (j, (&time, &xi)) in time_grid.iter().zip(xis).enumerate() {
        let mut est = CorrelationEstimate {
            p: [[0.0; 2]; 2],
            p_stderr: [[0.0; 2]; 2],
            cbar: [0.0; 2],
            cbar_stderr: [0.0; 2],
            pop: [[0.0; 2]; 2],
            stderr: [[0.0; 2]; 2],
        };
        for (n, per_state) in rows.iter().enumerate() {
            let row = ratio_row(&per_state[j][0], time)?;
            est.p[n] = row.p;
            est.p_stderr[n] = row.p_stderr;
            est.cbar[n] = row.cbar;
            est.cbar_stderr[n] = row.cbar_stderr;
            est.pop[n] = row.pop;
            est.stderr[n] = row.stderr;
        }
        entries.push(SeriesEntry { time, estimate: est, xi });
    }
    Ok(PopulationSeries { entries })
}

// --- the ensemble estimators --------------------------------------------------

struct NovelTrajectory {
    y0: f64,
    radius: f64,
    th0d: f64,
}

/// Run a window/weight ensemble for a representation of the isomorphism
/// family.
///
/// For each initial state the trajectory is a `(y0, theta_d)` draw on the
/// half-interval; each grid time reuses it through the closed-form
/// evolution of the scaled action difference (exact, so no stepping).
/// Per-trajectory contributions `w K_mm(y_t)` are non-negative by
/// construction.
pub fn run_novel(
    h: &Hamiltonian2,
    rep: &IsomorphismRep,
    cfg: &EnsembleConfig,
) -> Result<PopulationSeries> {
    cfg.validate()?;
    struct TimeCoeff {
        cos2xi: f64,
        sin2xi: f64,
        dphi: f64,
    }
    let mut coeffs = Vec::with_capacity(cfg.time_grid.len());
    let mut xis = Vec::with_capacity(cfg.time_grid.len());
    for &t in &cfg.time_grid {
        let ang = propagator_angles(h, t);
        coeffs.push(TimeCoeff {
            cos2xi: (2.0 * ang.xi).cos(),
            sin2xi: (2.0 * ang.xi).sin(),
            dphi: ang.phase_difference(),
        });
        xis.push(ang.xi);
    }

    let run_state = |n: State| {
        accumulate_rows::<NovelTrajectory, 1>(
            cfg.n_traj,
            coeffs.len(),
            cfg.seed,
            STREAM_NOVEL[n.idx()],
            |rng| {
                let (y0, th0d) = draw_half_interval(n, rng);
                NovelTrajectory { y0, radius: (0.25 - y0 * y0).max(0.0).sqrt(), th0d }
            },
            |traj, j| {
                let c = &coeffs[j];
                let yt = (traj.y0 * c.cos2xi
                    + traj.radius * c.sin2xi * (c.dphi + traj.th0d).cos())
                .clamp(-0.5, 0.5);
                let w = rep.weight_unchecked(traj.y0, yt);
                let a1 = if yt > 0.0 { w } else { 0.0 };
                [(a1, w - a1)]
            },
        )
    };
    let rows = [run_state(State::One), run_state(State::Two)];
    assemble_ratio_series(&cfg.time_grid, &xis, rows)
}

/// Run the original triangle-window scheme: triangle-sampled action space,
/// full propagation of the coefficient pair, bin indicators at time `t`.
pub fn run_sqc_twf(h: &Hamiltonian2, cfg: &EnsembleConfig) -> Result<PopulationSeries> {
    cfg.validate()?;
    let us: Vec<Unitary2> = cfg.time_grid.iter().map(|&t| evolution_matrix(h, t)).collect();
    let xis: Vec<f64> = cfg.time_grid.iter().map(|&t| propagator_angles(h, t).xi).collect();

    let run_state = |n: State| {
        accumulate_rows::<crate::propagator::Coefficients2, 1>(
            cfg.n_traj,
            us.len(),
            cfg.seed,
            STREAM_SQC[n.idx()],
            |rng| {
                sample_initial_window(n, WindowKind::SqcTriangle, cfg.gamma, rng).coefficients()
            },
            |g0, j| {
                let gt = crate::propagator::propagate_coefficients(&us[j], g0);
                let e1 = 0.5 * gt.g1.norm_sqr();
                let e2 = 0.5 * gt.g2.norm_sqr();
                [(sqc_bin_window(State::One, e1, e2), sqc_bin_window(State::Two, e1, e2))]
            },
        )
    };
    let rows = [run_state(State::One), run_state(State::Two)];
    assemble_ratio_series(&cfg.time_grid, &xis, rows)
}

/// Run the covariant kernel-pair estimator on uniform constraint-sphere
/// samples: `F x mean[K_nn(0) K^-1_mm(t)]` with
/// `K_nn = e_n - gamma` and `K^-1_mm = 3 e_m / (1+2 gamma)^2 -
/// (1-gamma)/(1+2 gamma)`. Exact as-is: no normalization factor, so
/// `pop = p` and row sums equal 1 only within sampling error.
pub fn run_covariant(h: &Hamiltonian2, gamma: f64, cfg: &EnsembleConfig) -> Result<PopulationSeries> {
    cfg.validate()?;
    if !gamma.is_finite() || gamma <= -0.5 {
        return Err(Error::Domain { what: "zero-point parameter gamma", value: gamma });
    }
    let us: Vec<Unitary2> = cfg.time_grid.iter().map(|&t| evolution_matrix(h, t)).collect();
    let xis: Vec<f64> = cfg.time_grid.iter().map(|&t| propagator_angles(h, t).xi).collect();
    let span = 1.0 + 2.0 * gamma;
    let inv_shift = (1.0 - gamma) / span;

    struct CovariantTrajectory {
        g0: crate::propagator::Coefficients2,
        k: [f64; 2],
    }
    // One pass serves both initial states: the rows share trajectories.
    let rows = accumulate_rows::<CovariantTrajectory, 2>(
        cfg.n_traj,
        us.len(),
        cfg.seed,
        STREAM_COVARIANT,
        |rng| {
            let pt = sample_cps(gamma, rng);
            let aa = to_action_angle(&pt);
            CovariantTrajectory { g0: pt.coefficients(), k: [aa.e1 - gamma, aa.e2 - gamma] }
        },
        |traj, j| {
            let gt = crate::propagator::propagate_coefficients(&us[j], &traj.g0);
            let kinv1 = 3.0 * (0.5 * gt.g1.norm_sqr()) / (span * span) - inv_shift;
            let kinv2 = 3.0 * (0.5 * gt.g2.norm_sqr()) / (span * span) - inv_shift;
            [
                (2.0 * traj.k[0] * kinv1, 2.0 * traj.k[0] * kinv2),
                (2.0 * traj.k[1] * kinv1, 2.0 * traj.k[1] * kinv2),
            ]
        },
    );

    let mut entries = Vec::with_capacity(cfg.time_grid.len());
    for (j, (&time, &xi)) in cfg.time_grid.iter().zip(&xis).enumerate() {
        let mut est = CorrelationEstimate {
            p: [[0.0; 2]; 2],
            p_stderr: [[0.0; 2]; 2],
            cbar: [0.0; 2],
            cbar_stderr: [0.0; 2],
            pop: [[0.0; 2]; 2],
            stderr: [[0.0; 2]; 2],
        };
        for (n, acc) in rows[j].iter().enumerate() {
            est.p[n] = [acc.mean_x, acc.mean_y];
            est.p_stderr[n] = [acc.var_mean_x().sqrt(), acc.var_mean_y().sqrt()];
            est.cbar[n] = acc.mean_x + acc.mean_y;
            est.cbar_stderr[n] =
                (acc.var_mean_x() + acc.var_mean_y() + 2.0 * acc.cov_mean()).max(0.0).sqrt();
            est.pop[n] = est.p[n];
            est.stderr[n] = est.p_stderr[n];
        }
        entries.push(SeriesEntry { time, estimate: est, xi });
    }
    Ok(PopulationSeries { entries })
}

// --- closed forms and oracles ---------------------------------------------------

/// Closed-form raw estimates of the squeezed scheme at mixing angle `xi`:
/// `(p11, p12, cbar)`.
///
/// ```text
/// p11 = 1 - (sin 2xi - 2 xi cos 2xi) / (pi sin^2 xi)
/// p12 = p11(pi/2 - xi)
/// cbar = p11 / cos^2 xi = Xi_sqz(xi)
/// ```
///
/// The removable limits give `(1, 0, 1)` at `xi = 0` and `(0, 1, 1)` at
/// `xi = pi/2`.
pub fn sqz_closed_forms(xi: f64) -> (f64, f64, f64) {
    (sqz_p11(xi), sqz_p11(FRAC_PI_2 - xi), crate::representations::xi_sqz(xi))
}

fn sqz_p11(xi: f64) -> f64 {
    if xi <= 0.0 {
        return 1.0;
    }
    if xi >= FRAC_PI_2 {
        return 0.0;
    }
    let s = xi.sin();
    1.0 - sin_minus_t_cos(2.0 * xi) / (PI * s * s)
}

/// Deterministic nested quadrature of the one-sided population integrals,
/// `(p11, p12)`, over the ellipse domain in its polar parameterization.
///
/// Rejects the degenerate mixing angles where the change of variables
/// breaks down (`sin 2xi = 0`).
pub fn quadrature_oracle_p(rep: &IsomorphismRep, xi: f64) -> Result<(f64, f64)> {
    if xi.is_nan() || xi <= 1e-9 || xi >= FRAC_PI_2 - 1e-9 {
        return Err(Error::Domain { what: "oracle mixing angle xi", value: xi });
    }
    let rule = QuadratureRule::gauss_legendre(128);
    let p11 = crate::representations::p_quadrature(rep.f(), xi, false, &rule);
    let p12 = crate::representations::p_quadrature(rep.f(), xi, true, &rule);
    Ok((p11, p12))
}

// --- symmetry checks --------------------------------------------------------------

/// Per-time outcome of the structural symmetry checks.
#[derive(Debug, Clone, Copy)]
pub struct SymmetryCheckEntry {
    pub time: f64,
    /// `|p11 - p22|` and its 3-sigma allowance.
    pub diag_dev: f64,
    pub diag_tol: f64,
    /// `|p12 - p21|` and its allowance.
    pub cross_dev: f64,
    pub cross_tol: f64,
    /// `|cbar_1 - cbar_2|` and its allowance (the normalization factors of
    /// the two initial states must agree).
    pub cbar_dev: f64,
    pub cbar_tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SymmetryReport {
    pub entries: Vec<SymmetryCheckEntry>,
    pub all_pass: bool,
}

/// Check the two-state symmetries `p11 = p22`, `p12 = p21` and the
/// row-normalization equality on a series containing both initial states,
/// each within three combined standard errors.
pub fn symmetry_checks(series: &PopulationSeries) -> SymmetryReport {
    let mut entries = Vec::with_capacity(series.entries.len());
    let mut all_pass = true;
    for e in &series.entries {
        let est = &e.estimate;
        let tol = |a: f64, b: f64| 3.0 * (a * a + b * b).sqrt();
        let diag_dev = (est.p[0][0] - est.p[1][1]).abs();
        let diag_tol = tol(est.p_stderr[0][0], est.p_stderr[1][1]);
        let cross_dev = (est.p[0][1] - est.p[1][0]).abs();
        let cross_tol = tol(est.p_stderr[0][1], est.p_stderr[1][0]);
        let cbar_dev = (est.cbar[0] - est.cbar[1]).abs();
        let cbar_tol = tol(est.cbar_stderr[0], est.cbar_stderr[1]);
        let pass = diag_dev <= diag_tol && cross_dev <= cross_tol && cbar_dev <= cbar_tol;
        all_pass &= pass;
        entries.push(SymmetryCheckEntry {
            time: e.time,
            diag_dev,
            diag_tol,
            cross_dev,
            cross_tol,
            cbar_dev,
            cbar_tol,
            pass,
        });
    }
    SymmetryReport { entries, all_pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representations::xi_case1;
    use std::f64::consts::FRAC_PI_4;

    fn assert_close(a: f64, b: f64, tol: f64, msg: &str) {
        assert!((a - b).abs() <= tol, "{msg}: got {a}, want {b} (diff {:e})", (a - b).abs());
    }

    fn model(lambda: f64) -> Hamiltonian2 {
        Hamiltonian2::with_real_coupling(10.0, 2.0, lambda).unwrap()
    }

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig::new(0, 1, 0.5, vec![0.0]).is_err());
        assert!(EnsembleConfig::new(10, 1, -0.6, vec![0.0]).is_err());
        assert!(EnsembleConfig::new(10, 1, 0.5, vec![1.0, 0.5]).is_err());
        assert!(EnsembleConfig::new(10, 1, 0.5, vec![0.0, f64::NAN]).is_err());
        assert!(EnsembleConfig::new(10, 1, 0.5, vec![0.0, 0.5, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn closed_forms_anchors_and_limits() {
        let (p11, p12, cbar) = sqz_closed_forms(0.0);
        assert_eq!((p11, p12, cbar), (1.0, 0.0, 1.0));
        let (p11, p12, cbar) = sqz_closed_forms(FRAC_PI_2);
        assert_eq!((p11, p12, cbar), (0.0, 1.0, 1.0));

        let (p11, p12, cbar) = sqz_closed_forms(FRAC_PI_4);
        assert_close(p11, 1.0 - 2.0 / PI, 1e-14, "p11 at pi/4");
        assert_close(p12, 1.0 - 2.0 / PI, 1e-14, "p12 at pi/4");
        assert_close(cbar, 2.0 - 4.0 / PI, 1e-14, "cbar at pi/4");
        assert_close(p11 / cbar, 0.5, 1e-14, "normalized value at pi/4");
    }

    #[test]
    fn closed_forms_match_literal_transcription() {
        // Literal transcription of the raw-population formulas, valid away
        // from the removable singularities.
        for k in 1..40 {
            let xi = FRAC_PI_2 * k as f64 / 40.0;
            let (p11, p12, cbar) = sqz_closed_forms(xi);
            let s2 = (2.0 * xi).sin();
            let c2 = (2.0 * xi).cos();
            let lit_p11 = 1.0 - (s2 - 2.0 * xi * c2) / (PI * xi.sin().powi(2));
            let lit_p12 = xi.tan().powi(2) - (s2 - 2.0 * xi * c2) / (PI * xi.cos().powi(2));
            assert_close(p11, lit_p11, 1e-12, "p11 literal");
            assert_close(p12, lit_p12, 1e-10, "p12 literal");
            // Normalized populations reproduce the exact ones.
            assert_close(p11 / cbar, xi.cos().powi(2), 1e-12, "p11 / cbar = cos^2 xi");
            assert_close(p12 / cbar, xi.sin().powi(2), 1e-10, "p12 / cbar = sin^2 xi");
        }
    }

    #[test]
    fn quadrature_oracle_against_closed_forms() {
        let sqz = IsomorphismRep::squeezed();
        let (p11, p12) = quadrature_oracle_p(&sqz, FRAC_PI_4).unwrap();
        let (c11, c12, _) = sqz_closed_forms(FRAC_PI_4);
        assert_close(p11, c11, 1e-8, "oracle p11 at pi/4");
        assert_close(p12, c12, 1e-8, "oracle p12 at pi/4");

        for k in 1..=9 {
            let xi = FRAC_PI_2 * k as f64 / 10.0;
            let (a11, a12) = quadrature_oracle_p(&sqz, xi).unwrap();
            let (b11, b12) = quadrature_oracle_p(&sqz, FRAC_PI_2 - xi).unwrap();
            assert_close(a11, b12, 1e-12, "complementary tau limits");
            assert_close(a12, b11, 1e-12, "complementary tau limits");
            let (c11, c12, _) = sqz_closed_forms(xi);
            assert_close(a11, c11, 1e-8, "oracle vs closed form p11");
            assert_close(a12, c12, 1e-8, "oracle vs closed form p12");
        }

        assert!(quadrature_oracle_p(&sqz, 0.0).is_err());
        assert!(quadrature_oracle_p(&sqz, FRAC_PI_2).is_err());
    }

    #[test]
    fn quadrature_oracle_case1_ratio_is_profile() {
        let rep = IsomorphismRep::case1();
        for k in 1..=15 {
            let xi = FRAC_PI_2 * k as f64 / 16.0;
            let (p11, p12) = quadrature_oracle_p(&rep, xi).unwrap();
            let want = xi_case1(xi);
            assert_close(p11 / xi.cos().powi(2), want, 1e-6, "p11/cos^2 = Xi");
            assert_close(p12 / xi.sin().powi(2), want, 1e-6, "p12/sin^2 = Xi");
        }
    }

    #[test]
    fn novel_at_zero_time_is_exact_identity() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(5_000, 7, 0.5, vec![0.0]).unwrap();
        for rep in [IsomorphismRep::squeezed(), IsomorphismRep::case1()] {
            let series = run_novel(&h, &rep, &cfg).unwrap();
            let est = series.entries[0].estimate;
            assert_eq!(est.pop[0], [1.0, 0.0], "row 1 exact");
            assert_eq!(est.pop[1], [0.0, 1.0], "row 2 exact: {:?}", est.pop[1]);
        }
    }

    #[test]
    fn novel_diagonal_hamiltonian_stays_identity() {
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 0.0).unwrap();
        let cfg = EnsembleConfig::new(2_000, 3, 0.5, grid(2.0, 9)).unwrap();
        let series = run_novel(&h, &IsomorphismRep::case1(), &cfg).unwrap();
        for e in &series.entries {
            assert_eq!(e.estimate.pop[0], [1.0, 0.0]);
            assert_eq!(e.estimate.pop[1], [0.0, 1.0]);
            assert_eq!(e.xi, 0.0);
        }
    }

    #[test]
    fn novel_matches_exact_transfer_anchor() {
        let h = model(2.0);
        let t = FRAC_PI_2 / 20f64.sqrt();
        let cfg = EnsembleConfig::new(200_000, 42, 0.5, vec![t]).unwrap();
        for rep in [IsomorphismRep::squeezed(), IsomorphismRep::case1(), IsomorphismRep::case2()] {
            let series = run_novel(&h, &rep, &cfg).unwrap();
            let est = series.entries[0].estimate;
            let dev = (est.pop[0][0] - 0.8).abs();
            let tol = (3.0 * est.stderr[0][0]).max(5e-3);
            assert!(dev <= tol, "{}: pop {} dev {dev:e} tol {tol:e}", rep.name(), est.pop[0][0]);
        }
    }

    #[test]
    fn novel_cbar_tracks_normalization_profile() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(150_000, 11, 0.5, grid(0.7, 8)).unwrap();
        for rep in [IsomorphismRep::squeezed(), IsomorphismRep::case1()] {
            let series = run_novel(&h, &rep, &cfg).unwrap();
            for e in &series.entries {
                let want = rep.normalization(e.xi);
                for n in 0..2 {
                    let dev = (e.estimate.cbar[n] - want).abs();
                    let tol = (3.0 * e.estimate.cbar_stderr[n]).max(1e-4);
                    assert!(dev <= tol, "{}: cbar dev {dev:e} tol {tol:e}", rep.name());
                }
            }
        }
    }

    #[test]
    fn novel_raw_matches_quadrature_oracle() {
        // Monte Carlo of the two-variable integral against the deterministic
        // ellipse-domain quadrature: validates the change-of-variables chain
        // end to end.
        let h = model(2.0);
        let t = 0.3;
        let cfg = EnsembleConfig::new(400_000, 5, 0.5, vec![t]).unwrap();
        let rep = IsomorphismRep::squeezed();
        let series = run_novel(&h, &rep, &cfg).unwrap();
        let est = series.entries[0].estimate;
        let (q11, q12) = quadrature_oracle_p(&rep, series.entries[0].xi).unwrap();
        assert!(
            (est.p[0][0] - q11).abs() <= 3.0 * est.p_stderr[0][0],
            "raw p11 {} vs oracle {q11}",
            est.p[0][0]
        );
        assert!(
            (est.p[0][1] - q12).abs() <= 3.0 * est.p_stderr[0][1],
            "raw p12 {} vs oracle {q12}",
            est.p[0][1]
        );
    }

    #[test]
    fn sqc_twf_zero_time_and_normalization() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(20_000, 9, 0.5, vec![0.0]).unwrap();
        let series = run_sqc_twf(&h, &cfg).unwrap();
        let est = series.entries[0].estimate;
        // Triangle samples land in their own bin at t = 0 with certainty.
        assert_eq!(est.pop[0], [1.0, 0.0]);
        assert_eq!(est.pop[1], [0.0, 1.0]);
        assert_eq!(est.cbar[0], 1.0, "Cbar(0) = 1");
    }

    #[test]
    fn sqc_matches_squeezed_populations() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(150_000, 21, 0.5, grid(1.2, 7)).unwrap();
        let sqz = run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap();
        let twf = run_sqc_twf(&h, &cfg).unwrap();
        for (a, b) in sqz.entries.iter().zip(&twf.entries) {
            for m in 0..2 {
                let dev = (a.estimate.pop[0][m] - b.estimate.pop[0][m]).abs();
                let tol = 3.0
                    * (a.estimate.stderr[0][m].powi(2) + b.estimate.stderr[0][m].powi(2)).sqrt();
                assert!(dev <= tol.max(1e-12), "equivalence at t={}: dev {dev:e} tol {tol:e}", a.time);
            }
        }
    }

    #[test]
    fn covariant_identity_and_anchor() {
        let h = model(2.0);
        let t = FRAC_PI_2 / 20f64.sqrt();
        // The kernel pair satisfies the identity and transfer anchors for
        // any zero-point parameter, not just 1/2.
        for gamma in [0.5, 0.0] {
            let cfg = EnsembleConfig::new(400_000, 13, gamma, vec![0.0, t]).unwrap();
            let series = run_covariant(&h, gamma, &cfg).unwrap();
            let at0 = series.entries[0].estimate;
            #[allow(clippy::needless_range_loop)]
            for n in 0..2 {
                for m in 0..2 {
                    let want = if n == m { 1.0 } else { 0.0 };
                    let dev = (at0.pop[n][m] - want).abs();
                    assert!(dev <= 3.0 * at0.stderr[n][m], "identity at t=0: {dev:e}");
                }
                // Trace row sums hold within sampling error.
                let sum = at0.pop[n][0] + at0.pop[n][1];
                assert!((sum - 1.0).abs() <= 3.0 * at0.cbar_stderr[n], "row sum at t=0");
            }
            let at_t = series.entries[1].estimate;
            assert!(
                (at_t.pop[0][0] - 0.8).abs() <= 3.0 * at_t.stderr[0][0],
                "transfer anchor at gamma={gamma}: {} +- {}",
                at_t.pop[0][0],
                at_t.stderr[0][0]
            );
        }
    }

    #[test]
    fn symmetry_checks_statistical_case() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(100_000, 4242, 0.5, grid(1.5, 12)).unwrap();
        let series = run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap();
        let report = symmetry_checks(&series);
        assert!(
            report.all_pass,
            "symmetries should hold within noise: {:?}",
            report.entries.iter().filter(|e| !e.pass).collect::<Vec<_>>()
        );
    }

    #[test]
    fn symmetry_checks_exact_cases() {
        // Diagonal generator: no transfer at all, cross entries exactly 0.
        let h = Hamiltonian2::with_real_coupling(10.0, 2.0, 0.0).unwrap();
        let cfg = EnsembleConfig::new(5_000, 2, 0.5, grid(2.0, 5)).unwrap();
        let series = run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap();
        for e in &series.entries {
            assert_eq!(e.estimate.p[0][1], 0.0);
            assert_eq!(e.estimate.p[1][0], 0.0);
        }
        assert!(symmetry_checks(&series).all_pass);

        // Full swap at xi = pi/2: the diagonal entries vanish exactly.
        let h = Hamiltonian2::with_real_coupling(0.0, 0.0, 1.0).unwrap();
        let cfg = EnsembleConfig::new(5_000, 2, 0.5, vec![FRAC_PI_2]).unwrap();
        let series = run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap();
        let est = series.entries[0].estimate;
        assert_eq!(est.p[0][0], 0.0, "p11 at the swap");
        assert_eq!(est.p[1][1], 0.0, "p22 at the swap");
        assert_eq!(est.pop[0], [0.0, 1.0]);
    }

    #[test]
    fn window_methods_structural_guarantees() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(30_000, 6, 0.5, grid(1.0, 6)).unwrap();
        for series in [
            run_novel(&h, &IsomorphismRep::case2(), &cfg).unwrap(),
            run_sqc_twf(&h, &cfg).unwrap(),
        ] {
            for e in &series.entries {
                for n in 0..2 {
                    assert!(e.estimate.p[n][0] >= 0.0 && e.estimate.p[n][1] >= 0.0, "raw p >= 0");
                    assert!(e.estimate.cbar[n] > 0.0, "cbar > 0");
                    let sum = e.estimate.pop[n][0] + e.estimate.pop[n][1];
                    assert_eq!(sum, 1.0, "row sums exactly 1");
                    assert!((0.0..=1.0).contains(&e.estimate.pop[n][0]), "pop in range");
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let h = model(2.0);
        let cfg = EnsembleConfig::new(40_000, 31, 0.5, grid(0.9, 5)).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.estimate.p, y.estimate.p, "bit-identical raw estimates");
            assert_eq!(x.estimate.pop, y.estimate.pop, "bit-identical populations");
            assert_eq!(x.estimate.stderr, y.estimate.stderr, "bit-identical errors");
        }
    }

    #[test]
    fn gamma_invariance_of_window_methods() {
        let h = model(2.0);
        let times = grid(0.8, 4);
        let run_with = |gamma: f64| {
            let cfg = EnsembleConfig::new(20_000, 55, gamma, times.clone()).unwrap();
            (
                run_novel(&h, &IsomorphismRep::squeezed(), &cfg).unwrap(),
                run_sqc_twf(&h, &cfg).unwrap(),
            )
        };
        let (novel0, twf0) = run_with(0.0);
        let (novel1, twf1) = run_with(0.5);
        for (a, b) in novel0.entries.iter().zip(&novel1.entries) {
            assert_eq!(a.estimate.pop, b.estimate.pop, "novel gamma invariance");
        }
        for (a, b) in twf0.entries.iter().zip(&twf1.entries) {
            assert_eq!(a.estimate.pop, b.estimate.pop, "twf gamma invariance");
        }
    }

    #[test]
    fn degenerate_normalization_aborts() {
        // A weight that vanishes identically collapses the normalization;
        // the run must abort with the diagnostic rather than divide by it.
        let zero_f = crate::representations::FGenerator::from_table(
            vec![0.0, 0.25, 0.5],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let rep = IsomorphismRep::new_unchecked(
            "degenerate",
            zero_f,
            crate::representations::XiProfile::constant_one(),
        );
        let h = model(2.0);
        let cfg = EnsembleConfig::new(1_000, 1, 0.5, vec![0.1]).unwrap();
        match run_novel(&h, &rep, &cfg) {
            Err(Error::DegenerateNormalization { .. }) => {}
            other => panic!("expected degenerate-normalization abort, got {other:?}"),
        }
    }
}
