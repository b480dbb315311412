//! Monte Carlo estimators on the normalized state space.
//!
//! Drifts are one-step quantities: each sample performs one ES step from the
//! state at scale 1 (`m = m~`, `sigma = sigma~`) and normalizes the successor.
//! Per sample:
//!
//! * V-increment: `ln alpha + ln(||m||_+ / ||m'||_+)` on success,
//!   `-(1/4) ln alpha` on rejection (a constant, no estimation noise).
//! * W-increment: `min(W(m') - W(m), 1)` on success, `0` on rejection, and the
//!   cap `1` if `||m'||_+ = 0`.
//! * Phi-increment: `beta * dV + dW` on the same sample.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::es::{EsParams, EsState};
use crate::normalized::{in_m_plus_0, m_plus_0_state, normalize, w_of, NormalizedState};
use crate::problem::SaddleProblem;
use crate::rng::{derived_stream, fill_standard_normal, Stream};

pub const DEFAULT_CONFIDENCE: f64 = 0.99;
pub const MIN_SUCCESS_SAMPLES: u64 = 100;
pub const MIN_DRIFT_SAMPLES: u64 = 1_000;
pub const MIN_SIGMA40_GRID: usize = 8;
pub const SIGMA40_BISECTIONS: usize = 16;
pub const TARGET_SUCCESS_RATE: f64 = 0.4;
pub const PAIRING_EPS: f64 = 1e-9;

/// Task-index tags keeping derived streams of different pipeline phases apart.
pub(crate) const PHASE_SIGMA40: u64 = 1 << 40;
pub(crate) const PHASE_DRIFT: u64 = 2 << 40;

/// Two-sided normal quantile for a confidence level in (0, 1).
pub fn z_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

/// Monte Carlo mean with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

impl DriftEstimate {
    pub fn new(mean: f64, stderr: f64, n: u64, confidence: f64) -> Result<Self> {
        let z = z_value(confidence)?;
        Ok(DriftEstimate {
            mean,
            stderr,
            n,
            ci_low: mean - z * stderr,
            ci_high: mean + z * stderr,
            confidence,
        })
    }

    /// Is `value` within `k` standard errors of the mean?
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Welford accumulator for a scalar sample.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self, confidence: f64) -> Result<DriftEstimate> {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        DriftEstimate::new(self.mean, (var / self.n as f64).sqrt(), self.n, confidence)
    }
}

/// Joint moments of `(dV, dW)`, so `Phi` can be estimated for any `beta` from
/// the same samples with the correct coupled variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct JointMoments {
    n: u64,
    mean_v: f64,
    mean_w: f64,
    m2_v: f64,
    m2_w: f64,
    c_vw: f64,
}

impl JointMoments {
    fn push(&mut self, dv: f64, dw: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dv_old = dv - self.mean_v;
        let dw_old = dw - self.mean_w;
        self.mean_v += dv_old / n;
        self.mean_w += dw_old / n;
        self.m2_v += dv_old * (dv - self.mean_v);
        self.m2_w += dw_old * (dw - self.mean_w);
        self.c_vw += dv_old * (dw - self.mean_w);
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn finish(&self, mean: f64, m2: f64, confidence: f64) -> Result<DriftEstimate> {
        let var = if self.n > 1 { m2 / (self.n - 1) as f64 } else { 0.0 };
        DriftEstimate::new(mean, (var.max(0.0) / self.n as f64).sqrt(), self.n, confidence)
    }

    pub fn v(&self, confidence: f64) -> Result<DriftEstimate> {
        self.finish(self.mean_v, self.m2_v, confidence)
    }

    pub fn w(&self, confidence: f64) -> Result<DriftEstimate> {
        self.finish(self.mean_w, self.m2_w, confidence)
    }

    pub fn phi(&self, beta: f64, confidence: f64) -> Result<DriftEstimate> {
        let mean = beta * self.mean_v + self.mean_w;
        let m2 = beta * beta * self.m2_v + self.m2_w + 2.0 * beta * self.c_vw;
        self.finish(mean, m2, confidence)
    }
}

/// Outcome of a single ES step seen through the potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment {
    pub accepted: bool,
    /// `None` when the successor has `||m'||_+ = 0`.
    pub dv: Option<f64>,
    pub dw: f64,
}

/// Reusable one-step sampler at a fixed state.
struct OneStep<'a> {
    problem: &'a SaddleProblem,
    m: &'a [f64],
    sigma: f64,
    f_m: f64,
    w_m: f64,
    ln_np_m: f64,
    ln_alpha: f64,
    ln_fail: f64,
    z: Vec<f64>,
    x: Vec<f64>,
}

impl<'a> OneStep<'a> {
    fn new(problem: &'a SaddleProblem, params: &EsParams, m: &'a [f64], sigma: f64) -> Result<Self> {
        problem.check_dim(m)?;
        let d = problem.dim();
        Ok(OneStep {
            problem,
            m,
            sigma,
            f_m: problem.f(m),
            w_m: w_of(problem, m)?,
            ln_np_m: problem.norm_plus_sq(m).sqrt().ln(),
            ln_alpha: params.ln_alpha(),
            ln_fail: params.ln_failure_factor(),
            z: vec![0.0; d],
            x: vec![0.0; d],
        })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Increment {
        fill_standard_normal(rng, &mut self.z);
        for i in 0..self.x.len() {
            self.x[i] = self.m[i] + self.sigma * self.z[i];
        }
        if self.problem.f(&self.x) > self.f_m {
            return Increment {
                accepted: false,
                dv: Some(self.ln_fail),
                dw: 0.0,
            };
        }
        let np = self.problem.norm_plus_sq(&self.x).sqrt();
        if np == 0.0 {
            return Increment {
                accepted: true,
                dv: None,
                dw: 1.0,
            };
        }
        let w_x = self.problem.norm_minus_sq(&self.x).sqrt() / np;
        Increment {
            accepted: true,
            dv: Some(self.ln_alpha + self.ln_np_m - np.ln()),
            dw: (w_x - self.w_m).min(1.0),
        }
    }
}

fn check_samples(n: u64, min: u64) -> Result<()> {
    if n < min {
        Err(invalid("n", format!("need at least {min} samples, got {n}")))
    } else {
        Ok(())
    }
}

fn warn_outside(problem: &SaddleProblem, ns: &NormalizedState) {
    if !in_m_plus_0(problem, ns) {
        log::warn!("drift requested outside M+_0 (W = {:?})", w_of(problem, &ns.m_tilde).ok());
    }
}

/// Fraction of `n` offspring `x ~ N(m, sigma^2 I)` with `f(x) <= f(m)`, for
/// an arbitrary raw state (including the saddle `m = 0`).
pub fn success_probability_at<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    state: &EsState,
    n: u64,
    rng: &mut R,
    confidence: f64,
) -> Result<DriftEstimate> {
    check_samples(n, MIN_SUCCESS_SAMPLES)?;
    problem.check_dim(&state.m)?;
    let f_m = problem.f(&state.m);
    let sigma = state.sigma();
    let mut z = vec![0.0; problem.dim()];
    let mut x = vec![0.0; problem.dim()];
    let mut hits = 0u64;
    for _ in 0..n {
        fill_standard_normal(rng, &mut z);
        for i in 0..x.len() {
            x[i] = state.m[i] + sigma * z[i];
        }
        if problem.f(&x) <= f_m {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    DriftEstimate::new(p, (p * (1.0 - p) / n as f64).sqrt(), n, confidence)
}

/// `p_succ(m~, sigma~)`; by scale invariance the same for every state on the ray.
pub fn success_probability<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    ns: &NormalizedState,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    success_probability_at(problem, &ns.to_state(), n, rng, DEFAULT_CONFIDENCE)
}

/// `p* = p_succ(0, sigma)` for `d = 2`: the angular fraction of the double
/// cone `f_a < 0`, `(2/pi) atan(sqrt(|a_1| / a_2))`.
pub fn saddle_success_analytic_2d(problem: &SaddleProblem) -> Result<f64> {
    if problem.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: problem.dim(),
        });
    }
    let a = problem.coefficients();
    Ok(std::f64::consts::FRAC_2_PI * (a[0].abs() / a[1]).sqrt().atan())
}

/// `Delta^V(m~, sigma~)`.
pub fn drift_v<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    ns: &NormalizedState,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    check_samples(n, MIN_DRIFT_SAMPLES)?;
    params.validate()?;
    warn_outside(problem, ns);
    let mut one = OneStep::new(problem, params, &ns.m_tilde, ns.sigma_tilde)?;
    let mut acc = Moments::default();
    for _ in 0..n {
        acc.push(one.sample(rng).dv.ok_or(Error::NormPlusZero)?);
    }
    acc.estimate(DEFAULT_CONFIDENCE)
}

/// `Delta^W(m~, sigma~)` with increments truncated at 1.
pub fn drift_w<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    ns: &NormalizedState,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    check_samples(n, MIN_DRIFT_SAMPLES)?;
    params.validate()?;
    warn_outside(problem, ns);
    let mut one = OneStep::new(problem, params, &ns.m_tilde, ns.sigma_tilde)?;
    let mut acc = Moments::default();
    for _ in 0..n {
        acc.push(one.sample(rng).dw);
    }
    acc.estimate(DEFAULT_CONFIDENCE)
}

/// `Delta^Phi = beta * Delta^V + Delta^W`, estimated from per-sample `beta * dV + dW`.
pub fn drift_phi<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    ns: &NormalizedState,
    beta: f64,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    check_samples(n, MIN_DRIFT_SAMPLES)?;
    params.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be non-negative, got {beta}")));
    }
    warn_outside(problem, ns);
    let mut one = OneStep::new(problem, params, &ns.m_tilde, ns.sigma_tilde)?;
    let mut acc = Moments::default();
    for _ in 0..n {
        let inc = one.sample(rng);
        let dv = inc.dv.ok_or(Error::NormPlusZero)?;
        acc.push(beta * dv + inc.dw);
    }
    acc.estimate(DEFAULT_CONFIDENCE)
}

/// Joint `(dV, dW)` moments at one state; the basis of drift maps.
pub fn drift_joint<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    ns: &NormalizedState,
    n: u64,
    rng: &mut R,
) -> Result<JointMoments> {
    check_samples(n, MIN_DRIFT_SAMPLES)?;
    params.validate()?;
    let mut one = OneStep::new(problem, params, &ns.m_tilde, ns.sigma_tilde)?;
    let mut acc = JointMoments::default();
    for _ in 0..n {
        let inc = one.sample(rng);
        acc.push(inc.dv.ok_or(Error::NormPlusZero)?, inc.dw);
    }
    Ok(acc)
}

/// Per-sample increments, for callers that need the raw distribution.
pub fn sample_increments<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    ns: &NormalizedState,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Increment>> {
    params.validate()?;
    let mut one = OneStep::new(problem, params, &ns.m_tilde, ns.sigma_tilde)?;
    Ok((0..n).map(|_| one.sample(rng)).collect())
}

/// Raw-state variants: normalize, then estimate.
pub fn drift_v_at<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    state: &EsState,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    drift_v(problem, params, &normalize(problem, state)?, n, rng)
}

pub fn drift_w_at<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    state: &EsState,
    n: u64,
    rng: &mut R,
) -> Result<DriftEstimate> {
    drift_w(problem, params, &normalize(problem, state)?, n, rng)
}

/// Critical step size `sigma~_40%` at one normalized mean.
///
/// Scans the whole increasing `sigma_grid` (no monotonicity of `p_succ` in
/// `sigma~` is assumed), takes the first grid point whose estimated success
/// probability drops below 2/5, and bisects in log space between it and its
/// passing predecessor. Returns the largest step size known to pass, or
/// `f64::INFINITY` if the grid never drops below 2/5.
pub fn estimate_sigma_40<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    m_tilde: &[f64],
    sigma_grid: &[f64],
    n: u64,
    rng: &mut R,
) -> Result<f64> {
    if sigma_grid.len() < MIN_SIGMA40_GRID {
        return Err(Error::GridTooCoarse {
            points: sigma_grid.len(),
            min: MIN_SIGMA40_GRID,
        });
    }
    if sigma_grid.iter().any(|s| !(*s > 0.0)) || sigma_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidGrid("sigma grid must be positive and increasing".into()));
    }
    let p_at = |sigma: f64, rng: &mut R| -> Result<f64> {
        let state = EsState::new(m_tilde.to_vec(), sigma)?;
        Ok(success_probability_at(problem, &state, n, rng, DEFAULT_CONFIDENCE)?.mean)
    };
    let scan: Vec<f64> = sigma_grid
        .iter()
        .map(|&s| p_at(s, rng))
        .collect::<Result<_>>()?;
    let Some(first_fail) = scan.iter().position(|&p| p < TARGET_SUCCESS_RATE) else {
        return Ok(f64::INFINITY);
    };
    if first_fail == 0 {
        return Err(Error::Sigma40BelowGrid {
            sigma_tilde: sigma_grid[0],
        });
    }
    let (mut lo, mut hi) = (sigma_grid[first_fail - 1], sigma_grid[first_fail]);
    for _ in 0..SIGMA40_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if p_at(mid, rng)? >= TARGET_SUCCESS_RATE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Drift estimates at one `(w, sigma~)` grid point.
#[derive(Debug, Clone, Copy)]
pub struct DriftPoint {
    pub w: f64,
    pub sigma_tilde: f64,
    pub moments: JointMoments,
}

impl DriftPoint {
    pub fn v(&self, confidence: f64) -> DriftEstimate {
        self.moments.v(confidence).expect("confidence validated")
    }

    pub fn w_drift(&self, confidence: f64) -> DriftEstimate {
        self.moments.w(confidence).expect("confidence validated")
    }

    pub fn phi(&self, beta: f64, confidence: f64) -> DriftEstimate {
        self.moments.phi(beta, confidence).expect("confidence validated")
    }
}

/// Evaluates the joint drift at every `(w, sigma~)` grid point, `w`-major.
///
/// Point `i` draws from its own stream seeded `seed ^ (phase | i)`; results
/// come back in grid order regardless of thread count.
pub fn drift_grid(
    problem: &SaddleProblem,
    params: &EsParams,
    w_grid: &[f64],
    sigma_grid: &[f64],
    n: u64,
    seed: u64,
) -> Result<Vec<DriftPoint>> {
    check_samples(n, MIN_DRIFT_SAMPLES)?;
    let ns_sigma = sigma_grid.len();
    (0..w_grid.len() * ns_sigma)
        .into_par_iter()
        .map(|i| {
            let (w, sigma_tilde) = (w_grid[i / ns_sigma], sigma_grid[i % ns_sigma]);
            let ns = m_plus_0_state(problem, w, sigma_tilde)?;
            let mut rng = derived_stream(seed, PHASE_DRIFT | i as u64);
            let moments = drift_joint(problem, params, &ns, n, &mut rng)?;
            Ok(DriftPoint {
                w,
                sigma_tilde,
                moments,
            })
        })
        .collect()
}

/// Constants of the drift argument. `b1`, `b2` are closed-form in `alpha`;
/// the rest are estimated, with `c` taken from confidence-interval lower
/// bounds so that it is conservative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftConstants {
    pub alpha: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(serialize_with = "crate::io::serialize_maybe_infinite")]
    pub sigma_tilde_40: f64,
    pub sigma_tilde_star: f64,
    pub beta: f64,
    pub theta: f64,
    pub confidence: f64,
    pub seed: u64,
}

/// `B1 = -(1/4) ln alpha`, the V-drift under zero success rate.
pub fn b1(alpha: f64) -> f64 {
    -0.25 * alpha.ln()
}

/// `B2 = (1/20) ln alpha`, the V-drift bound at success rate >= 2/5.
pub fn b2(alpha: f64) -> f64 {
    alpha.ln() / 20.0
}

impl DriftConstants {
    /// Completes the record from `C`: `beta = -C / (2 B1)`,
    /// `theta = min(beta B2, C + beta B1)`.
    pub fn from_parts(
        alpha: f64,
        c: f64,
        sigma_tilde_40: f64,
        sigma_tilde_star: f64,
        confidence: f64,
        seed: u64,
    ) -> Self {
        let (b1, b2) = (b1(alpha), b2(alpha));
        let beta = -c / (2.0 * b1);
        let theta = (beta * b2).min(c + beta * b1);
        DriftConstants {
            alpha,
            b1,
            b2,
            c,
            sigma_tilde_40,
            sigma_tilde_star,
            beta,
            theta,
            confidence,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstantsReport {
    pub constants: DriftConstants,
    pub sigma_40_by_w: Vec<f64>,
    pub sigma_star_by_w: Vec<f64>,
    pub map: Vec<DriftPoint>,
    /// Grid point attaining `C`.
    pub c_at: (f64, f64),
}

/// Full pipeline: `sigma~_40%`, the drift map, `sigma~*`, `C`, `beta`, `theta`.
///
/// * `sigma~_40%` is the minimum over the `w` grid of [`estimate_sigma_40`].
/// * `sigma~*(w)` is the largest grid step size such that the V-drift lower
///   confidence bound is at least `B2` at it and all smaller grid step sizes;
///   `sigma~*` is its minimum over `w`, capped at `sigma~_40%`.
/// * `C` is the smallest W-drift lower confidence bound over grid points with
///   `sigma~ >= sigma~*`.
///
/// Fails with [`Error::NonPositiveDriftBound`] if `C <= 0`.
pub fn estimate_constants(
    problem: &SaddleProblem,
    params: &EsParams,
    w_grid: &[f64],
    sigma_grid: &[f64],
    n: u64,
    seed: u64,
    confidence: f64,
) -> Result<ConstantsReport> {
    params.validate()?;
    z_value(confidence)?;
    if w_grid.is_empty() || w_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(invalid("w_grid", "values must lie in [0, 1]"));
    }
    let (b1v, b2v) = (b1(params.alpha), b2(params.alpha));

    let sigma_40_by_w: Vec<f64> = w_grid
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            let ns = m_plus_0_state(problem, w, 1.0)?;
            let mut rng = derived_stream(seed, PHASE_SIGMA40 | i as u64);
            estimate_sigma_40(problem, &ns.m_tilde, sigma_grid, n, &mut rng)
        })
        .collect::<Result<_>>()?;
    let sigma_40 = sigma_40_by_w.iter().copied().fold(f64::INFINITY, f64::min);

    let map = drift_grid(problem, params, w_grid, sigma_grid, n, seed)?;
    let ns_sigma = sigma_grid.len();

    let sigma_star_by_w: Vec<f64> = w_grid
        .iter()
        .enumerate()
        .map(|(wi, &w)| {
            let row = &map[wi * ns_sigma..(wi + 1) * ns_sigma];
            let passing = row
                .iter()
                .take_while(|pt| pt.v(confidence).ci_low >= b2v)
                .count();
            if passing == 0 {
                Err(Error::SigmaStarBelowGrid {
                    w,
                    sigma_tilde: sigma_grid[0],
                })
            } else {
                Ok(sigma_grid[passing - 1])
            }
        })
        .collect::<Result<_>>()?;
    let sigma_star = sigma_star_by_w
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(sigma_40);

    let (c, c_at) = map
        .iter()
        .filter(|pt| pt.sigma_tilde >= sigma_star)
        .map(|pt| (pt.w_drift(confidence).ci_low, (pt.w, pt.sigma_tilde)))
        .fold((f64::INFINITY, (f64::NAN, f64::NAN)), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        });
    if !(c > 0.0) {
        return Err(Error::NonPositiveDriftBound {
            c,
            w: c_at.0,
            sigma_tilde: c_at.1,
        });
    }
    debug_assert!(b1v < 0.0 && b2v > 0.0);

    Ok(ConstantsReport {
        constants: DriftConstants::from_parts(params.alpha, c, sigma_40, sigma_star, confidence, seed),
        sigma_40_by_w,
        sigma_star_by_w,
        map,
        c_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairingReport {
    pub radius: f64,
    pub samples: u64,
    /// Sampled points that are successful and lie in `Z`.
    pub pairs: u64,
    pub violations: u64,
    /// `None` when no pair was formed.
    pub min_margin: Option<f64>,
}

/// `W(z) + W(z') - 2 W(m~)` for the mirror image `z'_- = 2 m~_- - z_-`,
/// `z'_+ = z_+`; `None` if `||z||_+ = 0`.
pub fn pairing_margin(problem: &SaddleProblem, m_tilde: &[f64], z: &[f64]) -> Result<Option<f64>> {
    problem.check_dim(m_tilde)?;
    problem.check_dim(z)?;
    let b = problem.split();
    let np = problem.norm_plus_sq(z).sqrt();
    if np == 0.0 {
        return Ok(None);
    }
    let mirrored: Vec<f64> = (0..z.len())
        .map(|i| if i < b { 2.0 * m_tilde[i] - z[i] } else { z[i] })
        .collect();
    let w_z = problem.norm_minus_sq(z).sqrt() / np;
    let w_mirror = problem.norm_minus_sq(&mirrored).sqrt() / np;
    Ok(Some(w_z + w_mirror - 2.0 * w_of(problem, m_tilde)?))
}

/// Checks the mirror-pairing inequality on `n` points drawn uniformly from the
/// sphere of radius `radius` around `m~`.
///
/// Only successful points (`f(z) <= f(m~)`) inside
/// `Z = { ||z||_- / ||z||_+ < ||m~||_- }` are paired; for those `||z||_+ < 1`,
/// which the inequality needs.
pub fn pairing_check<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    m_tilde: &[f64],
    radius: f64,
    n: u64,
    rng: &mut R,
) -> Result<PairingReport> {
    problem.check_dim(m_tilde)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    let w_m = w_of(problem, m_tilde)?;
    let f_m = problem.f(m_tilde);
    let d = problem.dim();
    let mut u = vec![0.0; d];
    let mut z = vec![0.0; d];
    let (mut pairs, mut violations) = (0u64, 0u64);
    let mut min_margin: Option<f64> = None;
    for _ in 0..n {
        let norm = loop {
            fill_standard_normal(rng, &mut u);
            let s: f64 = u.iter().map(|v| v * v).sum();
            if s > 0.0 {
                break s.sqrt();
            }
        };
        for i in 0..d {
            z[i] = m_tilde[i] + radius * u[i] / norm;
        }
        if problem.f(&z) > f_m {
            continue;
        }
        let np = problem.norm_plus_sq(&z).sqrt();
        if np == 0.0 || problem.norm_minus_sq(&z).sqrt() / np >= w_m {
            continue;
        }
        let margin = pairing_margin(problem, m_tilde, &z)?.expect("||z||_+ > 0");
        pairs += 1;
        if margin < -PAIRING_EPS {
            violations += 1;
        }
        min_margin = Some(min_margin.map_or(margin, |m| m.min(margin)));
    }
    Ok(PairingReport {
        radius,
        samples: n,
        pairs,
        violations,
        min_margin,
    })
}

/// Convenience for grid tasks that need a fresh stream.
pub fn task_stream(seed: u64, index: u64) -> Stream {
    derived_stream(seed, index)
}
