//! Escape-time experiments: many independent seeded runs from a common
//! initial state, hitting-time statistics and tail diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::es::{run, EsParams, EsState, RecordPolicy, ReachNegative, RunTrace, TerminalReason};
use crate::estimators::{drift_grid, DriftEstimate};
use crate::normalized::{m_plus_0_state, w_of};
use crate::problem::SaddleProblem;
use crate::rng::derived_stream;

/// Initial normalized step sizes probed by [`run_escape_sweep`].
pub const INITIAL_SIGMA_SWEEP: [f64; 4] = [1e-3, 1e-1, 1.0, 10.0];
pub const DEFAULT_TAIL_RANGE: (f64, f64) = (0.01, 0.5);
pub const DEFAULT_TRIALS: u64 = 1_000;
/// Fewer points in the fit range than this and no tail rate is reported.
pub const MIN_TAIL_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMean {
    /// Deterministic point of `M+_0` with `||m~||_- = w`.
    #[serde(rename = "m_plus_0")]
    OnMPlus0 { w: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeExperimentSpec {
    pub problem: SaddleProblem,
    pub params: EsParams,
    pub initial: InitialMean,
    /// Normalized initial step size; the raw one is `sigma~0 * ||m0||_+`.
    pub sigma_tilde0: f64,
    pub trials: u64,
    pub seed: u64,
    /// Survival-probability window for the tail fit.
    pub tail_range: (f64, f64),
}

impl EscapeExperimentSpec {
    /// Budget is `params.max_iters`.
    pub fn new(problem: SaddleProblem, params: EsParams, initial: InitialMean, sigma_tilde0: f64, trials: u64, seed: u64) -> Self {
        EscapeExperimentSpec {
            problem,
            params,
            initial,
            sigma_tilde0,
            trials,
            seed,
            tail_range: DEFAULT_TAIL_RANGE,
        }
    }

    pub fn budget(&self) -> u64 {
        self.params.max_iters
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.params.max_iters == 0 {
            return Err(invalid("budget", "must be at least 1"));
        }
        let (lo, hi) = self.tail_range;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(invalid("tail_range", format!("need 0 < lo < hi <= 1, got ({lo}, {hi})")));
        }
        self.initial_state().map(|_| ())
    }

    /// Raw initial state; refuses means with `||m0||_+ = 0`.
    pub fn initial_state(&self) -> Result<EsState> {
        if !(self.sigma_tilde0 > 0.0 && self.sigma_tilde0.is_finite()) {
            return Err(invalid("sigma_tilde0", format!("must be positive, got {}", self.sigma_tilde0)));
        }
        match &self.initial {
            InitialMean::OnMPlus0 { w } => m_plus_0_state(&self.problem, *w, self.sigma_tilde0).map(|ns| ns.to_state()),
            InitialMean::Explicit(m) => {
                w_of(&self.problem, m)?;
                let np = self.problem.norm_plus(m)?;
                EsState::new(m.clone(), self.sigma_tilde0 * np)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    /// Hitting time, `None` if the trial never reached the negative region.
    pub t: Option<u64>,
    /// Iterations actually performed.
    pub iterations: u64,
    pub reason: TerminalReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub t: u64,
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub lambda: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: u64,
    pub median: u64,
    pub q90: u64,
    pub q99: u64,
    pub max: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingTimeStats {
    pub trials: u64,
    pub budget: u64,
    pub escaped: u64,
    pub censored: u64,
    pub underflows: u64,
    pub escape_fraction: f64,
    pub censored_fraction: f64,
    pub underflow_fraction: f64,
    /// False iff some trial's step size collapsed, which contradicts
    /// guaranteed escape; censoring only means the budget was too small.
    pub theorem_consistent: bool,
    pub quantiles: Option<Quantiles>,
    pub tail: Option<TailFit>,
    #[serde(skip)]
    pub survival: Vec<SurvivalPoint>,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

impl HittingTimeStats {
    pub fn from_outcomes(outcomes: Vec<TrialOutcome>, budget: u64, tail_range: (f64, f64)) -> Self {
        let trials = outcomes.len() as u64;
        let mut times: Vec<u64> = outcomes.iter().filter_map(|o| o.t).collect();
        times.sort_unstable();
        let escaped = times.len() as u64;
        let underflows = outcomes
            .iter()
            .filter(|o| o.t.is_none() && o.reason == TerminalReason::SigmaUnderflow)
            .count() as u64;
        let censored = trials - escaped - underflows;
        let frac = |k: u64| k as f64 / trials as f64;

        let survival = survival_curve(&times, trials);
        let tail = fit_tail(&survival, tail_range);
        HittingTimeStats {
            trials,
            budget,
            escaped,
            censored,
            underflows,
            escape_fraction: frac(escaped),
            censored_fraction: frac(censored),
            underflow_fraction: frac(underflows),
            theorem_consistent: underflows == 0,
            quantiles: quantiles(&times),
            tail,
            survival,
            outcomes,
        }
    }
}

/// `S(t) = #{T > t} / trials` at `t = 0` and every distinct escape time;
/// trials that never escaped count as `T = infinity`.
pub fn survival_curve(sorted_times: &[u64], trials: u64) -> Vec<SurvivalPoint> {
    let mut out = Vec::new();
    if sorted_times.first() != Some(&0) {
        out.push(SurvivalPoint {
            t: 0,
            s: 1.0 - sorted_times.iter().filter(|&&t| t == 0).count() as f64 / trials as f64,
        });
    }
    let mut i = 0;
    while i < sorted_times.len() {
        let t = sorted_times[i];
        while i < sorted_times.len() && sorted_times[i] == t {
            i += 1;
        }
        out.push(SurvivalPoint {
            t,
            s: (trials - i as u64) as f64 / trials as f64,
        });
    }
    out
}

/// Least-squares line through `(t, ln S(t))` over points with `S` in `range`.
pub fn fit_tail(survival: &[SurvivalPoint], range: (f64, f64)) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> = survival
        .iter()
        .filter(|p| p.s >= range.0 && p.s <= range.1 && p.s > 0.0)
        .map(|p| (p.t as f64, p.s.ln()))
        .collect();
    if pts.len() < MIN_TAIL_POINTS {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(TailFit {
        lambda: -slope,
        intercept: my - slope * mx,
        r_squared,
        points: pts.len(),
        range,
    })
}

fn quantiles(sorted: &[u64]) -> Option<Quantiles> {
    if sorted.is_empty() {
        return None;
    }
    // Nearest-rank.
    let q = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    Some(Quantiles {
        min: sorted[0],
        median: q(0.5),
        q90: q(0.9),
        q99: q(0.99),
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().map(|&t| t as f64).sum::<f64>() / sorted.len() as f64,
    })
}

/// One trial: seed `spec.seed ^ index`, stop on the first negative value.
pub fn run_trial(spec: &EscapeExperimentSpec, index: u64, policy: RecordPolicy) -> Result<RunTrace> {
    let init = spec.initial_state()?;
    let mut rng = derived_stream(spec.seed, index);
    run(&spec.problem, &spec.params, &init, &mut rng, &ReachNegative, policy)
}

/// Runs all trials in parallel; results are ordered by trial index, so the
/// statistics do not depend on the thread count.
pub fn run_escape_experiment(spec: &EscapeExperimentSpec) -> Result<HittingTimeStats> {
    spec.validate()?;
    let outcomes = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let tr = run_trial(spec, i, RecordPolicy::Summary)?;
            Ok(TrialOutcome {
                t: tr.t_escape,
                iterations: tr.iterations(),
                reason: tr.reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HittingTimeStats::from_outcomes(outcomes, spec.budget(), spec.tail_range))
}

/// The experiment repeated for each initial normalized step size.
pub fn run_escape_sweep(spec: &EscapeExperimentSpec, sigma_tildes: &[f64]) -> Result<Vec<(f64, HittingTimeStats)>> {
    sigma_tildes
        .iter()
        .map(|&s| {
            let sub = EscapeExperimentSpec {
                sigma_tilde0: s,
                ..spec.clone()
            };
            Ok((s, run_escape_experiment(&sub)?))
        })
        .collect()
}

/// `10^5 * max(1, kappa / 10)` with `kappa` the ratio of the largest positive
/// to the smallest negative curvature magnitude (`a_2 / |a_1|` in two dimensions).
pub fn default_budget(problem: &SaddleProblem) -> u64 {
    (1e5 * (problem.condition_ratio() / 10.0).max(1.0)).ceil() as u64
}

/// After the first negative value the recorded values never increase, stay
/// at or below the value at escape, and stay negative.
pub fn post_escape_monotonicity(trace: &RunTrace) -> Result<bool> {
    let t_esc = trace.t_escape.ok_or(Error::NoEscape)?;
    let mut after = trace.records.iter().filter(|r| r.t >= t_esc);
    let Some(first) = after.next() else {
        return Err(Error::NoEscape);
    };
    let f_t = first.f;
    if !(f_t < 0.0) {
        return Ok(false);
    }
    let mut prev = f_t;
    for r in after {
        if r.f > prev || r.f > f_t || !(r.f < 0.0) {
            return Ok(false);
        }
        prev = r.f;
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftRow {
    pub w: f64,
    pub sigma_tilde: f64,
    pub v: DriftEstimate,
    #[serde(rename = "w_drift")]
    pub w_drift: DriftEstimate,
    pub phi: DriftEstimate,
}

/// `V`, `W` and `Phi` drifts on the `w`-major grid `w_grid x sigma_grid`.
#[allow(clippy::too_many_arguments)]
pub fn drift_map(
    problem: &SaddleProblem,
    params: &EsParams,
    w_grid: &[f64],
    sigma_grid: &[f64],
    n: u64,
    seed: u64,
    beta: f64,
    confidence: f64,
) -> Result<Vec<DriftRow>> {
    crate::estimators::z_value(confidence)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be non-negative, got {beta}")));
    }
    Ok(drift_grid(problem, params, w_grid, sigma_grid, n, seed)?
        .into_iter()
        .map(|pt| DriftRow {
            w: pt.w,
            sigma_tilde: pt.sigma_tilde,
            v: pt.v(confidence),
            w_drift: pt.w_drift(confidence),
            phi: pt.phi(beta, confidence),
        })
        .collect())
}
