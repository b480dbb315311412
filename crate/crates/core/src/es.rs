//! The (1+1)-ES with multiplicative 1/5-success rule.
//!
//! One offspring `x = m + sigma * z` per iteration. The offspring replaces the
//! mean iff `f(x) <= f(m)`; the step size is then multiplied by `alpha`,
//! otherwise by `alpha^(-1/4)`.
//!
//! Each iteration consumes exactly `d` standard normal draws from the stream,
//! in component order. Coupled-trajectory experiments rely on this.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{Region, SaddleProblem};
use crate::rng::fill_standard_normal;

pub const DEFAULT_ALPHA: f64 = 1.5;
pub const DEFAULT_SIGMA_MIN: f64 = 1e-300;
pub const DEFAULT_TRACE_EVERY: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsParams {
    pub alpha: f64,
    pub max_iters: u64,
    pub sigma_min: f64,
}

impl Default for EsParams {
    fn default() -> Self {
        EsParams {
            alpha: DEFAULT_ALPHA,
            max_iters: 100_000,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }
}

impl EsParams {
    pub fn new(alpha: f64, max_iters: u64) -> Result<Self> {
        let params = EsParams {
            alpha,
            max_iters,
            ..Default::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_sigma_min(mut self, sigma_min: f64) -> Result<Self> {
        self.sigma_min = sigma_min;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_iters(mut self, max_iters: u64) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be a finite value > 1, got {}", self.alpha)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return Err(invalid("sigma_min", format!("must be positive, got {}", self.sigma_min)));
        }
        Ok(())
    }

    pub fn ln_alpha(&self) -> f64 {
        self.alpha.ln()
    }

    /// `ln sigma` change of a rejected step, `-(1/4) ln alpha`.
    pub fn ln_failure_factor(&self) -> f64 {
        -0.25 * self.alpha.ln()
    }
}

/// Mean and step size of the ES.
///
/// The step size is held as `sigma0 * alpha^(k/4)` with an integer
/// quarter-step counter `k`, so one success and four failures restore it
/// bit-exactly. [`EsState::sigma`] materializes it.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub m: Vec<f64>,
    pub t: u64,
    base_sigma: f64,
    quarter_steps: i64,
    sigma: f64,
}

impl EsState {
    pub fn new(m: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be positive and finite, got {sigma}")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("m", "must be finite"));
        }
        Ok(EsState {
            m,
            t: 0,
            base_sigma: sigma,
            quarter_steps: 0,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Net step-size exponent in units of `(1/4) ln alpha`: `4 * accepts - rejects`.
    pub fn quarter_steps(&self) -> i64 {
        self.quarter_steps
    }

    /// Same state with mean and step size multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut s = EsState::new(self.m.iter().map(|v| c * v).collect(), c * self.base_sigma)?;
        s.t = self.t;
        s.quarter_steps = self.quarter_steps;
        s.sigma = c * self.sigma;
        Ok(s)
    }

    fn adapt(&mut self, alpha: f64, accepted: bool) {
        self.quarter_steps += if accepted { 4 } else { -1 };
        self.sigma = self.base_sigma * alpha.powf(self.quarter_steps as f64 / 4.0);
    }
}

impl Serialize for EsState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            m: &'a [f64],
            sigma: f64,
            t: u64,
        }
        View {
            m: &self.m,
            sigma: self.sigma,
            t: self.t,
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub offspring: Vec<f64>,
    pub offspring_f: f64,
    pub new_state: EsState,
}

/// `m + sigma * z` for a given standard normal vector `z`.
pub fn offspring_from_draws(m: &[f64], sigma: f64, z: &[f64]) -> Vec<f64> {
    m.iter().zip(z).map(|(mi, zi)| mi + sigma * zi).collect()
}

/// Draws `x ~ N(m, sigma^2 I)`, consuming exactly `d` normals.
pub fn sample_offspring<R: Rng + ?Sized>(state: &EsState, rng: &mut R) -> Vec<f64> {
    let mut z = vec![0.0; state.dim()];
    fill_standard_normal(rng, &mut z);
    offspring_from_draws(&state.m, state.sigma, &z)
}

/// One iteration of the ES.
///
/// Fails with [`Error::StepSizeUnderflow`] when the updated step size drops
/// below `params.sigma_min`.
pub fn step<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    params: &EsParams,
    state: &EsState,
    rng: &mut R,
) -> Result<StepOutcome> {
    problem.check_dim(&state.m)?;
    let offspring = sample_offspring(state, rng);
    step_with_offspring(problem, params, state, offspring)
}

/// Selection and step-size update for a given offspring.
pub fn step_with_offspring(
    problem: &SaddleProblem,
    params: &EsParams,
    state: &EsState,
    offspring: Vec<f64>,
) -> Result<StepOutcome> {
    params.validate()?;
    problem.check_dim(&state.m)?;
    problem.check_dim(&offspring)?;
    if !(state.sigma > params.sigma_min) {
        return Err(invalid("sigma", "must exceed sigma_min"));
    }
    let offspring_f = problem.f(&offspring);
    let accepted = offspring_f <= problem.f(&state.m);
    let mut new_state = state.clone();
    if accepted {
        new_state.m.copy_from_slice(&offspring);
    }
    new_state.adapt(params.alpha, accepted);
    new_state.t += 1;
    if new_state.sigma < params.sigma_min {
        return Err(Error::StepSizeUnderflow {
            sigma: new_state.sigma,
            t: new_state.t,
        });
    }
    Ok(StepOutcome {
        accepted,
        offspring,
        offspring_f,
        new_state,
    })
}

/// Pluggable termination test, checked before every iteration (including t = 0).
pub trait StopCondition {
    fn is_met(&self, problem: &SaddleProblem, state: &EsState, f: f64) -> bool;
}

/// Stop once the mean is in `D_a^-`, i.e. `f(m) < 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReachNegative;

impl StopCondition for ReachNegative {
    fn is_met(&self, _: &SaddleProblem, _: &EsState, f: f64) -> bool {
        f < 0.0
    }
}

/// Run until the budget is exhausted.
#[derive(Debug, Clone, Copy, Default)]
pub struct BudgetOnly;

impl StopCondition for BudgetOnly {
    fn is_met(&self, _: &SaddleProblem, _: &EsState, _: f64) -> bool {
        false
    }
}

impl<F> StopCondition for F
where
    F: Fn(&SaddleProblem, &EsState, f64) -> bool,
{
    fn is_met(&self, problem: &SaddleProblem, state: &EsState, f: f64) -> bool {
        self(problem, state, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Budget,
    TargetReached,
    SigmaUnderflow,
}

/// Which iterations a run keeps in its trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordPolicy {
    /// Every iteration.
    Full,
    /// Every k-th iteration plus every accepted step.
    Every(u64),
    /// Initial and final state only.
    Summary,
}

impl Default for RecordPolicy {
    fn default() -> Self {
        RecordPolicy::Every(DEFAULT_TRACE_EVERY)
    }
}

impl RecordPolicy {
    fn keeps(self, t: u64, accepted: bool) -> bool {
        match self {
            RecordPolicy::Full => true,
            RecordPolicy::Every(k) => accepted || t.is_multiple_of(k.max(1)),
            RecordPolicy::Summary => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub m: Vec<f64>,
    pub sigma: f64,
    pub f: f64,
    /// Whether the step leading to this state was accepted; false at t = 0.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub reason: TerminalReason,
    pub final_state: EsState,
    pub final_f: f64,
    pub accepts: u64,
    pub rejects: u64,
    /// First `t` with `f(m_t) < 0`.
    pub t_escape: Option<u64>,
}

impl RunTrace {
    pub fn iterations(&self) -> u64 {
        self.final_state.t
    }
}

/// Iterates [`step`] until `stop` fires, the budget runs out, or the step
/// size underflows. Underflow is a terminal reason, not an error.
pub fn run<R, S>(
    problem: &SaddleProblem,
    params: &EsParams,
    init: &EsState,
    rng: &mut R,
    stop: &S,
    policy: RecordPolicy,
) -> Result<RunTrace>
where
    R: Rng + ?Sized,
    S: StopCondition + ?Sized,
{
    params.validate()?;
    problem.check_dim(&init.m)?;
    if !(init.sigma > params.sigma_min) {
        return Err(invalid("sigma0", "must exceed sigma_min"));
    }

    let d = problem.dim();
    let mut state = init.clone();
    let mut f_m = problem.f(&state.m);
    let mut records = vec![TraceRecord {
        t: state.t,
        m: state.m.clone(),
        sigma: state.sigma,
        f: f_m,
        accepted: false,
    }];
    let mut t_escape = (f_m < 0.0).then_some(state.t);
    let mut accepts = 0;
    let mut rejects = 0;
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut last_accepted = false;

    let reason = loop {
        if stop.is_met(problem, &state, f_m) {
            break TerminalReason::TargetReached;
        }
        if state.t - init.t >= params.max_iters {
            break TerminalReason::Budget;
        }
        fill_standard_normal(rng, &mut z);
        for i in 0..d {
            x[i] = state.m[i] + state.sigma * z[i];
        }
        let f_x = problem.f(&x);
        let accepted = f_x <= f_m;
        if accepted {
            std::mem::swap(&mut state.m, &mut x);
            f_m = f_x;
            accepts += 1;
        } else {
            rejects += 1;
        }
        state.adapt(params.alpha, accepted);
        state.t += 1;
        last_accepted = accepted;
        if t_escape.is_none() && f_m < 0.0 {
            t_escape = Some(state.t);
        }
        if policy.keeps(state.t, accepted) {
            records.push(TraceRecord {
                t: state.t,
                m: state.m.clone(),
                sigma: state.sigma,
                f: f_m,
                accepted,
            });
        }
        if state.sigma < params.sigma_min {
            break TerminalReason::SigmaUnderflow;
        }
    };

    if records.last().map(|r| r.t) != Some(state.t) {
        records.push(TraceRecord {
            t: state.t,
            m: state.m.clone(),
            sigma: state.sigma,
            f: f_m,
            accepted: last_accepted,
        });
    }

    Ok(RunTrace {
        records,
        reason,
        final_state: state,
        final_f: f_m,
        accepts,
        rejects,
        t_escape,
    })
}

/// Region labels of the recorded means, exact sign test.
pub fn trace_regions(problem: &SaddleProblem, trace: &RunTrace) -> Vec<Region> {
    trace
        .records
        .iter()
        .map(|r| problem.region_of(r.f, 0.0))
        .collect()
}
