use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use saddle_es::es::{DEFAULT_ALPHA, DEFAULT_SIGMA_MIN, DEFAULT_TRACE_EVERY};
use saddle_es::estimators::{self, DriftEstimate, PairingReport, DEFAULT_CONFIDENCE};
use saddle_es::experiments::{self, DriftRow, HittingTimeStats, InitialMean, DEFAULT_TAIL_RANGE, DEFAULT_TRIALS, INITIAL_SIGMA_SWEEP};
use saddle_es::grid::{GridSpec, Scale};
use saddle_es::io::{self as out_io, fmt_f64, CsvWriter, Quantity};
use saddle_es::normalized::{m_plus_0_state, DEFAULT_BETA};
use saddle_es::rng::{derived_stream, stream};
use saddle_es::{run, EsParams, EsState, EscapeExperimentSpec, ReachNegative, RecordPolicy, SaddleProblem, TerminalReason};

use crate::{CliError, Command, Settings, EXIT_CENSORED, EXIT_CHECK_FAILED, EXIT_OK, EXIT_UNDERFLOW};

pub const DEFAULT_DRIFT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SUCC_SAMPLES: u64 = 1_000_000;
pub const DEFAULT_PAIRING_SAMPLES: u64 = 100_000;
pub const DEFAULT_PAIRING_W: f64 = 0.9;
pub const DEFAULT_RADII: [f64; 3] = [0.1, 1.0, 10.0];
pub const DEFAULT_LEVEL_GRID: &str = "lin:-2:2:81";

type CmdResult = Result<i32, CliError>;

pub fn dispatch(cmd: Command, s: &Settings, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Run => cmd_run(s, stdout),
        Command::Escape => cmd_escape(s, stdout),
        Command::DriftMap => cmd_drift_map(s, stdout, stderr),
        Command::Constants => cmd_constants(s, stdout),
        Command::SuccProb => cmd_succ_prob(s, stdout),
        Command::Pairing => cmd_pairing(s, stdout, stderr),
        Command::Levels => cmd_levels(s, stdout),
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn problem(s: &Settings) -> Result<SaddleProblem, CliError> {
    let a = s.a.clone().ok_or_else(|| config_err("missing --a"))?;
    let b = s.b.ok_or_else(|| config_err("missing --b"))?;
    Ok(SaddleProblem::new(a.0, b)?)
}

/// Returns the parameters and whether the budget came from the heuristic.
fn params(s: &Settings, p: &SaddleProblem) -> Result<(EsParams, &'static str), CliError> {
    let (budget, source) = match s.budget {
        Some(b) => (b, "configured"),
        None => (experiments::default_budget(p), "heuristic"),
    };
    let params = EsParams::new(s.alpha.unwrap_or(DEFAULT_ALPHA), budget)?.with_sigma_min(s.sigma_min.unwrap_or(DEFAULT_SIGMA_MIN))?;
    Ok((params, source))
}

fn grid(spec: Option<&str>, default: GridSpec, scale: Scale) -> Result<Vec<f64>, CliError> {
    Ok(match spec {
        Some(text) => GridSpec::parse(text, scale)?.values(),
        None => default.values(),
    })
}

fn w_grid(s: &Settings) -> Result<Vec<f64>, CliError> {
    grid(s.w_grid.as_deref(), GridSpec::default_w(), Scale::Linear)
}

fn sigma_grid(s: &Settings) -> Result<Vec<f64>, CliError> {
    grid(s.sigma_grid.as_deref(), GridSpec::default_sigma(), Scale::Log)
}

fn seed(s: &Settings) -> u64 {
    s.seed.unwrap_or(0)
}

fn emit(path: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(s: &Settings, stdout: &mut dyn Write, kind: &str, body: &T) -> Result<(), CliError> {
    let text = out_io::to_json_string(&out_io::envelope(kind, body)?)?;
    emit(s.out.as_deref(), stdout, text.as_bytes())
}

/// `+inf` as `"inf"`, finite values as numbers.
fn json_f64(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::from("inf")
    } else {
        Value::from(x)
    }
}

/// Raw initial state from `--m0`/`--sigma0`, or from `--w`/`--sigma-tilde0` on M+_0.
fn initial_state(s: &Settings, p: &SaddleProblem) -> Result<EsState, CliError> {
    match &s.m0 {
        Some(m0) => {
            p.check_dim(&m0.0)?;
            let sigma = match (s.sigma0, s.sigma_tilde0) {
                (Some(_), Some(_)) => return Err(config_err("give --sigma0 or --sigma-tilde0, not both")),
                (Some(sig), None) => sig,
                (None, Some(st)) => st * p.norm_plus(&m0.0)?,
                (None, None) => 1.0,
            };
            Ok(EsState::new(m0.0.clone(), sigma)?)
        }
        None => {
            if s.sigma0.is_some() {
                return Err(config_err("--sigma0 needs --m0; use --sigma-tilde0 with --w"));
            }
            Ok(m_plus_0_state(p, s.w.unwrap_or(0.0), s.sigma_tilde0.unwrap_or(1.0))?.to_state())
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    problem: &'a SaddleProblem,
    params: EsParams,
    budget_source: &'static str,
    seed: u64,
    m0: &'a [f64],
    sigma0: f64,
    reason: TerminalReason,
    iterations: u64,
    accepts: u64,
    rejects: u64,
    t_escape: Option<u64>,
    final_m: &'a [f64],
    final_sigma: f64,
    final_f: f64,
    final_region: saddle_es::Region,
}

pub fn cmd_run(s: &Settings, stdout: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let (params, budget_source) = params(s, &p)?;
    let init = initial_state(s, &p)?;
    let policy = match s.record_every {
        Some(0) => return Err(config_err("--record-every must be at least 1")),
        Some(k) => RecordPolicy::Every(k),
        None => RecordPolicy::Every(DEFAULT_TRACE_EVERY),
    };
    let mut rng = stream(seed(s));
    let trace = run(&p, &params, &init, &mut rng, &ReachNegative, policy)?;
    if let Some(path) = &s.trace_out {
        std::fs::write(path, out_io::write_trace_csv(Vec::new(), &trace)?)?;
    }
    emit_json(
        s,
        stdout,
        "run",
        &RunSummary {
            problem: &p,
            params,
            budget_source,
            seed: seed(s),
            m0: &init.m,
            sigma0: init.sigma(),
            reason: trace.reason,
            iterations: trace.iterations(),
            accepts: trace.accepts,
            rejects: trace.rejects,
            t_escape: trace.t_escape,
            final_m: &trace.final_state.m,
            final_sigma: trace.final_state.sigma(),
            final_f: trace.final_f,
            final_region: p.region_of(trace.final_f, 0.0),
        },
    )?;
    Ok(match trace.reason {
        TerminalReason::TargetReached => EXIT_OK,
        TerminalReason::Budget => EXIT_CENSORED,
        TerminalReason::SigmaUnderflow => EXIT_UNDERFLOW,
    })
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    sigma_tilde0: f64,
    #[serde(flatten)]
    stats: &'a HittingTimeStats,
}

#[derive(Serialize)]
struct EscapeReport<'a> {
    problem: &'a SaddleProblem,
    params: EsParams,
    budget_source: &'static str,
    initial: &'a InitialMean,
    trials: u64,
    seed: u64,
    tail_range: (f64, f64),
    runs: Vec<SweepEntry<'a>>,
}

pub fn cmd_escape(s: &Settings, stdout: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let (params, budget_source) = params(s, &p)?;
    let initial = match &s.m0 {
        Some(m0) => InitialMean::Explicit(m0.0.clone()),
        None => InitialMean::OnMPlus0 { w: s.w.unwrap_or(0.0) },
    };
    if s.sigma0.is_some() {
        return Err(config_err("escape takes --sigma-tilde0, not --sigma0"));
    }
    let mut spec = EscapeExperimentSpec::new(p.clone(), params, initial, s.sigma_tilde0.unwrap_or(1.0), s.trials.unwrap_or(DEFAULT_TRIALS), seed(s));
    if let Some(r) = &s.tail_range {
        let [lo, hi] = r.0[..] else {
            return Err(config_err("--tail-range takes two values"));
        };
        spec.tail_range = (lo, hi);
    } else {
        spec.tail_range = DEFAULT_TAIL_RANGE;
    }
    spec.validate()?;

    let sigmas: Vec<f64> = if s.sweep {
        if s.sigma_tilde0.is_some() {
            return Err(config_err("--sweep fixes sigma~0; drop --sigma-tilde0"));
        }
        INITIAL_SIGMA_SWEEP.to_vec()
    } else {
        vec![spec.sigma_tilde0]
    };
    let results = experiments::run_escape_sweep(&spec, &sigmas)?;

    if let Some(path) = &s.survival_out {
        let mut header = vec!["t", "S"];
        if s.sweep {
            header.insert(0, "sigma_tilde0");
        }
        let mut w = CsvWriter::new(Vec::new(), &header)?;
        for (sig, st) in &results {
            for pt in &st.survival {
                let mut row = vec![pt.t.to_string(), fmt_f64(pt.s)];
                if s.sweep {
                    row.insert(0, fmt_f64(*sig));
                }
                w.row(&row)?;
            }
        }
        std::fs::write(path, w.finish()?)?;
    }

    let report = EscapeReport {
        problem: &p,
        params,
        budget_source,
        initial: &spec.initial,
        trials: spec.trials,
        seed: spec.seed,
        tail_range: spec.tail_range,
        runs: results
            .iter()
            .map(|(sig, st)| SweepEntry {
                sigma_tilde0: *sig,
                stats: st,
            })
            .collect(),
    };
    emit_json(s, stdout, "escape", &report)?;

    let stats = results.iter().map(|(_, st)| st);
    Ok(if stats.clone().any(|st| st.underflows > 0) {
        EXIT_UNDERFLOW
    } else if stats.clone().all(|st| st.escaped == st.trials) {
        EXIT_OK
    } else {
        EXIT_CENSORED
    })
}

fn quantity(s: &Settings) -> Result<Quantity, CliError> {
    match &s.quantity {
        None => Ok(Quantity::W),
        Some(q) => Quantity::parse(q).ok_or_else(|| config_err(format!("unknown quantity `{q}`; use V, W or Phi"))),
    }
}

pub fn cmd_drift_map(s: &Settings, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let (params, _) = params(s, &p)?;
    let q = quantity(s)?;
    let rows: Vec<DriftRow> = experiments::drift_map(
        &p,
        &params,
        &w_grid(s)?,
        &sigma_grid(s)?,
        s.n.unwrap_or(DEFAULT_DRIFT_SAMPLES),
        seed(s),
        s.beta.unwrap_or(DEFAULT_BETA),
        s.confidence.unwrap_or(DEFAULT_CONFIDENCE),
    )?;
    emit(s.out.as_deref(), stdout, &out_io::write_drift_csv(Vec::new(), &rows, q)?)?;
    if s.check_positive {
        let bad: Vec<&DriftRow> = rows.iter().filter(|r| !(q.pick(r).ci_low > 0.0)).collect();
        if !bad.is_empty() {
            writeln!(stderr, "{} of {} grid points have ci_low <= 0", bad.len(), rows.len())?;
            for r in bad.iter().take(10) {
                writeln!(stderr, "  w = {}, sigma_tilde = {}: ci_low = {}", r.w, r.sigma_tilde, q.pick(r).ci_low)?;
            }
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_constants(s: &Settings, stdout: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let (params, _) = params(s, &p)?;
    let n = s.n.unwrap_or(DEFAULT_DRIFT_SAMPLES);
    let (wg, sg) = (w_grid(s)?, sigma_grid(s)?);
    let report = estimators::estimate_constants(&p, &params, &wg, &sg, n, seed(s), s.confidence.unwrap_or(DEFAULT_CONFIDENCE))?;

    let mut body = serde_json::to_value(report.constants)?;
    let obj = body.as_object_mut().expect("struct serializes to an object");
    obj.insert("problem".into(), serde_json::to_value(&p)?);
    obj.insert("n".into(), Value::from(n));
    obj.insert("w_grid".into(), Value::from(wg.clone()));
    obj.insert("sigma_grid".into(), Value::from(sg.clone()));
    obj.insert("sigma_tilde_40_by_w".into(), Value::from(report.sigma_40_by_w.iter().map(|&x| json_f64(x)).collect::<Vec<_>>()));
    obj.insert("sigma_tilde_star_by_w".into(), Value::from(report.sigma_star_by_w.clone()));
    obj.insert("C_at".into(), serde_json::json!({ "w": report.c_at.0, "sigma_tilde": report.c_at.1 }));
    emit_json(s, stdout, "constants", &body)?;
    Ok(if report.constants.theta > 0.0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct SuccProbReport<'a> {
    problem: &'a SaddleProblem,
    seed: u64,
    m: &'a [f64],
    sigma: f64,
    p_succ: DriftEstimate,
    /// Closed form at the saddle point, two dimensions only.
    saddle_analytic: Option<f64>,
}

pub fn cmd_succ_prob(s: &Settings, stdout: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let state = match &s.m0 {
        // The saddle itself has no normalized state; allow it here.
        Some(m0) if m0.0.iter().all(|&x| x == 0.0) && s.sigma_tilde0.is_none() => {
            p.check_dim(&m0.0)?;
            EsState::new(m0.0.clone(), s.sigma0.unwrap_or(1.0))?
        }
        _ => initial_state(s, &p)?,
    };
    let n = s.n.unwrap_or(DEFAULT_SUCC_SAMPLES);
    let est = estimators::success_probability_at(&p, &state, n, &mut stream(seed(s)), s.confidence.unwrap_or(DEFAULT_CONFIDENCE))?;
    let at_saddle = state.m.iter().all(|&x| x == 0.0);
    emit_json(
        s,
        stdout,
        "succ_prob",
        &SuccProbReport {
            problem: &p,
            seed: seed(s),
            m: &state.m,
            sigma: state.sigma(),
            p_succ: est,
            saddle_analytic: if at_saddle && p.dim() == 2 {
                Some(estimators::saddle_success_analytic_2d(&p)?)
            } else {
                None
            },
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PairingOutput<'a> {
    problem: &'a SaddleProblem,
    seed: u64,
    w: f64,
    m_tilde: &'a [f64],
    eps: f64,
    violations: u64,
    checks: Vec<PairingReport>,
}

pub fn cmd_pairing(s: &Settings, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    let w = s.w.unwrap_or(DEFAULT_PAIRING_W);
    let ns = m_plus_0_state(&p, w, 1.0)?;
    let radii = s.radii.as_ref().map(|r| r.0.clone()).unwrap_or_else(|| DEFAULT_RADII.to_vec());
    let n = s.n.unwrap_or(DEFAULT_PAIRING_SAMPLES);
    let checks = radii
        .iter()
        .enumerate()
        .map(|(i, &r)| estimators::pairing_check(&p, &ns.m_tilde, r, n, &mut derived_stream(seed(s), i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let violations: u64 = checks.iter().map(|c| c.violations).sum();
    emit_json(
        s,
        stdout,
        "pairing",
        &PairingOutput {
            problem: &p,
            seed: seed(s),
            w,
            m_tilde: &ns.m_tilde,
            eps: estimators::PAIRING_EPS,
            violations,
            checks,
        },
    )?;
    if violations > 0 {
        writeln!(stderr, "{violations} pairing margins below -{}", estimators::PAIRING_EPS)?;
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

pub fn cmd_levels(s: &Settings, stdout: &mut dyn Write) -> CmdResult {
    let p = problem(s)?;
    if p.dim() != 2 {
        return Err(config_err(format!("levels needs d = 2, got d = {}", p.dim())));
    }
    let default = || GridSpec::parse(DEFAULT_LEVEL_GRID, Scale::Linear).expect("valid default grid");
    let x1 = grid(s.x1_grid.as_deref(), default(), Scale::Linear)?;
    let x2 = grid(s.x2_grid.as_deref(), default(), Scale::Linear)?;
    let mut w = CsvWriter::new(Vec::new(), &["x1", "x2", "f", "region"])?;
    for &u in &x1 {
        for &v in &x2 {
            let f = p.evaluate(&[u, v])?;
            w.row(&[fmt_f64(u), fmt_f64(v), fmt_f64(f), p.region_of(f, 0.0).to_string()])?;
        }
    }
    emit(s.out.as_deref(), stdout, &w.finish()?)?;
    Ok(EXIT_OK)
}
