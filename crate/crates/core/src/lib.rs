//! The (1+1)-ES with 1/5-success rule on quadratic saddle points
//! `f_a(x) = sum_i a_i x_i^2`.
//!
//! * [`problem`]: the saddle family, semi-norms and region labels.
//! * [`es`]: the algorithm, seeded runs and traces.
//! * [`normalized`]: the scale-free state `(m~, sigma~)` and the potentials `V`, `W`, `Phi`.
//! * [`estimators`]: Monte Carlo success probabilities, drifts and drift constants.
//! * [`experiments`]: escape-time experiments and drift maps.
//!
//! ```
//! use saddle_es::{run, EsParams, EsState, ReachNegative, RecordPolicy, SaddleProblem};
//!
//! let p = SaddleProblem::planar(-1.0, 20.0).unwrap();
//! let init = EsState::new(vec![0.0, 1.0], 0.1).unwrap();
//! let mut rng = saddle_es::rng::stream(42);
//! let trace = run(&p, &EsParams::default(), &init, &mut rng, &ReachNegative, RecordPolicy::Summary).unwrap();
//! assert!(trace.final_f < 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod es;
pub mod estimators;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod normalized;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
pub use es::{
    run, step, BudgetOnly, EsParams, EsState, ReachNegative, RecordPolicy, RunTrace, StopCondition,
    TerminalReason, TraceRecord,
};
pub use estimators::{DriftConstants, DriftEstimate};
pub use experiments::{EscapeExperimentSpec, HittingTimeStats, InitialMean};
pub use grid::{GridSpec, Scale};
pub use normalized::{normalize, potentials, NormalizedState, PotentialValues};
pub use problem::{Region, SaddleProblem};
