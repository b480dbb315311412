//! Scale-free view of the ES state.
//!
//! A raw state `(m, sigma)` maps to `(m / ||m||_+, sigma / ||m||_+)`. All
//! states on a ray through the origin collapse to one normalized state, so
//! success probabilities and drifts are functions of `(m~, sigma~)` only.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::es::EsState;
use crate::problem::SaddleProblem;
use crate::rng::fill_standard_normal;

/// Tolerance on `||m~||_+ = 1` and on the boundary `||m~||_- = 1` of `M+_0`.
pub const UNIT_TOL: f64 = 1e-12;

/// Fallback trade-off weight for `Phi` before the drift constants are known.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedState {
    pub m_tilde: Vec<f64>,
    pub sigma_tilde: f64,
}

impl NormalizedState {
    /// Validates `||m~||_+ = 1` and `sigma~ > 0`.
    pub fn new(problem: &SaddleProblem, m_tilde: Vec<f64>, sigma_tilde: f64) -> Result<Self> {
        problem.check_dim(&m_tilde)?;
        if !(sigma_tilde > 0.0 && sigma_tilde.is_finite()) {
            return Err(invalid("sigma_tilde", format!("must be positive and finite, got {sigma_tilde}")));
        }
        let np = problem.norm_plus_sq(&m_tilde).sqrt();
        if (np - 1.0).abs() > UNIT_TOL {
            return Err(invalid("m_tilde", format!("||m~||_+ = {np}, expected 1")));
        }
        Ok(NormalizedState { m_tilde, sigma_tilde })
    }

    /// The raw state at scale 1, i.e. `m = m~`, `sigma = sigma~`.
    pub fn to_state(&self) -> EsState {
        EsState::new(self.m_tilde.clone(), self.sigma_tilde).expect("normalized state is valid")
    }

    pub fn with_sigma(&self, sigma_tilde: f64) -> Self {
        NormalizedState {
            m_tilde: self.m_tilde.clone(),
            sigma_tilde,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialValues {
    /// `ln sigma~`
    pub v: f64,
    /// `||m~||_-`
    pub w: f64,
    /// `beta * V + W`
    pub phi: f64,
}

pub fn normalize(problem: &SaddleProblem, state: &EsState) -> Result<NormalizedState> {
    normalize_raw(problem, &state.m, state.sigma())
}

pub fn normalize_raw(problem: &SaddleProblem, m: &[f64], sigma: f64) -> Result<NormalizedState> {
    problem.check_dim(m)?;
    let np = problem.norm_plus_sq(m).sqrt();
    if np == 0.0 {
        return Err(Error::NormPlusZero);
    }
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    Ok(NormalizedState {
        m_tilde: m.iter().map(|v| v / np).collect(),
        sigma_tilde: sigma / np,
    })
}

/// `W(m) = ||m||_- / ||m||_+`, computed from the semi-norms rather than from `f`.
pub fn w_of(problem: &SaddleProblem, m: &[f64]) -> Result<f64> {
    problem.check_dim(m)?;
    let np = problem.norm_plus_sq(m).sqrt();
    if np == 0.0 {
        return Err(Error::NormPlusZero);
    }
    Ok(problem.norm_minus_sq(m).sqrt() / np)
}

pub fn potentials(problem: &SaddleProblem, ns: &NormalizedState, beta: f64) -> Result<PotentialValues> {
    if !(beta > 0.0) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    let v = ns.sigma_tilde.ln();
    let w = w_of(problem, &ns.m_tilde)?;
    Ok(PotentialValues {
        v,
        w,
        phi: beta * v + w,
    })
}

/// Potentials of a raw state, through its normalization.
pub fn state_potentials(problem: &SaddleProblem, state: &EsState, beta: f64) -> Result<PotentialValues> {
    potentials(problem, &normalize(problem, state)?, beta)
}

/// `m~ in M+_0`, i.e. `||m~||_- <= 1` with the boundary `D_a^0` included.
pub fn in_m_plus_0(problem: &SaddleProblem, ns: &NormalizedState) -> bool {
    problem.norm_minus_sq(&ns.m_tilde).sqrt() <= 1.0 + UNIT_TOL
}

/// A normalized mean with `||m~||_+ = 1` and `||m~||_- = w`.
///
/// Without a stream the direction is deterministic: all negative-subspace
/// mass on axis 1 and all positive mass on axis `b+1`, giving
/// `(w/sqrt|a_1|, 1/sqrt a_2)` in two dimensions. With a stream, directions in
/// each subspace are drawn uniformly in the whitened coordinates, which in
/// two dimensions amounts to random signs.
pub fn sample_m_plus_0<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    w: f64,
    rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&w) {
        return Err(invalid("w", format!("must lie in [0, 1], got {w}")));
    }
    let d = problem.dim();
    let b = problem.split();
    let a = problem.coefficients();
    let mut u = vec![0.0; d];
    match rng {
        None => {
            u[0] = 1.0;
            u[b] = 1.0;
        }
        Some(rng) => loop {
            fill_standard_normal(rng, &mut u);
            let nm: f64 = u[..b].iter().map(|v| v * v).sum();
            let np: f64 = u[b..].iter().map(|v| v * v).sum();
            if nm > 0.0 && np > 0.0 {
                let (nm, np) = (nm.sqrt(), np.sqrt());
                u[..b].iter_mut().for_each(|v| *v /= nm);
                u[b..].iter_mut().for_each(|v| *v /= np);
                break;
            }
        },
    }
    // Whitened unit directions mapped back: x_i = u_i / sqrt|a_i|.
    Ok((0..d)
        .map(|i| {
            let scale = if i < b { w } else { 1.0 };
            scale * u[i] / a[i].abs().sqrt()
        })
        .collect())
}

/// [`sample_m_plus_0`] with the deterministic direction, as a normalized state.
pub fn m_plus_0_state(problem: &SaddleProblem, w: f64, sigma_tilde: f64) -> Result<NormalizedState> {
    let m = sample_m_plus_0::<crate::rng::Stream>(problem, w, None)?;
    NormalizedState::new(problem, m, sigma_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Region;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn p(a1: f64, a2: f64) -> SaddleProblem {
        SaddleProblem::planar(a1, a2).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let ns = normalize_raw(&p(-1.0, 1.0), &[3.0, 2.0], 1.0).unwrap();
        assert_eq!(ns.m_tilde, vec![1.5, 1.0]);
        assert_eq!(ns.sigma_tilde, 0.5);

        let ns = normalize_raw(&p(-1.0, 1.0), &[0.0, 1.0], 2.0).unwrap();
        assert_eq!(ns.m_tilde, vec![0.0, 1.0]);
        assert_eq!(ns.sigma_tilde, 2.0);

        let prob = p(-4.0, 1.0);
        let ns = normalize_raw(&prob, &[1.0, 2.0], 4.0).unwrap();
        assert_eq!(ns.m_tilde, vec![0.5, 1.0]);
        assert_eq!(ns.sigma_tilde, 2.0);
        assert_eq!(w_of(&prob, &ns.m_tilde).unwrap(), 1.0);
    }

    #[test]
    fn normalize_rejects_zero_plus_norm() {
        assert_eq!(normalize_raw(&p(-1.0, 1.0), &[3.0, 0.0], 1.0), Err(Error::NormPlusZero));
        assert_eq!(w_of(&p(-1.0, 1.0), &[0.0, 0.0]), Err(Error::NormPlusZero));
    }

    #[test]
    fn potentials_examples() {
        let prob = p(-1.0, 1.0);
        let ns = NormalizedState::new(&prob, vec![0.5, 1.0], 1.0).unwrap();
        let pv = potentials(&prob, &ns, 1.0).unwrap();
        assert_eq!(pv.v, 0.0);
        assert_eq!(pv.w, 0.5);
        assert_eq!(pv.phi, 0.5);

        let ns = ns.with_sigma(3.0);
        let pv = potentials(&prob, &ns, 1.0).unwrap();
        assert_eq!(pv.phi, 0.5 + 3f64.ln());

        let raw = EsState::new(vec![3.0, 2.0], 1.0).unwrap();
        let pv = state_potentials(&prob, &raw, 1.0).unwrap();
        assert_eq!(pv.w, 1.5);
        assert_eq!(prob.evaluate(&raw.m).unwrap(), -5.0);

        assert!(potentials(&prob, &ns, 0.0).is_err());
    }

    #[test]
    fn phi_is_affine_in_beta() {
        let prob = p(-1.0, 20.0);
        let ns = m_plus_0_state(&prob, 0.3, 0.2).unwrap();
        let phis: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&b| potentials(&prob, &ns, b).unwrap().phi)
            .collect();
        let v = ns.sigma_tilde.ln();
        assert!(((phis[1] - phis[0]) / 0.5 - v).abs() < 1e-12);
        assert!(((phis[2] - phis[1]) / 1.0 - v).abs() < 1e-12);
    }

    #[test]
    fn m_plus_0_membership() {
        let prob = p(-1.0, 1.0);
        let inside = |m: Vec<f64>| in_m_plus_0(&prob, &NormalizedState::new(&prob, m, 1.0).unwrap());
        assert!(inside(vec![0.0, 1.0]));
        assert!(inside(vec![1.0, 1.0]));
        assert!(inside(vec![1.0 + 1e-13, 1.0]));
        assert!(!inside(vec![1.5, 1.0]));
    }

    #[test]
    fn m_plus_0_parametrization() {
        let none = None::<&mut crate::rng::Stream>;
        assert_eq!(sample_m_plus_0(&p(-1.0, 1.0), 0.0, none).unwrap(), vec![0.0, 1.0]);
        assert_eq!(sample_m_plus_0::<crate::rng::Stream>(&p(-1.0, 1.0), 1.0, None).unwrap(), vec![1.0, 1.0]);
        assert_eq!(sample_m_plus_0::<crate::rng::Stream>(&p(-4.0, 1.0), 1.0, None).unwrap(), vec![0.5, 1.0]);
        assert!(sample_m_plus_0::<crate::rng::Stream>(&p(-1.0, 1.0), 1.5, None).is_err());
        assert!(sample_m_plus_0::<crate::rng::Stream>(&p(-1.0, 1.0), -0.1, None).is_err());
        assert!(sample_m_plus_0::<crate::rng::Stream>(&p(-1.0, 1.0), f64::NAN, None).is_err());
    }

    #[test]
    fn randomized_m_plus_0_hits_the_requested_level() {
        let prob = SaddleProblem::new(vec![-2.0, -0.5, 3.0, 10.0, 0.1], 2).unwrap();
        let mut rng = stream(4);
        for &w in &[0.0, 0.3, 1.0] {
            for _ in 0..20 {
                let m = sample_m_plus_0(&prob, w, Some(&mut rng)).unwrap();
                assert!((prob.norm_plus(&m).unwrap() - 1.0).abs() < 1e-12);
                assert!((prob.norm_minus(&m).unwrap() - w).abs() < 1e-12);
            }
        }
    }

    fn raw_state() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-5.0f64..5.0, 1), 0.05f64..5.0, 1e-3f64..10.0)
            .prop_map(|(neg, pos, sigma)| (vec![neg[0], pos], sigma))
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent_and_scale_free((m, sigma) in raw_state(), c in 1e-3f64..1e3, k in -20i32..20) {
            let prob = p(-2.0, 7.0);
            let ns = normalize_raw(&prob, &m, sigma).unwrap();
            let again = normalize_raw(&prob, &ns.m_tilde, ns.sigma_tilde).unwrap();
            for (x, y) in ns.m_tilde.iter().zip(&again.m_tilde) {
                prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
            }
            prop_assert!((ns.sigma_tilde - again.sigma_tilde).abs() <= 1e-15 * ns.sigma_tilde);

            // Arbitrary c: equal up to roundoff.
            let cm: Vec<f64> = m.iter().map(|v| c * v).collect();
            let scaled = normalize_raw(&prob, &cm, c * sigma).unwrap();
            for (x, y) in ns.m_tilde.iter().zip(&scaled.m_tilde) {
                prop_assert!((x - y).abs() <= 4e-16 * x.abs().max(1.0) * 4.0);
            }
            prop_assert!((ns.sigma_tilde - scaled.sigma_tilde).abs() <= 1e-15 * ns.sigma_tilde);

            // Powers of two: bit-exact.
            let c2 = 2f64.powi(k);
            let cm: Vec<f64> = m.iter().map(|v| c2 * v).collect();
            let exact = normalize_raw(&prob, &cm, c2 * sigma).unwrap();
            prop_assert_eq!(exact, ns);
        }

        #[test]
        fn w_threshold_matches_region((m, sigma) in raw_state()) {
            let prob = p(-3.0, 0.5);
            let ns = normalize_raw(&prob, &m, sigma).unwrap();
            let w = w_of(&prob, &ns.m_tilde).unwrap();
            let region = prob.classify(&m, 0.0).unwrap();
            if (w - 1.0).abs() > 1e-12 {
                prop_assert_eq!(region == Region::Negative, w > 1.0);
                prop_assert_eq!(region == Region::Positive, w < 1.0);
            }
            prop_assert!(in_m_plus_0(&prob, &ns) == (w <= 1.0 + UNIT_TOL));
        }
    }

    #[test]
    fn w_threshold_on_level_set() {
        let prob = p(-1.0, 1.0);
        let ns = normalize_raw(&prob, &[2.0, 2.0], 1.0).unwrap();
        assert_eq!(w_of(&prob, &ns.m_tilde).unwrap(), 1.0);
        assert_eq!(prob.classify(&[2.0, 2.0], 0.0).unwrap(), Region::Zero);
    }
}
