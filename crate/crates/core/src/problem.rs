//! The quadratic saddle family `f_a(x) = sum_i a_i x_i^2`.
//!
//! Coefficients `a_1..a_b` are negative and `a_{b+1}..a_d` positive, so the
//! origin is a non-degenerate saddle point. The problem also defines the two
//! semi-norms `||x||_-` and `||x||_+` on the negative- and positive-curvature
//! subspaces, with `f_a(x) = ||x||_+^2 - ||x||_-^2`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension above which [`SaddleProblem::new`] turns on compensated summation.
pub const COMPENSATED_SUMMATION_DIM: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem", into = "RawProblem")]
pub struct SaddleProblem {
    a: Vec<f64>,
    b: usize,
    compensated: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    a: Vec<f64>,
    b: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    compensated: bool,
}

impl TryFrom<RawProblem> for SaddleProblem {
    type Error = Error;

    fn try_from(raw: RawProblem) -> Result<Self> {
        Ok(SaddleProblem::new(raw.a, raw.b)?.with_compensated_summation(raw.compensated))
    }
}

impl From<SaddleProblem> for RawProblem {
    fn from(p: SaddleProblem) -> Self {
        RawProblem {
            a: p.a,
            b: p.b,
            compensated: p.compensated,
        }
    }
}

/// Sign of `f_a(x)`: which of `D_a^-`, `D_a^0`, `D_a^+` contains a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Negative,
    Zero,
    Positive,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Negative => "negative",
            Region::Zero => "zero",
            Region::Positive => "positive",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl SaddleProblem {
    /// `b` is the number of leading negative coefficients.
    pub fn new(a: Vec<f64>, b: usize) -> Result<Self> {
        let d = a.len();
        if d < 2 {
            return Err(Error::InvalidProblem(format!(
                "dimension must be at least 2, got {d}"
            )));
        }
        if b < 1 || b > d - 1 {
            return Err(Error::InvalidProblem(format!(
                "split index b = {b} outside [1, {}]",
                d - 1
            )));
        }
        for (i, &ai) in a.iter().enumerate() {
            if !ai.is_finite() {
                return Err(Error::InvalidProblem(format!("a_{} is not finite", i + 1)));
            }
            if i < b && ai >= 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "a_{} = {ai} must be negative (i <= b = {b})",
                    i + 1
                )));
            }
            if i >= b && ai <= 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "a_{} = {ai} must be positive (i > b = {b})",
                    i + 1
                )));
            }
        }
        Ok(SaddleProblem {
            a,
            b,
            compensated: d > COMPENSATED_SUMMATION_DIM,
        })
    }

    /// Infers `b` from the sign pattern of `a`.
    pub fn from_coefficients(a: Vec<f64>) -> Result<Self> {
        let b = a.iter().take_while(|&&ai| ai < 0.0).count();
        Self::new(a, b)
    }

    /// Two-dimensional instance `a = (a1, a2)` with `a1 < 0 < a2`.
    pub fn planar(a1: f64, a2: f64) -> Result<Self> {
        Self::new(vec![a1, a2], 1)
    }

    pub fn with_compensated_summation(mut self, on: bool) -> Self {
        self.compensated = on;
        self
    }

    pub fn compensated_summation(&self) -> bool {
        self.compensated
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn split(&self) -> usize {
        self.b
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    /// Largest positive coefficient over smallest negative magnitude.
    pub fn condition_ratio(&self) -> f64 {
        let min_neg = self.a[..self.b]
            .iter()
            .map(|ai| ai.abs())
            .fold(f64::INFINITY, f64::min);
        let max_pos = self.a[self.b..].iter().copied().fold(0.0, f64::max);
        max_pos / min_neg
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.f(x))
    }

    pub fn project_minus(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        out[self.b..].iter_mut().for_each(|v| *v = 0.0);
        Ok(out)
    }

    pub fn project_plus(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        out[..self.b].iter_mut().for_each(|v| *v = 0.0);
        Ok(out)
    }

    pub fn norm_minus(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.norm_minus_sq(x).sqrt())
    }

    pub fn norm_plus(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.norm_plus_sq(x).sqrt())
    }

    /// `tol = 0` is the exact sign test used by the ES itself.
    pub fn classify(&self, x: &[f64], tol: f64) -> Result<Region> {
        if !(tol >= 0.0) {
            return Err(crate::error::invalid("tol", "must be non-negative"));
        }
        Ok(self.region_of(self.evaluate(x)?, tol))
    }

    pub fn region_of(&self, f: f64, tol: f64) -> Region {
        if f < -tol {
            Region::Negative
        } else if f <= tol {
            Region::Zero
        } else {
            Region::Positive
        }
    }

    // Unchecked kernels; callers guarantee `x.len() == self.dim()`.

    #[inline]
    pub(crate) fn f(&self, x: &[f64]) -> f64 {
        self.weighted_sum(&self.a, x, 1.0)
    }

    #[inline]
    pub(crate) fn norm_minus_sq(&self, x: &[f64]) -> f64 {
        self.weighted_sum(&self.a[..self.b], &x[..self.b], -1.0)
    }

    #[inline]
    pub(crate) fn norm_plus_sq(&self, x: &[f64]) -> f64 {
        self.weighted_sum(&self.a[self.b..], &x[self.b..], 1.0)
    }

    #[inline]
    fn weighted_sum(&self, a: &[f64], x: &[f64], sign: f64) -> f64 {
        let terms = a.iter().zip(x).map(|(ai, xi)| sign * ai * xi * xi);
        if self.compensated {
            neumaier_sum(terms)
        } else {
            terms.sum()
        }
    }
}

fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}
