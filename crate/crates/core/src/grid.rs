//! Parameter grids over `w` (position in `M+_0`) and `sigma~`, and the small
//! text formats used to specify them.
//!
//! Grid specs: `lin:LO:HI:N`, `log:LO:HI:N`, `LO:HI:N` (scale chosen by the
//! caller), or an explicit strictly increasing list `v1,v2,...`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Range {
        scale: Scale,
        lo: f64,
        hi: f64,
        points: usize,
    },
    Explicit(Vec<f64>),
}

impl GridSpec {
    /// `w in {0, 0.1, ..., 1}`.
    pub fn default_w() -> Self {
        GridSpec::Range {
            scale: Scale::Linear,
            lo: 0.0,
            hi: 1.0,
            points: 11,
        }
    }

    /// 36 log-spaced points over `[1e-4, 1e3]`.
    pub fn default_sigma() -> Self {
        GridSpec::Range {
            scale: Scale::Log,
            lo: 1e-4,
            hi: 1e3,
            points: 36,
        }
    }

    pub fn linear(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = GridSpec::Range {
            scale: Scale::Linear,
            lo,
            hi,
            points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn log(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = GridSpec::Range {
            scale: Scale::Log,
            lo,
            hi,
            points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let g = GridSpec::Explicit(values);
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        match self {
            GridSpec::Range { points, .. } => *points,
            GridSpec::Explicit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid values in increasing order; range endpoints are exact.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridSpec::Explicit(ref v) => v.clone(),
            GridSpec::Range { points: 1, lo, .. } => vec![lo],
            GridSpec::Range {
                scale,
                lo,
                hi,
                points,
            } => {
                let last = (points - 1) as f64;
                (0..points)
                    .map(|i| {
                        if i == 0 {
                            lo
                        } else if i == points - 1 {
                            hi
                        } else {
                            match scale {
                                Scale::Linear => lo + (hi - lo) * i as f64 / last,
                                Scale::Log => {
                                    let (l, h) = (lo.log10(), hi.log10());
                                    10f64.powf(l + (h - l) * i as f64 / last)
                                }
                            }
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidGrid(format!("{self}: {why}")));
        match *self {
            GridSpec::Range {
                scale,
                lo,
                hi,
                points,
            } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return bad("bounds must be finite");
                }
                if points == 0 || points > MAX_GRID_POINTS {
                    return bad("point count out of range");
                }
                if points == 1 && lo != hi {
                    return bad("a single point needs lo == hi");
                }
                if points > 1 && !(lo < hi) {
                    return bad("need lo < hi");
                }
                if scale == Scale::Log && !(lo > 0.0) {
                    return bad("log grid needs lo > 0");
                }
            }
            GridSpec::Explicit(ref v) => {
                if v.is_empty() || v.len() > MAX_GRID_POINTS {
                    return bad("point count out of range");
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad("values must be finite");
                }
                if v.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("values must be strictly increasing");
                }
            }
        }
        Ok(())
    }

    /// Parses a grid spec; `default_scale` applies to the bare `LO:HI:N` form.
    pub fn parse(s: &str, default_scale: Scale) -> Result<Self> {
        let s = s.trim();
        let (scale, body) = if let Some(rest) = s.strip_prefix("lin:") {
            (Some(Scale::Linear), rest)
        } else if let Some(rest) = s.strip_prefix("log:") {
            (Some(Scale::Log), rest)
        } else {
            (None, s)
        };
        let g = if body.contains(':') {
            let parts: Vec<&str> = body.split(':').collect();
            let [lo, hi, n] = parts[..] else {
                return Err(Error::InvalidGrid(s.to_string()));
            };
            let lo = parse_f64(lo).map_err(|_| Error::InvalidGrid(s.to_string()))?;
            let hi = parse_f64(hi).map_err(|_| Error::InvalidGrid(s.to_string()))?;
            let points = n
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidGrid(s.to_string()))?;
            GridSpec::Range {
                scale: scale.unwrap_or(default_scale),
                lo,
                hi,
                points,
            }
        } else if scale.is_some() {
            return Err(Error::InvalidGrid(s.to_string()));
        } else {
            GridSpec::Explicit(parse_f64_list(body).map_err(|_| Error::InvalidGrid(s.to_string()))?)
        };
        g.validate()?;
        Ok(g)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Range {
                scale,
                lo,
                hi,
                points,
            } => {
                let tag = match scale {
                    Scale::Linear => "lin",
                    Scale::Log => "log",
                };
                write!(f, "{tag}:{lo:?}:{hi:?}:{points}")
            }
            GridSpec::Explicit(v) => {
                let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                f.write_str(&items.join(","))
            }
        }
    }
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Deserializes the bare `LO:HI:N` form as linear; use an explicit prefix for log grids.
impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GridSpec::parse(&s, Scale::Linear).map_err(serde::de::Error::custom)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    let v = s
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidGrid(s.to_string()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidGrid(s.to_string()))
    }
}

/// Comma-separated finite numbers, e.g. `-1,20` or `0.1, 1, 10`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(Error::InvalidGrid(s.to_string()));
    }
    s.split(',').map(parse_f64).collect()
}
