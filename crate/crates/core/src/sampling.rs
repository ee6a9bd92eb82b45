//! Axis-aligned regions, inclusive grids, seeded random points and CSV number
//! formatting.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension("region bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Invalid("region needs lo <= hi in every coordinate".into()));
        }
        Ok(Region { lo, hi })
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        Region {
            lo: vec![-r; n],
            hi: vec![r; n],
        }
    }

    /// Parses `lo1,hi1,lo2,hi2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad region bound `{s}`")))
            })
            .collect::<Result<_>>()?;
        if vals.is_empty() || vals.len() % 2 != 0 {
            return Err(Error::Invalid(
                "region must list lo,hi pairs for each coordinate".into(),
            ));
        }
        let lo = vals.iter().step_by(2).copied().collect();
        let hi = vals.iter().skip(1).step_by(2).copied().collect();
        Region::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Grid including both ends of every axis; the last coordinate varies fastest.
    pub fn grid(&self, shape: &[usize]) -> Result<Vec<Vec<f64>>> {
        if shape.len() != self.dim() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "grid shape {shape:?} does not fit a {}-dimensional region",
                self.dim()
            )));
        }
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                let k = shape[i];
                (0..k)
                    .map(|j| {
                        if k == 1 {
                            0.5 * (self.lo[i] + self.hi[i])
                        } else if j == k - 1 {
                            self.hi[i]
                        } else {
                            self.lo[i] + (self.hi[i] - self.lo[i]) * j as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }

    pub fn sampler(&self, seed: u64) -> Sampler<'_> {
        Sampler {
            region: self,
            rng: SplitMix64::seed_from_u64(seed),
        }
    }
}

/// Uniform points in a region from a SplitMix64 stream.
pub struct Sampler<'a> {
    region: &'a Region,
    rng: SplitMix64,
}

impl Sampler<'_> {
    pub fn point(&mut self) -> Vec<f64> {
        let r = self.region;
        (0..r.dim())
            .map(|i| r.lo[i] + (r.hi[i] - r.lo[i]) * self.rng.random::<f64>())
            .collect()
    }

    /// Uniform on `[-1, 1]^n`.
    pub fn direction(&mut self) -> Vec<f64> {
        (0..self.region.dim())
            .map(|_| 2.0 * self.rng.random::<f64>() - 1.0)
            .collect()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }
}

/// Parses `21x21` style grid shapes.
pub fn parse_shape(text: &str) -> Result<Vec<usize>> {
    text.split(['x', 'X'])
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Invalid(format!("bad grid shape `{text}`")))
        })
        .collect()
}

/// 17 significant digits, so doubles survive a text round trip.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}
