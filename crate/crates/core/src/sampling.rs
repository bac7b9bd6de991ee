//! Reproducible sample streams: deterministic low-discrepancy points
//! interleaved with seeded pseudo-random points.
//!
//! Every stream is prefix-stable: the i-th point depends only on `i` and the
//! seed, never on how many points are requested. Running minima over a stream
//! are therefore monotone in the sample count.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: usize, base: u32) -> f64 {
    let b = base as usize;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % b) as f64;
        index /= b;
    }
    r
}

fn halton_point(index: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| halton(index, PRIMES[c % PRIMES.len()]))
        .collect()
}

/// Number of samples and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub samples: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("sample count must be positive"));
        }
        Ok(())
    }
}

/// Deterministic unit directions: `±e_k` first, then normalized Halton points.
fn deterministic_direction(m: usize, dim: usize) -> DVector<f64> {
    if m < 2 * dim {
        let mut d = DVector::zeros(dim);
        d[m / 2] = if m % 2 == 0 { 1.0 } else { -1.0 };
        return d;
    }
    let h = halton_point(m - 2 * dim + 1, dim);
    let v = DVector::from_iterator(dim, h.into_iter().map(|u| 2.0 * u - 1.0));
    let n = v.norm();
    if n < 1e-12 {
        let mut d = DVector::zeros(dim);
        d[0] = 1.0;
        d
    } else {
        v / n
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Points on the sphere of radius `r` (even index deterministic, odd random).
pub fn sphere_points(dim: usize, r: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let d = if i % 2 == 0 {
                deterministic_direction(i / 2, dim)
            } else {
                random_direction(&mut rng, dim)
            };
            d * r
        })
        .collect()
}

/// Points with `‖x‖ ∈ [r_min, r_max]`, uniformly distributed in radius.
pub fn annulus_points(dim: usize, r_min: f64, r_max: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (d, u) = if i % 2 == 0 {
                let m = i / 2;
                (deterministic_direction(m, dim), halton(m + 1, 2))
            } else {
                let d = random_direction(&mut rng, dim);
                (d, rng.gen::<f64>())
            };
            d * (r_min + u * (r_max - r_min))
        })
        .collect()
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box bounds must be nonempty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("box needs finite lower <= upper in every coordinate"));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Tensor grid with `per_axis` nodes per coordinate (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        if per_axis == 0 {
            return Vec::new();
        }
        let dim = self.dim();
        let total = per_axis.pow(dim as u32);
        (0..total)
            .map(|mut idx| {
                DVector::from_fn(dim, |c, _| {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    if per_axis == 1 {
                        0.5 * (self.lower[c] + self.upper[c])
                    } else {
                        self.lower[c] + (self.upper[c] - self.lower[c]) * k as f64 / (per_axis - 1) as f64
                    }
                })
            })
            .collect()
    }

    /// Seeded uniform points.
    pub fn random(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                DVector::from_fn(self.dim(), |c, _| {
                    let (l, u) = (self.lower[c], self.upper[c]);
                    if l == u {
                        l
                    } else {
                        rng.gen_range(l..=u)
                    }
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
    }

    #[test]
    fn annulus_radii_in_range_and_prefix_stable() {
        let a = annulus_points(3, 2.0, 20.0, 50, 9);
        let b = annulus_points(3, 2.0, 20.0, 80, 9);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
        for x in &b {
            let r = x.norm();
            assert!((2.0 - 1e-12..=20.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn grid_includes_corners() {
        let b = BoxDomain::cube(2, 10.0).unwrap();
        let g = b.grid(101);
        assert_eq!(g.len(), 101 * 101);
        assert!(g.iter().any(|p| p[0] == 0.0 && p[1] == 0.0));
        assert!(g.iter().any(|p| p[0] == -10.0 && p[1] == 10.0));
        assert!(g.iter().all(|p| b.contains(p.as_slice())));
    }

    #[test]
    fn box_validation() {
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
    }
}
