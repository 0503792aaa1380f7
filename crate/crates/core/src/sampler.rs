//! Reproducible random histories inside balls of a chosen space.
//!
//! Each sample is generated from its own ChaCha stream keyed by
//! `(seed, index)`, so any subset of a batch can be regenerated (or produced
//! in parallel) without drawing the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segment::{NormConfig, Segment, SpaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Cosine/sine series with `harmonics` modes (half-periods over `[-r, 0]`).
    Fourier { harmonics: usize },
    /// Polynomial in `s / r`; degree 0 gives constant histories.
    Polynomial { degree: usize },
    /// Piecewise linear with `breakpoints` interior kinks on grid nodes.
    PiecewiseLinear { breakpoints: usize },
}

fn default_intervals() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub family: Family,
    pub target_space: SpaceSpec,
    /// Ball radius; every sample has norm at most this value.
    pub target_norm: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Delay `r` of the generated segments.
    #[serde(default = "one_f")]
    pub delay: f64,
    /// Grid intervals `N`.
    #[serde(default = "default_intervals")]
    pub intervals: usize,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl SamplerConfig {
    pub fn new(family: Family, target_space: SpaceSpec, target_norm: f64) -> Self {
        SamplerConfig {
            family,
            target_space,
            target_norm,
            dim: 1,
            seed: 0,
            delay: 1.0,
            intervals: default_intervals(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_grid(mut self, delay: f64, intervals: usize) -> Self {
        self.delay = delay;
        self.intervals = intervals;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.target_space.validate()?;
        if !(self.target_norm > 0.0) || !self.target_norm.is_finite() {
            return Err(Error::param("target_norm", "must be positive and finite"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if !(self.delay > 0.0) {
            return Err(Error::param("delay", "must be positive"));
        }
        if self.intervals < 2 {
            return Err(Error::param("intervals", "need N >= 2"));
        }
        match self.family {
            Family::Fourier { harmonics: 0 } => Err(Error::param("harmonics", "must be at least 1")),
            Family::PiecewiseLinear { breakpoints } if breakpoints == 0 || breakpoints >= self.intervals => {
                Err(Error::param("breakpoints", "need 1 <= k < N"))
            }
            _ => Ok(()),
        }
    }
}

/// Draws histories for a validated [`SamplerConfig`].
#[derive(Debug, Clone)]
pub struct Sampler {
    cfg: SamplerConfig,
    norms: NormConfig,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        Self::with_norms(cfg, NormConfig::default())
    }

    /// Uses `norms` for the scale-to-fit step, so ball membership is judged
    /// at the same resolution a caller measures with.
    pub fn with_norms(cfg: SamplerConfig, norms: NormConfig) -> Result<Self> {
        cfg.validate()?;
        norms.validate()?;
        Ok(Sampler { cfg, norms })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        rng
    }

    /// Sample `index` of the stream, scaled into the ball of the configured radius.
    pub fn draw<T: Scalar>(&self, index: u64) -> Result<Segment<T>> {
        self.draw_in(index, self.cfg.target_norm)
    }

    /// Sample `index`, scaled into the ball of radius `radius` instead.
    pub fn draw_in<T: Scalar>(&self, index: u64, radius: f64) -> Result<Segment<T>> {
        let mut rng = self.rng_for(index);
        let raw: Segment<T> = self.shape(&mut rng)?;
        let norm = self.norms.space(&raw, &self.cfg.target_space)?;
        if !(norm > T::zero()) {
            return Segment::zeros(T::lit(self.cfg.delay), self.cfg.intervals, self.cfg.dim);
        }
        // u in (0, 1] covers the ball, not just its boundary.
        let u = 1.0 - rng.gen::<f64>();
        let shrink = 1.0 - 8.0 * f64::EPSILON;
        Ok(raw.scaled(T::lit(u * radius * shrink) / norm))
    }

    pub fn sample<T: Scalar>(&self, count: usize) -> Result<Vec<Segment<T>>> {
        (0..count as u64).into_par_iter().map(|i| self.draw(i)).collect()
    }

    fn shape<T: Scalar>(&self, rng: &mut ChaCha8Rng) -> Result<Segment<T>> {
        let c = &self.cfg;
        let r = c.delay;
        let n = c.dim;
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        match c.family {
            Family::Fourier { harmonics } => {
                // coeffs[k] = (c0, [(a_j, b_j)]) with 1/j damping.
                let coeffs: Vec<(f64, Vec<(f64, f64)>)> = (0..n)
                    .map(|_| {
                        let c0 = normal();
                        let modes = (1..=harmonics)
                            .map(|j| (normal() / j as f64, normal() / j as f64))
                            .collect();
                        (c0, modes)
                    })
                    .collect();
                Segment::from_fn(T::lit(r), c.intervals, n, |s| {
                    let s = s.to_f64_lossy();
                    let mut x = Vec::with_capacity(n);
                    let mut dx = Vec::with_capacity(n);
                    for (c0, modes) in &coeffs {
                        let (mut v, mut d) = (*c0, 0.0);
                        for (j, (a, b)) in modes.iter().enumerate() {
                            let w = (j + 1) as f64 * std::f64::consts::PI / r;
                            let th = w * (s + r);
                            v += a * th.cos() + b * th.sin();
                            d += w * (b * th.cos() - a * th.sin());
                        }
                        x.push(T::lit(v));
                        dx.push(T::lit(d));
                    }
                    (x, dx)
                })
            }
            Family::Polynomial { degree } => {
                let coeffs: Vec<Vec<f64>> = (0..n).map(|_| (0..=degree).map(|_| normal()).collect()).collect();
                Segment::from_fn(T::lit(r), c.intervals, n, |s| {
                    let z = s.to_f64_lossy() / r;
                    let mut x = Vec::with_capacity(n);
                    let mut dx = Vec::with_capacity(n);
                    for cs in &coeffs {
                        let (mut v, mut d) = (0.0, 0.0);
                        for (j, &cj) in cs.iter().enumerate().rev() {
                            v = v * z + cj;
                            if j > 0 {
                                d = d * z + j as f64 * cj;
                            }
                        }
                        x.push(T::lit(v));
                        dx.push(T::lit(d / r));
                    }
                    (x, dx)
                })
            }
            Family::PiecewiseLinear { breakpoints } => {
                let mut interior: Vec<usize> = rand::seq::index::sample(rng, c.intervals - 1, breakpoints)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect();
                interior.sort_unstable();
                let mut knots = Vec::with_capacity(breakpoints + 2);
                let mut normal = || T::lit(rng.sample::<f64, _>(StandardNormal));
                knots.push((0, (0..n).map(|_| normal()).collect::<Vec<T>>()));
                for i in interior {
                    knots.push((i, (0..n).map(|_| normal()).collect()));
                }
                knots.push((c.intervals, (0..n).map(|_| normal()).collect()));
                Segment::piecewise_linear(T::lit(r), c.intervals, &knots)
            }
        }
    }
}

/// Convenience: `count` samples from `cfg`.
pub fn sample<T: Scalar>(cfg: &SamplerConfig, count: usize) -> Result<Vec<Segment<T>>> {
    Sampler::new(cfg.clone())?.sample(count)
}
