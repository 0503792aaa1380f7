use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::{simulate, DelaySystem, ESCAPE_THRESHOLD};
use crate::error::{Error, Result};
use crate::sampler::{Family, Sampler, SamplerConfig};
use crate::scalar::{euclid, Scalar};
use crate::segment::{NormConfig, Segment, SpaceSpec};

use super::report::Witness;

fn default_norms() -> NormConfig {
    NormConfig {
        refine: 8,
        hoelder_cap: 512,
    }
}

/// Sampling and simulation settings shared by every checker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Random histories per ball (constant probes come on top).
    pub samples: usize,
    pub seed: u64,
    pub family: Family,
    /// Simulation horizon; `20 r` when absent.
    pub horizon: Option<f64>,
    /// Grid intervals of every sampled and extracted segment.
    pub intervals: usize,
    /// Integration step; the segment spacing `r / intervals` when absent.
    pub step: Option<f64>,
    /// Number of report times (uniform on `[0, r]`, geometric after).
    pub report_times: usize,
    /// Include the constant histories `±radius·e_i`.
    pub probes: bool,
    #[serde(default = "default_norms")]
    pub norms: NormConfig,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            samples: 64,
            seed: 0,
            family: Family::Fourier { harmonics: 3 },
            horizon: None,
            intervals: 200,
            step: None,
            report_times: 200,
            probes: true,
            norms: default_norms(),
        }
    }
}

impl Budget {
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 && !self.probes {
            return Err(Error::param("samples", "need at least one sample or probes"));
        }
        if self.intervals < 2 {
            return Err(Error::param("intervals", "must be at least 2"));
        }
        if self.report_times < 8 {
            return Err(Error::param("report_times", "must be at least 8"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::param("horizon", "must be positive and finite"));
            }
        }
        if let Some(h) = self.step {
            if !(h > 0.0) {
                return Err(Error::param("step", "must be positive"));
            }
        }
        self.norms.validate()
    }

    pub fn horizon_for(&self, r: f64) -> f64 {
        self.horizon.unwrap_or(20.0 * r)
    }

    pub fn spacing(&self, r: f64) -> f64 {
        r / self.intervals as f64
    }

    pub fn step_for(&self, r: f64) -> f64 {
        self.step.unwrap_or_else(|| self.spacing(r))
    }

    pub fn report_grid(&self, r: f64, horizon: f64) -> Vec<f64> {
        report_grid(r, horizon, self.report_times, self.spacing(r))
    }
}

/// `count` times on `[0, horizon]`: a quarter uniform on `[0, r]`, the rest
/// geometric on `[r, horizon]`, all snapped to multiples of `spacing`.
pub fn report_grid(r: f64, horizon: f64, count: usize, spacing: f64) -> Vec<f64> {
    let count = count.max(2);
    let mut raw = Vec::with_capacity(count);
    if horizon <= r {
        raw.extend((0..count).map(|i| horizon * i as f64 / (count - 1) as f64));
    } else {
        let uni = (count / 4).max(2);
        raw.extend((0..uni).map(|i| r * i as f64 / (uni - 1) as f64));
        let geo = count - uni;
        let ratio = horizon / r;
        raw.extend((1..=geo).map(|j| r * ratio.powf(j as f64 / geo as f64)));
    }
    snap_times(&raw, spacing, horizon)
}

/// Rounds to multiples of `spacing` (never past `limit`), sorted, without duplicates.
pub fn snap_times(times: &[f64], spacing: f64, limit: f64) -> Vec<f64> {
    let top = (limit / spacing + 1e-9).floor();
    let mut ks: Vec<u64> = times
        .iter()
        .map(|&t| (t / spacing).round().clamp(0.0, top) as u64)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter().map(|k| k as f64 * spacing).collect()
}

/// What is recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `‖x_t‖` in the given space.
    Segment(SpaceSpec),
    /// `|x(t)|`.
    Point,
}

/// The histories a checker quantifies over: `2n` constant probes followed by
/// `samples` random draws, each scaled into a ball whose radius the caller picks.
#[derive(Debug, Clone)]
pub struct InitialSet {
    sampler: Sampler,
    probes: usize,
    samples: usize,
    dim: usize,
}

impl InitialSet {
    pub fn new(space: &SpaceSpec, radius: f64, dim: usize, r: f64, budget: &Budget) -> Result<Self> {
        budget.validate()?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param("radius", "must be positive and finite"));
        }
        let cfg = SamplerConfig::new(budget.family, *space, radius)
            .with_seed(budget.seed)
            .with_dim(dim)
            .with_grid(r, budget.intervals);
        Ok(InitialSet {
            sampler: Sampler::with_norms(cfg, budget.norms)?,
            probes: if budget.probes { 2 * dim } else { 0 },
            samples: budget.samples,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.probes + self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn probes(&self) -> usize {
        self.probes
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn radius(&self) -> f64 {
        self.sampler.config().target_norm
    }

    pub fn seed(&self) -> u64 {
        self.sampler.config().seed
    }

    pub fn get<T: Scalar>(&self, index: usize) -> Result<Segment<T>> {
        self.get_in(index, self.radius())
    }

    /// Member `index` scaled into the ball of radius `radius`.
    pub fn get_in<T: Scalar>(&self, index: usize, radius: f64) -> Result<Segment<T>> {
        let cfg = self.sampler.config();
        if index < self.probes {
            let mut c = vec![T::zero(); self.dim];
            let sign = if index.is_multiple_of(2) { 1.0 } else { -1.0 };
            c[(index / 2) % self.dim] = T::lit(sign * radius * (1.0 - 8.0 * f64::EPSILON));
            return Segment::constant(T::lit(cfg.delay), cfg.intervals, &c);
        }
        if index >= self.len() {
            return Err(Error::param(
                "index",
                format!("{index} outside a set of {}", self.len()),
            ));
        }
        self.sampler.draw_in((index - self.probes) as u64, radius)
    }

    pub fn witness<T: Scalar>(&self, index: usize, radius: f64, time: f64, norm: f64) -> Result<Witness> {
        let seg: Segment<f64> = self.get_in::<T>(index, radius)?.cast();
        Ok(Witness {
            seed: self.seed(),
            index,
            probe: index < self.probes,
            radius,
            time,
            norm,
            initial: (&seg).into(),
        })
    }
}

/// Measured trajectory: initial norm, the measure at each report time that
/// was reached, and the escape time if the solution blew up.
#[derive(Debug, Clone)]
pub struct Run {
    pub x0_norm: f64,
    pub norms: Vec<f64>,
    pub escape: Option<f64>,
}

impl Run {
    /// First report time whose value exceeds `level` (or the escape time).
    pub fn first_above(&self, times: &[f64], level: f64) -> Option<(f64, f64)> {
        self.norms
            .iter()
            .zip(times)
            .find(|(n, _)| **n > level)
            .map(|(n, t)| (*t, *n))
            .or_else(|| self.escape.map(|te| (te, ESCAPE_THRESHOLD)))
    }

    pub fn peak(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }
}

pub(crate) fn measure<T: Scalar>(
    tr: &crate::dde::Trajectory<T>,
    t: f64,
    what: Measure,
    norms: &NormConfig,
) -> Result<f64> {
    Ok(match what {
        Measure::Point => euclid(&tr.value_at(T::lit(t))?).to_f64_lossy(),
        Measure::Segment(space) => norms.space(&tr.segment_at(T::lit(t))?, &space)?.to_f64_lossy(),
    })
}

/// Simulates from `x0` up to the last of `times` and records `what` there.
pub fn run_one<T: Scalar>(
    sys: &DelaySystem<T>,
    x0: &Segment<T>,
    init_space: &SpaceSpec,
    times: &[f64],
    step: f64,
    what: Measure,
    norms: &NormConfig,
) -> Result<Run> {
    let x0_norm = norms.space(x0, init_space)?.to_f64_lossy();
    let t_end = *times.last().ok_or_else(|| Error::param("times", "empty time grid"))?;
    if t_end <= 0.0 {
        let tr = simulate(sys, x0, T::lit(step), T::lit(step))?;
        let n = measure(&tr, 0.0, what, norms)?;
        return Ok(Run {
            x0_norm,
            norms: vec![n],
            escape: tr.escape_time().map(|t| t.to_f64_lossy()),
        });
    }
    let tr = simulate(sys, x0, T::lit(t_end), T::lit(step))?;
    let reached = tr.t_end().to_f64_lossy();
    let escape = tr.escape_time().map(|t| t.to_f64_lossy());
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if escape.is_some() && t > reached {
            break;
        }
        out.push(measure(&tr, t, what, norms)?);
    }
    Ok(Run {
        x0_norm,
        norms: out,
        escape,
    })
}

/// Runs every `(index, radius)` member of `set` in parallel; results keep input order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_batch<T: Scalar>(
    sys: &DelaySystem<T>,
    set: &InitialSet,
    members: &[(usize, f64)],
    init_space: &SpaceSpec,
    times: &[f64],
    step: f64,
    what: Measure,
    norms: &NormConfig,
) -> Result<Vec<Run>> {
    members
        .par_iter()
        .map(|&(i, radius)| {
            let x0 = set.get_in::<T>(i, radius)?;
            run_one(sys, &x0, init_space, times, step, what, norms)
        })
        .collect()
}

/// Earliest escape over `runs`, lowest position winning ties.
pub(crate) fn earliest_escape(runs: &[Run]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, run) in runs.iter().enumerate() {
        if let Some(te) = run.escape {
            if best.is_none_or(|(_, b)| te < b) {
                best = Some((i, te));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_grid_is_snapped_and_spans_horizon() {
        let g = report_grid(1.0, 20.0, 200, 0.005);
        assert_eq!(g[0], 0.0);
        assert!((g.last().unwrap() - 20.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        for t in &g {
            let k = t / 0.005;
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert!(g.len() > 150 && g.len() <= 200);
    }

    #[test]
    fn short_horizon_grid_is_uniform() {
        let g = report_grid(1.0, 0.5, 11, 0.005);
        assert_eq!(g.len(), 11);
        assert!((g[10] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probes_are_signed_constants() {
        let b = Budget::default().with_samples(3);
        let set = InitialSet::new(&SpaceSpec::SupC0, 2.0, 2, 1.0, &b).unwrap();
        assert_eq!(set.len(), 7);
        let p: Segment<f64> = set.get(3).unwrap();
        assert_eq!(p.value(0)[0], 0.0);
        assert!((p.value(0)[1] + 2.0).abs() < 1e-14);
        assert!(p.value(0)[1] > -2.0);
        let s: Segment<f64> = set.get(5).unwrap();
        assert_eq!(s.values_flat(), set.get::<f64>(5).unwrap().values_flat());
        assert!(set.get::<f64>(7).is_err());
    }

    #[test]
    fn budget_round_trips_through_json() {
        let b = Budget::default().with_seed(9).with_horizon(3.0);
        let js = serde_json::to_string(&b).unwrap();
        let back: Budget = serde_json::from_str(&js).unwrap();
        assert_eq!(b, back);
        let partial: Budget = serde_json::from_str(r#"{"samples": 5}"#).unwrap();
        assert_eq!(partial.samples, 5);
        assert_eq!(partial.norms.hoelder_cap, 512);
        assert!(serde_json::from_str::<Budget>(r#"{"sample": 5}"#).is_err());
    }
}
