use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dde::DelaySystem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segment::{fmt_num, SpaceSpec};

use super::runs::{run_batch, snap_times, Budget, InitialSet, Measure, Run};

/// Tail-to-head ratio below which a shell counts as decayed.
pub const DECAY_RATIO: f64 = 0.05;
/// Tail-to-head ratio above which a shell is flagged as not decaying.
pub const NON_DECAY_RATIO: f64 = 0.5;

/// Grid function `σ(s_j, t_k)`, nondecreasing in `s` and nonincreasing in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLEnvelope {
    pub s_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// `sigma[j][k]` is the value at shell `j`, time `k`.
    pub sigma: Vec<Vec<f64>>,
    /// Shells without samples, filled from the shell below.
    #[serde(default)]
    pub absent: Vec<bool>,
}

impl KLEnvelope {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(s_grid: Vec<f64>, t_grid: Vec<f64>, f: F) -> Result<Self> {
        let sigma = s_grid
            .iter()
            .map(|&s| t_grid.iter().map(|&t| f(s, t)).collect())
            .collect();
        let absent = vec![false; s_grid.len()];
        let env = KLEnvelope {
            s_grid,
            t_grid,
            sigma,
            absent,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        let incr = |g: &[f64]| g.windows(2).all(|w| w[1] > w[0]);
        if self.s_grid.is_empty() || self.t_grid.is_empty() {
            return Err(Error::param("envelope", "empty grid"));
        }
        if !incr(&self.s_grid) || self.s_grid[0] <= 0.0 {
            return Err(Error::param("s_grid", "must be positive and increasing"));
        }
        if !incr(&self.t_grid) || self.t_grid[0] < 0.0 {
            return Err(Error::param("t_grid", "must be nonnegative and increasing"));
        }
        if self.sigma.len() != self.s_grid.len() || self.sigma.iter().any(|row| row.len() != self.t_grid.len()) {
            return Err(Error::param("sigma", "shape does not match the grids"));
        }
        if self.sigma.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("sigma", "entries must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Nondecreasing along `s`, nonincreasing along `t`.
    pub fn is_kl_shaped(&self) -> bool {
        let s_ok = self
            .sigma
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(lo, hi)| lo <= hi));
        let t_ok = self.sigma.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]));
        s_ok && t_ok
    }

    /// Upper step lookup: the smallest shell `s_j ≥ s` and the last grid time
    /// `t_k ≤ t`. Infinite for `s` beyond the largest shell.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let Some(j) = self.s_grid.iter().position(|&sj| s <= sj * (1.0 + 1e-12)) else {
            return f64::INFINITY;
        };
        self.sigma[j][self.time_index(t)]
    }

    fn time_index(&self, t: f64) -> usize {
        let tol = 1e-9 * self.t_grid.last().copied().unwrap_or(1.0).max(1.0);
        self.t_grid.iter().rposition(|&tk| tk <= t + tol).unwrap_or(0)
    }

    /// `σ(s_j, t_end) / σ(s_j, 0)` for each shell (0 for an all-zero row).
    pub fn tail_ratios(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .map(|row| {
                let head = row[0];
                if head > 0.0 {
                    row[row.len() - 1] / head
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Every shell has dropped to at most `DECAY_RATIO` of its initial value.
    pub fn decaying(&self) -> bool {
        self.tail_ratios().iter().all(|q| *q <= DECAY_RATIO)
    }

    /// Shells whose value at the horizon is still above `NON_DECAY_RATIO` of the start.
    pub fn non_decay(&self) -> Vec<bool> {
        self.tail_ratios().iter().map(|q| *q > NON_DECAY_RATIO).collect()
    }

    /// CSV matrix: header `s\t` then the times, one row per shell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut head = vec!["s\\t".to_string()];
        head.extend(self.t_grid.iter().map(|t| fmt_num(*t)));
        writeln!(w, "{}", head.join(","))?;
        for (s, row) in self.s_grid.iter().zip(&self.sigma) {
            let mut cells = vec![fmt_num(*s)];
            cells.extend(row.iter().map(|v| fmt_num(*v)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Which pair of norms the envelope bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// `‖x_t‖_X ≤ σ(‖x_0‖_X, t)`.
    #[default]
    Uniform,
    /// `‖x_t‖_∞ ≤ σ(‖x_0‖_X, t)`.
    Qx,
    /// `|x(t)| ≤ σ(‖x_0‖_X, t)`.
    Point,
}

impl EnvelopeMode {
    pub fn measure(self, space: &SpaceSpec) -> Measure {
        match self {
            EnvelopeMode::Uniform => Measure::Segment(*space),
            EnvelopeMode::Qx => Measure::Segment(SpaceSpec::SupC0),
            EnvelopeMode::Point => Measure::Point,
        }
    }
}

/// One sampled trajectory behind an envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeSample {
    /// Position in the fit's initial set.
    pub index: usize,
    /// Radius the history was scaled into.
    pub radius: f64,
    pub shell: usize,
    pub x0_norm: f64,
    pub norms: Vec<f64>,
}

/// A fitted envelope together with the data it was fitted to.
#[derive(Debug, Clone)]
pub struct EnvelopeFit {
    pub envelope: KLEnvelope,
    pub mode: EnvelopeMode,
    pub space: SpaceSpec,
    pub samples: Vec<EnvelopeSample>,
    pub set: InitialSet,
}

/// Fits the smallest KL-shaped grid function above sampled trajectory data.
///
/// Shells are `s_j = ρ_max·2^{j+1-shells}`. Sample `i` is drawn into the ball
/// of shell `i mod shells` and binned by its measured initial norm. Raw shell
/// maxima are made monotone in `s` by a running max over shells (an empty
/// shell inherits the one below and is flagged), then in `t` by a running max
/// from the right.
pub fn fit_kl_envelope<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    rho_max: f64,
    shells: usize,
    t_grid: &[f64],
    budget: &Budget,
    mode: EnvelopeMode,
) -> Result<EnvelopeFit> {
    space.validate()?;
    if shells == 0 {
        return Err(Error::param("shells", "must be at least 1"));
    }
    let r = sys.delay().to_f64_lossy();
    let last = t_grid.iter().copied().fold(0.0, f64::max);
    let times = snap_times(t_grid, budget.spacing(r), last);
    if times.is_empty() {
        return Err(Error::param("t_grid", "empty time grid"));
    }
    let set = InitialSet::new(space, rho_max, sys.dim(), r, budget)?;
    let s_grid: Vec<f64> = (0..shells)
        .map(|j| rho_max * 2f64.powi(j as i32 + 1 - shells as i32))
        .collect();

    let mut members = Vec::with_capacity(set.probes() * shells + set.samples());
    for &s in &s_grid {
        members.extend((0..set.probes()).map(|p| (p, s)));
    }
    members.extend((0..set.samples()).map(|i| (set.probes() + i, s_grid[i % shells])));

    let what = mode.measure(space);
    let runs = run_batch(
        sys,
        &set,
        &members,
        space,
        &times,
        budget.step_for(r),
        what,
        &budget.norms,
    )?;
    if let Some(te) = runs.iter().filter_map(|run| run.escape).reduce(f64::min) {
        return Err(Error::Escaped { time: te });
    }

    let nt = times.len();
    let mut raw: Vec<Option<Vec<f64>>> = vec![None; shells];
    let mut samples = Vec::with_capacity(runs.len());
    for (&(index, radius), Run { x0_norm, norms, .. }) in members.iter().zip(runs) {
        let shell = s_grid
            .iter()
            .position(|&s| x0_norm <= s * (1.0 + 1e-12))
            .ok_or_else(|| Error::param("rho_max", format!("sample norm {x0_norm} outside the largest shell")))?;
        let row = raw[shell].get_or_insert_with(|| vec![0.0; nt]);
        for (cell, v) in row.iter_mut().zip(&norms) {
            *cell = cell.max(*v);
        }
        samples.push(EnvelopeSample {
            index,
            radius,
            shell,
            x0_norm,
            norms,
        });
    }

    let absent: Vec<bool> = raw.iter().map(Option::is_none).collect();
    let mut sigma: Vec<Vec<f64>> = Vec::with_capacity(shells);
    for row in raw {
        let mut row = row.unwrap_or_else(|| vec![0.0; nt]);
        if let Some(below) = sigma.last() {
            for (cell, b) in row.iter_mut().zip(below) {
                *cell = cell.max(*b);
            }
        }
        sigma.push(row);
    }
    for row in &mut sigma {
        for k in (0..nt.saturating_sub(1)).rev() {
            row[k] = row[k].max(row[k + 1]);
        }
    }

    let envelope = KLEnvelope {
        s_grid,
        t_grid: times,
        sigma,
        absent,
    };
    assert!(envelope.is_kl_shaped(), "fitted envelope lost its KL shape");
    for smp in &samples {
        for (k, v) in smp.norms.iter().enumerate() {
            assert!(*v <= envelope.sigma[smp.shell][k], "fitted envelope misses a sample");
        }
    }
    Ok(EnvelopeFit {
        envelope,
        mode,
        space: *space,
        samples,
        set,
    })
}

/// `ω(s,t) = σ(s,t) + (1 + r^{1/p})·max(1, L(σ₀))·g(s,t)` with
/// `g = e^{r-t}σ₀` on `[0, r]` and `g = σ(s, t-r)` after, where
/// `σ₀ = max(σ(s,0), s)`.
///
/// Evaluated on the grid of `sigma`; `σ(s, t-r)` uses the step lookup of
/// [`KLEnvelope::eval`], which over-estimates between grid times.
pub fn omega_from_sigma<L: Fn(f64) -> f64>(sigma: &KLEnvelope, r: f64, p: f64, l: L) -> Result<KLEnvelope> {
    sigma.validate()?;
    if !(r > 0.0) {
        return Err(Error::param("r", "must be positive"));
    }
    if !(p > 1.0) {
        return Err(Error::param("p", "must be > 1"));
    }
    let rp = if p.is_infinite() { 1.0 } else { r.powf(1.0 / p) };
    let mut out = sigma.clone();
    for (j, &s) in sigma.s_grid.iter().enumerate() {
        let s0 = sigma.sigma[j][0].max(s);
        let c = (1.0 + rp) * l(s0).max(1.0);
        for (k, &t) in sigma.t_grid.iter().enumerate() {
            let g = if t <= r {
                (r - t).exp() * s0
            } else {
                sigma.sigma[j][sigma.time_index(t - r)]
            };
            out.sigma[j][k] = sigma.sigma[j][k] + c * g;
        }
    }
    out.validate()?;
    assert!(out.is_kl_shaped(), "omega lost its KL shape");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::{build_system, SystemDef};
    use std::f64::consts::E;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn omega_at_zero_with_zero_lipschitz() {
        let sig = KLEnvelope::from_fn(vec![0.5, 1.0, 2.0], grid(41, 0.05), |s, t| s * (-t).exp()).unwrap();
        let om = omega_from_sigma(&sig, 1.0, f64::INFINITY, |_| 0.0).unwrap();
        for &s in &[0.5, 1.0, 2.0] {
            let want = s * (1.0 + 2.0 * E);
            assert!((om.eval(s, 0.0) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn omega_after_one_delay() {
        let sig = KLEnvelope::from_fn(vec![1.0, 3.0], grid(41, 0.05), |s, t| s * (-t).exp()).unwrap();
        let om = omega_from_sigma(&sig, 1.0, 2.0, |_| 1.0).unwrap();
        for &s in &[1.0, 3.0] {
            let want = s * (-2.0f64).exp() + 2.0 * s * (-1.0f64).exp();
            assert!((om.eval(s, 2.0) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn omega_of_zero_vanishes_after_one_delay() {
        // σ ≡ 0 still carries the σ₀ ≥ s lift, so only the σ part vanishes.
        let sig = KLEnvelope::from_fn(vec![1.0], grid(5, 0.5), |_, _| 0.0).unwrap();
        let om = omega_from_sigma(&sig, 1.0, 2.0, |_| 0.0).unwrap();
        assert!((om.eval(1.0, 2.0) - 0.0).abs() < 1e-15);
        assert!(om.is_kl_shaped());
    }

    #[test]
    fn eval_is_an_upper_step_lookup() {
        let sig = KLEnvelope::from_fn(vec![1.0, 2.0], vec![0.0, 1.0, 2.0], |s, t| s / (1.0 + t)).unwrap();
        assert_eq!(sig.eval(0.3, 1.5), 0.5);
        assert_eq!(sig.eval(1.5, 0.99), 2.0);
        assert_eq!(sig.eval(2.0, 9.0), 2.0 / 3.0);
        assert!(sig.eval(2.5, 0.0).is_infinite());
    }

    #[test]
    fn zero_system_envelope_is_flat() {
        let sys = build_system::<f64>(&SystemDef::new("zero", 1, 1.0, &[])).unwrap();
        let b = Budget::default().with_samples(16);
        let fit = fit_kl_envelope(
            &sys,
            &SpaceSpec::SupC0,
            2.0,
            4,
            &grid(21, 0.25),
            &b,
            EnvelopeMode::Uniform,
        )
        .unwrap();
        let env = &fit.envelope;
        for (j, s) in env.s_grid.iter().enumerate() {
            for v in &env.sigma[j] {
                assert!((v - s).abs() < 1e-12 * s, "{v} vs {s}");
            }
        }
        assert!(env.non_decay().iter().all(|f| *f));
        assert!(!env.decaying());
    }

    #[test]
    fn stable_envelope_decays_and_dominates() {
        let sys = build_system::<f64>(&SystemDef::new("linear_scalar", 1, 1.0, &[("a", -1.0), ("b", 0.0)])).unwrap();
        let b = Budget::default().with_samples(24);
        let fit = fit_kl_envelope(
            &sys,
            &SpaceSpec::SupC0,
            1.0,
            4,
            &grid(41, 0.25),
            &b,
            EnvelopeMode::Point,
        )
        .unwrap();
        assert!(fit.envelope.decaying());
        for smp in &fit.samples {
            for (k, v) in smp.norms.iter().enumerate() {
                assert!(*v <= fit.envelope.eval(smp.x0_norm, fit.envelope.t_grid[k]));
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sig = KLEnvelope::from_fn(vec![1.0, 2.0], vec![0.0, 1.0], |s, _| s).unwrap();
        let mut buf = Vec::new();
        sig.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("s\\t,0.0000000000000000e0,1.0000000000000000e0\n"));
    }
}
