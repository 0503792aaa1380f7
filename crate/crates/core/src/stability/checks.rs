use crate::dde::DelaySystem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segment::SpaceSpec;

use super::envelope::{fit_kl_envelope, EnvelopeMode};
use super::report::{DeltaEntry, SampleBudget, StabilityReport, Verdict};
use super::runs::{earliest_escape, run_batch, Budget, InitialSet, Measure, Run};

/// Number of bisection steps in the `δ(ε)` search.
pub const LS_BISECTIONS: usize = 20;

struct Setup {
    step: f64,
    times: Vec<f64>,
    set: InitialSet,
}

fn setup<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    radius: f64,
    horizon: f64,
    budget: &Budget,
) -> Result<Setup> {
    space.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::param("T", "horizon must be positive and finite"));
    }
    let r = sys.delay().to_f64_lossy();
    Ok(Setup {
        step: budget.step_for(r),
        times: budget.report_grid(r, horizon),
        set: InitialSet::new(space, radius, sys.dim(), r, budget)?,
    })
}

impl Setup {
    fn members(&self, radius: f64) -> Vec<(usize, f64)> {
        (0..self.set.len()).map(|i| (i, radius)).collect()
    }

    fn runs<T: Scalar>(
        &self,
        sys: &DelaySystem<T>,
        space: &SpaceSpec,
        radius: f64,
        budget: &Budget,
    ) -> Result<Vec<Run>> {
        let what = Measure::Segment(*space);
        run_batch(
            sys,
            &self.set,
            &self.members(radius),
            space,
            &self.times,
            self.step,
            what,
            &budget.norms,
        )
    }

    fn budget(&self, simulations: usize) -> SampleBudget {
        SampleBudget {
            samples: self.set.samples(),
            probes: self.set.probes(),
            simulations,
        }
    }

    fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }
}

fn max_norm(runs: &[Run]) -> f64 {
    runs.iter().map(Run::peak).fold(0.0, f64::max)
}

/// Robust forward completeness on `[0, T]`: falsified iff some sampled
/// trajectory from the `ρ`-ball escapes before `T`. Margin `sup` is the
/// largest norm seen.
pub fn check_rfc<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    rho: f64,
    t_end: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    let su = setup(sys, space, rho, t_end, budget)?;
    let runs = su.runs(sys, space, rho, budget)?;
    let mut rep = StabilityReport::new("rfc", *space);
    rep.sample_budget = su.budget(runs.len());
    rep.set("rho", rho);
    rep.set("horizon", su.horizon());
    rep.set("sup", max_norm(&runs));
    if let Some((i, te)) = earliest_escape(&runs) {
        rep.set("escape_time", te);
        rep.falsify(su.set.witness::<T>(i, rho, te, runs[i].peak())?);
    }
    Ok(rep)
}

/// First member (in order) that exceeds `eps` anywhere on the grid.
fn first_exceeding(runs: &[Run], times: &[f64], eps: f64) -> Option<(usize, f64, f64)> {
    runs.iter()
        .enumerate()
        .find_map(|(i, run)| run.first_above(times, eps).map(|(t, n)| (i, t, n)))
}

/// Lyapunov stability: for each `ε`, a log-scale bisection on
/// `[1e-6·ε, 10·ε]` for the largest `δ` whose sampled ball stays within `ε`
/// up to the horizon. Falsified when `δ(ε) < 1e-3·ε`.
pub fn check_ls<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    eps_list: &[f64],
    budget: &Budget,
) -> Result<StabilityReport> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::param("eps", "need positive finite tolerances"));
    }
    let r = sys.delay().to_f64_lossy();
    let su = setup(sys, space, eps_list[0], budget.horizon_for(r), budget)?;
    let mut rep = StabilityReport::new("ls", *space);
    let mut sims = 0;
    let mut worst = f64::INFINITY;
    for &eps in eps_list {
        let mut probe = |delta: f64| -> Result<Option<(usize, f64, f64)>> {
            let runs = su.runs(sys, space, delta, budget)?;
            sims += runs.len();
            Ok(first_exceeding(&runs, &su.times, eps))
        };
        let (mut lo, mut hi) = ((1e-6 * eps).ln(), (10.0 * eps).ln());
        let mut fail = None;
        let delta = if probe(hi.exp())?.is_none() {
            hi.exp()
        } else if let Some(f) = probe(lo.exp())? {
            fail = Some((lo.exp(), f));
            0.0
        } else {
            for _ in 0..LS_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                match probe(mid.exp())? {
                    None => lo = mid,
                    Some(f) => {
                        hi = mid;
                        fail = Some((mid.exp(), f));
                    }
                }
            }
            lo.exp()
        };
        rep.delta_table.push(DeltaEntry { eps, delta });
        worst = worst.min(delta / eps);
        if delta < 1e-3 * eps && rep.witness.is_none() {
            let (radius, (i, t, n)) = fail.expect("a failing radius was seen");
            rep.falsify(su.set.witness::<T>(i, radius, t, n)?);
        }
    }
    rep.set("min_delta_over_eps", worst);
    rep.set("horizon", su.horizon());
    rep.sample_budget = su.budget(sims);
    Ok(rep)
}

/// Global attractivity on the `ρ`-ball: a sample passes when its norm is at
/// most `ε` at the horizon. One that is still above `ε` and has not decreased
/// over the last quarter of the horizon (or escaped) falsifies; otherwise the
/// verdict is inconclusive.
pub fn check_ga<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    rho: f64,
    eps: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let r = sys.delay().to_f64_lossy();
    let su = setup(sys, space, rho, budget.horizon_for(r), budget)?;
    let runs = su.runs(sys, space, rho, budget)?;
    let mut rep = StabilityReport::new("ga", *space);
    rep.sample_budget = su.budget(runs.len());
    rep.set("rho", rho);
    rep.set("eps", eps);
    rep.set("horizon", su.horizon());
    let horizon = su.horizon();
    let q = su.times.iter().position(|t| *t >= 0.75 * horizon).unwrap_or(0);
    let mut verdict = Verdict::Consistent;
    let mut witness = None;
    let mut worst_final = 0.0f64;
    for (i, run) in runs.iter().enumerate() {
        if let Some(te) = run.escape {
            verdict = Verdict::Falsified;
            witness.get_or_insert((i, te, run.peak()));
            continue;
        }
        let last = *run.norms.last().expect("grid reached");
        worst_final = worst_final.max(last);
        if last <= eps {
            continue;
        }
        if last >= run.norms[q] {
            verdict = Verdict::Falsified;
            witness.get_or_insert((i, horizon, last));
        } else {
            verdict = verdict.combine(Verdict::Inconclusive);
        }
    }
    rep.set("max_final_norm", worst_final);
    rep.verdict = verdict;
    if let Some((i, t, n)) = witness {
        rep.falsify(su.set.witness::<T>(i, rho, t, n)?);
    }
    Ok(rep)
}

/// Uniform global attractivity: `T(ε, ρ)` is the first report time after
/// which every sampled trajectory from the `ρ`-ball stays within `ε`.
/// Inconclusive when some sample is still above `ε` at the horizon.
pub fn check_uga<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    eps: f64,
    rho: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let r = sys.delay().to_f64_lossy();
    let su = setup(sys, space, rho, budget.horizon_for(r), budget)?;
    let runs = su.runs(sys, space, rho, budget)?;
    let mut rep = StabilityReport::new("uga", *space);
    rep.sample_budget = su.budget(runs.len());
    rep.set("rho", rho);
    rep.set("eps", eps);
    rep.set("horizon", su.horizon());
    if let Some((i, te)) = earliest_escape(&runs) {
        rep.falsify(su.set.witness::<T>(i, rho, te, runs[i].peak())?);
        return Ok(rep);
    }
    // Last grid index at which some sample is above eps.
    let mut last_above: Option<usize> = None;
    for run in &runs {
        if let Some(k) = run.norms.iter().rposition(|n| *n > eps) {
            last_above = Some(last_above.map_or(k, |m| m.max(k)));
        }
    }
    match last_above {
        Some(k) if k + 1 >= su.times.len() => {
            rep.verdict = Verdict::Inconclusive;
        }
        other => {
            let k = other.map_or(0, |k| k + 1);
            rep.set("T", su.times[k]);
            rep.set("grid_step", if k > 0 { su.times[k] - su.times[k - 1] } else { 0.0 });
        }
    }
    Ok(rep)
}

/// Lagrange stability up to the horizon: the sup over samples and times.
/// Inconclusive when the sample-wise maximum still grows over the last
/// quarter (positive least-squares slope); falsified on escape.
pub fn check_lags<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    rho: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    let r = sys.delay().to_f64_lossy();
    let su = setup(sys, space, rho, budget.horizon_for(r), budget)?;
    let runs = su.runs(sys, space, rho, budget)?;
    let mut rep = StabilityReport::new("lags", *space);
    rep.sample_budget = su.budget(runs.len());
    let sup = max_norm(&runs);
    rep.set("rho", rho);
    rep.set("sup", sup);
    rep.set("horizon", su.horizon());
    if let Some((i, te)) = earliest_escape(&runs) {
        rep.falsify(su.set.witness::<T>(i, rho, te, runs[i].peak())?);
        return Ok(rep);
    }
    let horizon = su.horizon();
    let upper: Vec<f64> = (0..su.times.len())
        .map(|k| runs.iter().map(|run| run.norms[k]).fold(0.0, f64::max))
        .collect();
    let tail: Vec<(f64, f64)> = su
        .times
        .iter()
        .zip(&upper)
        .filter(|(t, _)| **t >= 0.75 * horizon)
        .map(|(t, v)| (*t, *v))
        .collect();
    let slope = ls_slope(&tail);
    rep.set("tail_slope", slope);
    if slope * 0.25 * horizon > 1e-9 * (1.0 + sup) {
        rep.verdict = Verdict::Inconclusive;
    }
    Ok(rep)
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(t, v)| (t - mt) * (v - mv)).sum();
    let den: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Composite check of GAS against UGAS: Lyapunov stability over `eps_list`,
/// convergence below `min(eps_list)` from every ball in `rho_list`, forward
/// completeness on the largest ball, and a KL envelope fitted on that ball.
///
/// Consistent with UGAS iff every part is consistent and the envelope decays
/// at the horizon. If the first three pass but the envelope does not decay
/// the report is marked incoherent (`coherent = 0`) and inconclusive.
pub fn check_gas_vs_ugas<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    rho_list: &[f64],
    eps_list: &[f64],
    budget: &Budget,
) -> Result<StabilityReport> {
    if rho_list.is_empty() || eps_list.is_empty() {
        return Err(Error::param("rho", "need at least one radius and one tolerance"));
    }
    let r = sys.delay().to_f64_lossy();
    let horizon = budget.horizon_for(r);
    let rho_max = rho_list.iter().copied().fold(0.0, f64::max);
    let eps_min = eps_list.iter().copied().fold(f64::INFINITY, f64::min);

    let mut parts = vec![check_ls(sys, space, eps_list, budget)?];
    for &rho in rho_list {
        parts.push(check_ga(sys, space, rho, eps_min, budget)?);
    }
    parts.push(check_rfc(sys, space, rho_max, horizon, budget)?);

    let mut rep = StabilityReport::new("gas-vs-ugas", *space);
    let mut verdict = parts.iter().fold(Verdict::Consistent, |v, p| v.combine(p.verdict));
    let all_pass = verdict == Verdict::Consistent;
    let times = budget.report_grid(r, horizon);
    let decaying = match fit_kl_envelope(sys, space, rho_max, 8, &times, budget, EnvelopeMode::Uniform) {
        Ok(fit) => {
            let worst = fit.envelope.tail_ratios().into_iter().fold(0.0, f64::max);
            rep.set("envelope_tail_ratio", worst);
            fit.envelope.decaying()
        }
        Err(Error::Escaped { .. }) => false,
        Err(e) => return Err(e),
    };
    rep.set("envelope_decaying", f64::from(u8::from(decaying)));
    rep.set("coherent", f64::from(u8::from(!all_pass || decaying)));
    if all_pass && !decaying {
        verdict = Verdict::Inconclusive;
    }
    rep.verdict = verdict;
    rep.witness = parts.iter().find_map(|p| p.witness.clone());
    rep.sample_budget = parts.iter().fold(SampleBudget::default(), |acc, p| SampleBudget {
        samples: acc.samples.max(p.sample_budget.samples),
        probes: acc.probes.max(p.sample_budget.probes),
        simulations: acc.simulations + p.sample_budget.simulations,
    });
    rep.parts = parts;
    Ok(rep)
}
