use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::{simulate, DelaySystem, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::{euclid, Scalar};
use crate::segment::{NormConfig, Segment, SpaceSpec};
use crate::stability::{Budget, InitialSet, SampleBudget, StabilityReport};

use super::dini::{dini_derivative, prolongation_quotients};
use super::functional::{Functional, GridFunction};

/// Multiplicative slack of algebraic sandwiches.
pub const SANDWICH_SLACK: f64 = 1e-6;
/// Dini comparisons use `DINI_SLACK·(1 + V)`.
pub const DINI_SLACK: f64 = 1e-3;
/// The integral inequality uses `INTEGRAL_SLACK·(1 + V(x_0))`.
pub const INTEGRAL_SLACK: f64 = 1e-4;

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::MAX
    } else {
        0.0
    }
}

/// First violation of one sample: `(time, ‖x_t‖_X)`.
type Hit = Option<(f64, f64)>;

fn keep_first(slot: &mut Hit, t: f64, n: f64) {
    if slot.is_none() {
        *slot = Some((t, n));
    }
}

struct Context<'a, T: Scalar> {
    sys: &'a DelaySystem<T>,
    space: SpaceSpec,
    set: InitialSet,
    times: Vec<f64>,
    step: f64,
    norms: NormConfig,
}

impl<'a, T: Scalar> Context<'a, T> {
    fn new(sys: &'a DelaySystem<T>, space: &SpaceSpec, radius: f64, t_end: f64, budget: &Budget) -> Result<Self> {
        space.validate()?;
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::param("T", "horizon must be positive and finite"));
        }
        let r = sys.delay().to_f64_lossy();
        Ok(Context {
            sys,
            space: *space,
            set: InitialSet::new(space, radius, sys.dim(), r, budget)?,
            times: budget.report_grid(r, t_end),
            step: budget.step_for(r),
            norms: budget.norms,
        })
    }

    fn trajectory(&self, x0: &Segment<T>) -> Result<Trajectory<T>> {
        let t_end = *self.times.last().expect("nonempty grid");
        let tr = simulate(self.sys, x0, T::lit(t_end), T::lit(self.step))?;
        match tr.escape_time() {
            Some(te) => Err(Error::Escaped {
                time: te.to_f64_lossy(),
            }),
            None => Ok(tr),
        }
    }

    fn xnorm(&self, x: &Segment<T>) -> Result<f64> {
        Ok(self.norms.space(x, &self.space)?.to_f64_lossy())
    }

    fn budget(&self, simulations: usize) -> SampleBudget {
        SampleBudget {
            samples: self.set.samples(),
            probes: self.set.probes(),
            simulations,
        }
    }
}

/// Per-sample outcome: named worst ratios and the first violation per check.
#[derive(Default)]
struct Outcome {
    worst: Vec<f64>,
    hits: Vec<Hit>,
}

impl Outcome {
    fn new(n: usize) -> Self {
        Outcome {
            worst: vec![0.0; n],
            hits: vec![None; n],
        }
    }

    fn record(&mut self, k: usize, q: f64, limit: f64, t: f64, n: f64) {
        self.worst[k] = self.worst[k].max(q);
        if q > limit {
            keep_first(&mut self.hits[k], t, n);
        }
    }
}

/// Folds sample outcomes into the report: `<name>` worst ratios,
/// `violations_<name>` counts, and the witness of the first failing sample.
fn summarize<T: Scalar>(
    rep: &mut StabilityReport,
    ctx: &Context<'_, T>,
    names: &[&str],
    outcomes: &[Outcome],
) -> Result<()> {
    for (k, name) in names.iter().enumerate() {
        let worst = outcomes.iter().map(|o| o.worst[k]).fold(0.0, f64::max);
        let count = outcomes.iter().filter(|o| o.hits[k].is_some()).count();
        rep.set(name, worst);
        rep.set(&format!("violations_{name}"), count as f64);
    }
    let first = outcomes
        .iter()
        .enumerate()
        .find_map(|(i, o)| o.hits.iter().flatten().next().map(|&(t, n)| (i, t, n)));
    if let Some((i, t, n)) = first {
        let radius = ctx.set.radius();
        rep.falsify(ctx.set.witness::<T>(i, radius, t, n)?);
    }
    Ok(())
}

/// Checks the coercive Lyapunov conditions on the `radius`-ball of `space`:
/// `a1(‖x‖) ≤ V(x) ≤ a2(‖x‖)` on samples and along their trajectories,
/// `V(x_t) ≤ e^{-t}V(x_0)` at every report time up to `t_end`, and, for
/// samples passing both, the implied `‖x_t‖ ≤ a1⁻¹(e^{-t}a2(‖x_0‖))`.
///
/// Margins `sandwich_lower`, `sandwich_upper`, `decay` and `sigma` are the
/// worst ratios (violation above `1 + 1e-6`); `constant_decay_gap` is the
/// largest `|V(x_t) − e^{-t}V(x_0)| / V(x_0)` over constant probes.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem5<T: Scalar>(
    sys: &DelaySystem<T>,
    v: &Functional,
    a1: &GridFunction,
    a2: &GridFunction,
    space: &SpaceSpec,
    radius: f64,
    t_end: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    v.validate()?;
    a1.validate()?;
    a2.validate()?;
    let ctx = Context::new(sys, space, radius, t_end, budget)?;
    let limit = 1.0 + SANDWICH_SLACK;
    let results: Vec<(Outcome, f64)> = (0..ctx.set.len())
        .into_par_iter()
        .map(|i| -> Result<(Outcome, f64)> {
            let mut out = Outcome::new(4);
            let x0: Segment<T> = ctx.set.get(i)?;
            let n0 = ctx.xnorm(&x0)?;
            let v0 = v.eval(&x0, &ctx.norms)?;
            let tr = ctx.trajectory(&x0)?;
            let mut gap = 0.0f64;
            let mut sigma_rows = Vec::with_capacity(ctx.times.len());
            for &t in &ctx.times {
                let xt = tr.segment_at(T::lit(t))?;
                let nt = ctx.xnorm(&xt)?;
                let vt = v.eval(&xt, &ctx.norms)?;
                out.record(0, ratio(a1.eval(nt), vt), limit, t, nt);
                out.record(1, ratio(vt, a2.eval(nt)), limit, t, nt);
                let decayed = (-t).exp() * v0;
                out.record(2, ratio(vt, decayed), limit, t, nt);
                if v0 > 0.0 {
                    gap = gap.max((vt - decayed).abs() / v0);
                }
                sigma_rows.push((t, nt, a1.inverse((-t).exp() * a2.eval(n0))));
            }
            if out.hits[..3].iter().all(Option::is_none) {
                for (t, nt, bound) in sigma_rows {
                    out.record(3, ratio(nt, bound), limit, t, nt);
                }
            }
            Ok((out, if i < ctx.set.probes() { gap } else { 0.0 }))
        })
        .collect::<Result<_>>()?;

    let mut rep = StabilityReport::new("theorem5", *space);
    rep.sample_budget = ctx.budget(results.len());
    let gap = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let outcomes: Vec<Outcome> = results.into_iter().map(|r| r.0).collect();
    summarize(
        &mut rep,
        &ctx,
        &["sandwich_lower", "sandwich_upper", "decay", "sigma"],
        &outcomes,
    )?;
    rep.set("constant_decay_gap", gap);
    Ok(rep)
}

/// `∫_{t_prev}^{t} Q(|x(τ)|) dτ` by composite Simpson with pieces of about `step`.
fn integral_q<T: Scalar>(tr: &Trajectory<T>, q: &GridFunction, a: f64, b: f64, step: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let n = ((b - a) / step - 1e-9).ceil().max(1.0) as usize;
    let w = (b - a) / n as f64;
    let qa = |t: f64| -> Result<f64> { Ok(q.eval(euclid(&tr.value_at(T::lit(t))?).to_f64_lossy())) };
    let mut acc = 0.0;
    for k in 0..n {
        let t0 = a + w * k as f64;
        let t1 = if k + 1 == n { b } else { t0 + w };
        acc += (t1 - t0) / 6.0 * (qa(t0)? + 4.0 * qa(0.5 * (t0 + t1))? + qa(t1)?);
    }
    Ok(acc)
}

/// Checks the non-coercive conditions: `a1(|x(0)|) ≤ V(x) ≤ a2(‖x‖)` on
/// samples and along their trajectories, the Dini estimate
/// `D⁺V(x) ≤ −Q(x(0)) + 1e-3·(1 + V(x))` at each sample, and
/// `V(x_t) + ∫₀ᵗ Q(x(τ))dτ ≤ V(x_0) + 1e-4·(1 + V(x_0))` along the first
/// `trajectories` samples. `Q` acts on `|x(0)|`.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem6<T: Scalar>(
    sys: &DelaySystem<T>,
    v: &Functional,
    a1: &GridFunction,
    a2: &GridFunction,
    q: &GridFunction,
    space: &SpaceSpec,
    radius: f64,
    trajectories: usize,
    t_end: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    v.validate()?;
    for g in [a1, a2, q] {
        g.validate()?;
    }
    let ctx = Context::new(sys, space, radius, t_end, budget)?;
    let limit = 1.0 + SANDWICH_SLACK;
    let outcomes: Vec<(Outcome, bool)> = (0..ctx.set.len())
        .into_par_iter()
        .map(|i| -> Result<(Outcome, bool)> {
            let mut out = Outcome::new(4);
            let x0: Segment<T> = ctx.set.get(i)?;
            let n0 = ctx.xnorm(&x0)?;
            let v0 = v.eval(&x0, &ctx.norms)?;
            let head0 = euclid(x0.head()).to_f64_lossy();
            let tr = ctx.trajectory(&x0)?;
            for &t in &ctx.times {
                let xt = tr.segment_at(T::lit(t))?;
                let nt = ctx.xnorm(&xt)?;
                let vt = v.eval(&xt, &ctx.norms)?;
                let head = euclid(xt.head()).to_f64_lossy();
                out.record(0, ratio(a1.eval(head), vt), limit, t, nt);
                out.record(1, ratio(vt, a2.eval(nt)), limit, t, nt);
            }
            let d = dini_derivative(sys, v, &x0, &ctx.norms)?;
            // Excess over the allowed value, in units of the tolerance.
            let excess = (d.estimate + q.eval(head0)) / (DINI_SLACK * (1.0 + v0));
            out.record(2, excess.max(0.0), 1.0, 0.0, n0);
            if i < trajectories {
                let mut acc = 0.0;
                let mut prev = 0.0;
                for &t in &ctx.times {
                    acc += integral_q(&tr, q, prev, t, ctx.step)?;
                    prev = t;
                    let vt = v.eval(&tr.segment_at(T::lit(t))?, &ctx.norms)?;
                    let excess = (vt + acc - v0) / (INTEGRAL_SLACK * (1.0 + v0));
                    out.record(3, excess.max(0.0), 1.0, t, vt);
                }
            }
            Ok((out, d.trend))
        })
        .collect::<Result<_>>()?;

    let mut rep = StabilityReport::new("theorem6", *space);
    rep.sample_budget = ctx.budget(outcomes.len());
    rep.set("dini_trend_flags", outcomes.iter().filter(|o| o.1).count() as f64);
    let outcomes: Vec<Outcome> = outcomes.into_iter().map(|o| o.0).collect();
    summarize(
        &mut rep,
        &ctx,
        &["sandwich_lower", "sandwich_upper", "dini", "integral"],
        &outcomes,
    )?;
    Ok(rep)
}

/// Checks the prolongation-based condition for robust forward completeness:
/// `U(x) ≥ a(|x(0)|)` and `(U(P_h x) − U(x))/h ≤ μ·U(x) + 1e-3·(1 + U(x))`
/// along the whole step ladder, plus the cross-check
/// `U(x_t) ≤ e^{μt}U(x_0)·(1 + 1e-3)` along simulated trajectories to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn check_rfc_sufficient<T: Scalar>(
    sys: &DelaySystem<T>,
    u: &Functional,
    a: &GridFunction,
    mu: f64,
    space: &SpaceSpec,
    radius: f64,
    t_end: f64,
    budget: &Budget,
) -> Result<StabilityReport> {
    u.validate()?;
    a.validate()?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::param("mu", "must be finite and nonnegative"));
    }
    let ctx = Context::new(sys, space, radius, t_end, budget)?;
    let limit = 1.0 + SANDWICH_SLACK;
    let outcomes: Vec<Outcome> = (0..ctx.set.len())
        .into_par_iter()
        .map(|i| -> Result<Outcome> {
            let mut out = Outcome::new(3);
            let x0: Segment<T> = ctx.set.get(i)?;
            let n0 = ctx.xnorm(&x0)?;
            let u0 = u.eval(&x0, &ctx.norms)?;
            let head = euclid(x0.head()).to_f64_lossy();
            out.record(0, ratio(a.eval(head), u0), limit, 0.0, n0);
            let pq = prolongation_quotients(sys, u, &x0, &ctx.norms)?;
            let tol = DINI_SLACK * (1.0 + u0);
            for (_, qk) in &pq.quotients {
                out.record(1, ((qk - mu * u0) / tol).max(0.0), 1.0, 0.0, n0);
            }
            let tr = ctx.trajectory(&x0)?;
            for &t in &ctx.times {
                let xt = tr.segment_at(T::lit(t))?;
                let ut = u.eval(&xt, &ctx.norms)?;
                out.record(2, ratio(ut, (mu * t).exp() * u0), 1.0 + DINI_SLACK, t, ctx.xnorm(&xt)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rep = StabilityReport::new("rfc-sufficient", *space);
    rep.sample_budget = ctx.budget(outcomes.len());
    rep.set("mu", mu);
    summarize(&mut rep, &ctx, &["lower_bound", "prolongation", "growth"], &outcomes)?;
    Ok(rep)
}

/// `max |V(x) − V(y)| / ‖x − y‖_X` over `pairs` sampled pairs in the `radius`-ball.
pub fn lipschitz_spot_check<T: Scalar>(
    v: &Functional,
    space: &SpaceSpec,
    radius: f64,
    dim: usize,
    r: f64,
    pairs: usize,
    budget: &Budget,
) -> Result<f64> {
    let mut b = budget.clone();
    b.samples = 2 * pairs;
    b.probes = false;
    let set = InitialSet::new(space, radius, dim, r, &b)?;
    let ratios: Vec<f64> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x: Segment<T> = set.get(2 * i)?;
            let y: Segment<T> = set.get(2 * i + 1)?;
            let d = b.norms.space(&x.sub(&y)?, space)?.to_f64_lossy();
            let dv = (v.eval(&x, &b.norms)? - v.eval(&y, &b.norms)?).abs();
            Ok(ratio(dv, d))
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Distance between `x_t` and `x_0` in a space, split into the sup part and
/// the derivative (or Hölder) part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowIncrement {
    pub t: f64,
    pub sup: f64,
    pub deriv: f64,
    pub norm: f64,
}

/// `‖x_t − x_0‖` for each `t` in `times`, to measure continuity of the flow in `space`.
pub fn flow_increments<T: Scalar>(
    sys: &DelaySystem<T>,
    x0: &Segment<T>,
    times: &[f64],
    space: &SpaceSpec,
    norms: &NormConfig,
) -> Result<Vec<FlowIncrement>> {
    space.validate()?;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    if !(t_end > 0.0) {
        return Err(Error::param("times", "need a positive time"));
    }
    let r = x0.delay().to_f64_lossy();
    let h = (x0.spacing().to_f64_lossy()).min(r / 10.0);
    let tr = simulate(sys, x0, T::lit(t_end), T::lit(h))?;
    times
        .iter()
        .map(|&t| {
            let d = tr.segment_at(T::lit(t))?.sub(x0)?;
            let sup = norms.sup(&d).to_f64_lossy();
            let deriv = match *space {
                SpaceSpec::SupC0 => 0.0,
                SpaceSpec::Sobolev(p) => norms.lp_deriv(&d, p)?.to_f64_lossy(),
                SpaceSpec::Hoelder(a) => norms.hoelder(&d, a)?.to_f64_lossy(),
            };
            Ok(FlowIncrement {
                t,
                sup,
                deriv,
                norm: norms.space(&d, space)?.to_f64_lossy(),
            })
        })
        .collect()
}
