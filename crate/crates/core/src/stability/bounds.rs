use rayon::prelude::*;

use crate::dde::{simulate, DelaySystem};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segment::{Segment, SpaceSpec};

use super::envelope::{EnvelopeFit, KLEnvelope};
use super::report::{SampleBudget, StabilityReport};
use super::runs::{measure, snap_times, Budget, InitialSet, Measure};

/// Relative slack of the pair and envelope bounds.
pub const BOUND_SLACK: f64 = 1e-6;

/// `M = 1 + (1 + r^{1/p})·max(1, L(σ₀)·e^{L(σ₀)T})`, the constant with
/// `‖x_t − y_t‖_X ≤ M‖x_0 − y_0‖_X` on `[0, T]` for histories in the `R`-ball.
pub fn lipschitz_propagation_bound<L: Fn(f64) -> f64>(
    radius: f64,
    t_end: f64,
    r: f64,
    p: f64,
    l: L,
    sigma0: f64,
) -> Result<f64> {
    for (name, v) in [("R", radius), ("T", t_end), ("r", r), ("sigma0", sigma0)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, "must be positive and finite"));
        }
    }
    if !(p > 1.0) {
        return Err(Error::param("p", "must be > 1"));
    }
    let rp = if p.is_infinite() { 1.0 } else { r.powf(1.0 / p) };
    let l0 = l(sigma0);
    Ok(1.0 + (1.0 + rp) * (l0 * (l0 * t_end).exp()).max(1.0))
}

/// Checks the sup-norm Gronwall bound `‖x_t − y_t‖_∞ ≤ e^{L(σ₀)T}‖x_0 − y_0‖_∞`
/// and the X-norm bound with `M` on `pairs` sampled pairs from the `R`-ball,
/// at every report time in `[0, T]`.
///
/// `σ₀` is taken from `sigma0` when given (an envelope value `σ(R, 0)`),
/// otherwise from the a-priori bound `e^{L(R)T}·R`. Odd pairs are pulled
/// close together (`y ← 0.999 x + 0.001 y`) so small differences are tested.
pub fn verify_pair_bounds<T: Scalar>(
    sys: &DelaySystem<T>,
    space: &SpaceSpec,
    radius: f64,
    t_end: f64,
    pairs: usize,
    budget: &Budget,
    sigma0: Option<f64>,
) -> Result<StabilityReport> {
    space.validate()?;
    if pairs == 0 {
        return Err(Error::param("pairs", "must be at least 1"));
    }
    let r = sys.delay().to_f64_lossy();
    let lip = |s: f64| sys.lipschitz_modulus(T::lit(s)).to_f64_lossy();
    let sigma0 = sigma0.unwrap_or_else(|| (lip(radius) * t_end).exp() * radius);
    let l0 = lip(sigma0);
    let gronwall = (l0 * t_end).exp();
    let m = lipschitz_propagation_bound(radius, t_end, r, space.conjugate_p(), lip, sigma0)?;

    let mut b = budget.clone();
    b.samples = 2 * pairs;
    b.probes = false;
    let set = InitialSet::new(space, radius, sys.dim(), r, &b)?;
    let times = b.report_grid(r, t_end);
    let step = b.step_for(r);

    // (sup ratio, X ratio, time of the worst X ratio) per pair.
    let results: Vec<(f64, f64, f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64, f64)> {
            let x0: Segment<T> = set.get(2 * i)?;
            let mut y0: Segment<T> = set.get(2 * i + 1)?;
            if i % 2 == 1 {
                y0 = x0.scaled(T::lit(0.999)).axpy(T::lit(0.001), &y0)?;
            }
            let d0 = x0.sub(&y0)?;
            let d0_sup = b.norms.sup(&d0).to_f64_lossy();
            let d0_x = b.norms.space(&d0, space)?.to_f64_lossy();
            if d0_sup == 0.0 {
                return Ok((0.0, 0.0, 0.0, 0.0));
            }
            let tx = simulate(sys, &x0, T::lit(t_end), T::lit(step))?;
            let ty = simulate(sys, &y0, T::lit(t_end), T::lit(step))?;
            if let Some(te) = tx.escape_time().or(ty.escape_time()) {
                return Err(Error::Escaped {
                    time: te.to_f64_lossy(),
                });
            }
            let (mut ws, mut wx, mut wt, mut wn) = (0.0f64, 0.0f64, 0.0, 0.0);
            for &t in &times {
                let d = tx.segment_at(T::lit(t))?.sub(&ty.segment_at(T::lit(t))?)?;
                let ds = b.norms.sup(&d).to_f64_lossy();
                let dx = b.norms.space(&d, space)?.to_f64_lossy();
                ws = ws.max(ds / (gronwall * d0_sup));
                let q = dx / (m * d0_x);
                if q > wx {
                    (wx, wt, wn) = (q, t, dx);
                }
            }
            Ok((ws, wx, wt, wn))
        })
        .collect::<Result<_>>()?;

    let mut rep = StabilityReport::new("pair-bounds", *space);
    rep.sample_budget = SampleBudget {
        samples: 2 * pairs,
        probes: 0,
        simulations: 4 * pairs,
    };
    let worst_sup = results.iter().map(|v| v.0).fold(0.0, f64::max);
    let worst_x = results.iter().map(|v| v.1).fold(0.0, f64::max);
    rep.set("L", l0);
    rep.set("sigma0", sigma0);
    rep.set("gronwall", gronwall);
    rep.set("M", m);
    rep.set("max_sup_ratio", worst_sup);
    rep.set("max_x_ratio", worst_x);
    let limit = 1.0 + BOUND_SLACK;
    if let Some(i) = results.iter().position(|v| v.0 > limit || v.1 > limit) {
        let (_, _, t, n) = results[i];
        rep.falsify(set.witness::<T>(2 * i, radius, t, n)?);
    }
    Ok(rep)
}

/// Checks `‖x_t‖_X ≤ ω(‖x_0‖_X, t)` for every sample behind `fit` at every
/// envelope time, with relative slack [`BOUND_SLACK`].
pub fn verify_omega<T: Scalar>(
    sys: &DelaySystem<T>,
    fit: &EnvelopeFit,
    omega: &KLEnvelope,
    budget: &Budget,
) -> Result<StabilityReport> {
    let space = fit.space;
    let r = sys.delay().to_f64_lossy();
    let times = snap_times(
        &omega.t_grid,
        budget.spacing(r),
        omega.t_grid.last().copied().unwrap_or(0.0),
    );
    let step = budget.step_for(r);
    let what = Measure::Segment(space);
    let results: Vec<(f64, f64, f64)> = fit
        .samples
        .par_iter()
        .map(|smp| -> Result<(f64, f64, f64)> {
            let x0: Segment<T> = fit.set.get_in(smp.index, smp.radius)?;
            let t_end = *times.last().expect("nonempty grid");
            let tr = simulate(sys, &x0, T::lit(t_end.max(step)), T::lit(step))?;
            if let Some(te) = tr.escape_time() {
                return Err(Error::Escaped {
                    time: te.to_f64_lossy(),
                });
            }
            let mut worst = (0.0f64, 0.0, 0.0);
            for &t in &times {
                let n = measure(&tr, t, what, &budget.norms)?;
                let q = n / omega.eval(smp.x0_norm, t);
                if q > worst.0 {
                    worst = (q, t, n);
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let mut rep = StabilityReport::new("omega-domination", space);
    rep.sample_budget = SampleBudget {
        samples: fit.set.samples(),
        probes: fit.set.probes(),
        simulations: fit.samples.len(),
    };
    let worst = results.iter().map(|v| v.0).fold(0.0, f64::max);
    rep.set("max_ratio", worst);
    rep.set(
        "violations",
        results.iter().filter(|v| v.0 > 1.0 + BOUND_SLACK).count() as f64,
    );
    if let Some(i) = results.iter().position(|v| v.0 > 1.0 + BOUND_SLACK) {
        let smp = &fit.samples[i];
        rep.falsify(
            fit.set
                .witness::<T>(smp.index, smp.radius, results[i].1, results[i].2)?,
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::{build_system, SystemDef};
    use crate::stability::Verdict;
    use std::f64::consts::E;

    #[test]
    fn propagation_constant_examples() {
        let m = lipschitz_propagation_bound(1.0, 1.0, 1.0, f64::INFINITY, |_| 0.0, 1.0).unwrap();
        assert_eq!(m, 3.0);
        let m = lipschitz_propagation_bound(1.0, 1.0, 1.0, 2.0, |_| 1.0, 1.0).unwrap();
        assert!((m - (1.0 + 2.0 * E)).abs() < 1e-12);
        // Pinned branch: L·e^{LT} ≤ 1 gives 2 + r^{1/p}.
        let m = lipschitz_propagation_bound(1.0, 1.0, 4.0, 2.0, |_| 0.1, 1.0).unwrap();
        assert!((m - 4.0).abs() < 1e-12);
        assert!(lipschitz_propagation_bound(1.0, 1.0, 1.0, 1.0, |_| 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_system_pairs_hold() {
        let sys = build_system::<f64>(&SystemDef::new("zero", 1, 1.0, &[])).unwrap();
        let rep = verify_pair_bounds(
            &sys,
            &SpaceSpec::sobolev(2.0).unwrap(),
            1.0,
            2.0,
            6,
            &Budget::default(),
            None,
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!(rep.margin("max_sup_ratio").unwrap() <= 1.0);
    }

    #[test]
    fn linear_pairs_hold() {
        let sys = build_system::<f64>(&SystemDef::new("linear_scalar", 1, 1.0, &[("a", -1.0), ("b", 0.5)])).unwrap();
        let rep = verify_pair_bounds(&sys, &SpaceSpec::SupC0, 1.0, 2.0, 10, &Budget::default(), None).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!((rep.margin("L").unwrap() - 1.5).abs() < 1e-12);
    }
}
