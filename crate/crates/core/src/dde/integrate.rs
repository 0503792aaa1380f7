use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::{euclid, Scalar};
use crate::segment::{fmt_num, gauss3, node_position, Segment, Side};

use super::{DelaySystem, History};

/// Trajectories whose state exceeds this magnitude are flagged as escaped.
pub const ESCAPE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub escape_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            escape_threshold: ESCAPE_THRESHOLD,
        }
    }
}

/// Dense solution on `[-r, t_end]`: the initial segment on `[-r, 0]` and a
/// cubic Hermite mesh (values plus exact `f(x_t)` derivatives) on `[0, t_end]`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    system: DelaySystem<T>,
    initial: Segment<T>,
    step: T,
    times: Vec<T>,
    values: Vec<T>,
    derivs: Vec<T>,
    escape: Option<T>,
}

/// Borrowed view of the dense output built so far.
#[derive(Clone, Copy)]
struct Dense<'a, T: Scalar> {
    initial: &'a Segment<T>,
    step: T,
    times: &'a [T],
    values: &'a [T],
    derivs: &'a [T],
    dim: usize,
}

impl<'a, T: Scalar> Dense<'a, T> {
    #[inline]
    fn last(&self) -> usize {
        self.times.len() - 1
    }

    #[inline]
    fn tol(&self) -> T {
        self.step * T::lit(1e-9)
    }

    #[inline]
    fn node(&self, tau: T) -> Option<usize> {
        let k = (tau / self.step).round().to_usize()?;
        let k = k.min(self.last());
        ((tau - self.times[k]).abs() <= self.tol()).then_some(k)
    }

    /// Mesh piece containing `tau > 0`, with local coordinate and width.
    #[inline]
    fn piece(&self, tau: T) -> (usize, T, T) {
        let last = self.last();
        let mut k = (tau / self.step).floor().to_usize().unwrap_or(0);
        if k + 1 > last {
            k = last.saturating_sub(1);
        }
        if tau < self.times[k] && k > 0 {
            k -= 1;
        }
        let w = self.times[k + 1] - self.times[k];
        let u = ((tau - self.times[k]) / w).max(T::zero()).min(T::one());
        (k, u, w)
    }

    fn hermite(&self, k: usize, u: T, w: T, x: &mut [T], dx: Option<&mut [T]>) {
        let n = self.dim;
        let (a, b) = (k * n, (k + 1) * n);
        let u2 = u * u;
        let u3 = u2 * u;
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let h00 = two * u3 - three * u2 + T::one();
        let h10 = u3 - two * u2 + u;
        let h01 = three * u2 - two * u3;
        let h11 = u3 - u2;
        for i in 0..n {
            x[i] = h00 * self.values[a + i]
                + h10 * w * self.derivs[a + i]
                + h01 * self.values[b + i]
                + h11 * w * self.derivs[b + i];
        }
        if let Some(dx) = dx {
            let six = T::lit(6.0);
            let g00 = six * u2 - six * u;
            let g10 = three * u2 - T::lit(4.0) * u + T::one();
            let g11 = three * u2 - two * u;
            for i in 0..n {
                dx[i] = g00 * (self.values[a + i] - self.values[b + i]) / w
                    + g10 * self.derivs[a + i]
                    + g11 * self.derivs[b + i];
            }
        }
    }

    fn value(&self, tau: T, out: &mut [T]) {
        let n = self.dim;
        if tau <= T::zero() {
            self.initial.eval(tau, out);
        } else if let Some(k) = self.node(tau) {
            out.copy_from_slice(&self.values[k * n..(k + 1) * n]);
        } else {
            let (k, u, w) = self.piece(tau);
            self.hermite(k, u, w, out, None);
        }
    }

    fn deriv(&self, tau: T, side: Side, out: &mut [T]) {
        let n = self.dim;
        if tau.abs() <= self.tol() {
            match side {
                Side::Left => out.copy_from_slice(self.initial.deriv_left(self.initial.intervals())),
                Side::Right => out.copy_from_slice(&self.derivs[..n]),
            }
        } else if tau < T::zero() {
            self.initial.eval_deriv(tau, side, out);
        } else if let Some(k) = self.node(tau) {
            out.copy_from_slice(&self.derivs[k * n..(k + 1) * n]);
        } else {
            let (k, u, w) = self.piece(tau);
            let mut tmp = vec![T::zero(); n];
            self.hermite(k, u, w, &mut tmp, Some(out));
        }
    }

    /// `∫_a^b x(τ) dτ` over `[a, b] ⊂ [-r, t_last]`.
    fn integral(&self, a: T, b: T, out: &mut [T]) {
        let n = self.dim;
        out.iter_mut().for_each(|o| *o = T::zero());
        if !(b > a) {
            return;
        }
        if a < T::zero() {
            self.initial.integral(a, b.min(T::zero()), out);
        }
        let lo = a.max(T::zero());
        if !(b > lo) {
            return;
        }
        let (k0, _, _) = self.piece(lo);
        let (k1, _, _) = self.piece(b);
        let mut tmp = vec![T::zero(); n];
        for k in k0..=k1 {
            let (p0, p1) = (self.times[k], self.times[k + 1]);
            let (x0, x1) = (lo.max(p0), b.min(p1));
            if !(x1 > x0) {
                continue;
            }
            let w = p1 - p0;
            if x0 == p0 && x1 == p1 {
                let (ia, ib) = (k * n, (k + 1) * n);
                for i in 0..n {
                    out[i] = out[i]
                        + w * (self.values[ia + i] + self.values[ib + i]) / T::lit(2.0)
                        + w * w * (self.derivs[ia + i] - self.derivs[ib + i]) / T::lit(12.0);
                }
            } else {
                gauss3(x0, x1, |tau, wt| {
                    self.hermite(k, (tau - p0) / w, w, &mut tmp, None);
                    for i in 0..n {
                        out[i] = out[i] + wt * tmp[i];
                    }
                });
            }
        }
    }
}

/// The history seen by a Runge–Kutta stage at time `t_stage` with state
/// `y`: dense output up to `t_n`, linear between `(t_n, x_n)` and
/// `(t_stage, y)` on the partially built step.
struct StageView<'a, T: Scalar> {
    dense: Dense<'a, T>,
    r: T,
    t_n: T,
    x_n: &'a [T],
    t_stage: T,
    y: &'a [T],
}

impl<'a, T: Scalar> StageView<'a, T> {
    #[inline]
    fn linear(&self, tau: T, out: &mut [T]) {
        let c = (tau - self.t_n) / (self.t_stage - self.t_n);
        for i in 0..out.len() {
            out[i] = self.x_n[i] + c * (self.y[i] - self.x_n[i]);
        }
    }
}

impl<'a, T: Scalar> History<T> for StageView<'a, T> {
    fn delay(&self) -> T {
        self.r
    }

    fn dim(&self) -> usize {
        self.dense.dim
    }

    fn value_at(&self, s: T, out: &mut [T]) {
        if s == T::zero() {
            out.copy_from_slice(self.y);
            return;
        }
        let tau = self.t_stage + s;
        if tau <= self.t_n || self.t_stage <= self.t_n {
            self.dense.value(tau.min(self.t_n), out);
        } else {
            self.linear(tau, out);
        }
    }

    fn integral(&self, a: T, b: T, out: &mut [T]) {
        let (ta, tb) = (self.t_stage + a, self.t_stage + b);
        self.dense.integral(ta, tb.min(self.t_n), out);
        let lo = ta.max(self.t_n);
        if tb > lo && self.t_stage > self.t_n {
            let n = out.len();
            let mut y0 = vec![T::zero(); n];
            let mut y1 = vec![T::zero(); n];
            self.linear(lo, &mut y0);
            self.linear(tb, &mut y1);
            let half = (tb - lo) / T::lit(2.0);
            for i in 0..n {
                out[i] = out[i] + half * (y0[i] + y1[i]);
            }
        }
    }
}

/// Integrates `ẋ = f(x_t)` from `x0` over `[0, t_end]` with step close to `h`.
///
/// The step is shrunk to `r / ceil(r / h)` so every multiple of `r` is a mesh
/// point. Stage derivatives come from classical RK4 where each stage reads
/// the Hermite dense output of earlier steps. Requires `h ≤ r / 10`.
pub fn simulate<T: Scalar>(sys: &DelaySystem<T>, x0: &Segment<T>, t_end: T, h: T) -> Result<Trajectory<T>> {
    simulate_with(sys, x0, t_end, h, SimOptions::default())
}

pub fn simulate_with<T: Scalar>(
    sys: &DelaySystem<T>,
    x0: &Segment<T>,
    t_end: T,
    h: T,
    opts: SimOptions,
) -> Result<Trajectory<T>> {
    let r = sys.delay();
    if (x0.delay() - r).abs() > T::lit(1e-9) * r {
        return Err(Error::param(
            "x0",
            format!("segment delay {} differs from system delay {r}", x0.delay()),
        ));
    }
    if x0.dim() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: x0.dim(),
        });
    }
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(Error::param("T", "horizon must be positive and finite"));
    }
    if !(h > T::zero()) || h > r / T::lit(10.0) * (T::one() + T::lit(1e-9)) {
        return Err(Error::param("h", format!("need 0 < h <= r/10, got {h}")));
    }
    let per_delay = (r / h - T::lit(1e-9)).ceil().max(T::one());
    let step = r / per_delay;
    let full = (t_end / step - T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    let mut times: Vec<T> = (0..=full).map(|k| T::lit(k as f64) * step).collect();
    if t_end - times[full] > step * T::lit(1e-9) {
        times.push(t_end);
    } else {
        times[full] = t_end;
    }
    let steps = times.len() - 1;

    let n = sys.dim();
    let threshold = T::lit(opts.escape_threshold);
    let mut values = Vec::with_capacity(times.len() * n);
    let mut derivs = Vec::with_capacity(times.len() * n);
    values.extend_from_slice(x0.head());

    let eval_at = |values: &[T], derivs: &[T], k: usize, t_stage: T, y: &[T], out: &mut [T]| {
        let dense = Dense {
            initial: x0,
            step,
            times: &times[..=k],
            values,
            derivs,
            dim: n,
        };
        let view = StageView {
            dense,
            r,
            t_n: times[k],
            x_n: &values[k * n..(k + 1) * n],
            t_stage,
            y,
        };
        sys.eval_into(&view, out);
    };

    // f(x_0) reads only the initial history.
    let mut d0 = vec![T::zero(); n];
    {
        let dense = Dense {
            initial: x0,
            step,
            times: &times[..1],
            values: &values,
            derivs: &[],
            dim: n,
        };
        let view = StageView {
            dense,
            r,
            t_n: T::zero(),
            x_n: x0.head(),
            t_stage: T::zero(),
            y: x0.head(),
        };
        sys.eval_into(&view, &mut d0);
    }
    derivs.extend_from_slice(&d0);

    let mut escape = None;
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let (mut k2, mut k3, mut k4) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    let mut y = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut dnext = vec![T::zero(); n];
    for k in 0..steps {
        let (t_n, t_next) = (times[k], times[k + 1]);
        let hk = t_next - t_n;
        let x_n = values[k * n..(k + 1) * n].to_vec();
        let k1 = derivs[k * n..(k + 1) * n].to_vec();
        let mid = t_n + hk / two;

        for i in 0..n {
            y[i] = x_n[i] + hk / two * k1[i];
        }
        eval_at(&values, &derivs, k, mid, &y, &mut k2);
        for i in 0..n {
            y[i] = x_n[i] + hk / two * k2[i];
        }
        eval_at(&values, &derivs, k, mid, &y, &mut k3);
        for i in 0..n {
            y[i] = x_n[i] + hk * k3[i];
        }
        eval_at(&values, &derivs, k, t_next, &y, &mut k4);
        for i in 0..n {
            next[i] = x_n[i] + hk / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        let mag = euclid(&next);
        if !mag.is_finite() || mag > threshold {
            escape = Some(t_next);
            break;
        }
        eval_at(&values, &derivs, k, t_next, &next, &mut dnext);
        if dnext.iter().any(|v| !v.is_finite()) {
            escape = Some(t_next);
            break;
        }
        values.extend_from_slice(&next);
        derivs.extend_from_slice(&dnext);
    }
    let stored = values.len() / n;
    times.truncate(stored);

    Ok(Trajectory {
        system: sys.clone(),
        initial: x0.clone(),
        step,
        times,
        values,
        derivs,
        escape,
    })
}

impl<T: Scalar> Trajectory<T> {
    fn dense(&self) -> Dense<'_, T> {
        Dense {
            initial: &self.initial,
            step: self.step,
            times: &self.times,
            values: &self.values,
            derivs: &self.derivs,
            dim: self.initial.dim(),
        }
    }

    pub fn system(&self) -> &DelaySystem<T> {
        &self.system
    }

    pub fn initial(&self) -> &Segment<T> {
        &self.initial
    }

    /// Effective integration step.
    pub fn step(&self) -> T {
        self.step
    }

    /// Mesh times on `[0, t_end]`.
    pub fn mesh(&self) -> &[T] {
        &self.times
    }

    pub fn t_end(&self) -> T {
        *self.times.last().expect("mesh holds t = 0")
    }

    pub fn escape_time(&self) -> Option<T> {
        self.escape
    }

    pub fn escaped(&self) -> bool {
        self.escape.is_some()
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn node_value(&self, k: usize) -> &[T] {
        let n = self.dim();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn node_deriv(&self, k: usize) -> &[T] {
        let n = self.dim();
        &self.derivs[k * n..(k + 1) * n]
    }

    fn check_time(&self, tau: T) -> Result<()> {
        let r = self.initial.delay();
        let tol = self.step * T::lit(1e-9);
        if tau < -r - tol || tau > self.t_end() + tol || tau.is_nan() {
            return Err(Error::OutOfRange {
                t: tau.to_f64_lossy(),
                lo: -r.to_f64_lossy(),
                hi: self.t_end().to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// `x(τ)` for `τ ∈ [-r, t_end]`.
    pub fn value_at(&self, tau: T) -> Result<Vec<T>> {
        self.check_time(tau)?;
        let mut out = vec![T::zero(); self.dim()];
        self.dense().value(tau.min(self.t_end()), &mut out);
        Ok(out)
    }

    pub fn deriv_at(&self, tau: T, side: Side) -> Result<Vec<T>> {
        self.check_time(tau)?;
        let mut out = vec![T::zero(); self.dim()];
        self.dense().deriv(tau.min(self.t_end()), side, &mut out);
        Ok(out)
    }

    /// `x_t` on the initial segment's grid.
    pub fn segment_at(&self, t: T) -> Result<Segment<T>> {
        self.segment_on_grid(t, self.initial.intervals())
    }

    /// `x_t` resampled onto `intervals` uniform pieces. Kinks of the solution
    /// that land on nodes keep their one-sided derivatives.
    pub fn segment_on_grid(&self, t: T, intervals: usize) -> Result<Segment<T>> {
        let r = self.initial.delay();
        self.check_time(t)?;
        self.check_time(t - r)?;
        let t = t.min(self.t_end());
        let n = self.dim();
        let dense = self.dense();
        let len = (intervals + 1) * n;
        let (mut v, mut dr, mut dl) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
        for i in 0..=intervals {
            let tau = t + node_position(r, intervals, i);
            let o = i * n;
            dense.value(tau, &mut v[o..o + n]);
            dense.deriv(tau, Side::Right, &mut dr[o..o + n]);
            dense.deriv(tau, Side::Left, &mut dl[o..o + n]);
        }
        Segment::from_flat(r, n, v, dr, dl)
    }

    /// CSV `t, x_1..x_n, dx_1..dx_n` over the history nodes and the mesh.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x_{k}")));
        header.extend((1..=n).map(|k| format!("dx_{k}")));
        writeln!(w, "{}", header.join(","))?;
        let mut row = |t: T, x: &[T], dx: &[T]| -> std::io::Result<()> {
            let mut cells = vec![fmt_num(t.to_f64_lossy())];
            cells.extend(x.iter().map(|v| fmt_num(v.to_f64_lossy())));
            cells.extend(dx.iter().map(|v| fmt_num(v.to_f64_lossy())));
            writeln!(w, "{}", cells.join(","))
        };
        for i in 0..self.initial.intervals() {
            row(self.initial.node(i), self.initial.value(i), self.initial.deriv(i))?;
        }
        for k in 0..self.times.len() {
            row(self.times[k], self.node_value(k), self.node_deriv(k))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::{build_system, SystemDef};
    use crate::segment::sup_norm;

    fn lin(a: f64, b: f64, r: f64) -> DelaySystem<f64> {
        build_system(&SystemDef::new("linear_scalar", 1, r, &[("a", a), ("b", b)])).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let sys = lin(-1.0, 0.0, 1.0);
        let x0 = Segment::constant(1.0, 200, &[1.0]).unwrap();
        let tr = simulate(&sys, &x0, 1.0, 1.0 / 200.0).unwrap();
        assert!((tr.value_at(1.0).unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn pure_delay_first_interval() {
        let sys = lin(0.0, 1.0, 1.0);
        let x0 = Segment::constant(1.0, 200, &[1.0]).unwrap();
        let tr = simulate(&sys, &x0, 1.0, 1.0 / 200.0).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!((tr.value_at(t).unwrap()[0] - (1.0 + t)).abs() < 1e-12);
        }
        let seg = tr.segment_at(1.0).unwrap();
        for i in 0..=200 {
            assert!((seg.value(i)[0] - (2.0 + seg.node(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_history_stays_zero() {
        let sys = build_system::<f64>(&SystemDef::new("saturating", 2, 0.5, &[("c", 1.0), ("k", 3.0)])).unwrap();
        let x0 = Segment::zeros(0.5, 50, 2).unwrap();
        let tr = simulate(&sys, &x0, 3.0, 0.01).unwrap();
        assert!(tr.values.iter().all(|v| *v == 0.0));
        assert_eq!(sup_norm(&tr.segment_at(2.2).unwrap()), 0.0);
    }

    #[test]
    fn segment_at_zero_round_trips() {
        let sys = lin(-1.0, 0.5, 1.0);
        let x0 = Segment::from_scalar_fn(1.0, 200, |s: f64| (3.0 * s).sin(), |s: f64| 3.0 * (3.0 * s).cos()).unwrap();
        let tr = simulate(&sys, &x0, 0.5, 0.005).unwrap();
        let back = tr.segment_at(0.0).unwrap();
        let diff = back.sub(&x0).unwrap();
        assert!(sup_norm(&diff) < 1e-10);
        // The node at tau = 0 carries the history slope on the left and f(x0) on the right.
        assert_eq!(back.deriv_left(200), x0.deriv_left(200));
    }

    #[test]
    fn mesh_hits_breakpoints_and_horizon() {
        let sys = lin(-1.0, 0.5, 0.7);
        let x0 = Segment::constant(0.7, 70, &[1.0]).unwrap();
        let tr = simulate(&sys, &x0, 2.05, 0.03).unwrap();
        for m in 1..=2 {
            let bp = 0.7 * m as f64;
            assert!(tr.mesh().iter().any(|t| (t - bp).abs() < 1e-12), "breakpoint {bp}");
        }
        assert_eq!(tr.t_end(), 2.05);
        assert!(tr.step() <= 0.03);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = lin(-1.0, 0.0, 1.0);
        let x0 = Segment::constant(1.0, 20, &[1.0]).unwrap();
        assert!(simulate(&sys, &x0, 1.0, 0.2).is_err());
        assert!(simulate(&sys, &x0, 0.0, 0.01).is_err());
        let wrong = Segment::constant(2.0, 20, &[1.0]).unwrap();
        assert!(simulate(&sys, &wrong, 1.0, 0.01).is_err());
        let tr = simulate(&sys, &x0, 1.0, 0.01).unwrap();
        assert!(matches!(tr.value_at(1.5), Err(Error::OutOfRange { .. })));
        assert!(tr.segment_at(-0.1).is_err());
    }

    #[test]
    fn quadratic_blowup_escapes_near_half() {
        let sys = build_system::<f64>(&SystemDef::new("quadratic_blowup", 1, 1.0, &[])).unwrap();
        let x0 = Segment::constant(1.0, 200, &[2.0]).unwrap();
        let tr = simulate(&sys, &x0, 1.0, 0.005).unwrap();
        let te = tr.escape_time().expect("escapes");
        assert!((te - 0.5).abs() <= 0.01, "{te}");
        assert!(tr.t_end() < te);
    }
}
