//! History segments on `[-r, 0]` and the norms measured on them.
//!
//! A [`Segment`] is a uniform grid of `N + 1` nodes carrying values and
//! node derivatives; between nodes it is the cubic Hermite interpolant.
//! Interior nodes may carry a different left derivative, which lets
//! piecewise-smooth histories (kinks at nodes) be represented exactly.

mod io;
mod norms;
mod ops;
mod space;

pub use io::{fmt_num, SegmentJson};
pub use norms::{hoelder_seminorm, hoelder_seminorms, lp_deriv_norm, max_deriv_norm, space_norm, sup_norm, NormConfig};
pub use ops::prolong;
pub use space::SpaceSpec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which one-sided derivative to read at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    r: T,
    intervals: usize,
    dim: usize,
    values: Vec<T>,
    d_right: Vec<T>,
    d_left: Vec<T>,
}

impl<T: Scalar> Segment<T> {
    /// Builds a segment from per-node values and derivatives on the uniform
    /// grid `s_i = -r + i r / N`.
    pub fn new(r: T, values: Vec<Vec<T>>, derivs: Vec<Vec<T>>) -> Result<Self> {
        let dim = values.first().map_or(0, Vec::len);
        let flat_v = flatten(&values, dim)?;
        let flat_d = flatten(&derivs, dim)?;
        Self::from_flat(r, dim, flat_v, flat_d.clone(), flat_d)
    }

    /// Like [`Segment::new`] but validates an explicit node list.
    pub fn from_nodes(nodes: &[T], values: Vec<Vec<T>>, derivs: Vec<Vec<T>>) -> Result<Self> {
        let r = validate_nodes(nodes)?;
        if values.len() != nodes.len() {
            return Err(Error::InvalidSegment(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        Self::new(r, values, derivs)
    }

    /// Flat row-major storage (`node * dim + component`).
    pub(crate) fn from_flat(r: T, dim: usize, values: Vec<T>, d_right: Vec<T>, d_left: Vec<T>) -> Result<Self> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::InvalidSegment(format!("delay must be positive, got {r}")));
        }
        if dim == 0 {
            return Err(Error::InvalidSegment("dimension must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 3 {
            return Err(Error::InvalidSegment(format!(
                "need at least 3 nodes (N >= 2), got {}",
                values.len() / dim
            )));
        }
        if d_right.len() != values.len() || d_left.len() != values.len() {
            return Err(Error::InvalidSegment("derivative/value length mismatch".into()));
        }
        if values.iter().chain(&d_right).chain(&d_left).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment("non-finite value or derivative".into()));
        }
        let intervals = values.len() / dim - 1;
        let mut seg = Segment {
            r,
            intervals,
            dim,
            values,
            d_right,
            d_left,
        };
        // End nodes have a single meaningful derivative.
        for k in 0..dim {
            seg.d_left[k] = seg.d_right[k];
            let last = intervals * dim + k;
            seg.d_right[last] = seg.d_left[last];
        }
        Ok(seg)
    }

    /// Samples `f(s) -> (x(s), ẋ(s))` at the uniform nodes.
    pub fn from_fn<F>(r: T, intervals: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(T) -> (Vec<T>, Vec<T>),
    {
        let mut v = Vec::with_capacity((intervals + 1) * dim);
        let mut d = Vec::with_capacity((intervals + 1) * dim);
        for i in 0..=intervals {
            let s = node_position(r, intervals, i);
            let (x, dx) = f(s);
            if x.len() != dim || dx.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: x.len().min(dx.len()),
                });
            }
            v.extend(x);
            d.extend(dx);
        }
        Self::from_flat(r, dim, v, d.clone(), d)
    }

    /// Scalar convenience wrapper around [`Segment::from_fn`].
    pub fn from_scalar_fn<F, G>(r: T, intervals: usize, f: F, df: G) -> Result<Self>
    where
        F: Fn(T) -> T,
        G: Fn(T) -> T,
    {
        Self::from_fn(r, intervals, 1, |s| (vec![f(s)], vec![df(s)]))
    }

    pub fn zeros(r: T, intervals: usize, dim: usize) -> Result<Self> {
        let len = (intervals + 1) * dim;
        Self::from_flat(r, dim, vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len])
    }

    pub fn constant(r: T, intervals: usize, c: &[T]) -> Result<Self> {
        let mut v = Vec::with_capacity((intervals + 1) * c.len());
        for _ in 0..=intervals {
            v.extend_from_slice(c);
        }
        let z = vec![T::zero(); v.len()];
        Self::from_flat(r, c.len(), v, z.clone(), z)
    }

    /// Piecewise-linear history through `(s_j, x_j)` breakpoints, which must
    /// include both ends and fall on grid nodes. Kinks get one-sided derivatives.
    pub fn piecewise_linear(r: T, intervals: usize, knots: &[(usize, Vec<T>)]) -> Result<Self> {
        if knots.len() < 2 || knots[0].0 != 0 || knots[knots.len() - 1].0 != intervals {
            return Err(Error::InvalidSegment(
                "piecewise-linear knots must start at node 0 and end at node N".into(),
            ));
        }
        let dim = knots[0].1.len();
        let dt = r / T::lit(intervals as f64);
        let len = (intervals + 1) * dim;
        let (mut v, mut dr, mut dl) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
        for w in knots.windows(2) {
            let (i0, ref x0) = w[0];
            let (i1, ref x1) = w[1];
            if i1 <= i0 || x0.len() != dim || x1.len() != dim {
                return Err(Error::InvalidSegment("knots must be strictly increasing".into()));
            }
            let span = T::lit((i1 - i0) as f64);
            for k in 0..dim {
                let slope = (x1[k] - x0[k]) / (span * dt);
                for i in i0..=i1 {
                    let u = T::lit((i - i0) as f64) / span;
                    v[i * dim + k] = x0[k] + (x1[k] - x0[k]) * u;
                    if i < i1 {
                        dr[i * dim + k] = slope;
                    }
                    if i > i0 {
                        dl[i * dim + k] = slope;
                    }
                }
            }
        }
        Self::from_flat(r, dim, v, dr, dl)
    }

    #[inline]
    pub fn delay(&self) -> T {
        self.r
    }

    /// Number of grid intervals `N`.
    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.r / T::lit(self.intervals as f64)
    }

    #[inline]
    pub fn node(&self, i: usize) -> T {
        node_position(self.r, self.intervals, i)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.intervals).map(|i| self.node(i)).collect()
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Right derivative at node `i` (left derivative at the last node).
    #[inline]
    pub fn deriv(&self, i: usize) -> &[T] {
        &self.d_right[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn deriv_left(&self, i: usize) -> &[T] {
        &self.d_left[i * self.dim..(i + 1) * self.dim]
    }

    /// `x(0)`.
    #[inline]
    pub fn head(&self) -> &[T] {
        self.value(self.intervals)
    }

    pub fn has_kinks(&self) -> bool {
        self.d_left != self.d_right
    }

    pub(crate) fn values_flat(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn d_right_flat(&self) -> &[T] {
        &self.d_right
    }

    pub(crate) fn d_left_flat(&self) -> &[T] {
        &self.d_left
    }

    /// Locates `s` as `(piece, u)` with `u ∈ [0, 1]`.
    #[inline]
    pub(crate) fn locate(&self, s: T) -> (usize, T) {
        let h = self.spacing();
        let pos = (s + self.r) / h;
        let n = self.intervals;
        let mut i = pos.floor().to_usize().unwrap_or(0);
        if pos < T::zero() {
            i = 0;
        }
        if i >= n {
            i = n - 1;
        }
        let u = (pos - T::lit(i as f64)).max(T::zero()).min(T::one());
        (i, u)
    }

    /// Returns `Some(i)` when `s` coincides with node `i` up to grid tolerance.
    #[inline]
    pub(crate) fn node_index(&self, s: T) -> Option<usize> {
        let pos = (s + self.r) / self.spacing();
        let k = pos.round();
        if (pos - k).abs() <= T::lit(1e-9).max(T::epsilon() * T::lit(256.0)) && k >= T::zero() {
            let k = k.to_usize()?;
            (k <= self.intervals).then_some(k)
        } else {
            None
        }
    }

    /// Hermite value and derivative on piece `i` at local coordinate `u`.
    #[inline]
    pub(crate) fn piece_eval(&self, i: usize, u: T, x: &mut [T], dx: Option<&mut [T]>) {
        let n = self.dim;
        let h = self.spacing();
        let (a, b) = (i * n, (i + 1) * n);
        let u2 = u * u;
        let u3 = u2 * u;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * u3 - three * u2 + T::one();
        let h10 = u3 - two * u2 + u;
        let h01 = three * u2 - two * u3;
        let h11 = u3 - u2;
        for k in 0..n {
            x[k] = h00 * self.values[a + k]
                + h10 * h * self.d_right[a + k]
                + h01 * self.values[b + k]
                + h11 * h * self.d_left[b + k];
        }
        if let Some(dx) = dx {
            let six = T::lit(6.0);
            let g00 = six * u2 - six * u;
            let g10 = three * u2 - T::lit(4.0) * u + T::one();
            let g11 = three * u2 - two * u;
            for k in 0..n {
                dx[k] = g00 * (self.values[a + k] - self.values[b + k]) / h
                    + g10 * self.d_right[a + k]
                    + g11 * self.d_left[b + k];
            }
        }
    }

    /// Interpolated value `x(s)` for `s ∈ [-r, 0]` (clamped).
    pub fn eval(&self, s: T, out: &mut [T]) {
        if let Some(i) = self.node_index(s) {
            out.copy_from_slice(self.value(i));
            return;
        }
        let (i, u) = self.locate(s);
        self.piece_eval(i, u, out, None);
    }

    pub fn eval_vec(&self, s: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.eval(s, &mut out);
        out
    }

    /// One-sided derivative at `s`. Away from nodes both sides agree.
    pub fn eval_deriv(&self, s: T, side: Side, out: &mut [T]) {
        if let Some(i) = self.node_index(s) {
            match side {
                Side::Left => out.copy_from_slice(self.deriv_left(i)),
                Side::Right => out.copy_from_slice(self.deriv(i)),
            }
            return;
        }
        let (i, u) = self.locate(s);
        let mut tmp = vec![T::zero(); self.dim];
        self.piece_eval(i, u, &mut tmp, Some(out));
    }

    /// `∫_a^b x(s) ds` for `-r ≤ a ≤ b ≤ 0`, exact for the Hermite interpolant.
    pub fn integral(&self, a: T, b: T, out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        let (lo, hi) = (a.max(-self.r), b.min(T::zero()));
        if !(hi > lo) {
            return;
        }
        let h = self.spacing();
        let (i0, _) = self.locate(lo);
        let (i1, _) = self.locate(hi);
        let mut tmp = vec![T::zero(); self.dim];
        for i in i0..=i1 {
            let p0 = self.node(i);
            let p1 = self.node(i + 1);
            let (x0, x1) = (lo.max(p0), hi.min(p1));
            if !(x1 > x0) {
                continue;
            }
            if x0 == p0 && x1 == p1 {
                let twelve = T::lit(12.0);
                let a = i * self.dim;
                let b = a + self.dim;
                for k in 0..self.dim {
                    out[k] = out[k]
                        + h * (self.values[a + k] + self.values[b + k]) / T::lit(2.0)
                        + h * h * (self.d_right[a + k] - self.d_left[b + k]) / twelve;
                }
            } else {
                gauss3(x0, x1, |s, w| {
                    let u = (s - p0) / h;
                    self.piece_eval(i, u, &mut tmp, None);
                    for k in 0..self.dim {
                        out[k] = out[k] + w * tmp[k];
                    }
                });
            }
        }
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.intervals != other.intervals {
            return Err(Error::InvalidSegment(format!(
                "incompatible grids: ({}, N={}) vs ({}, N={})",
                self.dim, self.intervals, other.dim, other.intervals
            )));
        }
        if (self.r - other.r).abs() > T::grid_tol() * self.r {
            return Err(Error::InvalidSegment("segments have different delays".into()));
        }
        Ok(())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let comb = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + c * y).collect::<Vec<_>>();
        Ok(Segment {
            r: self.r,
            intervals: self.intervals,
            dim: self.dim,
            values: comb(&self.values, &other.values),
            d_right: comb(&self.d_right, &other.d_right),
            d_left: comb(&self.d_left, &other.d_left),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-T::one(), other)
    }

    pub fn scaled(&self, c: T) -> Self {
        let sc = |a: &[T]| a.iter().map(|&x| x * c).collect::<Vec<_>>();
        Segment {
            r: self.r,
            intervals: self.intervals,
            dim: self.dim,
            values: sc(&self.values),
            d_right: sc(&self.d_right),
            d_left: sc(&self.d_left),
        }
    }

    /// Re-grids onto `intervals` uniform pieces. Exact when the new grid
    /// refines the old one by an integer factor.
    pub fn resample(&self, intervals: usize) -> Result<Self> {
        let r = self.r;
        let n = self.dim;
        let len = (intervals + 1) * n;
        let (mut v, mut dr, mut dl) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
        for i in 0..=intervals {
            let s = node_position(r, intervals, i);
            let o = i * n;
            self.eval(s, &mut v[o..o + n]);
            self.eval_deriv(s, Side::Right, &mut dr[o..o + n]);
            self.eval_deriv(s, Side::Left, &mut dl[o..o + n]);
        }
        Self::from_flat(r, n, v, dr, dl)
    }

    /// Converts the scalar type, node data unchanged up to rounding.
    pub fn cast<U: Scalar>(&self) -> Segment<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        Segment {
            r: U::lit(self.r.to_f64_lossy()),
            intervals: self.intervals,
            dim: self.dim,
            values: conv(&self.values),
            d_right: conv(&self.d_right),
            d_left: conv(&self.d_left),
        }
    }
}

#[inline]
pub(crate) fn node_position<T: Scalar>(r: T, intervals: usize, i: usize) -> T {
    if i == intervals {
        T::zero()
    } else {
        -r + r * T::lit(i as f64) / T::lit(intervals as f64)
    }
}

/// Three-point Gauss–Legendre on `[a, b]`; calls `f(s, weight)`.
#[inline]
pub(crate) fn gauss3<T: Scalar, F: FnMut(T, T)>(a: T, b: T, mut f: F) {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    let x = T::lit(0.6_f64.sqrt());
    let w0 = T::lit(8.0 / 9.0);
    let w1 = T::lit(5.0 / 9.0);
    f(mid - half * x, half * w1);
    f(mid, half * w0);
    f(mid + half * x, half * w1);
}

fn flatten<T: Scalar>(rows: &[Vec<T>], dim: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

fn validate_nodes<T: Scalar>(nodes: &[T]) -> Result<T> {
    if nodes.len() < 3 {
        return Err(Error::InvalidSegment(format!(
            "need at least 3 nodes, got {}",
            nodes.len()
        )));
    }
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    if last != T::zero() {
        return Err(Error::InvalidSegment(format!("last node must be 0, got {last}")));
    }
    let r = -first;
    if !(r > T::zero()) {
        return Err(Error::InvalidSegment(format!("first node must be -r < 0, got {first}")));
    }
    let n = nodes.len() - 1;
    let h = r / T::lit(n as f64);
    let tol = T::grid_tol() * r;
    for (i, w) in nodes.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidSegment("nodes must be strictly increasing".into()));
        }
        let expect = node_position(r, n, i + 1);
        if (w[1] - expect).abs() > tol.max(h * T::grid_tol()) {
            return Err(Error::InvalidSegment(format!(
                "node {} at {} deviates from the uniform grid",
                i + 1,
                w[1]
            )));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(r: f64, n: usize) -> Segment<f64> {
        Segment::from_scalar_fn(r, n, |s| s, |_| 1.0).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Segment::new(1.0, vec![vec![0.0]; 2], vec![vec![0.0]; 2]).is_err());
        assert!(Segment::new(0.0, vec![vec![0.0]; 3], vec![vec![0.0]; 3]).is_err());
        assert!(Segment::new(1.0, vec![vec![f64::NAN]; 3], vec![vec![0.0]; 3]).is_err());
        assert!(Segment::new(1.0, vec![vec![0.0]; 3], vec![vec![0.0]; 3]).is_ok());
    }

    #[test]
    fn from_nodes_checks_uniformity() {
        let v = vec![vec![0.0]; 3];
        assert!(Segment::from_nodes(&[-1.0, -0.5, 0.0], v.clone(), v.clone()).is_ok());
        assert!(Segment::from_nodes(&[-1.0, -0.4, 0.0], v.clone(), v.clone()).is_err());
        assert!(Segment::from_nodes(&[-1.0, -0.5, 0.1], v.clone(), v.clone()).is_err());
        assert!(Segment::from_nodes(&[0.0, 0.5, 0.0], v.clone(), v).is_err());
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |s: f64| 2.0 * s * s * s - s * s + 0.5 * s + 3.0;
        let df = |s: f64| 6.0 * s * s - 2.0 * s + 0.5;
        let seg = Segment::from_scalar_fn(1.5, 7, f, df).unwrap();
        for k in 0..=100 {
            let s = -1.5 + 1.5 * k as f64 / 100.0;
            assert!((seg.eval_vec(s)[0] - f(s)).abs() < 1e-12);
            let mut d = [0.0];
            seg.eval_deriv(s, Side::Right, &mut d);
            assert!((d[0] - df(s)).abs() < 1e-11);
        }
    }

    #[test]
    fn integral_is_exact_for_cubics() {
        let f = |s: f64| s * s * s + s;
        let df = |s: f64| 3.0 * s * s + 1.0;
        let prim = |s: f64| s.powi(4) / 4.0 + s * s / 2.0;
        let seg = Segment::from_scalar_fn(2.0, 9, f, df).unwrap();
        let mut out = [0.0];
        seg.integral(-1.7, -0.3, &mut out);
        assert!((out[0] - (prim(-0.3) - prim(-1.7))).abs() < 1e-12);
        seg.integral(-2.0, 0.0, &mut out);
        assert!((out[0] - (prim(0.0) - prim(-2.0))).abs() < 1e-12);
    }

    #[test]
    fn piecewise_linear_is_exact_between_knots() {
        let seg = Segment::piecewise_linear(1.0, 10, &[(0, vec![0.0]), (5, vec![0.0]), (10, vec![0.5])]).unwrap();
        assert!(seg.has_kinks());
        for k in 0..=40 {
            let s = -1.0 + k as f64 / 40.0;
            let expect = if s <= -0.5 { 0.0 } else { s + 0.5 };
            assert!((seg.eval_vec(s)[0] - expect).abs() < 1e-14, "s={s}");
        }
        assert_eq!(seg.deriv_left(5), &[0.0]);
        assert_eq!(seg.deriv(5), &[1.0]);
    }

    #[test]
    fn axpy_and_resample() {
        let a = lin(1.0, 4);
        let b = Segment::constant(1.0, 4, &[2.0]).unwrap();
        let c = a.axpy(3.0, &b).unwrap();
        assert!((c.eval_vec(-0.3)[0] - (-0.3 + 6.0)).abs() < 1e-14);
        let fine = a.resample(16).unwrap();
        assert!((fine.eval_vec(-0.77)[0] + 0.77).abs() < 1e-14);
        assert!(a.axpy(1.0, &fine).is_err());
    }
}
