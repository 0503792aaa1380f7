use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{euclid, Scalar};

use super::{Segment, SpaceSpec};

/// Resolution used when turning a segment into norm values.
///
/// Every piece of the grid is sampled at `refine + 1` points. L^p integrals
/// use composite Simpson on those points (O(h⁴) for smooth data), sup-type
/// quantities take the maximum over them. The Hölder seminorm maximises over
/// all pairs of the refined value grid, subsampled uniformly down to
/// `hoelder_cap` points; it is therefore a lower approximation of the true
/// supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    pub refine: usize,
    pub hoelder_cap: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            refine: 8,
            hoelder_cap: 2048,
        }
    }
}

impl NormConfig {
    pub fn new(refine: usize, hoelder_cap: usize) -> Result<Self> {
        let cfg = NormConfig { refine, hoelder_cap };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.refine < 2 || !self.refine.is_multiple_of(2) {
            return Err(Error::param("refine", "must be an even integer >= 2"));
        }
        if self.hoelder_cap < 3 {
            return Err(Error::param("hoelder_cap", "must be at least 3"));
        }
        Ok(())
    }

    /// Number of points the Hölder maximisation runs over for `seg`.
    pub fn hoelder_points<T: Scalar>(&self, seg: &Segment<T>) -> usize {
        (seg.intervals() * self.refine + 1).min(self.hoelder_cap)
    }

    pub fn sup<T: Scalar>(&self, seg: &Segment<T>) -> T {
        let m = self.refine;
        let mut best = T::zero();
        let mut x = vec![T::zero(); seg.dim()];
        for i in 0..seg.intervals() {
            best = best.max(euclid(seg.value(i)));
            for j in 1..m {
                let u = T::lit(j as f64) / T::lit(m as f64);
                seg.piece_eval(i, u, &mut x, None);
                best = best.max(euclid(&x));
            }
        }
        best.max(euclid(seg.head()))
    }

    /// Calls `f(piece, j, |ẋ|)` for `j = 0..=refine` on every piece, using
    /// the one-sided node derivatives at the piece ends.
    fn for_each_deriv_sample<T: Scalar, F: FnMut(usize, usize, T)>(&self, seg: &Segment<T>, mut f: F) {
        let m = self.refine;
        let n = seg.dim();
        let mut x = vec![T::zero(); n];
        let mut dx = vec![T::zero(); n];
        for i in 0..seg.intervals() {
            f(i, 0, euclid(seg.deriv(i)));
            for j in 1..m {
                let u = T::lit(j as f64) / T::lit(m as f64);
                seg.piece_eval(i, u, &mut x, Some(&mut dx));
                f(i, j, euclid(&dx));
            }
            f(i, m, euclid(seg.deriv_left(i + 1)));
        }
    }

    /// Values on the refined grid, flattened.
    fn value_grid<T: Scalar>(&self, seg: &Segment<T>) -> Vec<T> {
        let m = self.refine;
        let n = seg.dim();
        let mut grid = Vec::with_capacity((seg.intervals() * m + 1) * n);
        let mut x = vec![T::zero(); n];
        for i in 0..seg.intervals() {
            grid.extend_from_slice(seg.value(i));
            for j in 1..m {
                seg.piece_eval(i, T::lit(j as f64) / T::lit(m as f64), &mut x, None);
                grid.extend_from_slice(&x);
            }
        }
        grid.extend_from_slice(seg.head());
        grid
    }

    /// Largest of the sampled `|ẋ|` and the chord slopes between neighbouring
    /// refined samples. Chords keep the value above every discrete Hölder(1)
    /// ratio while staying below the true supremum.
    pub fn max_deriv<T: Scalar>(&self, seg: &Segment<T>) -> T {
        let mut best = T::zero();
        self.for_each_deriv_sample(seg, |_, _, v| best = best.max(v));
        let n = seg.dim();
        let delta = seg.spacing() / T::lit(self.refine as f64);
        let grid = self.value_grid(seg);
        for w in grid.chunks(n).collect::<Vec<_>>().windows(2) {
            let d2 = w[0]
                .iter()
                .zip(w[1])
                .fold(T::zero(), |acc, (&p, &q)| acc + (q - p) * (q - p));
            best = best.max(d2.sqrt() / delta);
        }
        best
    }

    /// `‖ẋ‖_p` for `p ∈ (1, ∞]`.
    pub fn lp_deriv<T: Scalar>(&self, seg: &Segment<T>, p: f64) -> Result<T> {
        super::space::check_p(p)?;
        if p.is_infinite() {
            return Ok(self.max_deriv(seg));
        }
        let m = self.refine;
        let pt = T::lit(p);
        let w = seg.spacing() / T::lit(3.0 * m as f64);
        let (two, four) = (T::lit(2.0), T::lit(4.0));
        let mut acc = T::zero();
        self.for_each_deriv_sample(seg, |_, j, v| {
            let c = if j == 0 || j == m {
                T::one()
            } else if j % 2 == 1 {
                four
            } else {
                two
            };
            if v > T::zero() {
                acc = acc + c * v.powf(pt);
            }
        });
        Ok((acc * w).powf(T::one() / pt))
    }

    pub fn hoelder<T: Scalar>(&self, seg: &Segment<T>, a: f64) -> Result<T> {
        Ok(self.hoelder_many(seg, &[a])?[0])
    }

    /// Hölder seminorms for several exponents in one pass over the pairs.
    pub fn hoelder_many<T: Scalar>(&self, seg: &Segment<T>, exps: &[f64]) -> Result<Vec<T>> {
        for &a in exps {
            super::space::check_a(a)?;
        }
        let m = self.refine;
        let n = seg.dim();
        let total = seg.intervals() * m + 1;
        let grid = self.value_grid(seg);

        let keep = total.min(self.hoelder_cap);
        let idx: Vec<usize> = if keep == total {
            (0..total).collect()
        } else {
            let mut v: Vec<usize> = (0..keep)
                .map(|k| ((k as f64) * (total - 1) as f64 / (keep - 1) as f64).round() as usize)
                .collect();
            v.dedup();
            v
        };

        let delta = seg.spacing() / T::lit(m as f64);
        // inv[e][lag] = (lag δ)^{-2a_e}; squared distances avoid a sqrt per pair.
        let inv: Vec<Vec<T>> = exps
            .iter()
            .map(|&a| {
                let e = T::lit(-2.0 * a);
                let mut t = vec![T::zero(); total];
                for (lag, slot) in t.iter_mut().enumerate().skip(1) {
                    *slot = (T::lit(lag as f64) * delta).powf(e);
                }
                t
            })
            .collect();

        let mut best = vec![T::zero(); exps.len()];
        for (pi, &i) in idx.iter().enumerate() {
            let xi = &grid[i * n..(i + 1) * n];
            for &j in &idx[pi + 1..] {
                let xj = &grid[j * n..(j + 1) * n];
                let d2 = if n == 1 {
                    let d = xi[0] - xj[0];
                    d * d
                } else {
                    xi.iter()
                        .zip(xj)
                        .fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q))
                };
                if d2 == T::zero() {
                    continue;
                }
                let lag = j - i;
                for (b, t) in best.iter_mut().zip(&inv) {
                    let v = d2 * t[lag];
                    if v > *b {
                        *b = v;
                    }
                }
            }
        }
        Ok(best.into_iter().map(|b| b.sqrt()).collect())
    }

    pub fn space<T: Scalar>(&self, seg: &Segment<T>, space: &SpaceSpec) -> Result<T> {
        match *space {
            SpaceSpec::SupC0 => Ok(self.sup(seg)),
            SpaceSpec::Sobolev(p) => Ok(self.sup(seg) + self.lp_deriv(seg, p)?),
            SpaceSpec::Hoelder(a) => Ok(self.sup(seg).max(self.hoelder(seg, a)?)),
        }
    }
}

/// `‖x‖∞` over the default refined grid.
pub fn sup_norm<T: Scalar>(seg: &Segment<T>) -> T {
    NormConfig::default().sup(seg)
}

/// `‖ẋ‖_p`, `p ∈ (1, ∞]`.
pub fn lp_deriv_norm<T: Scalar>(seg: &Segment<T>, p: f64) -> Result<T> {
    NormConfig::default().lp_deriv(seg, p)
}

/// Maximum of `|ẋ|` over the refined grid (both one-sided values at kinks).
pub fn max_deriv_norm<T: Scalar>(seg: &Segment<T>) -> T {
    NormConfig::default().max_deriv(seg)
}

/// Discrete Hölder seminorm of exponent `a ∈ (0, 1]`; a lower approximation.
pub fn hoelder_seminorm<T: Scalar>(seg: &Segment<T>, a: f64) -> Result<T> {
    NormConfig::default().hoelder(seg, a)
}

pub fn hoelder_seminorms<T: Scalar>(seg: &Segment<T>, exps: &[f64]) -> Result<Vec<T>> {
    NormConfig::default().hoelder_many(seg, exps)
}

pub fn space_norm<T: Scalar>(seg: &Segment<T>, space: &SpaceSpec) -> Result<T> {
    NormConfig::default().space(seg, space)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(r: f64, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Segment<f64> {
        Segment::from_scalar_fn(r, 200, f, df).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let c = Segment::constant(1.7, 200, &[3.0, 4.0]).unwrap();
        assert_eq!(sup_norm(&c), 5.0);
        assert_eq!(sup_norm(&Segment::<f64>::zeros(1.0, 10, 2).unwrap()), 0.0);
        assert!((sup_norm(&scalar(2.0, |s| s, |_| 1.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lp_examples() {
        let c = Segment::constant(1.0, 200, &[3.0, 4.0]).unwrap();
        for p in [1.5, 2.0, f64::INFINITY] {
            assert_eq!(lp_deriv_norm(&c, p).unwrap(), 0.0);
        }
        let lin = scalar(1.0, |s| s, |_| 1.0);
        assert!((lp_deriv_norm(&lin, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let sq = scalar(1.0, |s| s * s, |s| 2.0 * s);
        assert!((lp_deriv_norm(&sq, 2.0).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(lp_deriv_norm(&lin, 1.0).is_err());
        assert!(lp_deriv_norm(&lin, 0.3).is_err());
    }

    #[test]
    fn hoelder_examples() {
        let c = Segment::constant(1.0, 200, &[3.0, 4.0]).unwrap();
        assert_eq!(hoelder_seminorm(&c, 0.5).unwrap(), 0.0);
        let lin1 = scalar(1.0, |s| s, |_| 1.0);
        assert!((hoelder_seminorm(&lin1, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let lin2 = scalar(2.0, |s| s, |_| 1.0);
        assert!((hoelder_seminorm(&lin2, 0.5).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(hoelder_seminorm(&lin1, 0.0).is_err());
        assert!(hoelder_seminorm(&lin1, 1.1).is_err());
    }

    #[test]
    fn space_norm_examples() {
        let c = Segment::constant(1.0, 200, &[3.0, 4.0]).unwrap();
        assert_eq!(space_norm(&c, &SpaceSpec::Sobolev(2.0)).unwrap(), 5.0);
        let lin = scalar(1.0, |s| s, |_| 1.0);
        assert!((space_norm(&lin, &SpaceSpec::Sobolev(2.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((space_norm(&lin, &SpaceSpec::Hoelder(1.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hoelder_cap_subsamples() {
        let lin = scalar(1.0, |s| s, |_| 1.0);
        let cfg = NormConfig::new(8, 100).unwrap();
        assert_eq!(cfg.hoelder_points(&lin), 100);
        // Endpoints survive subsampling, so the a = 1/2 value is still exact.
        assert!((cfg.hoelder(&lin, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kinks_count_both_sides_in_deriv_max() {
        let seg =
            Segment::<f64>::piecewise_linear(1.0, 10, &[(0, vec![0.0]), (5, vec![-1.0]), (10, vec![0.5])]).unwrap();
        assert!((max_deriv_norm(&seg) - 3.0).abs() < 1e-12);
        assert!((hoelder_seminorm(&seg, 1.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(NormConfig::new(3, 100).is_err());
        assert!(NormConfig::new(0, 100).is_err());
        assert!(NormConfig::new(2, 2).is_err());
    }
}
