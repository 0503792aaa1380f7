use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Segment, Side};

/// One-step prolongation of a history by `h` with constant slope `f_value`:
/// the shifted history on `[-r, -h]` and the linear extension
/// `x(0) + (s + h) f_value` on `(-h, 0]`, resampled onto the same grid.
///
/// When `h` is a multiple of the grid spacing the result is exact, including
/// the kink at `s = -h`; otherwise shifted values come from Hermite
/// interpolation.
pub fn prolong<T: Scalar>(seg: &Segment<T>, f_value: &[T], h: T) -> Result<Segment<T>> {
    let r = seg.delay();
    if !(h > T::zero()) || h > r * (T::one() + T::grid_tol()) {
        return Err(Error::param("h", format!("need 0 < h <= r = {r}, got {h}")));
    }
    let n = seg.dim();
    if f_value.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: f_value.len(),
        });
    }
    let big_n = seg.intervals();
    let dt = seg.spacing();
    let ratio = h / dt;
    let shift = ratio.round();
    let aligned = (ratio - shift).abs() <= T::lit(1e-9);
    let shift = shift.to_usize().unwrap_or(0);

    let len = (big_n + 1) * n;
    let (mut v, mut dr, mut dl) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
    let x0 = seg.head().to_vec();
    for i in 0..=big_n {
        let o = i * n;
        let (vo, dro, dlo) = (&mut v[o..o + n], &mut dr[o..o + n], &mut dl[o..o + n]);
        if aligned {
            let j = i + shift;
            if j <= big_n {
                vo.copy_from_slice(seg.value(j));
                dlo.copy_from_slice(seg.deriv_left(j));
                if j == big_n {
                    dro.copy_from_slice(f_value);
                } else {
                    dro.copy_from_slice(seg.deriv(j));
                }
            } else {
                let ds = T::lit((j - big_n) as f64) * dt;
                for k in 0..n {
                    vo[k] = x0[k] + ds * f_value[k];
                }
                dro.copy_from_slice(f_value);
                dlo.copy_from_slice(f_value);
            }
        } else {
            let s = seg.node(i) + h;
            if s <= T::zero() {
                seg.eval(s, vo);
                seg.eval_deriv(s, Side::Right, dro);
                seg.eval_deriv(s, Side::Left, dlo);
            } else {
                for k in 0..n {
                    vo[k] = x0[k] + s * f_value[k];
                }
                dro.copy_from_slice(f_value);
                dlo.copy_from_slice(f_value);
            }
        }
    }
    Segment::from_flat(r, n, v, dr, dl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_fixed_point() {
        let c = Segment::<f64>::constant(1.0, 40, &[1.5, -2.0]).unwrap();
        for h in [0.025, 0.3, 1.0, 0.0137] {
            let p = prolong(&c, &[0.0, 0.0], h).unwrap();
            assert!(p.sub(&c).unwrap().values_flat().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn linear_shift_matches_extension() {
        let x = Segment::<f64>::from_scalar_fn(1.0, 200, |s| s, |_| 1.0).unwrap();
        let p = prolong(&x, &[1.0], 0.5).unwrap();
        for i in 0..=200 {
            let s = p.node(i);
            assert!((p.value(i)[0] - (s + 0.5)).abs() < 1e-14);
        }
        assert!(!p.has_kinks());
    }

    #[test]
    fn constant_with_slope_has_kink() {
        let x = Segment::constant(1.0, 200, &[1.0]).unwrap();
        let p = prolong(&x, &[2.0], 0.25).unwrap();
        for k in 0..=400 {
            let s = -1.0 + k as f64 / 400.0;
            let expect = if s <= -0.25 { 1.0 } else { 1.0 + 2.0 * (s + 0.25) };
            assert!((p.eval_vec(s)[0] - expect).abs() < 1e-14, "s={s}");
        }
        assert_eq!(p.deriv_left(150), &[0.0]);
        assert_eq!(p.deriv(150), &[2.0]);
    }

    #[test]
    fn rejects_bad_steps() {
        let x = Segment::constant(1.0, 20, &[1.0]).unwrap();
        assert!(prolong(&x, &[0.0], 0.0).is_err());
        assert!(prolong(&x, &[0.0], -0.1).is_err());
        assert!(prolong(&x, &[0.0], 1.5).is_err());
        assert!(prolong(&x, &[0.0, 1.0], 0.5).is_err());
    }
}
