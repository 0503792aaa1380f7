use serde::{Deserialize, Serialize};

use crate::dde::{simulate, DelaySystem};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segment::{prolong, NormConfig, Segment};

use super::functional::Functional;

/// Ladder length, ratio and first step (as a fraction of `r`).
pub const DINI_LEVELS: usize = 6;
pub const DINI_RATIO: f64 = 4.0;
pub const DINI_H0: f64 = 1e-2;

/// Difference quotients on a shrinking step ladder and the limsup estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniEstimate {
    /// `(h_k, (V(y_k) − V(x)) / h_k)` for decreasing `h_k`.
    pub quotients: Vec<(f64, f64)>,
    /// Max of the last three quotients.
    pub estimate: f64,
    /// The last two quotients differ by more than 10%.
    pub trend: bool,
}

impl DiniEstimate {
    fn from_quotients(quotients: Vec<(f64, f64)>) -> Self {
        let n = quotients.len();
        let estimate = quotients[n.saturating_sub(3)..]
            .iter()
            .map(|q| q.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = (quotients[n - 2].1, quotients[n - 1].1);
        let scale = a.abs().max(b.abs());
        let trend = scale > 0.0 && (a - b).abs() > 0.1 * scale;
        DiniEstimate {
            quotients,
            estimate,
            trend,
        }
    }
}

/// `h_k = h₀·4^{-k}`, `k = 0..6`, with `h₀ = r/100`.
pub fn dini_ladder(r: f64) -> Vec<f64> {
    (0..DINI_LEVELS)
        .map(|k| DINI_H0 * r / DINI_RATIO.powi(k as i32))
        .collect()
}

/// Intervals of the grid on which every ladder step is a whole number of pieces.
fn fine_intervals() -> usize {
    (DINI_RATIO.powi(DINI_LEVELS as i32 - 1) / DINI_H0).round() as usize
}

/// `x` resampled so that shifts by any ladder step are exact on the grid.
pub(crate) fn fine_copy<T: Scalar>(x: &Segment<T>) -> Result<Segment<T>> {
    x.resample(fine_intervals())
}

/// The refined grid is already finer than any ladder step, so coarse refinement suffices.
pub(crate) fn fine_norms(norms: &NormConfig) -> NormConfig {
    NormConfig {
        refine: 2,
        hoelder_cap: norms.hoelder_cap,
    }
}

/// Upper right Dini derivative of `t ↦ V(φ(t, x))` at `t = 0`, estimated from
/// quotients along the ladder. `x` is first copied onto a grid fine enough
/// that each `φ(h_k, x)` is a pure shift plus the new solution piece.
pub fn dini_derivative<T: Scalar>(
    sys: &DelaySystem<T>,
    v: &Functional,
    x: &Segment<T>,
    norms: &NormConfig,
) -> Result<DiniEstimate> {
    let r = x.delay().to_f64_lossy();
    let ladder = dini_ladder(r);
    let fine = fine_copy(x)?;
    let fnorms = fine_norms(norms);
    let v0 = v.eval(&fine, &fnorms)?;
    let h_min = *ladder.last().expect("nonempty ladder");
    let tr = simulate(sys, &fine, T::lit(ladder[0]), T::lit(h_min))?;
    if let Some(te) = tr.escape_time() {
        return Err(Error::Escaped {
            time: te.to_f64_lossy(),
        });
    }
    let quotients = ladder
        .iter()
        .map(|&h| -> Result<(f64, f64)> {
            let vh = v.eval(&tr.segment_at(T::lit(h))?, &fnorms)?;
            Ok((h, (vh - v0) / h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiniEstimate::from_quotients(quotients))
}

/// The same ladder with the flow replaced by the prolongation
/// `P_h(x)`: shift by `h`, extend linearly with slope `f(x)`.
pub fn prolongation_quotients<T: Scalar>(
    sys: &DelaySystem<T>,
    u: &Functional,
    x: &Segment<T>,
    norms: &NormConfig,
) -> Result<DiniEstimate> {
    let r = x.delay().to_f64_lossy();
    let fine = fine_copy(x)?;
    let fnorms = fine_norms(norms);
    let u0 = u.eval(&fine, &fnorms)?;
    let slope = sys.eval(&fine);
    let quotients = dini_ladder(r)
        .into_iter()
        .map(|h| -> Result<(f64, f64)> {
            let p = prolong(&fine, &slope, T::lit(h))?;
            Ok((h, (u.eval(&p, &fnorms)? - u0) / h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiniEstimate::from_quotients(quotients))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::{build_system, SystemDef};
    use crate::segment::SpaceSpec;

    fn lin(a: f64, b: f64) -> DelaySystem<f64> {
        build_system(&SystemDef::new("linear_scalar", 1, 1.0, &[("a", a), ("b", b)])).unwrap()
    }

    #[test]
    fn ladder_is_strictly_decreasing() {
        let l = dini_ladder(2.0);
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], 0.02);
        assert!(l.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(fine_intervals(), 102_400);
    }

    #[test]
    fn weighted_sup_decay_on_constant() {
        let x = Segment::constant(1.0, 200, &[-0.8]).unwrap();
        let d = dini_derivative(
            &lin(-1.0, 0.0),
            &Functional::weighted_sup(1.0),
            &x,
            &NormConfig::default(),
        )
        .unwrap();
        assert!((d.estimate + 0.8).abs() < 0.02 * 0.8, "{d:?}");
        assert!(!d.trend);
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let x = Segment::zeros(1.0, 200, 1).unwrap();
        let d = dini_derivative(
            &lin(-1.0, 0.5),
            &Functional::weighted_sup(1.0),
            &x,
            &NormConfig::default(),
        )
        .unwrap();
        assert_eq!(d.estimate, 0.0);
    }

    #[test]
    fn frozen_norm_under_zero_system() {
        let sys = build_system::<f64>(&SystemDef::new("zero", 1, 1.0, &[])).unwrap();
        let x = Segment::constant(1.0, 200, &[2.0]).unwrap();
        let d = dini_derivative(
            &sys,
            &Functional::space_norm(SpaceSpec::SupC0),
            &x,
            &NormConfig::default(),
        )
        .unwrap();
        assert_eq!(d.estimate, 0.0);
    }

    #[test]
    fn prolongation_quotient_of_unstable_constant() {
        // U(P_h c) = c(1 + h) at s = 0, so every quotient is c.
        let x = Segment::constant(1.0, 200, &[1.5]).unwrap();
        let d = prolongation_quotients(
            &lin(0.0, 1.0),
            &Functional::weighted_sup(1.0),
            &x,
            &NormConfig::default(),
        )
        .unwrap();
        for (_, q) in &d.quotients {
            assert!((q - 1.5).abs() < 1e-9, "{q}");
        }
    }
}
