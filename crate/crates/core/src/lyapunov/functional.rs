use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{euclid, Scalar};
use crate::segment::{NormConfig, Segment, SpaceSpec};

/// Candidate Lyapunov–Krasovskii functional on history segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    /// `sup_s e^{λs}|x(s)|`.
    WeightedSup { lambda: f64 },
    /// `|x(0)|² + ∫ e^{μs}|x(s)|² ds`.
    QuadraticIntegral { mu: f64 },
    /// `‖x‖_X`.
    SpaceNorm { space: SpaceSpec },
    /// `factor · inner(x)`.
    Scaled { factor: f64, inner: Box<Functional> },
}

impl Functional {
    pub fn weighted_sup(lambda: f64) -> Self {
        Functional::WeightedSup { lambda }
    }

    pub fn quadratic_integral(mu: f64) -> Self {
        Functional::QuadraticIntegral { mu }
    }

    pub fn space_norm(space: SpaceSpec) -> Self {
        Functional::SpaceNorm { space }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Functional::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Functional::WeightedSup { lambda } if !lambda.is_finite() => Err(Error::param("lambda", "must be finite")),
            Functional::QuadraticIntegral { mu } if !mu.is_finite() => Err(Error::param("mu", "must be finite")),
            Functional::SpaceNorm { space } => space.validate(),
            Functional::Scaled { factor, inner } => {
                if !(*factor >= 0.0) || !factor.is_finite() {
                    return Err(Error::param("factor", "must be finite and nonnegative"));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Evaluates on the refined grid of `norms`.
    pub fn eval<T: Scalar>(&self, x: &Segment<T>, norms: &NormConfig) -> Result<f64> {
        match self {
            Functional::WeightedSup { lambda } => {
                let mut best = 0.0f64;
                refined(x, norms.refine, |s, v| {
                    best = best.max((lambda * s).exp() * v.to_f64_lossy());
                });
                Ok(best)
            }
            Functional::QuadraticIntegral { mu } => {
                let m = norms.refine;
                let h = x.spacing().to_f64_lossy() / m as f64;
                let mut acc = 0.0;
                let mut k = 0usize;
                refined(x, m, |s, v| {
                    // Composite Simpson weights 1,4,2,...,4,1 over each piece.
                    let w = if k.is_multiple_of(m) {
                        if k == 0 || k == x.intervals() * m {
                            1.0
                        } else {
                            2.0
                        }
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let v = v.to_f64_lossy();
                    acc += w * (mu * s).exp() * v * v;
                    k += 1;
                });
                let head = euclid(x.head()).to_f64_lossy();
                Ok(head * head + acc * h / 3.0)
            }
            Functional::SpaceNorm { space } => Ok(norms.space(x, space)?.to_f64_lossy()),
            Functional::Scaled { factor, inner } => Ok(factor * inner.eval(x, norms)?),
        }
    }
}

/// Calls `f(s, |x(s)|)` at the `intervals·m + 1` refined grid points, left to right.
fn refined<T: Scalar, F: FnMut(f64, T)>(x: &Segment<T>, m: usize, mut f: F) {
    let n = x.dim();
    let mut buf = vec![T::zero(); n];
    let span = x.spacing().to_f64_lossy();
    for i in 0..x.intervals() {
        let s0 = x.node(i).to_f64_lossy();
        for k in 0..m {
            let u = T::lit(k as f64 / m as f64);
            x.piece_eval(i, u, &mut buf, None);
            f(s0 + span * k as f64 / m as f64, euclid(&buf));
        }
    }
    f(0.0, euclid(x.head()));
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::WeightedSup { lambda } => write!(f, "weighted_sup({lambda})"),
            Functional::QuadraticIntegral { mu } => write!(f, "quadratic_integral({mu})"),
            Functional::SpaceNorm { space } => write!(f, "norm[{space}]"),
            Functional::Scaled { factor, inner } => write!(f, "{factor}*{inner}"),
        }
    }
}

/// Nondecreasing function given by samples and linear interpolation, extended
/// linearly past the last sample and held at the first value below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let g = GridFunction { xs, ys };
        g.validate()?;
        Ok(g)
    }

    /// `s ↦ c·s`.
    pub fn linear(c: f64) -> Self {
        GridFunction {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, c],
        }
    }

    /// Samples `f` at `n + 1` uniform points of `[0, x_max]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, x_max: f64, n: usize) -> Result<Self> {
        let xs: Vec<f64> = (0..=n).map(|i| x_max * i as f64 / n as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xs.len() < 2 || self.xs.len() != self.ys.len() {
            return Err(Error::param(
                "grid_function",
                "need matching xs/ys with at least 2 points",
            ));
        }
        if self.xs.iter().chain(&self.ys).any(|v| !v.is_finite()) {
            return Err(Error::param("grid_function", "values must be finite"));
        }
        if !self.xs.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::param("grid_function", "xs must be strictly increasing"));
        }
        if !self.ys.windows(2).all(|w| w[1] >= w[0]) {
            return Err(Error::param("grid_function", "ys must be nondecreasing"));
        }
        Ok(())
    }

    fn segment(&self, k: usize, x: f64) -> f64 {
        let (x0, x1, y0, y1) = (self.xs[k], self.xs[k + 1], self.ys[k], self.ys[k + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        let k = self.xs.partition_point(|&v| v <= x).min(n - 1) - 1;
        self.segment(k.min(n - 2), x)
    }

    /// Smallest `x` with `eval(x) = y`, by bisection over the samples.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y > self.ys[n - 1] {
            let (dx, dy) = (self.xs[n - 1] - self.xs[n - 2], self.ys[n - 1] - self.ys[n - 2]);
            return if dy > 0.0 {
                self.xs[n - 1] + (y - self.ys[n - 1]) * dx / dy
            } else {
                f64::INFINITY
            };
        }
        // First k with ys[k+1] >= y.
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.ys[mid] >= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (x0, x1, y0, y1) = (self.xs[lo], self.xs[hi], self.ys[lo], self.ys[hi]);
        if y1 > y0 {
            x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        } else {
            x0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sup_of_constant_is_magnitude() {
        let c = Segment::<f64>::constant(1.0, 50, &[3.0, 4.0]).unwrap();
        let v = Functional::weighted_sup(1.0).eval(&c, &NormConfig::default()).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_integral_closed_form() {
        // x ≡ 1, μ = 1: 1 + ∫₋₁⁰ e^s ds = 2 − e^{-1}.
        let c = Segment::<f64>::constant(1.0, 40, &[1.0]).unwrap();
        let v = Functional::quadratic_integral(1.0)
            .eval(&c, &NormConfig::default())
            .unwrap();
        assert!((v - (2.0 - (-1.0f64).exp())).abs() < 1e-12);
        let x = Segment::<f64>::from_scalar_fn(1.0, 40, |s| s, |_| 1.0).unwrap();
        // ∫₋₁⁰ s² ds = 1/3.
        let v = Functional::quadratic_integral(0.0)
            .eval(&x, &NormConfig::default())
            .unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn homogeneity() {
        let x = Segment::<f64>::from_scalar_fn(1.0, 40, |s| (3.0 * s).sin() + 0.2, |s| 3.0 * (3.0 * s).cos()).unwrap();
        let cfg = NormConfig::default();
        let c = -2.5;
        let xs = x.scaled(c);
        let ws = Functional::weighted_sup(0.7);
        assert!((ws.eval(&xs, &cfg).unwrap() - c.abs() * ws.eval(&x, &cfg).unwrap()).abs() < 1e-12);
        let qi = Functional::quadratic_integral(0.3);
        assert!((qi.eval(&xs, &cfg).unwrap() - c * c * qi.eval(&x, &cfg).unwrap()).abs() < 1e-10);
        let sc = Functional::space_norm(SpaceSpec::SupC0).scaled(2.0);
        assert!((sc.eval(&x, &cfg).unwrap() - 2.0 * crate::segment::sup_norm(&x)).abs() < 1e-15);
    }

    #[test]
    fn functional_json() {
        let f: Functional =
            serde_json::from_str(r#"{"kind":"scaled","factor":2,"inner":{"kind":"weighted_sup","lambda":1}}"#).unwrap();
        assert_eq!(f, Functional::weighted_sup(1.0).scaled(2.0));
        assert!(serde_json::from_str::<Functional>(r#"{"kind":"weighted_sup","lambda":1,"x":0}"#).is_err());
    }

    #[test]
    fn grid_function_eval_and_inverse() {
        let g = GridFunction::linear(0.5);
        assert_eq!(g.eval(4.0), 2.0);
        assert_eq!(g.inverse(2.0), 4.0);
        let h = GridFunction::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(h.eval(1.5), 1.0);
        assert_eq!(h.inverse(1.0), 1.0);
        assert_eq!(h.inverse(2.0), 2.5);
        assert_eq!(h.eval(-1.0), 0.0);
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }
}
