use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{Family, Sampler, SamplerConfig};
use crate::scalar::{euclid, euclid_dist, Scalar};
use crate::segment::{sup_norm, SpaceSpec};

use super::{DelayRhs, DelaySystem, History};

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::param("matrix", "must be square"));
        }
        Ok(Matrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    /// `out += self * x`.
    #[inline]
    pub fn mul_add(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            out[i] = out[i] + row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }

    /// Spectral norm by power iteration on `AᵀA`.
    pub fn operator_norm(&self) -> T {
        let n = self.n;
        if self.data.iter().all(|v| *v == T::zero()) {
            return T::zero();
        }
        // Start away from any particular eigenvector.
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.37 * i as f64)).collect();
        let mut lambda = T::zero();
        for _ in 0..500 {
            let mut av = vec![T::zero(); n];
            self.mul_add(&v, &mut av);
            let mut w = vec![T::zero(); n];
            for j in 0..n {
                w[j] = (0..n).fold(T::zero(), |acc, i| acc + self.get(i, j) * av[i]);
            }
            let nw = euclid(&w);
            if nw == T::zero() {
                break;
            }
            let next = nw / euclid(&v);
            v = w.into_iter().map(|x| x / nw).collect();
            let done = (next - lambda).abs() <= T::epsilon() * T::lit(4.0) * next;
            lambda = next;
            if done {
                break;
            }
        }
        // Power iteration approaches from below; nudge up so the bound stays valid.
        lambda.sqrt() * (T::one() + T::lit(1e-12).max(T::epsilon() * T::lit(8.0)))
    }
}

/// `ẋ = a x(t) + b x(t - r)`, componentwise.
#[derive(Debug, Clone)]
pub struct LinearScalar<T> {
    pub a: T,
    pub b: T,
    pub dim: usize,
}

impl<T: Scalar> DelayRhs<T> for LinearScalar<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &dyn History<T>, out: &mut [T]) {
        let n = self.dim;
        let mut now = vec![T::zero(); n];
        let mut past = vec![T::zero(); n];
        x.value_at(T::zero(), &mut now);
        x.value_at(-x.delay(), &mut past);
        for k in 0..n {
            out[k] = self.a * now[k] + self.b * past[k];
        }
    }

    fn lipschitz(&self, _radius: T) -> T {
        self.a.abs() + self.b.abs()
    }
}

/// `ẋ = A₀ x(t) + A₁ x(t - r)`.
#[derive(Debug, Clone)]
pub struct LinearVector<T> {
    pub a0: Matrix<T>,
    pub a1: Matrix<T>,
}

impl<T: Scalar> DelayRhs<T> for LinearVector<T> {
    fn dim(&self) -> usize {
        self.a0.n
    }

    fn eval(&self, x: &dyn History<T>, out: &mut [T]) {
        let n = self.a0.n;
        let mut buf = vec![T::zero(); n];
        out.iter_mut().for_each(|o| *o = T::zero());
        x.value_at(T::zero(), &mut buf);
        self.a0.mul_add(&buf, out);
        x.value_at(-x.delay(), &mut buf);
        self.a1.mul_add(&buf, out);
    }

    fn lipschitz(&self, _radius: T) -> T {
        self.a0.operator_norm() + self.a1.operator_norm()
    }
}

/// `ẋ = A₀ x(t) + ∫_{-r}^0 K(s) x(t+s) ds` with `K` constant on `m` equal pieces.
#[derive(Debug, Clone)]
pub struct DistributedLinear<T> {
    pub a0: Matrix<T>,
    /// `kernel[p]` acts on piece `[-r + p r/m, -r + (p+1) r/m]`.
    pub kernel: Vec<Matrix<T>>,
    pub delay: T,
}

impl<T: Scalar> DelayRhs<T> for DistributedLinear<T> {
    fn dim(&self) -> usize {
        self.a0.n
    }

    fn eval(&self, x: &dyn History<T>, out: &mut [T]) {
        let n = self.a0.n;
        let mut buf = vec![T::zero(); n];
        out.iter_mut().for_each(|o| *o = T::zero());
        x.value_at(T::zero(), &mut buf);
        self.a0.mul_add(&buf, out);
        let r = x.delay();
        let m = T::lit(self.kernel.len() as f64);
        for (p, k) in self.kernel.iter().enumerate() {
            let lo = -r + r * T::lit(p as f64) / m;
            let hi = if p + 1 == self.kernel.len() {
                T::zero()
            } else {
                -r + r * T::lit((p + 1) as f64) / m
            };
            x.integral(lo, hi, &mut buf);
            k.mul_add(&buf, out);
        }
    }

    fn lipschitz(&self, _radius: T) -> T {
        let kmax = self.kernel.iter().map(Matrix::operator_norm).fold(T::zero(), T::max);
        self.a0.operator_norm() + self.delay * kmax
    }
}

/// `ẋ = -c x(t) + k tanh(x(t - r))`, componentwise; globally Lipschitz.
#[derive(Debug, Clone)]
pub struct Saturating<T> {
    pub c: T,
    pub k: T,
    pub dim: usize,
}

impl<T: Scalar> DelayRhs<T> for Saturating<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &dyn History<T>, out: &mut [T]) {
        let n = self.dim;
        let mut now = vec![T::zero(); n];
        let mut past = vec![T::zero(); n];
        x.value_at(T::zero(), &mut now);
        x.value_at(-x.delay(), &mut past);
        for i in 0..n {
            out[i] = -self.c * now[i] + self.k * past[i].tanh();
        }
    }

    fn lipschitz(&self, _radius: T) -> T {
        self.c.abs() + self.k.abs()
    }
}

/// `ẋ = x(t)²`, componentwise. Lipschitz only on bounded sets; solutions
/// from a positive constant `c` blow up at `t = 1/c`.
#[derive(Debug, Clone)]
pub struct QuadraticBlowup {
    pub dim: usize,
}

impl<T: Scalar> DelayRhs<T> for QuadraticBlowup {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &dyn History<T>, out: &mut [T]) {
        x.value_at(T::zero(), out);
        out.iter_mut().for_each(|v| *v = *v * *v);
    }

    fn lipschitz(&self, radius: T) -> T {
        T::lit(2.0) * radius
    }
}

/// JSON system definition `{name, n, r, params}`.
///
/// Matrix entries are passed as `A0_i_j` / `A1_i_j` (1-based); the
/// distributed kernel takes `pieces` and `K<p>_i_j` (`p` 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub name: String,
    #[serde(default = "default_n")]
    pub n: usize,
    pub r: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn default_n() -> usize {
    1
}

impl SystemDef {
    pub fn new(name: &str, n: usize, r: f64, params: &[(&str, f64)]) -> Self {
        SystemDef {
            name: name.to_string(),
            n,
            r,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    used: Vec<String>,
}

impl<'a> Params<'a> {
    fn new(map: &'a BTreeMap<String, f64>) -> Self {
        Params { map, used: Vec::new() }
    }

    fn get(&mut self, key: &str, default: f64) -> f64 {
        self.used.push(key.to_string());
        self.map.get(key).copied().unwrap_or(default)
    }

    fn matrix<T: Scalar>(&mut self, prefix: &str, n: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, T::lit(self.get(&format!("{prefix}_{}_{}", i + 1, j + 1), 0.0)));
            }
        }
        m
    }

    fn finish(self) -> Result<()> {
        for (k, v) in self.map {
            if !self.used.iter().any(|u| u == k) {
                return Err(Error::param("params", format!("unknown parameter `{k}`")));
            }
            if !v.is_finite() {
                return Err(Error::param("params", format!("`{k}` is not finite")));
            }
        }
        Ok(())
    }
}

/// Looks up a builtin system by name.
///
/// Builtins: `linear_scalar` (`a`, `b`), `zero`, `linear_vector`
/// (`A0_i_j`, `A1_i_j`), `distributed_linear` (`A0_i_j`, `pieces`,
/// `K<p>_i_j`), `saturating` (`c`, `k`), `quadratic_blowup`.
pub fn build_system<T: Scalar>(def: &SystemDef) -> Result<DelaySystem<T>> {
    if def.n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let r = T::lit(def.r);
    let mut p = Params::new(&def.params);
    let rhs: Arc<dyn DelayRhs<T>> = match def.name.as_str() {
        "linear_scalar" => Arc::new(LinearScalar {
            a: T::lit(p.get("a", 0.0)),
            b: T::lit(p.get("b", 0.0)),
            dim: def.n,
        }),
        "zero" => Arc::new(LinearScalar {
            a: T::zero(),
            b: T::zero(),
            dim: def.n,
        }),
        "linear_vector" => Arc::new(LinearVector {
            a0: p.matrix("A0", def.n),
            a1: p.matrix("A1", def.n),
        }),
        "distributed_linear" => {
            let pieces = p.get("pieces", 1.0);
            if pieces < 1.0 || pieces.fract() != 0.0 {
                return Err(Error::param("pieces", "must be a positive integer"));
            }
            let a0 = p.matrix("A0", def.n);
            let kernel = (0..pieces as usize)
                .map(|q| p.matrix(&format!("K{q}"), def.n))
                .collect();
            Arc::new(DistributedLinear { a0, kernel, delay: r })
        }
        "saturating" => Arc::new(Saturating {
            c: T::lit(p.get("c", 1.0)),
            k: T::lit(p.get("k", 0.0)),
            dim: def.n,
        }),
        "quadratic_blowup" => Arc::new(QuadraticBlowup { dim: def.n }),
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    p.finish()?;
    DelaySystem::new(def.name.clone(), r, def.params.clone(), rhs)
}

/// Largest observed `|f(x) - f(y)| / ‖x - y‖∞` over `trials` random pairs in
/// the `R`-ball of `C⁰`. Pairs alternate between smooth Fourier histories and
/// constants (the latter saturate the bound for point-delay linear systems).
pub fn lipschitz_probe<T: Scalar>(sys: &DelaySystem<T>, radius: T, trials: usize, seed: u64) -> Result<T> {
    let r = sys.delay().to_f64_lossy();
    let mk = |family| {
        Sampler::new(
            SamplerConfig::new(family, SpaceSpec::SupC0, radius.to_f64_lossy())
                .with_dim(sys.dim())
                .with_grid(r, 64)
                .with_seed(seed),
        )
    };
    let smooth = mk(Family::Fourier { harmonics: 3 })?;
    let flat = mk(Family::Polynomial { degree: 0 })?;
    let mut best = T::zero();
    for t in 0..trials as u64 {
        let src = if t % 2 == 0 { &smooth } else { &flat };
        let x = src.draw::<T>(2 * t)?;
        let y = src.draw::<T>(2 * t + 1)?;
        let d = sup_norm(&x.sub(&y)?);
        if d > T::zero() {
            best = best.max(euclid_dist(&sys.eval(&x), &sys.eval(&y)) / d);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Segment;

    fn sys(name: &str, n: usize, params: &[(&str, f64)]) -> DelaySystem<f64> {
        build_system(&SystemDef::new(name, n, 1.0, params)).unwrap()
    }

    #[test]
    fn registry_moduli() {
        assert_eq!(
            sys("linear_scalar", 1, &[("a", -1.0), ("b", 0.5)]).lipschitz_modulus(3.0),
            1.5
        );
        assert_eq!(
            sys("saturating", 1, &[("c", 1.0), ("k", -2.0)]).lipschitz_modulus(9.0),
            3.0
        );
        assert_eq!(sys("quadratic_blowup", 1, &[]).lipschitz_modulus(2.0), 4.0);
        let v = sys(
            "linear_vector",
            2,
            &[("A0_1_1", 3.0), ("A0_2_2", -4.0), ("A1_1_2", 2.0)],
        );
        assert!((v.lipschitz_modulus(1.0) - 6.0).abs() < 1e-9);
        let d = build_system::<f64>(&SystemDef::new(
            "distributed_linear",
            1,
            2.0,
            &[("A0_1_1", -1.0), ("pieces", 2.0), ("K0_1_1", 0.25), ("K1_1_1", -0.5)],
        ))
        .unwrap();
        assert!((d.lipschitz_modulus(1.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn registry_rejects_unknowns() {
        assert!(build_system::<f64>(&SystemDef::new("nope", 1, 1.0, &[])).is_err());
        assert!(build_system::<f64>(&SystemDef::new("linear_scalar", 1, 1.0, &[("q", 1.0)])).is_err());
        assert!(build_system::<f64>(&SystemDef::new("linear_scalar", 1, -1.0, &[])).is_err());
        assert!(build_system::<f64>(&SystemDef::new("distributed_linear", 1, 1.0, &[("pieces", 0.5)])).is_err());
    }

    #[test]
    fn operator_norm_of_rotation_and_rank_one() {
        let rot = Matrix::<f64>::from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]).unwrap();
        assert!((rot.operator_norm() - 2.0).abs() < 1e-9);
        let r1 = Matrix::<f64>::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((r1.operator_norm() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn distributed_kernel_integrates_history() {
        let d = build_system::<f64>(&SystemDef::new(
            "distributed_linear",
            1,
            1.0,
            &[("pieces", 2.0), ("K0_1_1", 1.0)],
        ))
        .unwrap();
        let x = Segment::from_scalar_fn(1.0, 20, |s| s, |_| 1.0).unwrap();
        // ∫_{-1}^{-1/2} s ds = -3/8
        assert!((d.eval(&x)[0] + 0.375).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_probe_respects_moduli() {
        let lin = sys("linear_scalar", 1, &[("a", -1.0), ("b", 0.5)]);
        let p = lipschitz_probe(&lin, 2.0, 40, 1).unwrap();
        assert!((0.5 - 1e-12..=1.5 + 1e-8).contains(&p), "{p}");
        let zero = sys("zero", 1, &[]);
        assert_eq!(lipschitz_probe(&zero, 1.0, 10, 1).unwrap(), 0.0);
        let sat = sys("saturating", 1, &[("c", 1.0), ("k", 2.0)]);
        assert!(lipschitz_probe(&sat, 3.0, 40, 2).unwrap() <= 3.0 + 1e-8);
    }
}
