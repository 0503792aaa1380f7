//! Delay systems `ẋ(t) = f(x_t)` and their numerical flow.

mod integrate;
mod systems;

pub use integrate::{simulate, simulate_with, SimOptions, Trajectory, ESCAPE_THRESHOLD};
pub use systems::{
    build_system, lipschitz_probe, DistributedLinear, LinearScalar, LinearVector, Matrix, QuadraticBlowup, Saturating,
    SystemDef,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{euclid, Scalar};
use crate::segment::Segment;

/// Read access to a history `s ↦ x(s)`, `s ∈ [-r, 0]`.
///
/// Right-hand sides see the state only through point and integral queries,
/// so discrete and distributed delays are handled the same way.
pub trait History<T: Scalar> {
    fn delay(&self) -> T;
    fn dim(&self) -> usize;
    fn value_at(&self, s: T, out: &mut [T]);
    /// `∫_a^b x(s) ds` with `-r ≤ a ≤ b ≤ 0`.
    fn integral(&self, a: T, b: T, out: &mut [T]);
}

impl<T: Scalar> History<T> for Segment<T> {
    fn delay(&self) -> T {
        Segment::delay(self)
    }

    fn dim(&self) -> usize {
        Segment::dim(self)
    }

    fn value_at(&self, s: T, out: &mut [T]) {
        self.eval(s, out)
    }

    fn integral(&self, a: T, b: T, out: &mut [T]) {
        Segment::integral(self, a, b, out)
    }
}

/// The functional `f` of a delay system together with its Lipschitz modulus.
pub trait DelayRhs<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `out`.
    fn eval(&self, x: &dyn History<T>, out: &mut [T]);

    /// Nondecreasing `L(R)` with `|f(x) - f(y)| ≤ L(R) ‖x - y‖∞` on the `R`-ball of `C⁰`.
    fn lipschitz(&self, radius: T) -> T;
}

#[derive(Clone)]
pub struct DelaySystem<T: Scalar> {
    pub name: String,
    delay: T,
    params: BTreeMap<String, f64>,
    rhs: Arc<dyn DelayRhs<T>>,
}

impl<T: Scalar> fmt::Debug for DelaySystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelaySystem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("delay", &self.delay)
            .field("params", &self.params)
            .finish()
    }
}

impl<T: Scalar> DelaySystem<T> {
    /// Wraps a right-hand side; rejects it unless `f(0) = 0`.
    pub fn new(
        name: impl Into<String>,
        delay: T,
        params: BTreeMap<String, f64>,
        rhs: Arc<dyn DelayRhs<T>>,
    ) -> Result<Self> {
        if !(delay > T::zero()) || !delay.is_finite() {
            return Err(Error::param("r", "delay must be positive"));
        }
        if rhs.dim() == 0 {
            return Err(Error::param("n", "dimension must be at least 1"));
        }
        let sys = DelaySystem {
            name: name.into(),
            delay,
            params,
            rhs,
        };
        let zero = Segment::zeros(delay, 8, sys.dim())?;
        let f0 = sys.eval(&zero);
        if euclid(&f0) > T::lit(1e-12) {
            return Err(Error::param("rhs", format!("f(0) = {} is not zero", euclid(&f0))));
        }
        Ok(sys)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rhs.dim()
    }

    #[inline]
    pub fn delay(&self) -> T {
        self.delay
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn rhs(&self) -> &Arc<dyn DelayRhs<T>> {
        &self.rhs
    }

    pub fn eval_into(&self, x: &dyn History<T>, out: &mut [T]) {
        self.rhs.eval(x, out)
    }

    pub fn eval(&self, x: &dyn History<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.rhs.eval(x, &mut out);
        out
    }

    pub fn lipschitz_modulus(&self, radius: T) -> T {
        self.rhs.lipschitz(radius)
    }
}
