use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The state space a segment norm is measured in.
///
/// `Sobolev(p)` uses `‖x‖∞ + ‖ẋ‖_p` with `p ∈ (1, ∞]`; `Hoelder(a)` uses
/// `max(‖x‖∞, [x]_a)` with `a ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub enum SpaceSpec {
    SupC0,
    Sobolev(f64),
    Hoelder(f64),
}

impl SpaceSpec {
    pub fn sobolev(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(SpaceSpec::Sobolev(p))
    }

    pub fn hoelder(a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(SpaceSpec::Hoelder(a))
    }

    /// The Hölder space `C^{0,1-1/p}` paired with `W^{1,p}`.
    pub fn hoelder_paired(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(SpaceSpec::Hoelder(1.0 - 1.0 / p))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpaceSpec::SupC0 => Ok(()),
            SpaceSpec::Sobolev(p) => check_p(p),
            SpaceSpec::Hoelder(a) => check_a(a),
        }
    }

    /// Exponent `p` to use in `r^{1/p}` factors: the Sobolev exponent, or
    /// `1/(1-a)` for a Hölder space (∞ when `a = 1`), or ∞ for `C⁰`.
    pub fn conjugate_p(&self) -> f64 {
        match *self {
            SpaceSpec::SupC0 => f64::INFINITY,
            SpaceSpec::Sobolev(p) => p,
            SpaceSpec::Hoelder(a) => {
                if a >= 1.0 {
                    f64::INFINITY
                } else {
                    1.0 / (1.0 - a)
                }
            }
        }
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpaceSpec::SupC0 => write!(f, "C0"),
            SpaceSpec::Sobolev(p) if p.is_infinite() => write!(f, "W1,inf"),
            SpaceSpec::Sobolev(p) => write!(f, "W1,{p}"),
            SpaceSpec::Hoelder(a) => write!(f, "C0,{a}"),
        }
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p <= 1.0 {
        return Err(Error::param("p", format!("need p in (1, inf], got {p}")));
    }
    Ok(())
}

pub(crate) fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::param("a", format!("need a in (0, 1], got {a}")));
    }
    Ok(())
}

/// An exponent that may be written as a number or as `"inf"` in JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Exponent {
    Num(f64),
    Word(ExponentWord),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub(crate) enum ExponentWord {
    #[serde(rename = "inf", alias = "infinity", alias = "Infinity")]
    Inf,
}

impl Exponent {
    fn value(self) -> f64 {
        match self {
            Exponent::Num(v) => v,
            Exponent::Word(ExponentWord::Inf) => f64::INFINITY,
        }
    }

    fn from_f64(v: f64) -> Self {
        if v.is_infinite() {
            Exponent::Word(ExponentWord::Inf)
        } else {
            Exponent::Num(v)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SpaceRepr {
    #[serde(alias = "sup", alias = "c0")]
    SupC0,
    Sobolev {
        p: Exponent,
    },
    #[serde(alias = "holder", alias = "hölder")]
    Hoelder {
        a: f64,
    },
}

impl TryFrom<SpaceRepr> for SpaceSpec {
    type Error = Error;

    fn try_from(r: SpaceRepr) -> Result<Self> {
        match r {
            SpaceRepr::SupC0 => Ok(SpaceSpec::SupC0),
            SpaceRepr::Sobolev { p } => SpaceSpec::sobolev(p.value()),
            SpaceRepr::Hoelder { a } => SpaceSpec::hoelder(a),
        }
    }
}

impl From<SpaceSpec> for SpaceRepr {
    fn from(s: SpaceSpec) -> Self {
        match s {
            SpaceSpec::SupC0 => SpaceRepr::SupC0,
            SpaceSpec::Sobolev(p) => SpaceRepr::Sobolev {
                p: Exponent::from_f64(p),
            },
            SpaceSpec::Hoelder(a) => SpaceRepr::Hoelder { a },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_p_one_and_bad_exponents() {
        assert!(SpaceSpec::sobolev(1.0).is_err());
        assert!(SpaceSpec::sobolev(0.5).is_err());
        assert!(SpaceSpec::sobolev(f64::NAN).is_err());
        assert!(SpaceSpec::sobolev(f64::INFINITY).is_ok());
        assert!(SpaceSpec::hoelder(0.0).is_err());
        assert!(SpaceSpec::hoelder(1.5).is_err());
        assert!(SpaceSpec::hoelder(1.0).is_ok());
    }

    #[test]
    fn json_forms() {
        let s: SpaceSpec = serde_json::from_str(r#"{"kind":"sobolev","p":"inf"}"#).unwrap();
        assert_eq!(s, SpaceSpec::Sobolev(f64::INFINITY));
        let s: SpaceSpec = serde_json::from_str(r#"{"kind":"hoelder","a":0.5}"#).unwrap();
        assert_eq!(s, SpaceSpec::Hoelder(0.5));
        let s: SpaceSpec = serde_json::from_str(r#"{"kind":"sup_c0"}"#).unwrap();
        assert_eq!(s, SpaceSpec::SupC0);
        assert!(serde_json::from_str::<SpaceSpec>(r#"{"kind":"sobolev","p":1}"#).is_err());
        let back = serde_json::to_string(&SpaceSpec::Sobolev(f64::INFINITY)).unwrap();
        assert_eq!(back, r#"{"kind":"sobolev","p":"inf"}"#);
    }

    #[test]
    fn conjugate_exponent() {
        assert_eq!(SpaceSpec::Hoelder(0.5).conjugate_p(), 2.0);
        assert!(SpaceSpec::Hoelder(1.0).conjugate_p().is_infinite());
        assert_eq!(SpaceSpec::Sobolev(3.0).conjugate_p(), 3.0);
    }
}
