use std::path::{Path, PathBuf};

use delaystab::lyapunov::{Functional, GridFunction};
use delaystab::segment::SegmentJson;
use delaystab::stability::{Budget, EnvelopeMode};
use delaystab::{build_system, Family, SamplerConfig, Scalar, Segment, SpaceSpec, SystemDef};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Initial history of `simulate` and `norms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `x(s) ≡ value` on `intervals` pieces.
    Constant {
        value: Vec<f64>,
        #[serde(default = "default_intervals")]
        intervals: usize,
    },
    /// Member `index` of the sampler's stream.
    Sample {
        #[serde(default)]
        index: u64,
    },
    /// Explicit segment in the JSON segment format.
    Segment { segment: SegmentJson<f64> },
}

fn default_intervals() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Ls,
    Ga,
    Uga,
    Lags,
    Rfc,
    GasVsUgas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovCheck {
    Theorem5,
    Theorem6,
    RfcSufficient,
}

/// Settings of the `lyapunov` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub check: LyapunovCheck,
    pub functional: Functional,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<GridFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<GridFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<GridFunction>,
    /// Lower bound of `U` for `rfc-sufficient`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<GridFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Samples integrated along full trajectories by `theorem6`.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

fn default_trajectories() -> usize {
    20
}

/// One JSON config drives every subcommand; fields a command does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemDef,
    #[serde(default = "default_space")]
    pub space: SpaceSpec,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    /// Number of sampler draws evaluated by `norms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<Property>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Integration step of `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shells: Option<usize>,
    #[serde(default)]
    pub mode: EnvelopeMode,
    /// Constant Lipschitz modulus used to derive `ω` from the envelope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_space() -> SpaceSpec {
    SpaceSpec::SupC0
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T, CliError> {
    v.ok_or(CliError::Missing(name))
}

fn positive(v: f64, name: &'static str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("`{name}` must be positive and finite")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies a command-line seed and pushes the seed into the budget and sampler.
    pub fn resolve(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.budget.seed = s;
            if let Some(sc) = &mut self.sampler {
                sc.seed = s;
            }
        }
        if let Some(sc) = &mut self.sampler {
            sc.delay = self.system.r;
            sc.dim = self.system.n;
        }
    }

    /// Checks everything that does not depend on the command.
    pub fn validate(&self) -> Result<(), CliError> {
        build_system::<f64>(&self.system)?;
        self.space.validate()?;
        self.budget.validate()?;
        if let Some(sc) = &self.sampler {
            sc.validate()?;
        }
        for (v, name) in [
            (self.rho, "rho"),
            (self.eps, "eps"),
            (self.t_end, "t_end"),
            (self.step, "step"),
        ] {
            if let Some(v) = v {
                positive(v, name)?;
            }
        }
        for (list, name) in [(&self.rho_list, "rho_list"), (&self.eps_list, "eps_list")] {
            if let Some(list) = list {
                if list.is_empty() {
                    return Err(CliError::Config(format!("`{name}` must not be empty")));
                }
                for &v in list {
                    positive(v, name)?;
                }
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(CliError::Config("`lipschitz` must be finite and nonnegative".into()));
            }
        }
        if let Some(ly) = &self.lyapunov {
            ly.functional.validate()?;
            for g in [&ly.a1, &ly.a2, &ly.q, &ly.a].into_iter().flatten() {
                g.validate()?;
            }
        }
        Ok(())
    }

    pub fn rho(&self) -> Result<f64, CliError> {
        need(self.rho, "rho")
    }

    pub fn eps(&self) -> Result<f64, CliError> {
        need(self.eps, "eps")
    }

    pub fn t_end(&self) -> Result<f64, CliError> {
        need(self.t_end, "t_end")
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, CliError> {
        match (&self.eps_list, self.eps) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(e)) => Ok(vec![e]),
            (None, None) => Err(CliError::Missing("eps_list")),
        }
    }

    pub fn rho_list(&self) -> Result<Vec<f64>, CliError> {
        match (&self.rho_list, self.rho) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(r)) => Ok(vec![r]),
            (None, None) => Err(CliError::Missing("rho_list")),
        }
    }

    /// The sampler config, or a default Fourier sampler on the unit ball of `space`.
    pub fn sampler(&self) -> SamplerConfig {
        self.sampler.clone().unwrap_or_else(|| {
            SamplerConfig::new(Family::Fourier { harmonics: 3 }, self.space, 1.0)
                .with_seed(self.budget.seed)
                .with_dim(self.system.n)
                .with_grid(self.system.r, self.budget.intervals)
        })
    }

    pub fn initial_segment<T: Scalar>(&self) -> Result<Segment<T>, CliError> {
        let spec = self.initial.as_ref().ok_or(CliError::Missing("initial"))?;
        let r = T::lit(self.system.r);
        let seg = match spec {
            InitialSpec::Constant { value, intervals } => {
                if value.len() != self.system.n {
                    return Err(CliError::Config(format!(
                        "initial value has {} components, system has {}",
                        value.len(),
                        self.system.n
                    )));
                }
                let c: Vec<T> = value.iter().map(|&v| T::lit(v)).collect();
                Segment::constant(r, *intervals, &c)?
            }
            InitialSpec::Sample { index } => delaystab::Sampler::new(self.sampler())?.draw(*index)?,
            InitialSpec::Segment { segment } => Segment::<f64>::try_from(segment.clone())?.cast(),
        };
        if seg.dim() != self.system.n {
            return Err(CliError::Config(
                "initial history dimension differs from the system".into(),
            ));
        }
        if (seg.delay().to_f64_lossy() - self.system.r).abs() > 1e-9 * self.system.r {
            return Err(CliError::Config("initial history delay differs from the system".into()));
        }
        Ok(seg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"system": {"name": "zero", "r": 1.0}, "rhoo": 1.0}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
        let text = r#"{"system": {"name": "zero", "r": 1.0}, "budget": {"sample": 3}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn minimal_config_round_trips() {
        let text = r#"{"system": {"name": "zero", "r": 1.0}, "property": "gas-vs-ugas", "rho": 1.0}"#;
        let mut cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.resolve(Some(9));
        cfg.validate().unwrap();
        assert_eq!(cfg.budget.seed, 9);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_catches_bad_values() {
        let text = r#"{"system": {"name": "zero", "r": 1.0}, "rho": -1.0}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
        let text = r#"{"system": {"name": "linear_scalar", "r": 1.0, "params": {"c": 1.0}}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_initial_must_match_dimension() {
        let text = r#"{"system": {"name": "zero", "r": 1.0, "n": 2},
                       "initial": {"kind": "constant", "value": [1.0]}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.initial_segment::<f64>().is_err());
    }
}
