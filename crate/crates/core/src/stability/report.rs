use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::segment::{SegmentJson, SpaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Falsified,
    Inconclusive,
}

impl Verdict {
    /// Falsified beats inconclusive beats consistent.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Falsified, _) | (_, Falsified) => Falsified,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Consistent,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Falsified => "falsified",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// An initial history that breaks a property, with enough to regenerate it:
/// `InitialSet::new` with the same budget, space, radius and delay, then
/// `get_in(index, radius)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub seed: u64,
    pub index: usize,
    /// Deterministic constant history rather than a random draw.
    pub probe: bool,
    pub radius: f64,
    pub time: f64,
    pub norm: f64,
    pub initial: SegmentJson<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub samples: usize,
    pub probes: usize,
    pub simulations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub property: String,
    pub space: SpaceSpec,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub margins: BTreeMap<String, f64>,
    pub sample_budget: SampleBudget,
    /// `δ(ε)` table of the Lyapunov-stability check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta_table: Vec<DeltaEntry>,
    /// Sub-reports of composite checks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<StabilityReport>,
}

impl StabilityReport {
    pub fn new(property: &str, space: SpaceSpec) -> Self {
        StabilityReport {
            property: property.to_string(),
            space,
            verdict: Verdict::Consistent,
            witness: None,
            margins: BTreeMap::new(),
            sample_budget: SampleBudget::default(),
            delta_table: Vec::new(),
            parts: Vec::new(),
        }
    }

    pub fn margin(&self, key: &str) -> Option<f64> {
        self.margins.get(key).copied()
    }

    pub(crate) fn set(&mut self, key: &str, value: f64) {
        self.margins.insert(key.to_string(), value);
    }

    pub(crate) fn falsify(&mut self, witness: Witness) {
        self.verdict = Verdict::Falsified;
        self.witness = Some(witness);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
