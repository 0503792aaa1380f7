//! Sampling-based checks of stability properties of delay systems.
//!
//! Every universally quantified property is tested by falsification over a
//! finite set of initial histories: a few deterministic constant probes plus
//! seeded random draws. Verdicts are `consistent`, `falsified` (with a
//! reproducible witness) or `inconclusive`, never proofs.

mod bounds;
mod checks;
mod envelope;
mod report;
mod runs;

pub use bounds::{lipschitz_propagation_bound, verify_omega, verify_pair_bounds, BOUND_SLACK};
pub use checks::{check_ga, check_gas_vs_ugas, check_lags, check_ls, check_rfc, check_uga, LS_BISECTIONS};
pub use envelope::{
    fit_kl_envelope, omega_from_sigma, EnvelopeFit, EnvelopeMode, EnvelopeSample, KLEnvelope, DECAY_RATIO,
    NON_DECAY_RATIO,
};
pub use report::{DeltaEntry, SampleBudget, StabilityReport, Verdict, Witness};
pub use runs::{report_grid, run_one, snap_times, Budget, InitialSet, Measure, Run};
