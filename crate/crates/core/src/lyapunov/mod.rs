//! Lyapunov–Krasovskii functionals and checks of the conditions that
//! certify uniform stability or robust forward completeness.

mod checks;
mod dini;
mod functional;

pub use checks::{
    check_rfc_sufficient, check_theorem5, check_theorem6, flow_increments, lipschitz_spot_check, FlowIncrement,
    DINI_SLACK, INTEGRAL_SLACK, SANDWICH_SLACK,
};
pub use dini::{dini_derivative, dini_ladder, prolongation_quotients, DiniEstimate, DINI_H0, DINI_LEVELS, DINI_RATIO};
pub use functional::{Functional, GridFunction};
