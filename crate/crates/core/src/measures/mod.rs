//! Invariant measures of the zero-range dynamics.

mod canonical;
mod ensemble;
mod flux;
mod hbar;
mod tables;

pub use canonical::{
    binomial, canonical_expectation, canonical_stochastic_order_check, ensembles_gap, ensembles_gap_convolved,
    origin_marginal_convolved, state_count, CanonicalSpace, ENUMERATION_CAP,
};
pub use ensemble::{
    chi, density_of_fugacity, fugacity_of_density, partition_function, psi, EnsembleParams, GrandCanonical, PSI_EPS,
    TAIL_TOL,
};
pub use flux::Flux;
pub use hbar::HBarTable;
pub use tables::{sample_product_measure, MarginalKind, MarginalTable, ProductKind, ProductSampler};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("fugacity {phi} is at or beyond the radius of convergence {radius}")]
    FugacityAtRadius { phi: f64, radius: f64 },
    #[error("state space of {states} configurations exceeds the enumeration cap {cap}")]
    StateSpaceTooLarge { states: u64, cap: usize },
    #[error("initial profile is not positive at u = {u} (value {value})")]
    ProfileNotPositive { u: f64, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
