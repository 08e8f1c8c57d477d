//! Rates, jump kernels and configurations.

mod config;
mod kernel;
mod profile;
mod rate;

pub use config::{Configuration, Tag, TagKind};
pub use kernel::JumpKernel;
pub use profile::Profile;
pub use rate::{RateClass, RateFunction, RateKind, DEFAULT_RATE_CAP};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid rate function: {0}")]
    InvalidRate(String),
    #[error("invalid jump kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("window of {window} sites does not fit on a torus of {n_sites}")]
    WindowTooLarge { window: usize, n_sites: usize },
    #[error("no particle at the tagged site")]
    NoParticleAtOrigin,
    #[error("configuration carries no tagged particle")]
    NotTagged,
}
