//! Text formats: command-line specs, NDJSON records and CSV tables.
//!
//! Density fields use [`crate::hydro::DensityField::write_csv`] (columns
//! `t,u,rho`) and marginal tables
//! [`crate::measures::MarginalTable::write_csv`] (columns `k,pmf,cdf`).

pub mod csv;
pub mod ndjson;
pub mod spec;
