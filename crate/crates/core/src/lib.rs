//! Exact and numerical fluctuation theory for one-dimensional random walks:
//! walks conditioned to stay positive, ladder renewal measures, norming
//! sequences, the mixture representation of the conditioned law and its
//! limit objects, plus a seeded Monte Carlo layer and a report-writing runner.
//!
//! Numerical code is generic over the scalar (`f32` or `f64`); the aliases
//! below fix the common choices.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod continuum;
pub mod dp;
pub mod error;
pub mod ladder;
pub mod limits;
pub mod mixture;
pub mod norming;
pub mod oracle;
pub mod quadrature;
pub mod real;
pub mod report;
pub mod simulate;
pub mod walk;
pub mod wiener_hopf;

pub use error::{Error, Result};
pub use real::Real;

pub type StepLaw64 = walk::StepLaw<f64>;
pub type StepLaw32 = walk::StepLaw<f32>;
pub type LatticePmf64 = walk::LatticePmf<f64>;
pub type LatticePmf32 = walk::LatticePmf<f32>;
pub type LadderTable64 = ladder::LadderTable<f64>;
pub type LadderTable32 = ladder::LadderTable<f32>;
pub type HeightRenewal64 = ladder::HeightRenewal<f64>;
pub type NormingData64 = norming::NormingData<f64>;
pub type NormingData32 = norming::NormingData<f32>;
pub type MixtureMeasure64 = mixture::MixtureMeasure<f64>;
pub type GridDensity64 = continuum::GridDensity<f64>;
pub type GridDensity32 = continuum::GridDensity<f32>;
pub type ContinuousLaw64 = continuum::ContinuousLaw<f64>;
pub type LimitDensity64 = limits::LimitDensity<f64>;
pub type DpConfig64 = dp::DpConfig<f64>;
pub type DpConfig32 = dp::DpConfig<f32>;
