//! Harness for probing language models with classic cognitive-psychology
//! paradigms: prompt batteries, completion backends, logprob scoring and
//! the statistics behind the effect tables.

pub mod analysis;
pub mod backend;
pub mod batteries;
pub mod config;
pub mod pipeline;
pub mod promptgen;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod stimuli;

pub use scalar::Real;

pub type TTest = stats::TTestResult<f64>;
pub type Anova = stats::AnovaResult<f64>;
pub type TTestF32 = stats::TTestResult<f32>;
pub type AnovaF32 = stats::AnovaResult<f32>;
