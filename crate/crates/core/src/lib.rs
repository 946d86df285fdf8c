//! Consistency-aware evaluation of language models on multiple-choice benchmarks.
//!
//! The pipeline is: load a [`benchmark::Benchmark`], expand every question into a
//! [`variation::DivergentSet`] of perturbed answer sets, render each variant with
//! [`prompting`], query a model through [`gateway`], and score the resulting
//! [`metrics::EvaluationMatrix`]. [`guessing`] and [`bootstrap`] hold the
//! supporting statistical analyses; [`report`] and [`manifest`] produce the
//! reproducible artifacts consumed by the command-line front end.

pub mod benchmark;
pub mod bootstrap;
pub mod gateway;
pub mod guessing;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod seeding;
pub mod variation;

pub use benchmark::{Benchmark, MCQuestion};
pub use metrics::{EvaluationMatrix, MetricReport};
pub use variation::{DivergentSet, VariantMethod, VariantQuestion};
