//! Core data model and analysis routines for predicting FPGA resources and
//! latency of neural networks compiled through an hls4ml-style HLS flow.
//!
//! The crate is organised bottom-up:
//!
//! - [`arch`], [`config`], [`targets`], [`sample`]: the nine-field synthesis
//!   record and the neutral layer-list schema.
//! - [`dataset`]: directory / archive ingestion with split tagging.
//! - [`fixtures`]: the seven exemplar architectures and their synthesis sweep.
//! - [`synth`]: a deterministic pseudo-synthesis cost model and random
//!   architecture generator.
//! - [`featurize`]: graph, sequence and aggregate encodings plus normalization.
//! - [`benchmark`]: metrics, box-plot statistics, evaluation and report bundles.

pub mod arch;
pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod exec;
pub mod featurize;
pub mod fixtures;
pub mod sample;
pub mod stats;
pub mod synth;
pub mod targets;
pub mod validate;

pub use arch::{Activation, LayerKind, LayerSpec, NetworkArchitecture, Padding};
pub use config::{HlsConfig, IoType, Strategy};
pub use dataset::{Dataset, Split};
pub use exec::Exec;
pub use sample::{GroupTag, Sample};
pub use targets::{Target, TargetVector};
