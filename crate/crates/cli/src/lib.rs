//! Spec-driven experiment runner behind the `semirte` binary.

pub mod plot;
pub mod run;
pub mod spec;

pub use run::{run, run_dir, spec_hash, RunError, RunManifest};
pub use spec::{parse, ExperimentSpec, Kind};
