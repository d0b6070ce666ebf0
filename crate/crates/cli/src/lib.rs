//! Configuration, artifact output and stage orchestration behind the
//! `facegrowth` binary.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use artifacts::ArtifactWriter;
pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use pipeline::{run_pipeline, RunOutcome};
