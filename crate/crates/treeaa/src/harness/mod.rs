//! Experiment driver: tree generators, the adversary registry, run
//! execution with oracle verdicts, and report emission.

pub mod adversary;
pub mod experiment;
pub mod generate;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::tree::TreeError;
use crate::tree_aa::TreeAaError;

pub use adversary::{build_adversary, AttackContext, ADVERSARIES};
pub use experiment::{
    assign_inputs, execute, judge, run_experiment, Execution, ExperimentConfig, InputAssignment, TreeSource,
    Verdict,
};
pub use generate::{generate_tree, TreeKind};
pub use report::{emit_report, parse_json_reports, Format, RunReport, CSV_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown adversary {0:?} (known: silent, skew-high, skew-low, equivocator, split-world, adaptive-late)")]
    UnknownAdversary(String),
    #[error("no reports to emit")]
    EmptyReport,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    TreeAa(#[from] TreeAaError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}
