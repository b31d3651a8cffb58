//! Dataset tools, the benchmark harness and report emission behind the
//! `bm` command.

pub mod bench;
pub mod report;

use bm_cluster::ClusterError;
use bm_core::cost::CostError;
use bm_core::fvec::FvecError;
use bm_core::pipeline::PipelineError;
use bm_core::HeError;
use thiserror::Error;

pub use bench::{bench_baseline, bench_match, bench_ops, BenchOptions};
pub use report::{BenchReport, BenchRow, Stat};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Fvec(#[from] FvecError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
