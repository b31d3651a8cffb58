use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bm_cluster::{ClientSession, ClusterClient, ClusterConfig, ClusterError};
use bm_core::fvec::FeatureSet;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bm-client", about = "Client for the encrypted matching service")]
struct Args {
    /// JSON config; `BM_CONFIG` takes precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding this client's keys.
    #[arg(long, global = true, default_value = "bm-keys")]
    keys: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate keys locally and upload the public part.
    Keys {
        #[arg(long)]
        server: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Enroll every row of a feature file at consecutive global indices.
    Enroll {
        #[arg(long)]
        server: String,
        #[arg(long)]
        fvec: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
    /// Match one row of a feature file and print the decision as JSON.
    Match {
        #[arg(long)]
        server: String,
        #[arg(long)]
        fvec: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[arg(long)]
        threshold: f64,
    },
}

fn features(path: &Path) -> Result<FeatureSet, ClusterError> {
    let mut f = FeatureSet::read_any(&std::fs::read(path)?)?;
    f.normalize();
    Ok(f)
}

fn run(args: Args) -> Result<(), ClusterError> {
    let config = ClusterConfig::resolve(args.config.as_deref())?;
    match args.cmd {
        Cmd::Keys { server, seed } => {
            let session = ClientSession::generate(&config, seed)?;
            session.save(&args.keys)?;
            let client = ClusterClient::connect(&server, &config)?;
            client.upload_keys(session.upload())?;
            let status = client.status()?;
            for s in &status.shards {
                println!("shard {}: {}", s.shard, if s.ready { "ready" } else { "not ready" });
            }
        }
        Cmd::Enroll { server, fvec, start } => {
            let session = ClientSession::load(&config, &args.keys)?;
            let client = ClusterClient::connect(&server, &config)?;
            let data = features(&fvec)?;
            for i in 0..data.len() {
                client.enroll(start + i as u64, session.encrypt_enrollee(&data.row_f64(i))?)?;
            }
            println!("enrolled {} vectors from index {start}", data.len());
        }
        Cmd::Match {
            server,
            fvec,
            row,
            threshold,
        } => {
            let session = ClientSession::load(&config, &args.keys)?;
            let client = ClusterClient::connect(&server, &config)?;
            let data = features(&fvec)?;
            if row >= data.len() {
                return Err(ClusterError::Config(format!("row {row} out of range")));
            }
            let reply = client.match_query(session.encrypt_query(&data.row_f64(row))?)?;
            let result = session.decide(&reply, threshold)?;
            let out = serde_json::json!({
                "best_index": result.best_index,
                "best_score": result.best_score,
                "accepted": result.accepted,
                "threshold": threshold,
                "partial": reply.partial,
                "missing_shards": reply.timed_out(),
            });
            println!("{out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bm-client: {e}");
            ExitCode::FAILURE
        }
    }
}
