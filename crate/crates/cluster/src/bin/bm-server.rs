use std::path::PathBuf;
use std::process::ExitCode;

use bm_cluster::{launch, ClusterConfig, Role};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "bm-server", about = "Main or shard server for encrypted 1:N matching")]
struct Args {
    #[arg(long, value_enum)]
    role: Role,
    #[arg(long)]
    listen: String,
    /// Shard addresses, comma separated (main role only).
    #[arg(long, value_delimiter = ',')]
    shards: Vec<String>,
    /// JSON config; `BM_CONFIG` takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for persisted keys and store files.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let run = || -> Result<(), bm_cluster::ClusterError> {
        let config = ClusterConfig::resolve(args.config.as_deref())?;
        let handle = launch(args.role, &config, &args.listen, &args.shards, args.data.as_deref())?;
        log::info!("{:?} listening on {}", args.role, handle.local_addr());
        handle.join();
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bm-server: {e}");
            ExitCode::FAILURE
        }
    }
}
