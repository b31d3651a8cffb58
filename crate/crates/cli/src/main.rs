use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bm_cli::{bench_baseline, bench_match, bench_ops, BenchOptions, BenchReport, CliError};
use bm_cluster::{launch, local_reply, Backend, ClientSession, ClusterConfig, Role, ShardNode};
use bm_core::cost::{
    bracket_check, default_candidates, markdown_report, optimal_nin, total_f, Geometry, TimingTable,
};
use bm_core::fvec::{gen_dataset, FeatureSet};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bm", version, about = "Encrypted 1:N matching: data, keys, benchmarks and cost model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON config; `BM_CONFIG` takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendArg>,
    /// Slot count S.
    #[arg(long)]
    slots: Option<usize>,
    /// Feature dimension m.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_in: Option<usize>,
    /// Shard count K.
    #[arg(long)]
    shards: Option<usize>,
    /// Per-shard capacity C_cap.
    #[arg(long)]
    capacity: Option<usize>,
    /// Allow ring sizes below the security table (tests only).
    #[arg(long)]
    insecure: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Exact,
    Ckks,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ClusterConfig, CliError> {
        let mut c = ClusterConfig::resolve(self.config.as_deref())?;
        if let Some(b) = self.backend {
            c.backend = match b {
                BackendArg::Exact => Backend::Exact,
                BackendArg::Ckks => Backend::Ckks,
            };
        }
        c.slots = self.slots.unwrap_or(c.slots);
        c.m = self.m.unwrap_or(c.m);
        c.n_in = self.n_in.unwrap_or(c.n_in);
        c.shards = self.shards.unwrap_or(c.shards);
        c.shard_capacity = self.capacity.unwrap_or(c.shard_capacity);
        c.insecure_test_only |= self.insecure;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Md,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Enrollee feature file (fvec or CSV).
    #[arg(long)]
    fvec: PathBuf,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Exact backend: model matching time from this timing table (CSV).
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Timing table for the predicted columns (CSV); `reference` for the built-in one.
    #[arg(long)]
    predict: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Timing table CSV; the built-in reference table when absent.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    m: usize,
    /// Enrollee count R.
    #[arg(long, default_value_t = 2048)]
    r: usize,
    #[arg(long, default_value_t = 8192)]
    slots: usize,
    /// Candidate N_in values; powers of two up to m' when absent.
    #[arg(long, value_delimiter = ',')]
    n_in: Vec<usize>,
}

#[derive(Subcommand, Debug)]
enum CostCmd {
    /// F(N_in) for every candidate.
    Eval {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// The candidate with the smallest F.
    Optimize {
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Continuous minimizer of F against the (m'^1/3, m'^1/2) bracket.
    Bracket {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
        m_prime: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Random unit vectors, uniform on the sphere.
    Gen {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` writes CSV, anything else fvec.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert between fvec and CSV, normalizing rows.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate client keys into a directory.
    Keygen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "bm-keys")]
        keys: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encrypt and enroll every row of a feature file into a local store.
    Enroll {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "bm-keys")]
        keys: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        fvec: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Match one row against a local store and print the decision as JSON.
    Match {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "bm-keys")]
        keys: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        fvec: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Measure per-operation latency at levels 1 to 3.
    BenchOps {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Stage timings of split matching for several N_in.
    BenchMatch {
        #[command(flatten)]
        bench: BenchArgs,
        #[arg(long = "n-in-list", value_delimiter = ',', default_value = "2,4,8,16,32")]
        n_ins: Vec<usize>,
    },
    /// The whole-vector baseline next to split matching.
    BenchBase {
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Matching-time model.
    Cost {
        #[command(subcommand)]
        cmd: CostCmd,
    },
    /// Run a main or shard server until killed.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long, default_value = "127.0.0.1:7000")]
        listen: String,
        /// Shard addresses, main role only.
        #[arg(long, value_delimiter = ',')]
        shards: Vec<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => File::create(p)?.write_all(text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_features(path: &Path) -> Result<FeatureSet, CliError> {
    let mut f = FeatureSet::read_any(&std::fs::read(path)?)?;
    f.normalize();
    Ok(f)
}

fn read_table(path: Option<&Path>) -> Result<TimingTable, CliError> {
    match path {
        Some(p) => {
            let tt = TimingTable::read_csv(File::open(p)?)?;
            tt.validate(3)?;
            Ok(tt)
        }
        None => Ok(TimingTable::reference()),
    }
}

fn write_features(f: &FeatureSet, path: &Path) -> Result<(), CliError> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        f.write_csv(file)?;
    } else {
        f.write(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn report_text(r: &BenchReport, format: Format) -> String {
    match format {
        Format::Csv => r.to_csv(),
        Format::Md => r.to_markdown(),
    }
}

fn bench_options(b: &BenchArgs) -> Result<BenchOptions, CliError> {
    let timing = b.timing.as_deref().map(|p| read_table(Some(p))).transpose()?;
    let predictor = match b.predict.as_deref() {
        None => None,
        Some("reference") => Some(TimingTable::reference()),
        Some(p) => Some(read_table(Some(Path::new(p)))?),
    };
    Ok(BenchOptions {
        reps: b.reps,
        timing,
        predictor,
        seed: b.seed,
    })
}

fn geometry(g: &GeometryArgs) -> Result<(TimingTable, Geometry, Vec<usize>), CliError> {
    let tt = read_table(g.table.as_deref())?;
    let geo = Geometry::new(g.m, g.r, g.slots);
    let cands = if g.n_in.is_empty() {
        default_candidates(&geo)
    } else {
        g.n_in.clone()
    };
    Ok((tt, geo, cands))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Gen { count, dim, seed, out } => {
            if count == 0 {
                return Err(CliError::Usage("count must be at least 1".into()));
            }
            write_features(&gen_dataset(count, dim, seed)?, &out)?;
        }
        Cmd::Convert { input, out } => write_features(&read_features(&input)?, &out)?,
        Cmd::Keygen { config, keys, seed } => {
            let config = config.resolve()?;
            ClientSession::generate(&config, seed)?.save(&keys)?;
            println!("keys written to {}", keys.display());
        }
        Cmd::Enroll {
            config,
            keys,
            store,
            fvec,
            start,
        } => {
            let config = config.resolve()?;
            let session = ClientSession::load(&config, &keys)?;
            let node = ShardNode::with_capacity(&config, config.total_capacity(), Some(&store))?;
            node.load_keys(session.upload()).map_err(bm_cluster::ClusterError::from)?;
            let data = read_features(&fvec)?;
            for i in 0..data.len() {
                let blob = session.encrypt_enrollee(&data.row_f64(i))?;
                node.enroll(start + i, &blob).map_err(bm_cluster::ClusterError::from)?;
            }
            println!("enrolled {} vectors from index {start}", data.len());
        }
        Cmd::Match {
            config,
            keys,
            store,
            fvec,
            row,
            threshold,
        } => {
            let config = config.resolve()?;
            let session = ClientSession::load(&config, &keys)?;
            let node = ShardNode::with_capacity(&config, config.total_capacity(), Some(&store))?;
            let data = read_features(&fvec)?;
            if row >= data.len() {
                return Err(CliError::Usage(format!("row {row} out of range ({} rows)", data.len())));
            }
            let reply = local_reply(&node, &session.encrypt_query(&data.row_f64(row))?)?;
            let r = session.decide(&reply, threshold)?;
            let json = serde_json::json!({
                "best_index": r.best_index,
                "best_score": r.best_score,
                "accepted": r.accepted,
                "threshold": r.threshold,
                "candidates": r.scores.len(),
            });
            println!("{json}");
        }
        Cmd::BenchOps {
            config,
            reps,
            seed,
            out,
        } => {
            let tt = bench_ops(&config.resolve()?, reps, seed)?;
            let text = match out.format {
                Format::Csv => tt.to_csv(),
                Format::Md => format!("{}\n{}\n", tt.to_markdown(), bm_cli::report::hardware_footer()),
            };
            emit(&out.out, &text)?;
        }
        Cmd::BenchMatch { bench, n_ins } => {
            let config = bench.config.resolve()?;
            let data = read_features(&bench.fvec)?;
            let report = bench_match(&config, &data, &n_ins, &bench_options(&bench)?)?;
            emit(&bench.out.out, &report_text(&report, bench.out.format))?;
        }
        Cmd::BenchBase { bench } => {
            let config = bench.config.resolve()?;
            let data = read_features(&bench.fvec)?;
            let report = bench_baseline(&config, &data, &bench_options(&bench)?)?;
            emit(&bench.out.out, &report_text(&report, bench.out.format))?;
        }
        Cmd::Cost { cmd } => match cmd {
            CostCmd::Eval { geometry: g, out } => {
                let (tt, geo, cands) = geometry(&g)?;
                let text = match out.format {
                    Format::Md => markdown_report(&tt, &geo, &cands)?,
                    Format::Csv => {
                        let mut s = String::from("n_in,expansion_ms,matching_ms,compression_ms,total_ms\n");
                        for &n in &cands {
                            let b = total_f(&tt, &geo, n)?;
                            s.push_str(&format!(
                                "{n},{:.2},{:.2},{:.2},{:.2}\n",
                                b.expansion_ms, b.matching_ms, b.compression_ms, b.total_ms
                            ));
                        }
                        s
                    }
                };
                emit(&out.out, &text)?;
            }
            CostCmd::Optimize { geometry: g } => {
                let (tt, geo, cands) = geometry(&g)?;
                let n = optimal_nin(&tt, &geo, &cands)?;
                println!("{n}");
            }
            CostCmd::Bracket { table, m_prime, out } => {
                let tt = read_table(table.as_deref())?;
                let mut s = String::from("m_prime,x_min,lower,upper,bracket_ok,below,above\n");
                for mp in m_prime {
                    let b = bracket_check(&tt, mp)?;
                    s.push_str(&format!(
                        "{},{:.4},{:.4},{:.4},{},{},{}\n",
                        b.m_prime, b.x_min, b.lower, b.upper, b.bracket_ok, b.neighbours.0, b.neighbours.1
                    ));
                }
                emit(&out.out, &s)?;
            }
        },
        Cmd::Serve {
            config,
            role,
            listen,
            shards,
            data,
        } => {
            let config = config.resolve()?;
            let handle = launch(role, &config, &listen, &shards, data.as_deref())?;
            log::info!("{role:?} server listening on {}", handle.local_addr());
            handle.join();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
