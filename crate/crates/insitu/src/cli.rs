//! Command line: `serve`, `handbook build` and `eval`.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use insitu_core::config::{ConfigError, EngineConfig};
use insitu_core::dom_model::{parse_snapshot, SnapshotError};
use insitu_core::engine::{Engine, EngineError, StatusResponse};
use insitu_core::evalkit::{load_dataset, run_eval, EvalConfig, EvalError, EvalReport};
use insitu_core::recommender::Method;

#[derive(Debug, Parser)]
#[command(name = "insitu", version, about = "In-situ assistance engine")]
pub struct Cli {
    /// Config file (TOML or JSON); falls back to $INSITU_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        /// Listen address, overriding the config's `bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Handbook administration.
    Handbook {
        #[command(subcommand)]
        action: HandbookCommand,
    },
    /// Evaluate one method over a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum HandbookCommand {
    /// Build knowledge and handbook for an interface and store them.
    Build {
        /// Page URL; replaces the snapshot's own url.
        #[arg(long)]
        interface: String,
        #[arg(long)]
        snapshot: PathBuf,
        /// Cases to request from the generator.
        #[arg(short = 'n', default_value_t = insitu_core::config::DEFAULT_HANDBOOK_SIZE)]
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Generate,
    Handbook,
    Hybrid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Generate => Method::GenerateOnly,
            MethodArg::Handbook => Method::HandbookOnly,
            MethodArg::Hybrid => Method::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON Lines file of records.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Hybrid)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score resolution with the judge provider.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub judge: Switch,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Snapshot { path: PathBuf, source: SnapshotError },
    #[error("invalid listen address {0:?}")]
    Bind(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = EngineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind } => serve(cfg, bind),
        Command::Handbook { action: HandbookCommand::Build { interface, snapshot, n } } => {
            let status = build_handbook(cfg, &interface, &snapshot, n)?;
            println!("{}", serde_json::to_string_pretty(&status).expect("status serializes"));
            Ok(())
        }
        Command::Eval(args) => {
            let report = eval(cfg, &args)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match &args.out {
                Some(path) => fs::write(path, text + "\n").map_err(io_err(path))?,
                None => println!("{text}"),
            }
            eprintln!("{}", summary_line(&report));
            Ok(())
        }
    }
}

fn serve(cfg: EngineConfig, bind: Option<String>) -> Result<(), CliError> {
    let bind = bind.unwrap_or_else(|| cfg.bind.clone());
    let addr: SocketAddr = bind.parse().map_err(|_| CliError::Bind(bind.clone()))?;
    let engine = Engine::new(cfg)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err(Path::new("<runtime>")))?;
    rt.block_on(crate::http::serve(engine, addr)).map_err(io_err(Path::new(&bind)))
}

pub fn build_handbook(mut cfg: EngineConfig, interface: &str, snapshot: &Path, n: usize) -> Result<StatusResponse, CliError> {
    let raw = fs::read_to_string(snapshot).map_err(io_err(snapshot))?;
    let mut snap = parse_snapshot(&raw).map_err(|source| CliError::Snapshot { path: snapshot.to_path_buf(), source })?;
    if snap.url != interface {
        log::info!("using interface url {interface} instead of the snapshot's {}", snap.url);
        snap.url = interface.to_string();
    }
    cfg.handbook_size = n;
    cfg.persist = true;
    cfg.validate()?;
    let engine = Engine::new(cfg)?;
    Ok(engine.init_interface_blocking(&snap)?)
}

/// Runs without persistence so repeated runs start from the same handbook.
pub fn eval(mut cfg: EngineConfig, args: &EvalArgs) -> Result<EvalReport, CliError> {
    let records = load_dataset(&args.dataset)?;
    cfg.persist = false;
    let eval_cfg = EvalConfig {
        method: args.method.into(),
        seed: args.seed,
        judge: args.judge == Switch::On,
        recommender: cfg.recommender,
        ..EvalConfig::default()
    };
    let engine = Engine::new(cfg)?;
    Ok(run_eval(&engine, &records, &eval_cfg)?)
}

fn summary_line(r: &EvalReport) -> String {
    let mut line = format!(
        "{:?}: {} records, success {:.3}, latency mean {:.1} ms p50 {:.1} p95 {:.1}",
        r.method, r.n_records, r.success_rate, r.latency_ms.mean, r.latency_ms.p50, r.latency_ms.p95
    );
    if let Some(f) = r.fallback_rate {
        line += &format!(", fallback {f:.3}");
    }
    if let Some(mean) = r.resolution.as_ref().and_then(|res| res.mean) {
        line += &format!(", resolution {mean:.2}");
    }
    line
}
