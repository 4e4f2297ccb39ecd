//! The `twolevel` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::data::{BinConfig, RawTable};
use crate::error::Error;
use crate::miner::build_domain;
use crate::oracle::OracleSource;
use crate::pipeline::{self, ExplainRequest, Explanation, SweepAxis, SweepSpec};
use crate::planted::{self, PlantedConfig};
use crate::service::{self, Store};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "twolevel", version, about = "Explain a black-box classifier with a two-level decision set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit an explanation and write it as JSON
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Output file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the search move log as JSON lines
        #[arg(long)]
        move_log: Option<PathBuf>,
    },
    /// Fit one explanation per axis value and write a CSV table
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// eps1, eps2, eps3 or min_support
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict one instance with a saved explanation
    Predict {
        #[arg(long)]
        explanation: PathBuf,
        /// Instance as a JSON object, or @path to a file holding one
        #[arg(long)]
        instance: String,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "store")]
        store_dir: PathBuf,
    },
    /// Generate planted-model data as CSV
    Gen {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        n_features: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Column holding the labels (or to exclude from the features)
    #[arg(long)]
    label_col: Option<String>,
    /// column, column:NAME, cmd:COMMAND or http:URL
    #[arg(long, default_value = "column")]
    oracle: String,
    /// Base request as JSON; the flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Binning settings as JSON
    #[arg(long)]
    bins: Option<PathBuf>,
    #[arg(long)]
    support: Option<f64>,
    #[arg(long)]
    max_width: Option<usize>,
    #[arg(long)]
    max_candidates: Option<usize>,
    /// eps1,eps2,eps3
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<usize>>,
    /// Five weights
    #[arg(long, value_delimiter = ',', num_args = 1..=5)]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    all_labels: bool,
    /// Features descriptors may use
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_moves: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl RunArgs {
    fn request(&self) -> CliResult<ExplainRequest> {
        let mut req = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
            }
            None => ExplainRequest::default(),
        };
        if let Some(s) = self.support {
            req.miner.min_support = s;
        }
        if let Some(w) = self.max_width {
            req.miner.max_width = w;
        }
        if let Some(c) = self.max_candidates {
            req.miner.max_candidates = c;
        }
        if let Some(eps) = &self.eps {
            req.objective.eps = eps
                .as_slice()
                .try_into()
                .map_err(|_| Failure::Usage(format!("--eps takes 3 values, got {}", eps.len())))?;
        }
        if let Some(l) = &self.lambda {
            req.objective.lambda = l
                .as_slice()
                .try_into()
                .map_err(|_| Failure::Usage(format!("--lambda takes 5 values, got {}", l.len())))?;
        }
        if let Some(d) = self.delta {
            req.objective.delta = d;
        }
        if self.normalize {
            req.objective.normalize = true;
        }
        if let Some(k) = self.k {
            req.objective.k = k;
        }
        if self.all_labels {
            req.objective.all_labels = true;
        }
        if let Some(f) = &self.features {
            req.features = Some(f.clone());
        }
        if let Some(s) = self.seed {
            req.seed = s;
        }
        if let Some(m) = self.max_moves {
            req.max_moves_per_round = m;
        }
        req.objective.validate()?;
        Ok(req)
    }

    fn dataset(&self) -> CliResult<crate::data::Dataset> {
        let bins = match &self.bins {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                BinConfig::from_json_str(&text)?
            }
            None => BinConfig::default(),
        };
        let oracle = OracleSource::parse(&self.oracle, self.label_col.as_deref())?;
        let table = RawTable::from_path(&self.data).map_err(|e| Failure::Runtime(e.to_string()))?;
        Ok(pipeline::prepare_dataset(&table, self.label_col.as_deref(), &oracle, &bins)?)
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn fit(run: &RunArgs, out: Option<&Path>, move_log: Option<&Path>) -> CliResult<()> {
    let req = run.request()?;
    let ds = run.dataset()?;
    req.validate(&ds)?;
    let (nd, dl) = req.miner_configs();
    let domain = build_domain(&ds, &nd, &dl)?;
    let (explanation, result) = pipeline::explain_with_domain(&ds, &req, &domain)?;
    if let Some(p) = move_log {
        let f = File::create(p).map_err(io_err)?;
        result.write_move_log(BufWriter::new(f))?;
    }
    let mut w = output(out)?;
    w.write_all(explanation.to_json()?.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn sweep(run: &RunArgs, axis: &str, values: &[f64], out: Option<&Path>) -> CliResult<()> {
    let spec = SweepSpec {
        axis: SweepAxis::parse(axis)?,
        values: values.to_vec(),
        base: run.request()?,
    };
    spec.validate()?;
    let ds = run.dataset()?;
    let rows = pipeline::sweep(&ds, &spec)?;
    let mut w = output(out)?;
    pipeline::write_sweep_csv(&rows, spec.axis, &mut w)?;
    w.flush().map_err(io_err)
}

fn predict(explanation: &Path, instance: &str) -> CliResult<()> {
    let text = std::fs::read_to_string(explanation)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", explanation.display())))?;
    let exp = Explanation::from_json(&text).map_err(|e| Failure::Runtime(e.to_string()))?;
    let raw = match instance.strip_prefix('@') {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{p}: {e}")))?,
        None => instance.to_string(),
    };
    let inst: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&raw)
        .map_err(|e| Failure::Usage(format!("--instance must be a JSON object: {e}")))?;
    let set = exp.decision_set().map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = pipeline::predict_instance(&set, &inst).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{}", serde_json::to_string(&out).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(())
}

fn serve(host: &str, port: u16, store_dir: &Path) -> CliResult<()> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address {host}:{port}: {e}")))?;
    let store = Arc::new(Store::open(service::store_dir(store_dir))?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err)?;
    rt.block_on(service::serve(addr, store, None))?;
    Ok(())
}

fn gen(cfg: PlantedConfig, out: Option<&Path>) -> CliResult<()> {
    let p = planted::generate(&cfg)?;
    let mut w = output(out)?;
    planted::write_csv(&p.table, &mut w)?;
    w.flush().map_err(io_err)
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match &cli.command {
        Command::Fit { run, out, move_log } => fit(run, out.as_deref(), move_log.as_deref()),
        Command::Sweep { run, axis, values, out } => sweep(run, axis, values, out.as_deref()),
        Command::Predict { explanation, instance } => predict(explanation, instance),
        Command::Serve { port, host, store_dir } => serve(host, *port, store_dir),
        Command::Gen { n, n_features, noise, seed, out } => gen(
            PlantedConfig { n: *n, n_features: *n_features, noise: *noise, seed: *seed },
            out.as_deref(),
        ),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}
