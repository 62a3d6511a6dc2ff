//! Command line front end: `eval`, `simulate` and `inject`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::{execute_with, EngineConfig, NaiveEvaluator, Warehouse};
use crate::lucid::{parse_context_spec, parse_program, Context, Program};
use crate::sim::{simulate_pipeline, simulate_program, Batch, Fault, RunReport, SimError, SimOptions};
use crate::tier::{ClusterConfig, Protocol, TransportMode};

pub const EXIT_PARSE: i32 = 1;
pub const EXIT_EVAL: i32 = 2;
pub const EXIT_CONTEXT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_WORKLOAD: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "eduction", version, about = "Demand-driven Lucid evaluation and cluster simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a program locally.
    Eval {
        file: PathBuf,
        /// Dimension tags, e.g. "t=10,d=2".
        #[arg(long, default_value = "")]
        context: String,
        /// Use the reference evaluator without a warehouse.
        #[arg(long)]
        naive: bool,
    },
    /// Run a program or a pipeline batch on a simulated cluster.
    Simulate(SimulateArgs),
    /// Like simulate, with at least one injected fault.
    Inject(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    Auto,
    Inproc,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Inproc,
    Tcp,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub cluster: PathBuf,
    #[arg(long, conflicts_with = "pipeline", required_unless_present = "pipeline")]
    pub program: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    #[arg(long, default_value = "")]
    pub context: String,
    #[arg(long, value_enum, default_value = "on")]
    pub replication: OnOff,
    #[arg(long, value_enum, default_value = "auto")]
    pub transport: TransportArg,
    /// Write the JSON-lines report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kill the node serving STAGE ("eval" for programs).
    #[arg(long, requires = "after")]
    pub crash: Option<String>,
    /// Demands the stage's store must have computed before the crash.
    #[arg(long, requires = "crash")]
    pub after: Option<u64>,
    /// Raise the modeled latency of a transport.
    #[arg(long, value_enum, requires = "latency")]
    pub slow: Option<ProtocolArg>,
    #[arg(long, requires = "slow")]
    pub latency: Option<u64>,
}

impl SimulateArgs {
    fn faults(&self) -> Vec<Fault> {
        let mut out = Vec::new();
        if let (Some(stage), Some(after)) = (&self.crash, self.after) {
            out.push(Fault::crash(stage, after));
        }
        if let (Some(p), Some(us)) = (self.slow, self.latency) {
            let p = match p {
                ProtocolArg::Inproc => Protocol::Inproc,
                ProtocolArg::Tcp => Protocol::Tcp,
            };
            out.push(Fault::slow(p, us));
        }
        out
    }

    fn options(&self) -> SimOptions {
        let mut o = SimOptions::seeded(self.seed)
            .with_replication(self.replication == OnOff::On)
            .with_transport(match self.transport {
                TransportArg::Auto => TransportMode::Auto,
                TransportArg::Inproc => TransportMode::Inproc,
                TransportArg::Tcp => TransportMode::Tcp,
            });
        o.faults = self.faults();
        o
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let res = match cli.command {
        Command::Eval { file, context, naive } => eval(&file, &context, naive, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::Inject(a) if a.faults().is_empty() => {
            Err((EXIT_CONFIG, "inject needs --crash STAGE --after N or --slow TRANSPORT --latency US".into()))
        }
        Command::Inject(a) => simulate(&a, out),
    };
    match res {
        Ok(()) => 0,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

type CmdResult = Result<(), (i32, String)>;

fn read_program(path: &PathBuf, code: i32) -> Result<Program, (i32, String)> {
    let src = std::fs::read_to_string(path).map_err(|e| (code, format!("{}: {e}", path.display())))?;
    parse_program(&src).map_err(|e| (code, format!("{}: {e}", path.display())))
}

fn read_context(spec: &str, p: &Program, code: i32) -> Result<Context, (i32, String)> {
    parse_context_spec(spec, p).map_err(|e| (code, e.to_string()))
}

fn eval(file: &PathBuf, spec: &str, naive: bool, out: &mut dyn Write) -> CmdResult {
    let p = read_program(file, EXIT_PARSE)?;
    let ctx = read_context(spec, &p, EXIT_CONTEXT)?;
    let io = |e: std::io::Error| (EXIT_EVAL, e.to_string());
    if naive {
        let mut ev = NaiveEvaluator::new(&p);
        let v = ev.eval(p.result(), &ctx).map_err(|e| (EXIT_EVAL, e.to_string()))?;
        writeln!(out, "result = {v}").map_err(io)?;
        writeln!(out, "id_evaluations = {}", ev.id_evaluations).map_err(io)?;
    } else {
        let w = Warehouse::new();
        let (v, stats) =
            execute_with(&p, &ctx, &w, EngineConfig::default()).map_err(|e| (EXIT_EVAL, e.to_string()))?;
        let ws = w.stats();
        writeln!(out, "result = {v}").map_err(io)?;
        writeln!(out, "id_evaluations = {}", stats.id_evaluations).map_err(io)?;
        writeln!(out, "warehouse_hits = {}", ws.hits).map_err(io)?;
        writeln!(out, "warehouse_misses = {}", ws.misses).map_err(io)?;
        writeln!(out, "max_depth = {}", stats.max_depth).map_err(io)?;
    }
    Ok(())
}

fn sim_error(e: SimError) -> (i32, String) {
    match e {
        SimError::Config(c) => (EXIT_CONFIG, c.to_string()),
        SimError::Workload(w) => (EXIT_WORKLOAD, w),
    }
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let config = ClusterConfig::load(&a.cluster).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", a.cluster.display())))?;
    let opts = a.options();
    let report: RunReport = match (&a.program, &a.pipeline) {
        (Some(path), _) => {
            let p = read_program(path, EXIT_CONFIG)?;
            let ctx = read_context(&a.context, &p, EXIT_CONFIG)?;
            simulate_program(config, &p, &ctx, opts).map_err(sim_error)?.report
        }
        (None, Some(dir)) => {
            let batch = Batch::from_dir(dir).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            simulate_pipeline(config, &batch, opts).map_err(sim_error)?.report
        }
        (None, None) => return Err((EXIT_CONFIG, "one of --program or --pipeline is required".into())),
    };
    let io = |e: std::io::Error| (EXIT_WORKLOAD, e.to_string());
    match &a.report {
        Some(path) => {
            report.write(path).map_err(io)?;
            for r in &report.results {
                match (&r.value, &r.speaker_id, &r.error) {
                    (Some(v), _, _) => writeln!(out, "{} = {v}", r.name),
                    (_, Some(s), _) => writeln!(out, "{} = {s}", r.name),
                    (_, _, Some(e)) => writeln!(out, "{} failed: {e}", r.name),
                    _ => Ok(()),
                }
                .map_err(io)?;
            }
            writeln!(out, "report written to {}", path.display()).map_err(io)?;
        }
        None => out.write_all(report.to_jsonl().as_bytes()).map_err(io)?,
    }
    Ok(())
}
