use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use voterlab::dynamics::{
    average_initial, consensus_diameter, detect_consensus, mean_value, solve_finite, Trajectory,
};
use voterlab::experiments::{
    consensus_proximity, convergence_study, random_consensus_mc, simulate, ExperimentConfig, RunMetadata,
};
use voterlab::graph::{discretize_kernel_with_limit, laplacian, GraphFile, WeightedGraph};
use voterlab::structure::{structure_report, DEFAULT_PROP_TOL};
use voterlab::{Error, Result};

#[derive(Parser)]
#[command(name = "voterlab", version, about = "Voter-model dynamics on graphs and kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, env = "VOTERLAB_OUT")]
    out: PathBuf,
    /// Worker threads for ladders and Monte Carlo trials (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one approximating problem and write the trajectory.
    Simulate(RunArgs),
    /// Write the discretised graph and its operator.
    Discretize(RunArgs),
    /// Connectivity, components and twin-sets of the kernel.
    Structure(RunArgs),
    /// Error table of a size ladder against a reference solution.
    Convergence(RunArgs),
    /// Exceptional measures in the window after consensus.
    Proximity(RunArgs),
    /// Monte Carlo over W-random graphs.
    #[command(name = "mc-random")]
    McRandom(RunArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Simulate(a) => ("simulate", a),
            Command::Discretize(a) => ("discretize", a),
            Command::Structure(a) => ("structure", a),
            Command::Convergence(a) => ("convergence", a),
            Command::Proximity(a) => ("proximity", a),
            Command::McRandom(a) => ("mc-random", a),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Json(_) => 2,
        Error::Size { .. } => 3,
        Error::NonConvergence(_) => 4,
        _ => 1,
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.validate()?;
    if let Some(g) = &cfg.graph_file {
        if g.is_relative() {
            cfg.graph_file = Some(path.parent().unwrap_or(Path::new(".")).join(g));
        }
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn require_n(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.n.ok_or_else(|| Error::Validation("config needs n".into()))
}

fn run_simulate(cfg: &ExperimentConfig, out: &Path, meta: &mut Value) -> Result<()> {
    let traj = match &cfg.graph_file {
        None => simulate(cfg)?,
        Some(path) => {
            let file: GraphFile = serde_json::from_reader(File::open(path)?)?;
            let graph = WeightedGraph::from_file(&file)?;
            if let Some(n) = cfg.n {
                if n != graph.n() {
                    return Err(Error::DimensionMismatch { expected: n, got: graph.n() });
                }
            }
            let g = cfg.initial_condition()?;
            let mut traj = solve_finite(&graph, &average_initial(&g, graph.n())?, &cfg.times(), &cfg.solver)?;
            traj.meta.approximating_n = Some(graph.n());
            traj.meta.kernel = Some(cfg.kernel.clone());
            traj
        }
    };
    write_with(&out.join("trajectory.csv"), |w| traj.write_csv(w))?;
    write_json(&out.join("summary.json"), &trajectory_summary(cfg, &traj))?;
    meta["trajectory"] = serde_json::to_value(&traj.meta)?;
    Ok(())
}

fn trajectory_summary(cfg: &ExperimentConfig, traj: &Trajectory) -> Value {
    let m0 = mean_value(traj.initial());
    let drift = traj.states().iter().map(|s| (mean_value(s) - m0).abs()).fold(0.0, f64::max);
    json!({
        "n": traj.n(),
        "final_time": traj.times().last(),
        "final_diameter": consensus_diameter(traj.last()),
        "eps": cfg.eps,
        "consensus_time": detect_consensus(traj, cfg.eps),
        "max_mean_drift": drift,
        "max_sup_norm": traj.states().iter().map(|s| s.sup_norm()).fold(0.0, f64::max),
    })
}

fn run_discretize(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let graph = discretize_kernel_with_limit(&cfg.kernel()?, require_n(cfg)?, cfg.solver.n_max)?;
    write_json(&out.join("graph.json"), &graph.to_file())?;
    write_json(&out.join("laplacian.json"), &json!({ "n": graph.n(), "matrix": laplacian(&graph).rows() }))?;
    if graph.is_simple() {
        write_with(&out.join("edges.csv"), |w| graph.write_edge_csv(w))?;
    }
    Ok(())
}

fn run(cmd: &Command) -> Result<()> {
    let (name, args) = cmd.parts();
    let cfg = load_config(&args.config)?.resolved()?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&args.out)?;
    let out = args.out.as_path();
    let mut meta = serde_json::to_value(RunMetadata::new(name, cfg.clone(), rayon::current_num_threads()))?;
    match cmd {
        Command::Simulate(_) => run_simulate(&cfg, out, &mut meta)?,
        Command::Discretize(_) => run_discretize(&cfg, out)?,
        Command::Structure(_) => {
            let g = cfg.initial.as_ref().map(|_| cfg.initial_condition()).transpose()?;
            write_json(&out.join("structure.json"), &structure_report(&cfg.kernel()?, g.as_ref(), DEFAULT_PROP_TOL))?;
            meta["prop_tol"] = json!(DEFAULT_PROP_TOL);
        }
        Command::Convergence(_) => {
            let table = convergence_study(&cfg)?;
            write_with(&out.join("error_table.csv"), |w| table.write_csv(w))?;
            meta["reference"] = json!(table.reference);
        }
        Command::Proximity(_) => {
            let report = consensus_proximity(&cfg)?;
            write_json(&out.join("proximity.json"), &report)?;
            meta["reference"] = json!(report.reference);
        }
        Command::McRandom(_) => {
            let report = random_consensus_mc(&cfg)?;
            write_with(&out.join("mc.csv"), |w| report.write_csv(w))?;
            write_with(&out.join("chebyshev.csv"), |w| report.write_chebyshev_csv(w))?;
            write_json(&out.join("mc_summary.json"), &report.summary)?;
            meta["reference"] = json!(report.reference);
        }
    }
    write_json(&out.join("metadata.json"), &meta)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}
