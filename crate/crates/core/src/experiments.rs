//! Experiment harnesses: convergence ladders against a reference solution,
//! approximate-consensus proximity, and Monte Carlo over W-random graphs.
//!
//! Every harness is driven by one [`ExperimentConfig`] and is deterministic:
//! identical configs give identical tables, whatever the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    average_initial, consensus_diameter, exceptional_measure, solve_continuum,
    solve_finite, uniform_times, InitialCondition, InitialSpec, SolverOptions, StateVector, Trajectory,
};
use crate::error::{Error, Result};
use crate::graph::{sample_w_random_with_limit, RNG_ALGORITHM};
use crate::kernel::{make_kernel, Kernel, KernelSpec, Partition};

fn default_time_step() -> f64 {
    0.1
}

fn default_window() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    1e-3
}

fn default_c() -> f64 {
    0.1
}

fn default_trials() -> usize {
    1
}

/// One JSON document per run. Missing optional fields take the defaults
/// below; [`ExperimentConfig::resolved`] fills the rest so the echoed
/// config fully reconstructs the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub ladder: Vec<usize>,
    /// Simulated time span `[0, horizon]`.
    #[serde(default)]
    pub horizon: f64,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
    /// `D`: length of the window `[T, T + D]` checked after consensus.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_n: Option<usize>,
    /// Size of a single simulation or discretisation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Graph written by `discretize`; replaces the kernel's discretisation in `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    /// Checks the parameters every harness relies on.
    pub fn validate(&self) -> Result<()> {
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("ladder must be strictly increasing"));
        }
        if self.ladder.first() == Some(&0) || self.n == Some(0) || self.reference_n == Some(0) {
            return Err(Error::validation("sizes must be at least 1"));
        }
        for (name, v) in [("eps", self.eps), ("c", self.c), ("window", self.window), ("time_step", self.time_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        make_kernel(&self.kernel)?;
        if self.initial.is_some() {
            self.initial_condition()?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        make_kernel(&self.kernel)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        match &self.initial {
            Some(spec) => InitialCondition::from_spec(spec),
            None => Err(Error::validation("config needs an initial condition")),
        }
    }

    /// Shared time grid: `[0, horizon]` in steps of at most `time_step`.
    pub fn times(&self) -> Vec<f64> {
        if self.horizon == 0.0 {
            return vec![0.0];
        }
        uniform_times(self.horizon, (self.horizon / self.time_step).ceil() as usize)
    }

    fn ladder_max(&self) -> Result<usize> {
        self.ladder.last().copied().ok_or_else(|| Error::validation("ladder must be non-empty"))
    }

    /// Copy with `reference_n` and the initial-condition canonical form filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.reference_n.is_none() {
            if let Some(&m) = self.ladder.last() {
                out.reference_n = Some(4 * m);
            }
        }
        if let Some(spec) = &self.initial {
            out.initial = Some(InitialCondition::from_spec(spec)?.to_spec());
        }
        Ok(out)
    }
}

/// Everything needed to rerun an experiment, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: &'static str,
    pub rng_algorithm: &'static str,
    pub threads: usize,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl RunMetadata {
    pub fn new(command: &str, config: ExperimentConfig, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            rng_algorithm: RNG_ALGORITHM,
            threads,
            config,
            reference: None,
        }
    }
}

/// Bipartite kernel with `g` in the zero-mean family: the exact solution is
/// known, so no reference simulation is needed.
fn closed_form_params(k: &Kernel, g: &InitialCondition) -> Option<f64> {
    match k {
        Kernel::Bipartite(r) if g.in_bipartite_family(*r) => Some(*r),
        _ => None,
    }
}

/// The continuum solution compared against.
enum Reference {
    ClosedForm { r: f64, g: InitialCondition },
    Solved(Trajectory),
}

impl Reference {
    fn build(k: &Kernel, g: &InitialCondition, n: usize, times: &[f64], opts: &SolverOptions) -> Result<Self> {
        match closed_form_params(k, g) {
            Some(r) => Ok(Reference::ClosedForm { r, g: g.clone() }),
            None => Ok(Reference::Solved(solve_continuum(k, g, n, times, opts)?)),
        }
    }

    fn describe(&self) -> String {
        match self {
            Reference::ClosedForm { r, .. } => format!("closed_form_bipartite(r={r})"),
            Reference::Solved(t) => format!("solve_continuum(n={})", t.n()),
        }
    }

    /// The reference state at grid index `idx` as a piecewise-affine function.
    fn at(&self, idx: usize, t: f64) -> Result<InitialCondition> {
        match self {
            Reference::ClosedForm { r, g } => {
                let p = g.partition().refine(&Partition::new(vec![0.0, *r, 1.0])?);
                let mut values = Vec::with_capacity(p.len());
                let mut slopes = Vec::with_capacity(p.len());
                for i in 0..p.len() {
                    let mid = 0.5 * (p.start(i) + p.end(i));
                    let j = g.partition().cell_of(mid);
                    let factor = decay(*r, mid, t);
                    let start = g.values()[j] + g.slopes()[j] * (p.start(i) - g.partition().start(j));
                    values.push(factor * start);
                    slopes.push(factor * g.slopes()[j]);
                }
                InitialCondition::affine(p.boundaries().to_vec(), values, slopes)
            }
            Reference::Solved(traj) => InitialCondition::from_cells(traj.states()[idx].values().to_vec()),
        }
    }
}

fn decay(r: f64, x: f64, t: f64) -> f64 {
    let rate = if x < r { 1.0 - 2.0 * r } else { 1.0 };
    (-rate * t).exp()
}

fn affine_pieces<'a>(
    s: &'a StateVector,
    f: &'a InitialCondition,
) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    let grid = s.partition();
    let p = grid.refine(f.partition());
    (0..p.len()).map(move |i| {
        let (l, h) = (p.start(i), p.end(i));
        let mid = 0.5 * (l + h);
        let u = s.values()[grid.cell_of(mid)];
        let j = f.partition().cell_of(mid);
        let at = |x: f64| f.values()[j] + f.slopes()[j] * (x - f.partition().start(j));
        (h - l, u - at(l), u - at(h))
    })
}

/// Exact `‖s − f‖_{L₂}` for a step state and a piecewise-affine `f`.
pub fn l2_error(s: &StateVector, f: &InitialCondition) -> f64 {
    affine_pieces(s, f)
        .map(|(len, a, b)| len * (a * a + a * b + b * b) / 3.0)
        .sum::<f64>()
        .sqrt()
}

fn measure_above(len: f64, a: f64, b: f64, thr: f64) -> f64 {
    match (a > thr, b > thr) {
        (true, true) => len,
        (false, false) => 0.0,
        _ => len * (a.max(b) - thr) / (a - b).abs(),
    }
}

/// Exact `λ{x : |s(x) − f(x)| > eps}`.
pub fn exceedance_measure(s: &StateVector, f: &InitialCondition, eps: f64) -> f64 {
    affine_pieces(s, f)
        .map(|(len, a, b)| measure_above(len, a, b, eps) + measure_above(len, -a, -b, eps))
        .sum()
}

fn affine_diameter(f: &InitialCondition) -> f64 {
    let (lo, hi) = f.range_on(0.0, 1.0);
    hi - lo
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub sup_l2_error: f64,
    #[serde(rename = "diameter_at_T")]
    pub diameter_at_t: f64,
    pub exceptional_measure: f64,
}

/// One row per ladder entry; values are raw, so non-monotone ladders show.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub reference: String,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Max over the shared time grid of the exact `L₂` distance between each
/// ladder solution and the reference (closed form when available, else a
/// solve at `reference_n ≥ 4 · max ladder`).
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let k = cfg.kernel()?;
    let g = cfg.initial_condition()?;
    let times = cfg.times();
    let top = cfg.ladder_max()?;
    let reference_n = cfg.reference_n.unwrap_or(4 * top);
    let closed = closed_form_params(&k, &g).is_some();
    if !closed && reference_n < 4 * top {
        return Err(Error::validation(format!(
            "reference_n={reference_n} must be at least 4 × largest ladder size ({top})"
        )));
    }
    let reference = Reference::build(&k, &g, reference_n, &times, &cfg.solver)?;
    let refs: Vec<InitialCondition> =
        times.iter().enumerate().map(|(i, &t)| reference.at(i, t)).collect::<Result<_>>()?;
    let rows = cfg
        .ladder
        .par_iter()
        .map(|&n| {
            let traj = solve_continuum(&k, &g, n, &times, &cfg.solver)?;
            let sup = traj.states().iter().zip(&refs).map(|(s, f)| l2_error(s, f)).fold(0.0, f64::max);
            Ok(ErrorRow {
                n,
                sup_l2_error: sup,
                diameter_at_t: consensus_diameter(traj.last()),
                exceptional_measure: exceptional_measure(traj.last(), cfg.eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorTable { reference: reference.describe(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityStatus {
    Ok,
    /// The reference diameter never settles below `eps/3` within the horizon.
    ConsensusNotReachedInHorizon,
    /// `T(eps) + D` lies beyond the horizon.
    WindowBeyondHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProximityRow {
    pub n: usize,
    pub max_exceptional_measure: f64,
    pub below_c_squared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProximityReport {
    pub status: ProximityStatus,
    pub reference: String,
    /// First grid time from which the reference diameter stays `≤ eps/3`.
    pub consensus_time: Option<f64>,
    pub eps: f64,
    pub c: f64,
    pub window: f64,
    pub rows: Vec<ProximityRow>,
}

/// For each ladder size, the largest exceptional measure at `eps` over the
/// grid times in `[T(eps), T(eps) + D]`.
pub fn consensus_proximity(cfg: &ExperimentConfig) -> Result<ProximityReport> {
    cfg.validate()?;
    let k = cfg.kernel()?;
    let g = cfg.initial_condition()?;
    let times = cfg.times();
    let top = cfg.ladder_max()?;
    let reference = Reference::build(&k, &g, cfg.reference_n.unwrap_or(top), &times, &cfg.solver)?;
    let diam: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| reference.at(i, t).map(|f| affine_diameter(&f)))
        .collect::<Result<_>>()?;
    let settled = diam.iter().rposition(|&d| d > cfg.eps / 3.0).map_or(Some(0), |i| (i + 1 < times.len()).then_some(i + 1));
    let mut report = ProximityReport {
        status: ProximityStatus::Ok,
        reference: reference.describe(),
        consensus_time: settled.map(|i| times[i]),
        eps: cfg.eps,
        c: cfg.c,
        window: cfg.window,
        rows: Vec::new(),
    };
    let Some(start) = settled else {
        report.status = ProximityStatus::ConsensusNotReachedInHorizon;
        return Ok(report);
    };
    let t0 = times[start];
    if t0 + cfg.window > cfg.horizon + 1e-12 {
        report.status = ProximityStatus::WindowBeyondHorizon;
        return Ok(report);
    }
    let in_window: Vec<usize> = (start..times.len()).filter(|&i| times[i] <= t0 + cfg.window + 1e-12).collect();
    report.rows = cfg
        .ladder
        .par_iter()
        .map(|&n| {
            let traj = solve_continuum(&k, &g, n, &times, &cfg.solver)?;
            let m = in_window
                .iter()
                .map(|&i| exceptional_measure(&traj.states()[i], cfg.eps))
                .fold(0.0, f64::max);
            Ok(ProximityRow { n, max_exceptional_measure: m, below_c_squared: m < cfg.c * cfg.c })
        })
        .collect::<Result<_>>()?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandCondVariant {
    /// `∬ (u(y) − u(x)) W(1 − W)`, identically zero by antisymmetry.
    Literal,
    /// `∬ |u(y) − u(x)| W(1 − W)`.
    Absolute,
}

/// Minimum over grid times of the (literal or absolute) mixing integral of
/// a trajectory against `k`, summed exactly over the common refinement of
/// the state grid and `k`'s cells.
pub fn randcond_evaluate(k: &Kernel, traj: &Trajectory, variant: RandCondVariant) -> f64 {
    let step = k.to_step();
    let grid = Partition::uniform(traj.n());
    let p = grid.refine(step.partition());
    let pieces: Vec<(f64, usize, usize)> = (0..p.len())
        .map(|i| {
            let mid = 0.5 * (p.start(i) + p.end(i));
            (p.measure(i), grid.cell_of(mid), step.partition().cell_of(mid))
        })
        .collect();
    let h: Vec<f64> = pieces
        .iter()
        .flat_map(|&(_, _, a)| pieces.iter().map(move |&(_, _, b)| (a, b)))
        .map(|(a, b)| {
            let w = step.value(a, b);
            w * (1.0 - w)
        })
        .collect();
    let m = pieces.len();
    traj.states()
        .iter()
        .map(|s| {
            let u = s.values();
            let mut total = 0.0;
            for (x, &(lx, cx, _)) in pieces.iter().enumerate() {
                let mut row = 0.0;
                for (y, &(ly, cy, _)) in pieces.iter().enumerate() {
                    let diff = u[cy] - u[cx];
                    let diff = match variant {
                        RandCondVariant::Literal => diff,
                        RandCondVariant::Absolute => diff.abs(),
                    };
                    row += ly * diff * h[x * m + y];
                }
                total += lx * row;
            }
            total
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McTrial {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    #[serde(rename = "diameter_at_T")]
    pub diameter_at_t: f64,
    pub exceptional_measure: f64,
    pub success: bool,
}

/// `λ{|u − uₙ| > eps}` at `T` against the Chebyshev bound `(‖u − uₙ‖₂ / eps)²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebyshevRow {
    pub n: usize,
    pub trial: usize,
    pub l2_error: f64,
    pub exceedance: f64,
    pub chebyshev_bound: f64,
    pub randcond_literal: f64,
    pub randcond_absolute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n: usize,
    pub trials: usize,
    pub success_fraction: f64,
    pub mean_exceedance: f64,
    pub mean_chebyshev_bound: f64,
    /// Trials with exceedance above bound + 3 binomial standard errors.
    pub chebyshev_violations: usize,
    pub max_abs_randcond_literal: f64,
    pub min_randcond_absolute: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub reference: String,
    pub trials: Vec<McTrial>,
    pub chebyshev: Vec<ChebyshevRow>,
    pub summary: Vec<McSummary>,
}

impl McReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.trials)
    }

    pub fn write_chebyshev_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.chebyshev)
    }
}

/// Fewest trials for which a success fraction is reported.
pub const MIN_MC_TRIALS: usize = 30;

/// For each ladder size, `trials` W-random graphs (seed `seed + trial`),
/// each solved from the cell averages of `g` up to `T = horizon`. A trial
/// succeeds when the exceptional measure at `eps` is below `c²`.
pub fn random_consensus_mc(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let k = cfg.kernel()?;
    if !k.is_graphon() {
        return Err(Error::validation("W-random Monte Carlo needs a kernel with range in [0, 1]"));
    }
    if cfg.trials < MIN_MC_TRIALS {
        return Err(Error::validation(format!("at least {MIN_MC_TRIALS} trials are needed, got {}", cfg.trials)));
    }
    let g = cfg.initial_condition()?;
    let times = cfg.times();
    let top = cfg.ladder_max()?;
    let reference = Reference::build(&k, &g, cfg.reference_n.unwrap_or(4 * top), &times, &cfg.solver)?;
    let last = times.len() - 1;
    let u_t = reference.at(last, times[last])?;
    let jobs: Vec<(usize, usize)> =
        cfg.ladder.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let results = jobs
        .par_iter()
        .map(|&(n, trial)| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let graph = sample_w_random_with_limit(&k, n, seed, cfg.solver.n_max)?;
            let traj = solve_finite(&graph, &average_initial(&g, n)?, &times, &cfg.solver)?;
            let s = traj.last();
            let em = exceptional_measure(s, cfg.eps);
            let l2 = l2_error(s, &u_t);
            Ok((
                McTrial {
                    n,
                    trial,
                    seed,
                    diameter_at_t: consensus_diameter(s),
                    exceptional_measure: em,
                    success: em < cfg.c * cfg.c,
                },
                ChebyshevRow {
                    n,
                    trial,
                    l2_error: l2,
                    exceedance: exceedance_measure(s, &u_t, cfg.eps),
                    chebyshev_bound: (l2 / cfg.eps).powi(2),
                    randcond_literal: randcond_evaluate(&k, &traj, RandCondVariant::Literal),
                    randcond_absolute: randcond_evaluate(&k, &traj, RandCondVariant::Absolute),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (trials, chebyshev): (Vec<McTrial>, Vec<ChebyshevRow>) = results.into_iter().unzip();
    let summary = cfg
        .ladder
        .iter()
        .map(|&n| {
            let rows: Vec<(&McTrial, &ChebyshevRow)> =
                trials.iter().zip(&chebyshev).filter(|(t, _)| t.n == n).collect();
            let count = rows.len() as f64;
            let mean = |f: &dyn Fn(&ChebyshevRow) -> f64| rows.iter().map(|(_, c)| f(c)).sum::<f64>() / count;
            McSummary {
                n,
                trials: rows.len(),
                success_fraction: rows.iter().filter(|(t, _)| t.success).count() as f64 / count,
                mean_exceedance: mean(&|c| c.exceedance),
                mean_chebyshev_bound: mean(&|c| c.chebyshev_bound),
                chebyshev_violations: rows
                    .iter()
                    .filter(|(_, c)| {
                        let p = c.chebyshev_bound.min(1.0);
                        c.exceedance > c.chebyshev_bound + 3.0 * (p * (1.0 - p) / n as f64).sqrt()
                    })
                    .count(),
                max_abs_randcond_literal: rows.iter().map(|(_, c)| c.randcond_literal.abs()).fold(0.0, f64::max),
                min_randcond_absolute: rows.iter().map(|(_, c)| c.randcond_absolute).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(McReport { reference: reference.describe(), trials, chebyshev, summary })
}

/// The single run behind the `simulate` command.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n = cfg.n.ok_or_else(|| Error::validation("simulate needs n"))?;
    solve_continuum(&cfg.kernel()?, &cfg.initial_condition()?, n, &cfg.times(), &cfg.solver)
}
