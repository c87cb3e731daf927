use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{average_initial, validate_times, InitialCondition, StateVector, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::graph::{check_size, discretize_kernel_with_limit, laplacian, LaplacianOperator, WeightedGraph, DEFAULT_N_MAX};
use crate::kernel::Kernel;

pub const DEFAULT_RK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// `e^{Dt} u0` through the symmetric eigendecomposition of `D`.
    Expm,
    /// Fixed-step classical Runge–Kutta with step halving.
    Rk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: Method,
    /// Successive halvings must agree to this (relative to `max(1, ‖u‖∞)`) at the final time.
    pub rk_tol: f64,
    /// Initial step satisfies `h · ‖D‖₁ ≤ rk_cfl`.
    pub rk_cfl: f64,
    pub rk_max_halvings: u32,
    pub n_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::Expm,
            rk_tol: DEFAULT_RK_TOL,
            rk_cfl: 0.1,
            rk_max_halvings: 12,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl SolverOptions {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }
}

/// Solves `u' = D u`, `u(0) = u0` on the graph `g` at the requested times.
pub fn solve_finite(
    g: &WeightedGraph,
    u0: &StateVector,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_size(g.n(), opts.n_max)?;
    if u0.n() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: u0.n() });
    }
    solve_with_operator(&laplacian(g), u0, times, opts)
}

pub fn solve_with_operator(
    d: &LaplacianOperator,
    u0: &StateVector,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    validate_times(times)?;
    if u0.n() != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), got: u0.n() });
    }
    let mut meta = TrajectoryMeta {
        solver: opts.method,
        rk_tol: None,
        rk_step: None,
        rk_halvings: None,
        approximating_n: None,
        kernel: None,
    };
    let states = match opts.method {
        Method::Expm => expm_states(d, u0, times),
        Method::Rk => {
            let (states, h, halvings) = rk_states(d, u0, times, opts)?;
            meta.rk_tol = Some(opts.rk_tol);
            meta.rk_step = Some(h);
            meta.rk_halvings = Some(halvings);
            states
        }
    };
    Trajectory::new(times.to_vec(), states, meta)
}

fn expm_states(d: &LaplacianOperator, u0: &StateVector, times: &[f64]) -> Vec<StateVector> {
    let eig = SymmetricEigen::new(d.matrix().clone());
    let q = &eig.eigenvectors;
    let coeffs = q.tr_mul(&DVector::from_column_slice(u0.values()));
    times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return u0.clone();
            }
            let scaled = DVector::from_iterator(
                coeffs.len(),
                coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c * (l * t).exp()),
            );
            StateVector::from_raw((q * scaled).as_slice().to_vec())
        })
        .collect()
}

fn rk_run(m: &DMatrix<f64>, u0: &[f64], times: &[f64], h: f64) -> Vec<StateVector> {
    let mut u = DVector::from_column_slice(u0);
    let mut out = Vec::with_capacity(times.len());
    out.push(StateVector::from_raw(u0.to_vec()));
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = if h.is_finite() { (span / h).ceil().max(1.0) as usize } else { 1 };
        let dt = span / steps as f64;
        for _ in 0..steps {
            let k1 = m * &u;
            let k2 = m * (&u + &k1 * (0.5 * dt));
            let k3 = m * (&u + &k2 * (0.5 * dt));
            let k4 = m * (&u + &k3 * dt);
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        out.push(StateVector::from_raw(u.as_slice().to_vec()));
    }
    out
}

fn rk_states(
    d: &LaplacianOperator,
    u0: &StateVector,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<StateVector>, f64, u32)> {
    let norm = d.norm_1();
    let h0 = if norm > 0.0 { opts.rk_cfl / norm } else { f64::INFINITY };
    let m = d.matrix();
    let mut prev = rk_run(m, u0.values(), times, h0);
    for k in 1..=opts.rk_max_halvings {
        let h = h0 / f64::powi(2.0, k as i32);
        let cur = rk_run(m, u0.values(), times, h);
        let (a, b) = (prev.last().unwrap(), cur.last().unwrap());
        let diff = a
            .values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        if diff <= opts.rk_tol * b.sup_norm().max(1.0) {
            return Ok((cur, h, k));
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "rk did not settle to {} within {} halvings",
        opts.rk_tol, opts.rk_max_halvings
    )))
}

/// The `n`-th approximating problem: the finite model on
/// `discretize_kernel(k, n)` started from the cell averages of `g`.
pub fn solve_continuum(
    k: &Kernel,
    g: &InitialCondition,
    n: usize,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let graph = discretize_kernel_with_limit(k, n, opts.n_max)?;
    let u0 = average_initial(g, n)?;
    let mut traj = solve_finite(&graph, &u0, times, opts)?;
    traj.meta.approximating_n = Some(n);
    traj.meta.kernel = Some(k.to_spec());
    Ok(traj)
}

/// Exact continuum solution for the bipartite kernel with `r ∈ (0, 1/2)` and
/// `g` in the zero-mean family: `g(x)e^{−t}` for `x ≥ r`, `g(x)e^{−(1−2r)t}` below.
pub fn closed_form_bipartite(r: f64, g: &InitialCondition, x: f64, t: f64) -> Result<f64> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::validation(format!("bipartite r={r} must lie in (0, 1/2)")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(x));
    }
    if !g.in_bipartite_family(r) {
        return Err(Error::validation("initial condition must integrate to 0 on [0,r) and [r,1]"));
    }
    let rate = if x < r { 1.0 - 2.0 * r } else { 1.0 };
    Ok(g.eval(x) * (-rate * t).exp())
}

/// `−λ₂` where `λ₁ ≥ λ₂ ≥ …` are the eigenvalues of `D`; `None` when the
/// operator has no decaying mode separated from zero.
pub fn spectral_gap(d: &LaplacianOperator) -> Option<f64> {
    if d.n() < 2 {
        return None;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(d.matrix().clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let gap = -ev[1];
    (gap > 1e-12).then_some(gap)
}
