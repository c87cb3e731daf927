use super::{StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::graph::discretize_kernel;
use crate::kernel::Kernel;

/// Per-cell oscillation allowed over the tail for a limit to count as converged.
pub const DEFAULT_LIMIT_TOL: f64 = 1e-8;

/// `max u − min u`, the essential diameter of a step-function state.
pub fn consensus_diameter(s: &StateVector) -> f64 {
    let (lo, hi) = s
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Smallest total measure of cells whose removal leaves diameter `≤ eps`.
///
/// Sorting the values and sliding a window of width `eps` finds the largest
/// set of cells that fits; everything else is exceptional.
pub fn exceptional_measure(s: &StateVector, eps: f64) -> f64 {
    let mut v = s.values().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..n {
        while v[hi] - v[lo] > eps {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    (n - best) as f64 / n as f64
}

/// `∫ u`, the arithmetic mean of the cell values.
pub fn mean_value(s: &StateVector) -> f64 {
    s.values().iter().sum::<f64>() / s.n() as f64
}

/// Largest violation of the integrating-factor identity
///
/// `u(x,t) = e^{−d(x)t} g(x) + ∫₀ᵗ e^{d(x)(s−t)} ∫ W(x,y) u(y,s) dy ds`
///
/// over cells and grid times. `W` is the cell-averaged kernel the trajectory
/// was solved on (`discretize_kernel(k, n)`), so the `y`-integral is an exact
/// sum. The `s`-integral uses product trapezoid weights on the trajectory's
/// own grid: the exponential factor is integrated exactly and the drive
/// `∫ W u dy` is interpolated linearly between grid times, so stationary
/// solutions give a zero residual and the error is `O(Δt²)` otherwise.
pub fn volterra_residual(k: &Kernel, traj: &Trajectory) -> Result<f64> {
    let n = traj.n();
    let graph = discretize_kernel(k, n)?;
    let inv_n = 1.0 / n as f64;
    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| graph.weight(i, j)).sum::<f64>() * inv_n)
        .collect();
    let drive = |s: &StateVector| -> Vec<f64> {
        (0..n)
            .map(|i| {
                s.values()
                    .iter()
                    .enumerate()
                    .map(|(j, u)| graph.weight(i, j) * u)
                    .sum::<f64>()
                    * inv_n
            })
            .collect()
    };
    let g = traj.initial().values();
    let times = traj.times();
    let mut integral = vec![0.0; n];
    let mut prev_drive = drive(traj.initial());
    let mut worst: f64 = 0.0;
    for kk in 1..times.len() {
        let dt = times[kk] - times[kk - 1];
        let t = times[kk];
        let cur_drive = drive(&traj.states()[kk]);
        let u = traj.states()[kk].values();
        for i in 0..n {
            let decay = (-degree[i] * dt).exp();
            let (w0, w1) = product_trapezoid_weights(degree[i] * dt);
            integral[i] = decay * integral[i] + dt * (w0 * prev_drive[i] + w1 * cur_drive[i]);
            let rhs = (-degree[i] * t).exp() * g[i] + integral[i];
            worst = worst.max((u[i] - rhs).abs());
        }
        prev_drive = cur_drive;
    }
    Ok(worst)
}

/// Weights `(φ₁ − φ₂, φ₂)` with `φ₁(z) = (1 − e^{−z})/z` and
/// `φ₂(z) = (e^{−z} − 1 + z)/z²`, so that
/// `∫₀^Δ e^{d(τ−Δ)} w(τ) dτ = Δ (w₀ (φ₁ − φ₂) + w₁ φ₂)` for linear `w`, `z = dΔ`.
fn product_trapezoid_weights(z: f64) -> (f64, f64) {
    let (phi1, phi2) = if z.abs() < 1e-2 {
        let z2 = z * z;
        (
            1.0 - z / 2.0 + z2 / 6.0 - z2 * z / 24.0 + z2 * z2 / 120.0,
            0.5 - z / 6.0 + z2 / 24.0 - z2 * z / 120.0 + z2 * z2 / 720.0,
        )
    } else {
        let em = (-z).exp_m1();
        (-em / z, (em + z) / (z * z))
    };
    (phi1 - phi2, phi2)
}

/// Earliest grid time from which the diameter stays `≤ eps` through the end
/// of the trajectory.
pub fn detect_consensus(traj: &Trajectory, eps: f64) -> Option<f64> {
    let mut first = None;
    for (t, s) in traj.times().iter().zip(traj.states()).rev() {
        if consensus_diameter(s) > eps {
            break;
        }
        first = Some(*t);
    }
    first
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    /// Final state, the estimate of `u*`.
    pub state: StateVector,
    pub converged: bool,
    /// Largest per-cell range over the tail window.
    pub oscillation: f64,
}

pub fn limit_state(traj: &Trajectory, tail_fraction: f64) -> Result<LimitEstimate> {
    limit_state_with_tol(traj, tail_fraction, DEFAULT_LIMIT_TOL)
}

/// Final state plus a convergence flag: every cell varies by at most
/// `limit_tol` over the trailing `tail_fraction` of grid times.
pub fn limit_state_with_tol(traj: &Trajectory, tail_fraction: f64, limit_tol: f64) -> Result<LimitEstimate> {
    if traj.len() < 10 {
        return Err(Error::validation("limit estimation needs at least 10 grid times"));
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::validation("tail fraction must lie in (0, 1)"));
    }
    let k = traj.len();
    let tail = ((tail_fraction * k as f64).ceil() as usize).clamp(2, k);
    let window = &traj.states()[k - tail..];
    let n = traj.n();
    let mut oscillation: f64 = 0.0;
    for i in 0..n {
        let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let v = s.values()[i];
            (lo.min(v), hi.max(v))
        });
        oscillation = oscillation.max(hi - lo);
    }
    Ok(LimitEstimate {
        state: traj.last().clone(),
        converged: oscillation <= limit_tol,
        oscillation,
    })
}
