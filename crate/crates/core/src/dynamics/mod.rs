//! The linear voter model `u' = D u` on a finite graph and its continuum
//! counterpart on a kernel, solved on discretisations.

mod diagnostics;
mod solve;

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Partition};

pub use diagnostics::{
    consensus_diameter, detect_consensus, exceptional_measure, limit_state, limit_state_with_tol,
    mean_value, volterra_residual, LimitEstimate, DEFAULT_LIMIT_TOL,
};
pub use solve::{
    closed_form_bipartite, solve_continuum, solve_finite, solve_with_operator, spectral_gap,
    Method, SolverOptions, DEFAULT_RK_TOL,
};

/// Cell values of a step function on the uniform `n`-partition of `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
}

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("state vector must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("state vector entries must be finite"));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn partition(&self) -> Partition {
        Partition::uniform(self.n())
    }
}

/// Piecewise-affine function on `[0,1]`: on piece `i`,
/// `g(x) = values[i] + slopes[i] · (x − b_i)`.
///
/// Step functions are the all-zero-slope case. Adjacent pieces that describe
/// the same affine function are merged on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    partition: Partition,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl InitialCondition {
    pub fn step(boundaries: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        Self::affine(boundaries, values, vec![0.0; m])
    }

    pub fn affine(boundaries: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        let partition = Partition::new(boundaries)?;
        let m = partition.len();
        if values.len() != m || slopes.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: values.len().min(slopes.len()) });
        }
        if values.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::validation("initial condition must be finite"));
        }
        Ok(Self { partition, values, slopes }.canonicalized())
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::step(vec![0.0, 1.0], vec![c])
    }

    /// Step function with one value per cell of the uniform partition.
    pub fn from_cells(values: Vec<f64>) -> Result<Self> {
        let p = Partition::uniform(values.len().max(1));
        Self::step(p.boundaries().to_vec(), values)
    }

    fn canonicalized(self) -> Self {
        let b = self.partition.boundaries();
        let mut nb = vec![b[0]];
        let mut nv: Vec<f64> = Vec::new();
        let mut ns: Vec<f64> = Vec::new();
        for i in 0..self.values.len() {
            if let (Some(&pv), Some(&ps)) = (nv.last(), ns.last()) {
                let start = nb[nb.len() - 2];
                let continued = pv + ps * (b[i] - start);
                if ps == self.slopes[i] && continued == self.values[i] {
                    *nb.last_mut().unwrap() = b[i + 1];
                    continue;
                }
            }
            nv.push(self.values[i]);
            ns.push(self.slopes[i]);
            nb.push(b[i + 1]);
        }
        Self {
            partition: Partition::new(nb).expect("merged boundaries stay increasing"),
            values: nv,
            slopes: ns,
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.partition.cell_of(x);
        self.values[i] + self.slopes[i] * (x - self.partition.start(i))
    }

    /// `‖g‖_∞`, attained at a piece endpoint.
    pub fn sup_norm(&self) -> f64 {
        (0..self.values.len())
            .map(|i| {
                let left = self.values[i];
                let right = left + self.slopes[i] * self.partition.measure(i);
                left.abs().max(right.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Exact `∫_a^b g`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.values.len() {
            let (lo, hi) = (self.partition.start(i).max(a), self.partition.end(i).min(b));
            if hi > lo {
                let mid = 0.5 * (lo + hi) - self.partition.start(i);
                total += (hi - lo) * (self.values[i] + self.slopes[i] * mid);
            }
        }
        total
    }

    /// Essential `(min, max)` of `g` over `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.values.len() {
            let (l, h) = (self.partition.start(i).max(a), self.partition.end(i).min(b));
            if h > l {
                for x in [l, h] {
                    let v = self.values[i] + self.slopes[i] * (x - self.partition.start(i));
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        self.integral(0.0, 1.0)
    }

    /// Whether `∫₀ʳ g = ∫ᵣ¹ g = 0` within `1e-12`.
    pub fn in_bipartite_family(&self, r: f64) -> bool {
        self.integral(0.0, r).abs() <= 1e-12 && self.integral(r, 1.0).abs() <= 1e-12
    }

    pub fn to_spec(&self) -> InitialSpec {
        let flat = self.slopes.iter().all(|&s| s == 0.0);
        InitialSpec {
            boundaries: self.partition.boundaries().to_vec(),
            values: self.values.clone(),
            slopes: if flat { None } else { Some(self.slopes.clone()) },
        }
    }

    pub fn from_spec(spec: &InitialSpec) -> Result<Self> {
        let m = spec.values.len();
        let slopes = spec.slopes.clone().unwrap_or_else(|| vec![0.0; m]);
        Self::affine(spec.boundaries.clone(), spec.values.clone(), slopes)
    }
}

/// JSON form of an initial condition; omitted `slopes` means a step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub boundaries: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<f64>>,
}

/// Cell averages `n ∫_{I_i} g` on the uniform `n`-partition.
pub fn average_initial(g: &InitialCondition, n: usize) -> Result<StateVector> {
    if n == 0 {
        return Err(Error::validation("n must be at least 1"));
    }
    let grid = Partition::uniform(n);
    let values = (0..n)
        .map(|i| g.integral(grid.start(i), grid.end(i)) / grid.measure(i))
        .collect();
    StateVector::new(values)
}

/// `n + 1` equally spaced times from 0 to `horizon`.
pub fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    let mut t: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
    t[steps] = horizon;
    t
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::validation("time grid must start at 0"));
    }
    if times.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("time grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Provenance carried with a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub solver: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rk_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rk_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rk_halvings: Option<u32>,
    /// Set when the trajectory is the `n`-th approximating problem of a kernel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approximating_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<StateVector>, meta: TrajectoryMeta) -> Result<Self> {
        validate_times(&times)?;
        if states.len() != times.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: states.len() });
        }
        let n = states[0].n();
        if let Some(s) = states.iter().find(|s| s.n() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: s.n() });
        }
        Ok(Self { times, states, meta })
    }

    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn initial(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory is non-empty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t,cell_0,…,cell_{n-1}` with one row per grid time.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n()).map(|i| format!("cell_{i}")));
        wtr.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = Vec::with_capacity(s.n() + 1);
            row.push(*t);
            row.extend_from_slice(s.values());
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
