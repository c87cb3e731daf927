//! Structural analysis of step kernels: connectivity, decomposition into
//! connected components, maximal twin-sets, and what they imply for the
//! limit of the voter dynamics.
//!
//! Every built-in kernel is refined to its exact step form first. On a step
//! kernel any separating measurable set can be replaced by a union of cells,
//! so connectivity reduces to connectivity of the cell support graph (cells
//! `a ≠ b` adjacent when the block value is nonzero). A cell with a zero
//! diagonal block and no neighbours is "dust": every point of it is its own
//! component and the dynamics leave it frozen.

use serde::Serialize;

use crate::dynamics::{average_initial, solve_finite, InitialCondition, SolverOptions, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::graph::discretize_step;
use crate::kernel::{direct_sum, Kernel, Partition, StepKernel};

pub const DEFAULT_PROP_TOL: f64 = 1e-10;

/// Component means must agree to this for the necessary condition to hold.
pub const NECESSARY_CONDITION_TOL: f64 = 1e-10;

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so groups are ordered by first cell
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            by_root[r].push(x);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Cells of the original step form, ascending.
    pub cells: Vec<usize>,
    /// `J_i` after relabelling the cells contiguously.
    pub interval: (f64, f64),
    /// `a_i = λ(J_i)`.
    pub weight: f64,
    /// `W_i`, the induced step kernel rescaled to `[0,1]²`.
    pub kernel: StepKernel,
    /// A zero cell with no support: a continuum of singleton components.
    pub dust: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDecomposition {
    /// Step form of the analysed kernel.
    pub step: StepKernel,
    /// Ordered by smallest original cell index.
    pub components: Vec<Component>,
    /// Original cell indices in relabelled order.
    pub permutation: Vec<usize>,
    /// Component index of every original cell.
    pub cell_component: Vec<usize>,
}

impl ComponentDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `⊕ a_i W_i`; equals the analysed kernel with cells permuted by `permutation`.
    pub fn reassemble(&self) -> Kernel {
        direct_sum(
            self.components
                .iter()
                .map(|c| (c.weight, Kernel::Step(c.kernel.clone())))
                .collect(),
        )
        .expect("component weights partition [0,1]")
    }

    /// The analysed step kernel with its cells reordered by `permutation`.
    pub fn permuted_step(&self) -> StepKernel {
        let p = self.step.partition();
        let mut b = vec![0.0];
        let mut acc = 0.0;
        for &a in &self.permutation {
            acc += p.measure(a);
            b.push(acc);
        }
        let m = b.len() - 1;
        b[m] = 1.0;
        let values = self
            .permutation
            .iter()
            .flat_map(|&a| self.permutation.iter().map(move |&c| (a, c)))
            .map(|(a, c)| self.step.value(a, c))
            .collect();
        StepKernel::new(Partition::new(b).expect("positive cell measures"), values)
            .expect("permutation keeps symmetry")
    }
}

fn support_groups(step: &StepKernel, zero_tol: f64) -> Vec<Vec<usize>> {
    let m = step.cells();
    let mut dsu = Dsu::new(m);
    for a in 0..m {
        for b in (a + 1)..m {
            if step.value(a, b).abs() > zero_tol {
                dsu.union(a, b);
            }
        }
    }
    dsu.groups()
}

/// Connected components of the support graph of `k`'s step form.
pub fn connected_components(k: &Kernel) -> ComponentDecomposition {
    connected_components_with_tol(k, 0.0)
}

pub fn connected_components_with_tol(k: &Kernel, zero_tol: f64) -> ComponentDecomposition {
    let step = k.to_step();
    let p = step.partition().clone();
    let groups = support_groups(&step, zero_tol);
    let mut components = Vec::with_capacity(groups.len());
    let mut cell_component = vec![0; step.cells()];
    let mut permutation = Vec::with_capacity(step.cells());
    let mut offset = 0.0;
    for (ci, cells) in groups.into_iter().enumerate() {
        let weight: f64 = cells.iter().map(|&a| p.measure(a)).sum();
        let mut b = vec![0.0];
        let mut acc = 0.0;
        for &a in &cells[..cells.len() - 1] {
            acc += p.measure(a);
            b.push(acc / weight);
        }
        b.push(1.0);
        let values = cells
            .iter()
            .flat_map(|&a| cells.iter().map(move |&c| (a, c)))
            .map(|(a, c)| step.value(a, c))
            .collect();
        let kernel = StepKernel::new(Partition::new(b).expect("positive cell measures"), values)
            .expect("restriction keeps symmetry");
        let dust = cells.len() == 1 && step.value(cells[0], cells[0]).abs() <= zero_tol;
        for &a in &cells {
            cell_component[a] = ci;
        }
        permutation.extend_from_slice(&cells);
        components.push(Component { cells, interval: (offset, (offset + weight).min(1.0)), weight, kernel, dust });
        offset += weight;
    }
    if let Some(last) = components.last_mut() {
        last.interval.1 = 1.0;
    }
    ComponentDecomposition { step, components, permutation, cell_component }
}

/// Janson connectivity: a single component that is not dust.
pub fn is_connected(k: &Kernel) -> bool {
    let d = connected_components(k);
    d.len() == 1 && !d.components[0].dust
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwinSet {
    /// Cells of the step form, ascending; the first is the representative.
    pub cells: Vec<usize>,
    /// `a(x, x_rep)` for each cell: row `x` equals multiplier × row of the representative.
    pub multipliers: Vec<f64>,
    /// `d_W ≡ 0` on the set (otherwise `d_W ≠ 0` on every cell).
    pub zero_degree: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinSetPartition {
    pub step: StepKernel,
    pub sets: Vec<TwinSet>,
}

impl TwinSetPartition {
    /// Whether the sets cover every cell exactly once.
    pub fn covers_all(&self) -> bool {
        let mut seen = vec![false; self.step.cells()];
        for s in &self.sets {
            for &c in &s.cells {
                if seen[c] {
                    return false;
                }
                seen[c] = true;
            }
        }
        seen.into_iter().all(|b| b)
    }

    /// A finite family of maximal twin-sets covering `[0,1]`.
    pub fn is_twin_kernel(&self) -> bool {
        self.covers_all()
    }

    /// Index of the set containing each cell.
    pub fn set_of_cell(&self) -> Vec<usize> {
        let mut out = vec![0; self.step.cells()];
        for (i, s) in self.sets.iter().enumerate() {
            for &c in &s.cells {
                out[c] = i;
            }
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rows_are_twins(vi: &[f64], vj: &[f64], tol: f64) -> bool {
    let (ni, nj) = (norm(vi), norm(vj));
    let (zi, zj) = (ni <= tol, nj <= tol);
    if zi || zj {
        return zi && zj;
    }
    let k = (0..vj.len())
        .max_by(|&a, &b| vj[a].abs().total_cmp(&vj[b].abs()))
        .expect("non-empty row");
    let sigma = (vi[k] * vj[k]).signum();
    if sigma == 0.0 {
        return false;
    }
    vi.iter().zip(vj).all(|(a, b)| (a * nj - sigma * b * ni).abs() <= tol)
}

/// Maximal twin-sets of `k`'s step form: cells whose block rows are
/// proportional (zero rows form their own set).
pub fn find_maximal_twin_sets(k: &Kernel, prop_tol: f64) -> TwinSetPartition {
    let step = k.to_step();
    let m = step.cells();
    let mut dsu = Dsu::new(m);
    for a in 0..m {
        for b in (a + 1)..m {
            if dsu.find(a) != dsu.find(b) && rows_are_twins(step.row(a), step.row(b), prop_tol) {
                dsu.union(a, b);
            }
        }
    }
    let sets = dsu
        .groups()
        .into_iter()
        .map(|cells| {
            let rep = step.row(cells[0]);
            let rr: f64 = rep.iter().map(|x| x * x).sum();
            let multipliers = cells
                .iter()
                .map(|&c| {
                    if rr == 0.0 {
                        1.0
                    } else {
                        step.row(c).iter().zip(rep).map(|(a, b)| a * b).sum::<f64>() / rr
                    }
                })
                .collect();
            let zero_degree = step.cell_degree(cells[0]).abs() <= prop_tol;
            TwinSet { cells, multipliers, zero_degree }
        })
        .collect();
    TwinSetPartition { step, sets }
}

/// Per-component means of `g` and whether they agree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessaryConditionReport {
    pub satisfied: bool,
    /// `(1/λ(J_i)) ∫_{J_i} g` for each component, in component order.
    pub values: Vec<f64>,
}

fn component_mean(d: &ComponentDecomposition, c: &Component, g: &InitialCondition) -> f64 {
    let p = d.step.partition();
    c.cells.iter().map(|&a| g.integral(p.start(a), p.end(a))).sum::<f64>() / c.weight
}

/// Consensus from `g` requires equal component means. Dust cells also
/// require `g` to be essentially constant on them.
pub fn necessary_condition(k: &Kernel, g: &InitialCondition) -> NecessaryConditionReport {
    let d = connected_components(k);
    let values: Vec<f64> = d.components.iter().map(|c| component_mean(&d, c, g)).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let p = d.step.partition();
    let dust_flat = d.components.iter().filter(|c| c.dust).all(|c| {
        let a = c.cells[0];
        let (l, h) = g.range_on(p.start(a), p.end(a));
        h - l <= NECESSARY_CONDITION_TOL
    });
    NecessaryConditionReport { satisfied: hi - lo <= NECESSARY_CONDITION_TOL && dust_flat, values }
}

/// Predicted `u*` for a nonnegative step kernel: constant on each connected
/// component (its mean of `g`), and `g` itself on dust cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPrediction {
    pub decomposition: ComponentDecomposition,
    pub component_values: Vec<f64>,
    g: InitialCondition,
}

impl LimitPrediction {
    /// Cell averages of the predicted limit on the uniform `n`-partition.
    pub fn state(&self, n: usize) -> Result<StateVector> {
        if n == 0 {
            return Err(Error::validation("n must be at least 1"));
        }
        let d = &self.decomposition;
        let grid = Partition::uniform(n);
        let overlaps = grid.overlaps(d.step.partition());
        let values = overlaps
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let width = grid.measure(i);
                row.iter()
                    .map(|&(a, len)| {
                        let comp = &d.components[d.cell_component[a]];
                        if comp.dust {
                            let lo = grid.start(i).max(d.step.partition().start(a));
                            self.g.integral(lo, lo + len) / width
                        } else {
                            self.component_values[d.cell_component[a]] * len / width
                        }
                    })
                    .sum()
            })
            .collect();
        StateVector::new(values)
    }
}

pub fn predict_limit(k: &Kernel, g: &InitialCondition) -> Result<LimitPrediction> {
    if !k.is_graphon() {
        return Err(Error::Unsupported(
            "limit prediction needs a nonnegative kernel; negative values can block consensus".into(),
        ));
    }
    let decomposition = connected_components(k);
    let component_values = decomposition
        .components
        .iter()
        .map(|c| component_mean(&decomposition, c, g))
        .collect();
    Ok(LimitPrediction { decomposition, component_values, g: g.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub interval: (f64, f64),
    pub weight: f64,
    pub cells: Vec<usize>,
    pub dust: bool,
}

/// Everything the structural analysis says about a kernel (and optionally an
/// initial condition), in a serialisable form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub connected: bool,
    pub twin_kernel: bool,
    pub graphon: bool,
    pub cell_boundaries: Vec<f64>,
    pub components: Vec<ComponentSummary>,
    pub permutation: Vec<usize>,
    pub twin_sets: Vec<TwinSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub necessary_condition: Option<NecessaryConditionReport>,
    /// Predicted limit value per component; dust components carry `null`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_limit: Option<Vec<Option<f64>>>,
}

pub fn structure_report(k: &Kernel, g: Option<&InitialCondition>, prop_tol: f64) -> StructureReport {
    let d = connected_components(k);
    let twins = find_maximal_twin_sets(k, prop_tol);
    let connected = d.len() == 1 && !d.components[0].dust;
    let predicted_limit = g.and_then(|g| predict_limit(k, g).ok()).map(|p| {
        p.component_values
            .iter()
            .zip(&d.components)
            .map(|(&v, c)| (!c.dust).then_some(v))
            .collect()
    });
    StructureReport {
        connected,
        twin_kernel: twins.is_twin_kernel(),
        graphon: k.is_graphon(),
        cell_boundaries: d.step.partition().boundaries().to_vec(),
        components: d
            .components
            .iter()
            .map(|c| ComponentSummary { interval: c.interval, weight: c.weight, cells: c.cells.clone(), dust: c.dust })
            .collect(),
        permutation: d.permutation.clone(),
        twin_sets: twins.sets,
        necessary_condition: g.map(|g| necessary_condition(k, g)),
        predicted_limit,
    }
}

/// Solves each connected component separately on the kernel `a_i W_i` with
/// the pulled-back initial condition, then reassembles in the original cell
/// order. Requires every cell boundary of `k`'s step form to lie on the
/// uniform `n`-grid so that component `i` receives `a_i n` grid cells.
pub fn decompose_solution(
    k: &Kernel,
    g: &InitialCondition,
    n: usize,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let d = connected_components(k);
    let p = d.step.partition();
    if !p.aligned_to(n) {
        return Err(Error::validation(format!(
            "kernel cell boundaries do not lie on the {n}-grid; components cannot receive whole cells"
        )));
    }
    let u0 = average_initial(g, n)?;
    let nf = n as f64;
    let grid_range = |a: usize| -> std::ops::Range<usize> {
        (p.start(a) * nf).round() as usize..(p.end(a) * nf).round() as usize
    };
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]; times.len()];
    let mut meta = None;
    for comp in &d.components {
        let slots: Vec<usize> = comp.cells.iter().flat_map(|&a| grid_range(a)).collect();
        let local_n = slots.len();
        let kernel = comp.kernel.scaled(comp.weight)?;
        let graph = discretize_step(&kernel, local_n);
        let local_u0 = StateVector::new(slots.iter().map(|&s| u0.values()[s]).collect())?;
        let traj = solve_finite(&graph, &local_u0, times, opts)?;
        for (row, state) in out.iter_mut().zip(traj.states()) {
            for (&s, &v) in slots.iter().zip(state.values()) {
                row[s] = v;
            }
        }
        meta.get_or_insert(traj.meta);
    }
    let mut meta = meta.expect("at least one component");
    meta.approximating_n = Some(n);
    meta.kernel = Some(k.to_spec());
    Trajectory::new(
        times.to_vec(),
        out.into_iter().map(StateVector::new).collect::<Result<_>>()?,
        meta,
    )
}
