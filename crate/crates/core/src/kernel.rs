//! Kernels on the unit square: symmetric functions `[0,1]² → [-1,1]`.
//!
//! Every built-in family is piecewise constant on some finite partition of
//! `[0,1]`, so integrals, degrees and distances are computed exactly on a
//! step representation rather than by quadrature. The one exception is
//! [`l2_distance_grid`], which is a midpoint rule kept for comparison and
//! always reported as approximate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundaries closer than this are merged when two partitions are refined.
pub const BOUNDARY_MERGE_TOL: f64 = 1e-13;

/// Direct-sum weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-12;

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(x))
    }
}

fn clamp_range(v: f64, what: &str) -> Result<f64> {
    if !v.is_finite() || v.abs() > 1.0 + RANGE_TOL {
        return Err(Error::validation(format!("{what} value {v} outside [-1, 1]")));
    }
    Ok(v.clamp(-1.0, 1.0))
}

/// A finite partition of `[0,1]` into intervals.
///
/// Cell `i` covers `(b_i, b_{i+1}]`, except cell 0 which also contains 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    boundaries: Vec<f64>,
}

impl Partition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::validation("partition needs at least two boundaries"));
        }
        if boundaries[0] != 0.0 || boundaries[boundaries.len() - 1] != 1.0 {
            return Err(Error::validation("partition must start at 0 and end at 1"));
        }
        if boundaries.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(Error::validation("partition boundaries must be strictly increasing"));
        }
        Ok(Self { boundaries })
    }

    /// The uniform partition into `n` cells of width `1/n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform partition needs n >= 1");
        let mut boundaries: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        boundaries[n] = 1.0;
        Self { boundaries }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self, i: usize) -> f64 {
        self.boundaries[i]
    }

    pub fn end(&self, i: usize) -> f64 {
        self.boundaries[i + 1]
    }

    /// Lebesgue measure of cell `i`.
    pub fn measure(&self, i: usize) -> f64 {
        self.boundaries[i + 1] - self.boundaries[i]
    }

    pub fn measures(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the cell containing `x`, using the right-closed convention.
    pub fn cell_of(&self, x: f64) -> usize {
        let k = self.boundaries.partition_point(|&b| b < x);
        k.clamp(1, self.len()) - 1
    }

    /// Affine map of cell `i` onto `[0,1]`.
    pub fn to_unit(&self, i: usize, x: f64) -> f64 {
        ((x - self.start(i)) / self.measure(i)).clamp(0.0, 1.0)
    }

    /// Inverse of [`Partition::to_unit`].
    pub fn from_unit(&self, i: usize, z: f64) -> f64 {
        self.start(i) + z * self.measure(i)
    }

    /// Common refinement of two partitions.
    pub fn refine(&self, other: &Partition) -> Partition {
        let mut merged: Vec<f64> = Vec::with_capacity(self.boundaries.len() + other.boundaries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.boundaries, &other.boundaries);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x <= y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            match merged.last() {
                Some(&last) if next - last <= BOUNDARY_MERGE_TOL => {}
                _ => merged.push(next),
            }
        }
        let last = merged.len() - 1;
        merged[last] = 1.0;
        if merged.len() >= 2 && merged[last - 1] >= 1.0 {
            merged.remove(last - 1);
        }
        Partition { boundaries: merged }
    }

    /// For each cell of `self`, the cells of `other` it overlaps and the overlap lengths.
    pub fn overlaps(&self, other: &Partition) -> Vec<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(self.len());
        let mut j = 0;
        for i in 0..self.len() {
            let (lo, hi) = (self.start(i), self.end(i));
            let mut row = Vec::new();
            while j < other.len() && other.end(j) <= lo {
                j += 1;
            }
            let mut k = j;
            while k < other.len() && other.start(k) < hi {
                let len = hi.min(other.end(k)) - lo.max(other.start(k));
                if len > 0.0 {
                    row.push((k, len));
                }
                k += 1;
            }
            out.push(row);
        }
        out
    }

    /// Whether every boundary lies on the uniform `n`-grid (within merge tolerance).
    pub fn aligned_to(&self, n: usize) -> bool {
        self.boundaries
            .iter()
            .all(|&b| ((b * n as f64).round() - b * n as f64).abs() <= 1e-9)
    }
}

/// A step function on `[0,1]` with values in `[-1,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    partition: Partition,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(partition: Partition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len(), got: values.len() });
        }
        let values = values
            .into_iter()
            .map(|v| clamp_range(v, "step function"))
            .collect::<Result<_>>()?;
        Ok(Self { partition, values })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.partition.cell_of(x)]
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.partition.measure(i))
            .sum()
    }
}

/// A kernel that is constant on each product of partition cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    partition: Partition,
    values: Vec<f64>,
}

impl StepKernel {
    /// Builds a step kernel from a row-major `m × m` value array.
    pub fn new(partition: Partition, values: Vec<f64>) -> Result<Self> {
        let m = partition.len();
        if values.len() != m * m {
            return Err(Error::DimensionMismatch { expected: m * m, got: values.len() });
        }
        let mut values = values
            .into_iter()
            .map(|v| clamp_range(v, "kernel"))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..m {
            for b in (a + 1)..m {
                let (x, y) = (values[a * m + b], values[b * m + a]);
                if (x - y).abs() > SYMMETRY_TOL {
                    return Err(Error::validation(format!(
                        "step kernel not symmetric at ({a}, {b}): {x} vs {y}"
                    )));
                }
                let avg = 0.5 * (x + y);
                values[a * m + b] = avg;
                values[b * m + a] = avg;
            }
        }
        Ok(Self { partition, values })
    }

    pub fn from_rows(partition: Partition, rows: &[Vec<f64>]) -> Result<Self> {
        let m = partition.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(Error::validation(format!("step kernel values must be {m}x{m}")));
        }
        Self::new(partition, rows.concat())
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.partition.len()
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cells() + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let m = self.cells();
        &self.values[a * m..(a + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.cells()).map(|a| self.row(a).to_vec()).collect()
    }

    /// Degree `∫ W(x, y) dy` for `x` in cell `a`.
    pub fn cell_degree(&self, a: usize) -> f64 {
        self.row(a)
            .iter()
            .enumerate()
            .map(|(b, v)| v * self.partition.measure(b))
            .sum()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.value(self.partition.cell_of(x), self.partition.cell_of(y))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Re-expresses the kernel on a finer partition.
    pub fn on_partition(&self, finer: &Partition) -> StepKernel {
        let map: Vec<usize> = (0..finer.len())
            .map(|i| self.partition.cell_of(0.5 * (finer.start(i) + finer.end(i))))
            .collect();
        let m = finer.len();
        let mut values = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                values[a * m + b] = self.value(map[a], map[b]);
            }
        }
        StepKernel { partition: finer.clone(), values }
    }

    /// Step kernel with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<StepKernel> {
        StepKernel::new(
            self.partition.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSumPart {
    pub weight: f64,
    pub kernel: Kernel,
}

/// The closed-form and composite kernel families.
///
/// Construct through the validating constructors ([`Kernel::constant`],
/// [`Kernel::bipartite`], ...) or from JSON via [`make_kernel`].
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Step(StepKernel),
    Constant(f64),
    /// `-1` on `[0,r)²`, `+1` elsewhere.
    Bipartite(f64),
    /// `W(x,y) = f(x) f(y)`.
    Product(StepFunction),
    /// Block-diagonal combination on consecutive intervals of length `weight`.
    DirectSum { parts: Vec<DirectSumPart>, blocks: Partition },
    /// `(1-p) W + p (1-W)` for a graphon `W`.
    WattsStrogatzMix { base: Box<Kernel>, p: f64 },
}

impl Kernel {
    pub fn step(partition: Partition, values: Vec<f64>) -> Result<Self> {
        Ok(Kernel::Step(StepKernel::new(partition, values)?))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Ok(Kernel::Constant(clamp_range(c, "constant kernel")?))
    }

    pub fn bipartite(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 0.5) {
            return Err(Error::validation(format!("bipartite r={r} must lie in (0, 1/2)")));
        }
        Ok(Kernel::Bipartite(r))
    }

    pub fn product(f: StepFunction) -> Self {
        Kernel::Product(f)
    }

    pub fn direct_sum(parts: Vec<(f64, Kernel)>) -> Result<Self> {
        direct_sum(parts)
    }

    pub fn watts_strogatz_mix(base: Kernel, p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::validation(format!("watts-strogatz p={p} must lie in [0, 0.5]")));
        }
        if !base.is_graphon() {
            return Err(Error::validation("watts-strogatz base kernel must take values in [0, 1]"));
        }
        Ok(Kernel::WattsStrogatzMix { base: Box::new(base), p })
    }

    /// `W(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_unit(x)?;
        check_unit(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Step(s) => s.eval(x, y),
            Kernel::Constant(c) => *c,
            Kernel::Bipartite(r) => {
                if x < *r && y < *r {
                    -1.0
                } else {
                    1.0
                }
            }
            Kernel::Product(f) => f.eval(x) * f.eval(y),
            Kernel::DirectSum { parts, blocks } => {
                let (bx, by) = (blocks.cell_of(x), blocks.cell_of(y));
                if bx != by {
                    return 0.0;
                }
                parts[bx]
                    .kernel
                    .eval_unchecked(blocks.to_unit(bx, x), blocks.to_unit(bx, y))
            }
            Kernel::WattsStrogatzMix { base, p } => {
                let w = base.eval_unchecked(x, y);
                (1.0 - p) * w + p * (1.0 - w)
            }
        }
    }

    /// Normalised degree `d_W(x) = ∫₀¹ W(x, y) dy`, in closed form.
    pub fn degree(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.degree_unchecked(x))
    }

    fn degree_unchecked(&self, x: f64) -> f64 {
        match self {
            Kernel::Step(s) => s.cell_degree(s.partition.cell_of(x)),
            Kernel::Constant(c) => *c,
            Kernel::Bipartite(r) => {
                if x < *r {
                    1.0 - 2.0 * r
                } else {
                    1.0
                }
            }
            Kernel::Product(f) => f.eval(x) * f.integral(),
            Kernel::DirectSum { parts, blocks } => {
                let k = blocks.cell_of(x);
                blocks.measure(k) * parts[k].kernel.degree_unchecked(blocks.to_unit(k, x))
            }
            Kernel::WattsStrogatzMix { base, p } => {
                (1.0 - 2.0 * p) * base.degree_unchecked(x) + p
            }
        }
    }

    /// Exact step representation.
    pub fn to_step(&self) -> StepKernel {
        match self {
            Kernel::Step(s) => s.clone(),
            Kernel::Constant(c) => StepKernel {
                partition: Partition::uniform(1),
                values: vec![*c],
            },
            Kernel::Bipartite(r) => StepKernel {
                partition: Partition { boundaries: vec![0.0, *r, 1.0] },
                values: vec![-1.0, 1.0, 1.0, 1.0],
            },
            Kernel::Product(f) => {
                let v = f.values();
                let m = v.len();
                let mut values = vec![0.0; m * m];
                for a in 0..m {
                    for b in 0..m {
                        values[a * m + b] = v[a] * v[b];
                    }
                }
                StepKernel { partition: f.partition.clone(), values }
            }
            Kernel::DirectSum { parts, blocks } => {
                let steps: Vec<StepKernel> = parts.iter().map(|p| p.kernel.to_step()).collect();
                let mut boundaries = vec![0.0];
                let mut offsets = Vec::with_capacity(steps.len());
                for (k, s) in steps.iter().enumerate() {
                    offsets.push(boundaries.len() - 1);
                    for &b in &s.partition.boundaries()[1..] {
                        boundaries.push(blocks.from_unit(k, b));
                    }
                }
                let m = boundaries.len() - 1;
                boundaries[m] = 1.0;
                let mut values = vec![0.0; m * m];
                for (s, &off) in steps.iter().zip(&offsets) {
                    let c = s.cells();
                    for a in 0..c {
                        for b in 0..c {
                            values[(off + a) * m + off + b] = s.value(a, b);
                        }
                    }
                }
                StepKernel { partition: Partition { boundaries }, values }
            }
            Kernel::WattsStrogatzMix { base, p } => {
                let s = base.to_step();
                let values = s.values.iter().map(|w| (1.0 - p) * w + p * (1.0 - w)).collect();
                StepKernel { partition: s.partition, values }
            }
        }
    }

    /// Range contained in `[0, 1]`.
    pub fn is_graphon(&self) -> bool {
        match self {
            Kernel::Constant(c) => *c >= 0.0,
            Kernel::Bipartite(_) => false,
            Kernel::WattsStrogatzMix { .. } => true,
            other => other.to_step().min_value() >= 0.0,
        }
    }

    /// The kernel `factor · W` in step form.
    pub fn scaled(&self, factor: f64) -> Result<Kernel> {
        Ok(Kernel::Step(self.to_step().scaled(factor)?))
    }

    /// JSON-serialisable description of this kernel.
    pub fn to_spec(&self) -> KernelSpec {
        match self {
            Kernel::Step(s) => KernelSpec::Step {
                boundaries: s.partition.boundaries().to_vec(),
                values: s.rows(),
            },
            Kernel::Constant(c) => KernelSpec::Constant { c: *c },
            Kernel::Bipartite(r) => KernelSpec::Bipartite { r: *r },
            Kernel::Product(f) => KernelSpec::Product {
                boundaries: f.partition.boundaries().to_vec(),
                f: f.values.clone(),
            },
            Kernel::DirectSum { parts, .. } => KernelSpec::DirectSum {
                parts: parts
                    .iter()
                    .map(|p| PartSpec { weight: p.weight, kernel: p.kernel.to_spec() })
                    .collect(),
            },
            Kernel::WattsStrogatzMix { base, p } => KernelSpec::WsMix {
                p: *p,
                base: Box::new(base.to_spec()),
            },
        }
    }
}

/// Block-diagonal direct sum; block `k` occupies an interval of length `weight_k`.
pub fn direct_sum(parts: Vec<(f64, Kernel)>) -> Result<Kernel> {
    if parts.is_empty() {
        return Err(Error::validation("direct sum needs at least one part"));
    }
    if let Some((w, _)) = parts.iter().find(|(w, _)| w.is_nan() || *w <= 0.0) {
        return Err(Error::validation(format!("direct sum weight {w} must be positive")));
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::validation(format!("direct sum weights sum to {total}, not 1")));
    }
    let mut boundaries = Vec::with_capacity(parts.len() + 1);
    let mut acc = 0.0;
    boundaries.push(0.0);
    for (w, _) in &parts[..parts.len() - 1] {
        acc += w;
        boundaries.push(acc);
    }
    boundaries.push(1.0);
    let blocks = Partition::new(boundaries)?;
    Ok(Kernel::DirectSum {
        parts: parts
            .into_iter()
            .map(|(weight, kernel)| DirectSumPart { weight, kernel })
            .collect(),
        blocks,
    })
}

/// Exact `‖k1 − k2‖₂` over `[0,1]²`, computed on the common refinement of
/// both step representations.
pub fn l2_distance(k1: &Kernel, k2: &Kernel) -> f64 {
    step_l2_distance(&k1.to_step(), &k2.to_step())
}

pub fn step_l2_distance(s1: &StepKernel, s2: &StepKernel) -> f64 {
    let common = s1.partition.refine(&s2.partition);
    let (a, b) = (s1.on_partition(&common), s2.on_partition(&common));
    let lam = common.measures();
    let mut sum = 0.0;
    for (i, li) in lam.iter().enumerate() {
        let mut row = 0.0;
        for (j, lj) in lam.iter().enumerate() {
            let d = a.value(i, j) - b.value(i, j);
            row += d * d * lj;
        }
        sum += row * li;
    }
    sum.max(0.0).sqrt()
}

/// Midpoint-rule approximation of `‖k1 − k2‖₂` on an `m × m` grid.
///
/// Approximate: for piecewise-constant integrands with jumps off the grid
/// the bias is `O(1/m)`. Prefer [`l2_distance`].
pub fn l2_distance_grid(k1: &Kernel, k2: &Kernel, m: usize) -> f64 {
    let m = m.max(1);
    let h = 1.0 / m as f64;
    let mut sum = 0.0;
    for i in 0..m {
        let x = (i as f64 + 0.5) * h;
        for j in 0..m {
            let y = (j as f64 + 0.5) * h;
            let d = k1.eval_unchecked(x, y) - k2.eval_unchecked(x, y);
            sum += d * d;
        }
    }
    (sum * h * h).sqrt()
}

/// JSON description of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Step { boundaries: Vec<f64>, values: Vec<Vec<f64>> },
    Constant { c: f64 },
    Bipartite { r: f64 },
    Product { boundaries: Vec<f64>, f: Vec<f64> },
    DirectSum { parts: Vec<PartSpec> },
    WsMix { p: f64, base: Box<KernelSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub weight: f64,
    pub kernel: KernelSpec,
}

/// Builds and validates a kernel from its description.
pub fn make_kernel(spec: &KernelSpec) -> Result<Kernel> {
    match spec {
        KernelSpec::Step { boundaries, values } => Ok(Kernel::Step(StepKernel::from_rows(
            Partition::new(boundaries.clone())?,
            values,
        )?)),
        KernelSpec::Constant { c } => Kernel::constant(*c),
        KernelSpec::Bipartite { r } => Kernel::bipartite(*r),
        KernelSpec::Product { boundaries, f } => Ok(Kernel::product(StepFunction::new(
            Partition::new(boundaries.clone())?,
            f.clone(),
        )?)),
        KernelSpec::DirectSum { parts } => direct_sum(
            parts
                .iter()
                .map(|p| Ok((p.weight, make_kernel(&p.kernel)?)))
                .collect::<Result<_>>()?,
        ),
        KernelSpec::WsMix { p, base } => Kernel::watts_strogatz_mix(make_kernel(base)?, *p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_cycle() -> Kernel {
        let rows = vec![
            vec![0.0, 1.0, -1.0, 0.0],
            vec![1.0, 0.0, 0.0, -1.0],
            vec![-1.0, 0.0, 0.0, 1.0],
            vec![0.0, -1.0, 1.0, 0.0],
        ];
        Kernel::Step(StepKernel::from_rows(Partition::uniform(4), &rows).unwrap())
    }

    #[test]
    fn cell_convention_is_right_closed() {
        let p = Partition::uniform(4);
        assert_eq!(p.cell_of(0.0), 0);
        assert_eq!(p.cell_of(0.25), 0);
        assert_eq!(p.cell_of(0.2500001), 1);
        assert_eq!(p.cell_of(1.0), 3);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Kernel::constant(1.0).unwrap().eval(0.3, 0.7).unwrap(), 1.0);
        let w = Kernel::bipartite(1.0 / 3.0).unwrap();
        assert_eq!(w.eval(0.1, 0.2).unwrap(), -1.0);
        assert_eq!(w.eval(0.1, 0.5).unwrap(), 1.0);
        let ws = Kernel::watts_strogatz_mix(Kernel::constant(1.0).unwrap(), 0.2).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 0.5)] {
            assert!((ws.eval(x, y).unwrap() - 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let k = Kernel::constant(0.5).unwrap();
        assert!(matches!(k.eval(1.2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(k.eval(0.0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(k.degree(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn degree_examples() {
        let r = 0.3;
        let w = Kernel::bipartite(r).unwrap();
        assert!((w.degree(0.1).unwrap() - (1.0 - 2.0 * r)).abs() < 1e-15);
        assert_eq!(w.degree(0.5).unwrap(), 1.0);
        assert_eq!(Kernel::constant(-0.4).unwrap().degree(0.9).unwrap(), -0.4);
        let c4 = four_cycle();
        for &x in &[0.0, 0.1, 0.3, 0.6, 0.99] {
            assert_eq!(c4.degree(x).unwrap(), 0.0);
        }
    }

    #[test]
    fn direct_sum_examples() {
        let k = Kernel::bipartite(0.25).unwrap();
        let single = direct_sum(vec![(1.0, k.clone())]).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.1, 0.7), (0.9, 0.95)] {
            assert_eq!(single.eval(x, y).unwrap(), k.eval(x, y).unwrap());
        }
        let one = Kernel::constant(1.0).unwrap();
        let halves = direct_sum(vec![(0.5, one.clone()), (0.5, one.clone())]).unwrap();
        assert_eq!(halves.eval(0.25, 0.75).unwrap(), 0.0);
        let mixed = direct_sum(vec![(0.5, one), (0.5, Kernel::constant(-1.0).unwrap())]).unwrap();
        assert_eq!(mixed.eval(0.8, 0.9).unwrap(), -1.0);
    }

    #[test]
    fn direct_sum_rejects_bad_weights() {
        let one = Kernel::constant(1.0).unwrap();
        assert!(direct_sum(vec![(0.5, one.clone()), (0.4, one.clone())]).is_err());
        assert!(direct_sum(vec![(1.5, one.clone()), (-0.5, one)]).is_err());
        assert!(direct_sum(vec![]).is_err());
    }

    #[test]
    fn l2_examples() {
        let w = Kernel::bipartite(1.0 / 3.0).unwrap();
        assert_eq!(l2_distance(&w, &w), 0.0);
        let one = Kernel::constant(1.0).unwrap();
        let zero = Kernel::constant(0.0).unwrap();
        assert!((l2_distance(&one, &zero) - 1.0).abs() < 1e-15);
        assert!((l2_distance(&w, &one) - 2.0 / 3.0).abs() < 1e-15);
        // grid rule is only approximate off-grid
        let approx = l2_distance_grid(&w, &one, 300);
        assert!((approx - 2.0 / 3.0).abs() < 1e-2);
    }

    #[test]
    fn make_kernel_examples() {
        let spec: KernelSpec = serde_json::from_str(r#"{"type":"bipartite","r":0.3333333333333333}"#).unwrap();
        assert_eq!(make_kernel(&spec).unwrap(), Kernel::Bipartite(1.0 / 3.0));
        let spec: KernelSpec = serde_json::from_str(r#"{"type":"constant","c":-1}"#).unwrap();
        assert_eq!(make_kernel(&spec).unwrap(), Kernel::Constant(-1.0));
        let spec: KernelSpec = serde_json::from_str(
            r#"{"type":"ws_mix","p":0.6,"base":{"type":"constant","c":1}}"#,
        )
        .unwrap();
        assert!(matches!(make_kernel(&spec), Err(Error::Validation(_))));
        let spec: KernelSpec = serde_json::from_str(
            r#"{"type":"ws_mix","p":0.1,"base":{"type":"bipartite","r":0.2}}"#,
        )
        .unwrap();
        assert!(matches!(make_kernel(&spec), Err(Error::Validation(_))));
        assert!(Kernel::bipartite(0.5).is_err());
        assert!(Kernel::constant(1.5).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let k = direct_sum(vec![
            (0.25, Kernel::bipartite(0.2).unwrap()),
            (
                0.75,
                Kernel::watts_strogatz_mix(Kernel::constant(0.3).unwrap(), 0.1).unwrap(),
            ),
        ])
        .unwrap();
        let json = serde_json::to_string(&k.to_spec()).unwrap();
        let back = make_kernel(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn step_kernel_rejects_asymmetry() {
        let p = Partition::uniform(2);
        assert!(StepKernel::new(p, vec![0.0, 0.5, 0.4, 0.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn graphon_predicate() {
        assert!(Kernel::constant(0.0).unwrap().is_graphon());
        assert!(!Kernel::constant(-0.1).unwrap().is_graphon());
        assert!(!Kernel::bipartite(0.2).unwrap().is_graphon());
        assert!(!four_cycle().is_graphon());
        let ws = Kernel::watts_strogatz_mix(Kernel::constant(0.0).unwrap(), 0.5).unwrap();
        assert!(ws.is_graphon());
    }

    fn arb_step_kernel(max_cells: usize) -> impl Strategy<Value = Kernel> {
        (1..=max_cells)
            .prop_flat_map(|m| {
                (
                    prop::collection::vec(0.05f64..1.0, m),
                    prop::collection::vec(-1.0f64..=1.0, m * m),
                )
            })
            .prop_map(|(widths, raw)| {
                let m = widths.len();
                let total: f64 = widths.iter().sum();
                let mut b = vec![0.0];
                let mut acc = 0.0;
                for w in &widths[..m - 1] {
                    acc += w / total;
                    b.push(acc);
                }
                b.push(1.0);
                let mut v = raw.clone();
                for a in 0..m {
                    for c in 0..a {
                        v[a * m + c] = raw[c * m + a];
                    }
                }
                Kernel::step(Partition::new(b).unwrap(), v).unwrap()
            })
    }

    fn arb_kernel() -> impl Strategy<Value = Kernel> {
        let leaf = prop_oneof![
            (-1.0f64..=1.0).prop_map(|c| Kernel::constant(c).unwrap()),
            (0.01f64..0.49).prop_map(|r| Kernel::bipartite(r).unwrap()),
            prop::collection::vec(-1.0f64..=1.0, 1..5).prop_map(|f| {
                let n = f.len();
                Kernel::product(StepFunction::new(Partition::uniform(n), f).unwrap())
            }),
            arb_step_kernel(5),
            ((0.0f64..=1.0), (0.0f64..=0.5)).prop_map(|(c, p)| {
                Kernel::watts_strogatz_mix(Kernel::constant(c).unwrap(), p).unwrap()
            }),
        ];
        leaf.prop_recursive(2, 8, 3, |inner| {
            prop::collection::vec(inner, 1..4).prop_map(|ks| {
                let n = ks.len();
                let parts = ks
                    .into_iter()
                    .enumerate()
                    .map(|(i, k)| ((i + 1) as f64, k))
                    .collect::<Vec<_>>();
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                let mut parts: Vec<(f64, Kernel)> =
                    parts.into_iter().map(|(w, k)| (w / total, k)).collect();
                let s: f64 = parts[..n - 1].iter().map(|(w, _)| w).sum();
                parts[n - 1].0 = 1.0 - s;
                direct_sum(parts).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(k in arb_kernel(), pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 50)) {
            for (x, y) in pts {
                let a = k.eval(x, y).unwrap();
                prop_assert_eq!(a, k.eval(y, x).unwrap());
                prop_assert!(a.abs() <= 1.0);
            }
        }

        #[test]
        fn step_form_agrees_pointwise(k in arb_kernel(), pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 50)) {
            let s = k.to_step();
            for (x, y) in pts {
                let (bx, by) = (s.partition().cell_of(x), s.partition().cell_of(y));
                // skip points within rounding of a boundary
                let near = |p: f64| s.partition().boundaries().iter().any(|b| (b - p).abs() < 1e-9);
                if near(x) || near(y) { continue; }
                prop_assert!((s.value(bx, by) - k.eval(x, y).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn ws_degree_is_linear(c in 0.0f64..=1.0, p in 0.0f64..=0.5, base in arb_step_kernel(4), xs in prop::collection::vec(0.0f64..=1.0, 20)) {
            let base = if base.is_graphon() { base } else { Kernel::constant(c).unwrap() };
            let ws = Kernel::watts_strogatz_mix(base.clone(), p).unwrap();
            let ws_step = Kernel::Step(ws.to_step());
            for x in xs {
                let expect = (1.0 - 2.0 * p) * base.degree(x).unwrap() + p;
                prop_assert!((ws.degree(x).unwrap() - expect).abs() < 1e-12);
                prop_assert!((ws_step.degree(x).unwrap() - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn direct_sum_degree_rescales(k1 in arb_kernel(), k2 in arb_kernel(), w in 0.1f64..0.9, xs in prop::collection::vec(0.0f64..=1.0, 20)) {
            let ds = direct_sum(vec![(w, k1.clone()), (1.0 - w, k2.clone())]).unwrap();
            let blocks = Partition::new(vec![0.0, w, 1.0]).unwrap();
            for x in xs {
                let b = blocks.cell_of(x);
                let inner = if b == 0 { &k1 } else { &k2 };
                let expect = blocks.measure(b) * inner.degree(blocks.to_unit(b, x)).unwrap();
                prop_assert!((ds.degree(x).unwrap() - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn l2_is_pseudometric(a in arb_step_kernel(5), b in arb_step_kernel(5), c in arb_step_kernel(5)) {
            let ab = l2_distance(&a, &b);
            let ba = l2_distance(&b, &a);
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ab <= l2_distance(&a, &c) + l2_distance(&c, &b) + 1e-12);
            prop_assert!(l2_distance(&a, &a) <= 1e-12);
        }
    }
}
