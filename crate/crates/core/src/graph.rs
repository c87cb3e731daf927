//! Finite weighted graphs, the voter-model operator, and the maps between
//! graphs and kernels (discretisation, pixel kernels, W-random sampling,
//! blow-ups).

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Partition, StepKernel};

/// Largest vertex count stored densely unless a caller raises the limit.
pub const DEFAULT_N_MAX: usize = 4096;

/// Identifier of the generator behind [`sample_w_random`], recorded in
/// experiment metadata.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.3/seed_from_u64; \
     uniform f64 in [0,1) via rand-0.8 Standard; one draw per pair i<j in row-major order; \
     edge iff draw < W(i/n, j/n) with 1-based vertex labels";

const WEIGHT_TOL: f64 = 1e-12;

pub(crate) fn check_size(n: usize, n_max: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::validation("vertex count must be at least 1"));
    }
    if n > n_max {
        return Err(Error::Size { n, max: n_max });
    }
    Ok(())
}

/// A symmetric edge-weight matrix with entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Row-major `n × n` weights; validated for symmetry and range.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("graph needs at least one vertex"));
        }
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: weights.len() });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || w.abs() > 1.0 + WEIGHT_TOL {
                    return Err(Error::validation(format!("weight ({i},{j})={w} outside [-1,1]")));
                }
                if j > i && (w - weights[j * n + i]).abs() > WEIGHT_TOL {
                    return Err(Error::validation(format!("weights not symmetric at ({i},{j})")));
                }
            }
        }
        let mut weights = weights;
        for w in weights.iter_mut() {
            *w = w.clamp(-1.0, 1.0);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                weights[j * n + i] = weights[i * n + j];
            }
        }
        Ok(Self { n, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation("weight matrix must be square"));
        }
        Self::new(n, rows.concat())
    }

    /// Every pair (including self-pairs) carries weight `w`.
    pub fn complete(n: usize, w: f64) -> Result<Self> {
        Self::new(n, vec![w; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// 0/1 weights with an empty diagonal.
    pub fn is_simple(&self) -> bool {
        (0..self.n).all(|i| self.weight(i, i) == 0.0)
            && self.weights.iter().all(|&w| w == 0.0 || w == 1.0)
    }

    /// Number of unordered pairs `i < j` with nonzero weight.
    pub fn edge_count(&self) -> usize {
        let n = self.n;
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.weight(i, j) != 0.0).count())
            .sum()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile { n: self.n, weights: self.rows() }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let g = Self::from_rows(&file.weights)?;
        if g.n != file.n {
            return Err(Error::DimensionMismatch { expected: file.n, got: g.n });
        }
        Ok(g)
    }

    /// Writes the `i,j,beta` edge list (pairs `i < j`, 0-based) of a simple graph.
    pub fn write_edge_csv<W: Write>(&self, out: W) -> Result<()> {
        if !self.is_simple() {
            return Err(Error::validation("edge-list CSV is only defined for simple graphs"));
        }
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["i", "j", "beta"])?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.weight(i, j) != 0.0 {
                    wtr.write_record([i.to_string(), j.to_string(), "1".to_string()])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_edge_csv<R: Read>(input: R, n: usize) -> Result<Self> {
        let mut weights = vec![0.0; n * n];
        let mut rdr = csv::Reader::from_reader(input);
        for rec in rdr.deserialize() {
            let (i, j, beta): (usize, usize, f64) = rec?;
            if i >= n || j >= n || i == j {
                return Err(Error::validation(format!("bad edge ({i},{j}) for n={n}")));
            }
            weights[i * n + j] = beta;
            weights[j * n + i] = beta;
        }
        let g = Self::new(n, weights)?;
        if !g.is_simple() {
            return Err(Error::validation("edge-list CSV must describe a simple graph"));
        }
        Ok(g)
    }
}

/// JSON exchange format `{"n": .., "weights": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub weights: Vec<Vec<f64>>,
}

/// `D = (1/n)(B − diag(β̄))`, the negated Laplacian scaled by `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianOperator {
    matrix: DMatrix<f64>,
}

impl LaplacianOperator {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, uj) in u.iter().enumerate() {
                acc += self.matrix[(i, j)] * uj;
            }
            *o = acc;
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

pub fn laplacian(g: &WeightedGraph) -> LaplacianOperator {
    let n = g.n();
    let scale = 1.0 / n as f64;
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if j != i {
                let w = g.weight(i, j);
                matrix[(i, j)] = w * scale;
                off += w;
            }
        }
        matrix[(i, i)] = -off * scale;
    }
    LaplacianOperator { matrix }
}

/// `β_ij = n² ∫∫_{I_i × I_j} W`, integrated exactly on the step form of `k`.
pub fn discretize_kernel(k: &Kernel, n: usize) -> Result<WeightedGraph> {
    discretize_kernel_with_limit(k, n, DEFAULT_N_MAX)
}

pub fn discretize_kernel_with_limit(k: &Kernel, n: usize, n_max: usize) -> Result<WeightedGraph> {
    check_size(n, n_max)?;
    Ok(discretize_step(&k.to_step(), n))
}

pub(crate) fn discretize_step(s: &StepKernel, n: usize) -> WeightedGraph {
    let grid = Partition::uniform(n);
    // fraction of each grid cell covered by each kernel cell
    let frac: Vec<Vec<(usize, f64)>> = grid
        .overlaps(s.partition())
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let width = grid.measure(i);
            row.into_iter().map(|(a, len)| (a, len / width)).collect()
        })
        .collect();
    let m = s.cells();
    let mut t = vec![0.0; n * m];
    for (i, row) in frac.iter().enumerate() {
        for &(a, fa) in row {
            for b in 0..m {
                t[i * m + b] += fa * s.value(a, b);
            }
        }
    }
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let w: f64 = frac[j].iter().map(|&(b, fb)| t[i * m + b] * fb).sum();
            let w = w.clamp(-1.0, 1.0);
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    WeightedGraph { n, weights }
}

/// Step kernel on the uniform `n`-partition with block values `β_ij`.
pub fn pixel_kernel(g: &WeightedGraph) -> Kernel {
    Kernel::Step(
        StepKernel::new(Partition::uniform(g.n()), g.weights.clone())
            .expect("graph weights are validated"),
    )
}

/// Samples a simple graph with edge `(i, j)` present independently with
/// probability `W(i/n, j/n)` (1-based labels). See [`RNG_ALGORITHM`].
pub fn sample_w_random(k: &Kernel, n: usize, seed: u64) -> Result<WeightedGraph> {
    sample_w_random_with_limit(k, n, seed, DEFAULT_N_MAX)
}

pub fn sample_w_random_with_limit(
    k: &Kernel,
    n: usize,
    seed: u64,
    n_max: usize,
) -> Result<WeightedGraph> {
    if !k.is_graphon() {
        return Err(Error::validation("W-random graphs need a kernel with range in [0, 1]"));
    }
    check_size(n, n_max)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; n * n];
    let nf = n as f64;
    for i in 0..n {
        let x = (i + 1) as f64 / nf;
        for j in (i + 1)..n {
            let y = (j + 1) as f64 / nf;
            let draw: f64 = rng.gen();
            if draw < k.eval(x, y)? {
                weights[i * n + j] = 1.0;
                weights[j * n + i] = 1.0;
            }
        }
    }
    Ok(WeightedGraph { n, weights })
}

/// Replaces vertex `v` by `copies[v]` copies, copy `c` carrying multiplier
/// `scale[v][c]`. The weight between copy `c` of `u` and copy `c'` of `v` is
/// `scale[u][c] · scale[v][c'] · β_uv` (also for `u = v`). Copies are laid out
/// vertex-major.
pub fn blow_up(g: &WeightedGraph, copies: &[usize], scale: &[Vec<f64>]) -> Result<WeightedGraph> {
    let n = g.n();
    if copies.len() != n || scale.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: copies.len().min(scale.len()) });
    }
    let mut owner = Vec::new();
    for v in 0..n {
        if copies[v] == 0 {
            return Err(Error::validation(format!("vertex {v} needs at least one copy")));
        }
        if scale[v].len() != copies[v] {
            return Err(Error::validation(format!(
                "vertex {v}: {} multipliers for {} copies",
                scale[v].len(),
                copies[v]
            )));
        }
        for (c, &s) in scale[v].iter().enumerate() {
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::validation(format!("multiplier {s} of copy {c} of {v} must be positive")));
            }
            owner.push((v, s));
        }
    }
    let big = owner.len();
    check_size(big, DEFAULT_N_MAX)?;
    let mut weights = vec![0.0; big * big];
    for (p, &(u, su)) in owner.iter().enumerate() {
        for (q, &(v, sv)) in owner.iter().enumerate() {
            let w = su * sv * g.weight(u, v);
            if w.abs() > 1.0 + WEIGHT_TOL {
                return Err(Error::validation(format!(
                    "blown-up weight {w} between copies of {u} and {v} leaves [-1, 1]"
                )));
            }
            weights[p * big + q] = w.clamp(-1.0, 1.0);
        }
    }
    Ok(WeightedGraph { n: big, weights })
}
