#![allow(dead_code)]

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use voterlab::dynamics::InitialCondition;
use voterlab::graph::LaplacianOperator;
use voterlab::kernel::{Kernel, Partition, StepKernel};

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

/// Sorted random boundaries on the `grid`-lattice (`m` cells), or arbitrary when `grid` is `None`.
pub fn random_partition(rng: &mut TestRng, m: usize, grid: Option<usize>) -> Partition {
    let mut b: Vec<f64> = match grid {
        Some(n) => {
            assert!(m <= n);
            let mut idx: Vec<usize> = (1..n).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            idx.truncate(m - 1);
            idx.into_iter().map(|k| k as f64 / n as f64).collect()
        }
        None => (0..m - 1).map(|_| rng.gen_range(0.02..0.98)).collect(),
    };
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-3);
    b.insert(0, 0.0);
    b.push(1.0);
    Partition::new(b).unwrap()
}

/// Random symmetric step kernel; values in `[lo, 1]`, zero with probability `zero_p`.
pub fn random_step(rng: &mut TestRng, m: usize, grid: Option<usize>, lo: f64, zero_p: f64) -> StepKernel {
    let p = random_partition(rng, m, grid);
    let m = p.len();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let x = if rng.gen_bool(zero_p) { 0.0 } else { rng.gen_range(lo..=1.0) };
            v[i * m + j] = x;
            v[j * m + i] = x;
        }
    }
    StepKernel::new(p, v).unwrap()
}

pub fn random_initial(rng: &mut TestRng, pieces: usize, affine: bool) -> InitialCondition {
    let p = random_partition(rng, pieces, None);
    let values = (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let slopes = (0..p.len()).map(|_| if affine { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
    InitialCondition::affine(p.boundaries().to_vec(), values, slopes).unwrap()
}

/// Time after which every decaying mode of `d` has shrunk by `e^{-decades·ln 10}`.
pub fn settle_time(d: &LaplacianOperator, decades: f64) -> f64 {
    let slowest = SymmetricEigen::new(d.matrix().clone())
        .eigenvalues
        .iter()
        .filter(|l| **l < -1e-9)
        .fold(f64::INFINITY, |m, l| m.min(-l));
    if slowest.is_finite() {
        decades * std::f64::consts::LN_10 / slowest
    } else {
        1.0
    }
}

pub fn step(k: StepKernel) -> Kernel {
    Kernel::Step(k)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
