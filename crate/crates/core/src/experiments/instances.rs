//! Seeded generators for the benchmark instances.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::{generate_geometric_network, NetworkSpec};
use crate::problems::{geometric_median, least_squares_l1, logistic, logistic_l1, ProblemInstance};
use crate::rng::{stream, Stream};
use crate::Result;

/// Side of the square deployment area.
pub const AREA_SIDE: f64 = 30.0;
/// Agents closer than this are neighbors.
pub const RADIUS: f64 = 15.0;

/// A generated problem, its network, and the hidden vector the data were
/// drawn from (when there is one).
#[derive(Debug, Clone)]
pub struct Instance {
    pub prob: ProblemInstance,
    pub spec: NetworkSpec,
    pub signal: Option<DVector<f64>>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A length-`p` vector with `nnz` standard normal entries at random positions.
fn sparse_vector(rng: &mut ChaCha8Rng, p: usize, nnz: usize) -> DVector<f64> {
    let mut x = DVector::zeros(p);
    let mut support: Vec<usize> = sample(rng, p, nnz).into_vec();
    support.sort_unstable();
    for i in support {
        x[i] = rng.sample(StandardNormal);
    }
    x
}

/// Compressed sensing: 10 agents, 3 measurements each of a 50-dimensional
/// signal with 10 nonzeros, sensing matrices scaled to unit spectral norm,
/// unit Gaussian noise, `θ_i = 0.01`.
pub fn gen_cs_instance(seed: u64) -> Result<Instance> {
    let (n, m, p, nnz, theta) = (10, 3, 50, 10, 0.01);
    let spec = generate_geometric_network(n, AREA_SIDE, RADIUS, seed)?;
    let mut rng = stream(seed, Stream::Instance);
    let x = sparse_vector(&mut rng, p, nnz);
    let objectives = (0..n)
        .map(|_| {
            let a = gaussian_matrix(&mut rng, m, p);
            let a = &a / a.singular_values().max();
            let e = gaussian_vector(&mut rng, m);
            let b = &a * &x + e;
            least_squares_l1(a, b, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance {
        prob: ProblemInstance::new(objectives)?,
        spec,
        signal: Some(x),
    })
}

/// Labels `+1` when `u ≤ logistic(hᵀx°)` for a uniform draw `u`, else `−1`.
pub fn draw_labels(rng: &mut ChaCha8Rng, features: &DMatrix<f64>, x: &DVector<f64>) -> Vec<f64> {
    (features * x)
        .iter()
        .map(|&t| {
            let u: f64 = rng.random();
            if u <= logistic(t) {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Sparse logistic regression: 10 agents, 3 samples each, 50 features,
/// 40 of the 50 generating coefficients zero, `θ_i = 0.1`.
pub fn gen_logistic_instance(seed: u64) -> Result<Instance> {
    let (n, m, p, nnz, theta) = (10, 3, 50, 10, 0.1);
    let spec = generate_geometric_network(n, AREA_SIDE, RADIUS, seed)?;
    let mut rng = stream(seed, Stream::Instance);
    let x = sparse_vector(&mut rng, p, nnz);
    let objectives = (0..n)
        .map(|_| {
            let h = gaussian_matrix(&mut rng, m, p);
            let d = draw_labels(&mut rng, &h, &x);
            logistic_l1(h, d, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance {
        prob: ProblemInstance::new(objectives)?,
        spec,
        signal: Some(x),
    })
}

/// Geometric median of 11 points in `R⁴` drawn from `N(0, Λ)` with
/// `Λ = diag(U(0, 10))`.
pub fn gen_geomedian_instance(seed: u64) -> Result<Instance> {
    let (n, p) = (11, 4);
    let spec = generate_geometric_network(n, AREA_SIDE, RADIUS, seed)?;
    let mut rng = stream(seed, Stream::Instance);
    let scale: DVector<f64> = DVector::from_fn(p, |_, _| rng.random_range(0.0..10.0f64).sqrt());
    let objectives = (0..n)
        .map(|_| geometric_median(gaussian_vector(&mut rng, p).component_mul(&scale)))
        .collect();
    Ok(Instance {
        prob: ProblemInstance::new(objectives)?,
        spec,
        signal: None,
    })
}

/// Low-rank completion data: `A = E D Fᵀ` split column-wise among agents,
/// with each entry observed independently.
#[derive(Debug, Clone)]
pub struct MatrixCompletionData {
    pub a: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub spec: NetworkSpec,
    pub rank: usize,
    pub cols_per_agent: usize,
}

impl MatrixCompletionData {
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// Columns of agent `i`.
    pub fn block(&self, i: usize) -> (DMatrix<f64>, DMatrix<bool>) {
        let c = self.cols_per_agent;
        (
            self.a.columns(i * c, c).into_owned(),
            self.mask.columns(i * c, c).into_owned(),
        )
    }

    pub fn observed_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }
}

/// 40×140 rank-4 matrix over 20 agents holding 7 columns each; entries are
/// observed with probability 0.8.
pub fn mc_generate(seed: u64) -> Result<MatrixCompletionData> {
    mc_generate_sized(seed, 40, 20, 7, 4, 0.8)
}

pub fn mc_generate_sized(
    seed: u64,
    rows: usize,
    n: usize,
    cols_per_agent: usize,
    rank: usize,
    observed: f64,
) -> Result<MatrixCompletionData> {
    let spec = generate_geometric_network(n, AREA_SIDE, RADIUS, seed)?;
    let mut rng = stream(seed, Stream::Instance);
    let k = n * cols_per_agent;
    let e = gaussian_matrix(&mut rng, rows, rank);
    let f = gaussian_matrix(&mut rng, k, rank);
    let d = DMatrix::from_diagonal(&gaussian_vector(&mut rng, rank));
    let a = e * d * f.transpose();
    let mask = DMatrix::from_fn(rows, k, |_, _| rng.random::<f64>() < observed);
    Ok(MatrixCompletionData {
        a,
        mask,
        spec,
        rank,
        cols_per_agent,
    })
}
