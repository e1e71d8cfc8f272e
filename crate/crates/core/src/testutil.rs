//! Small instances shared by unit tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::{generate_geometric_network, Network, NetworkSpec};
use crate::problems::{least_squares_l1, AgentObjective, ProblemInstance};
use crate::sync::{max_global_alpha, StepSize};

pub fn scalar_ls(b: f64) -> AgentObjective {
    least_squares_l1(DMatrix::identity(1, 1), DVector::from_element(1, b), 0.0).unwrap()
}

/// Two agents with `s_i(x) = (x − b_i)²/2`, `b = (0, 2)`.
pub fn two_node() -> (ProblemInstance, Network) {
    let prob = ProblemInstance::new(vec![scalar_ls(0.0), scalar_ls(2.0)]).unwrap();
    let net = Network::new(NetworkSpec::new(2, vec![(0, 1)]).unwrap()).unwrap();
    (prob, net)
}

/// LASSO pieces with 3 Gaussian measurements per agent on a geometric network.
pub fn random_lasso(seed: u64, n: usize, p: usize) -> (ProblemInstance, Network) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(generate_geometric_network(n, 30.0, 15.0, seed).unwrap()).unwrap();
    let objectives = (0..n)
        .map(|_| {
            let a = DMatrix::from_fn(3, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            least_squares_l1(a, b, 0.05).unwrap()
        })
        .collect();
    (ProblemInstance::new(objectives).unwrap(), net)
}

pub fn safe_step(prob: &ProblemInstance, net: &Network) -> StepSize {
    StepSize::Global(0.9 * max_global_alpha(&net.spectral, prob).unwrap())
}
