//! High-accuracy solutions used as the `x*` of relative-error curves.

use nalgebra::DVector;

use crate::graph::Network;
use crate::problems::ProblemInstance;
use crate::sync::{max_global_alpha, solve_reference, StepSize};
use crate::{Error, Result};

/// Fixed-point residual at which the reference iteration stops.
pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_MAX_ITERS: usize = 5_000_000;

/// Step used for reference solves: just inside `2ρ_min/L`, or 1 when every
/// smooth part is constant.
pub fn reference_step(prob: &ProblemInstance, net: &Network) -> Result<StepSize> {
    match max_global_alpha(&net.spectral, prob) {
        Ok(bound) => Ok(StepSize::Global(0.99 * bound)),
        Err(Error::ZeroLipschitz) => Ok(StepSize::Global(1.0)),
        Err(e) => Err(e),
    }
}

/// Runs PG-EXTRA to a fixed-point residual of [`REFERENCE_TOL`] and returns
/// the consensus point.
pub fn reference_solution(prob: &ProblemInstance, net: &Network) -> Result<DVector<f64>> {
    let step = reference_step(prob, net)?;
    let sol = solve_reference(prob, net, &step, REFERENCE_TOL, REFERENCE_MAX_ITERS)?;
    log::debug!(
        "reference after {} iterations, residual {:e}, consensus gap {:e}",
        sol.iterations,
        sol.residual,
        sol.consensus_gap
    );
    Ok(sol.x_star())
}

/// Minimizes `Σ_i f_i` by centralized subgradient descent with step
/// `s0/(k+1)^0.75`, returning the best point seen. Slow but independent of
/// every prox operator.
pub fn subgradient_minimize(
    prob: &ProblemInstance,
    start: &DVector<f64>,
    s0: f64,
    iterations: usize,
) -> (DVector<f64>, f64) {
    let mut x = start.clone();
    let mut best = (x.clone(), prob.mean_value(&x));
    for k in 0..iterations {
        let g = prob
            .objectives
            .iter()
            .fold(DVector::zeros(prob.p), |acc, o| acc + o.subgradient(&x))
            / prob.n() as f64;
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        x -= g * (s0 / ((k + 1) as f64).powf(0.75));
        let v = prob.mean_value(&x);
        if v < best.1 {
            best = (x.clone(), v);
        }
    }
    best
}
