//! Synchronous solvers: PG-EXTRA in its decentralized and compact forms,
//! proximal DGD, the step-size rules, and the fixed-point view `Z ↦ TZ`
//! measured in the metric `M = G/α`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::graph::{Network, SpectralData, WeightMatrix};
use crate::problems::ProblemInstance;
use crate::{Error, Result};

/// Stacked primal `X` (`n × p`, row `i` is `x^i`) and edge duals `Y`
/// (`m × p`, row `e` is `y^e`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub k: usize,
}

impl SolverState {
    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        SolverState {
            x: DMatrix::zeros(n, p),
            y: DMatrix::zeros(m, p),
            k: 0,
        }
    }

    /// `X⁰ = 0`, `Y⁰ = 0` sized for the problem and network.
    pub fn initial(prob: &ProblemInstance, net: &Network) -> Self {
        Self::zeros(net.n(), net.m(), prob.p)
    }

    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Self {
        SolverState { x, y, k: 0 }
    }

    pub fn check(&self, prob: &ProblemInstance, net: &Network) -> Result<()> {
        let want_x = (net.n(), prob.p);
        let want_y = (net.m(), prob.p);
        if self.x.shape() != want_x || self.y.shape() != want_y || prob.n() != net.n() {
            return Err(Error::ShapeMismatch(format!(
                "state X {:?} / Y {:?}, expected {want_x:?} / {want_y:?} for {} objectives",
                self.x.shape(),
                self.y.shape(),
                prob.n()
            )));
        }
        Ok(())
    }

    /// `Z = [X; Y]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, p) = (self.x.nrows(), self.y.nrows(), self.x.ncols());
        let mut z = DMatrix::zeros(n + m, p);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, m).copy_from(&self.y);
        z
    }

    pub fn primal(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Average of the agents' local copies.
    pub fn mean_primal(&self) -> DVector<f64> {
        self.x.row_mean().transpose()
    }

    /// Largest entrywise disagreement between any two local copies.
    pub fn consensus_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for c in 0..self.x.ncols() {
            let col = self.x.column(c);
            gap = gap.max(col.max() - col.min());
        }
        gap
    }
}

/// Global `α` or per-agent `α_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSize {
    Global(f64),
    Local(Vec<f64>),
}

impl StepSize {
    pub fn alpha(&self, i: usize) -> f64 {
        match self {
            StepSize::Global(a) => *a,
            StepSize::Local(v) => v[i],
        }
    }

    /// The `α` in `M = G/α`. For per-agent step sizes the largest `α_i` is
    /// used, which keeps `M` positive definite and the residual zero exactly
    /// at fixed points.
    pub fn metric_alpha(&self) -> f64 {
        match self {
            StepSize::Global(a) => *a,
            StepSize::Local(v) => v.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `α_i = 1/(L_i/γ + 1 − w_ii)`.
    pub fn local(prob: &ProblemInstance, w: &WeightMatrix, gamma: f64) -> Result<Self> {
        local_alphas(prob, w, gamma).map(StepSize::Local)
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            StepSize::Global(a) if !(*a > 0.0) => Err(Error::NonPositiveScale(*a)),
            StepSize::Local(v) if v.len() != n => Err(Error::ShapeMismatch(format!(
                "{} local step sizes for {n} agents",
                v.len()
            ))),
            StepSize::Local(v) => match v.iter().find(|a| !(**a > 0.0)) {
                Some(a) => Err(Error::NonPositiveScale(*a)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// `2ρ_min/L`, the largest admissible global step size.
pub fn max_global_alpha(spec: &SpectralData, prob: &ProblemInstance) -> Result<f64> {
    let l = prob.max_lipschitz();
    if l <= 0.0 {
        return Err(Error::ZeroLipschitz);
    }
    Ok(2.0 * spec.rho_min / l)
}

pub fn local_alphas(prob: &ProblemInstance, w: &WeightMatrix, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if prob.n() != w.n() {
        return Err(Error::ShapeMismatch(format!(
            "{} objectives, W is {}×{}",
            prob.n(),
            w.n(),
            w.n()
        )));
    }
    Ok(prob
        .objectives
        .iter()
        .enumerate()
        .map(|(i, o)| 1.0 / (o.lipschitz() / gamma + 1.0 - w.get(i, i)))
        .collect())
}

/// Logs a warning when a global step size is outside `(0, 2ρ_min/L)`.
/// Returns whether the step size is within the bound.
pub fn check_step_size(prob: &ProblemInstance, net: &Network, step: &StepSize) -> bool {
    match step {
        StepSize::Global(alpha) => match max_global_alpha(&net.spectral, prob) {
            Ok(bound) if *alpha >= bound => {
                warn!("step size α = {alpha} is not below 2ρ_min/L = {bound}; convergence is not guaranteed");
                false
            }
            _ => true,
        },
        StepSize::Local(_) => true,
    }
}

/// One synchronous PG-EXTRA iteration, written agent by agent:
///
/// `x^i ← prox_{α_i r_i}(Σ_{j∈N_i} w_ij x^j − α_i ∇s_i(x^i) − Σ_{e∈E_i} v_ei y^e)`,
/// `y^e ← y^e + v_ei x^i + v_ej x^j` for each edge `e = (i, j)`.
pub fn pg_extra_step(
    state: &SolverState,
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
) -> Result<SolverState> {
    state.check(prob, net)?;
    step.validate(net.n())?;
    let spec = &net.spec;
    let mut x = DMatrix::zeros(net.n(), prob.p);
    for i in 0..net.n() {
        let alpha = step.alpha(i);
        let own = state.primal(i);
        let mut u = prob.objectives[i].grad_smooth(&own) * (-alpha);
        for &j in spec.neighbors(i) {
            u += state.x.row(j).transpose() * net.w(i, j);
        }
        for &e in spec.incident_edges(i) {
            u -= state.y.row(e).transpose() * net.v(e, i);
        }
        let xi = prob.objectives[i].prox(&u, alpha)?;
        x.row_mut(i).copy_from(&xi.transpose());
    }
    let mut y = state.y.clone();
    for (e, &(i, j)) in spec.edges().iter().enumerate() {
        let delta = state.x.row(i) * net.v(e, i) + state.x.row(j) * net.v(e, j);
        let mut row = y.row_mut(e);
        row += delta;
    }
    Ok(SolverState {
        x,
        y,
        k: state.k + 1,
    })
}

fn prox_rows(u: DMatrix<f64>, prob: &ProblemInstance, step: &StepSize) -> Result<DMatrix<f64>> {
    let mut out = u;
    for i in 0..out.nrows() {
        let row = out.row(i).transpose();
        let p = prob.objectives[i].prox(&row, step.alpha(i))?;
        out.row_mut(i).copy_from(&p.transpose());
    }
    Ok(out)
}

fn scaled_gradients(x: &DMatrix<f64>, prob: &ProblemInstance, step: &StepSize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let gi = prob.objectives[i].grad_smooth(&x.row(i).transpose()) * step.alpha(i);
        g.row_mut(i).copy_from(&gi.transpose());
    }
    g
}

/// PG-EXTRA in matrix form: `X ← prox[WX − α∇s(X) − VᵀY]`, `Y ← Y + VX`.
pub fn pg_extra_step_compact(
    state: &SolverState,
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
) -> Result<SolverState> {
    state.check(prob, net)?;
    step.validate(net.n())?;
    let v = &net.incidence.v;
    let u = net.weights.matrix() * &state.x
        - scaled_gradients(&state.x, prob, step)
        - v.tr_mul(&state.y);
    Ok(SolverState {
        x: prox_rows(u, prob, step)?,
        y: &state.y + v * &state.x,
        k: state.k + 1,
    })
}

/// The primal-dual form before eliminating `Y^{k+1}`:
/// `Y ← Y + VX`, `X ← prox[X − α∇s(X) − Vᵀ(2Y^{k+1} − Y^k)]`.
pub fn primal_dual_step(
    state: &SolverState,
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
) -> Result<SolverState> {
    state.check(prob, net)?;
    step.validate(net.n())?;
    let v = &net.incidence.v;
    let y = &state.y + v * &state.x;
    let extrapolated = &y * 2.0 - &state.y;
    let u = &state.x - scaled_gradients(&state.x, prob, step) - v.tr_mul(&extrapolated);
    Ok(SolverState {
        x: prox_rows(u, prob, step)?,
        y,
        k: state.k + 1,
    })
}

/// Proximal DGD: `x^i ← prox_{α r_i}(Σ_j w_ij x^j − α∇s_i(x^i))`.
pub fn prox_dgd_step(
    x: &DMatrix<f64>,
    prob: &ProblemInstance,
    w: &WeightMatrix,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveScale(alpha));
    }
    if x.shape() != (w.n(), prob.p) || prob.n() != w.n() {
        return Err(Error::ShapeMismatch(format!(
            "X is {:?}, expected ({}, {})",
            x.shape(),
            w.n(),
            prob.p
        )));
    }
    let step = StepSize::Global(alpha);
    let u = w.matrix() * x - scaled_gradients(x, prob, &step);
    prox_rows(u, prob, &step)
}

/// `sqrt(tr(Dᵀ G D)/α)` for `D = [dx; dy]`, without forming `G`.
pub fn metric_norm(dx: &DMatrix<f64>, dy: &DMatrix<f64>, v: &DMatrix<f64>, alpha: f64) -> f64 {
    let cross = if v.nrows() == 0 {
        0.0
    } else {
        (v * dx).dot(dy)
    };
    let sq = (dx.norm_squared() + dy.norm_squared() + 2.0 * cross) / alpha;
    sq.max(0.0).sqrt()
}

/// `‖Z − TZ‖_M` with `T` one synchronous PG-EXTRA iteration and `M = G/α`.
pub fn fixed_point_residual(
    state: &SolverState,
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
) -> Result<f64> {
    let next = pg_extra_step(state, prob, net, step)?;
    Ok(metric_norm(
        &(&state.x - &next.x),
        &(&state.y - &next.y),
        &net.incidence.v,
        step.metric_alpha(),
    ))
}

/// `‖Z − Z_ref‖_M` with `M = G/α`.
pub fn m_norm_distance(
    state: &SolverState,
    reference: &SolverState,
    net: &Network,
    alpha: f64,
) -> Result<f64> {
    if state.x.shape() != reference.x.shape() || state.y.shape() != reference.y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "states X {:?}/{:?}, Y {:?}/{:?}",
            state.x.shape(),
            reference.x.shape(),
            state.y.shape(),
            reference.y.shape()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveScale(alpha));
    }
    Ok(metric_norm(
        &(&state.x - &reference.x),
        &(&state.y - &reference.y),
        &net.incidence.v,
        alpha,
    ))
}

/// Runs `iterations` PG-EXTRA steps from `start`, calling `hook(k, state)`
/// at `k = 0` and every `record_every` iterations.
pub fn iterate_pg_extra<F>(
    start: SolverState,
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
    iterations: usize,
    record_every: usize,
    mut hook: F,
) -> Result<SolverState>
where
    F: FnMut(usize, &SolverState),
{
    check_step_size(prob, net, step);
    let record_every = record_every.max(1);
    let mut state = start;
    hook(state.k, &state);
    for _ in 0..iterations {
        state = pg_extra_step(&state, prob, net, step)?;
        if state.k % record_every == 0 {
            hook(state.k, &state);
        }
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub state: SolverState,
    pub residual: f64,
    pub iterations: usize,
    pub consensus_gap: f64,
}

impl ReferenceSolution {
    /// The consensus point `x*` (mean of the local copies).
    pub fn x_star(&self) -> DVector<f64> {
        self.state.mean_primal()
    }
}

/// Iterates PG-EXTRA from zero until `‖Z − TZ‖_M < tol`.
pub fn solve_reference(
    prob: &ProblemInstance,
    net: &Network,
    step: &StepSize,
    tol: f64,
    max_iters: usize,
) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    check_step_size(prob, net, step);
    let alpha = step.metric_alpha();
    let mut state = SolverState::initial(prob, net);
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        let next = pg_extra_step(&state, prob, net, step)?;
        residual = metric_norm(
            &(&state.x - &next.x),
            &(&state.y - &next.y),
            &net.incidence.v,
            alpha,
        );
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            let consensus_gap = state.consensus_gap();
            return Ok(ReferenceSolution {
                state,
                residual,
                iterations: it,
                consensus_gap,
            });
        }
        state = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}
