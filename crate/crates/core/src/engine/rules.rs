//! Per-agent update rules run by the event engine.

use nalgebra::{DMatrix, DVector};

use crate::experiments::metrics::ErrorReference;
use crate::graph::{Network, NetworkSpec};
use crate::problems::ProblemInstance;
use crate::sync::{fixed_point_residual, prox_dgd_step, SolverState, StepSize};
use crate::{Error, Result};

/// The values an agent read when its round started.
///
/// `x` is aligned with `N_i` (the agent itself included) and `y` with `E_i`.
#[derive(Debug, Clone, Copy)]
pub struct ReadView<'a> {
    pub agent: usize,
    pub spec: &'a NetworkSpec,
    pub x: &'a [DVector<f64>],
    pub y: &'a [DVector<f64>],
}

impl ReadView<'_> {
    pub fn x(&self, j: usize) -> &DVector<f64> {
        let pos = self
            .spec
            .neighbors(self.agent)
            .binary_search(&j)
            .expect("read of a non-neighbor primal");
        &self.x[pos]
    }

    pub fn y(&self, e: usize) -> &DVector<f64> {
        let pos = self
            .spec
            .incident_edges(self.agent)
            .iter()
            .position(|&f| f == e)
            .expect("read of a non-incident dual");
        &self.y[pos]
    }

    pub fn own(&self) -> &DVector<f64> {
        self.x(self.agent)
    }
}

/// Full (unrelaxed) update of one agent: `x̃^i` and `ỹ^e` for its owned edges
/// in `L_i` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: DVector<f64>,
    pub y: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub rel_error: f64,
    pub residual: f64,
}

pub trait LocalRule {
    /// Length of each primal row.
    fn primal_dim(&self) -> usize;

    /// Length of each dual row, zero when the rule has no duals.
    fn dual_dim(&self) -> usize;

    /// `(X⁰, Y⁰)`.
    fn initial_state(&self) -> (DMatrix<f64>, DMatrix<f64>);

    fn propose(&mut self, view: &ReadView<'_>) -> Result<Proposal>;

    /// Called after agent `i` wrote its new primal row.
    fn after_write(&mut self, _agent: usize, _x_new: &DVector<f64>) -> Result<()> {
        Ok(())
    }

    /// Relative error and residual of the current global state. Either is
    /// NaN when the rule has nothing to compare against.
    fn observe(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Observation>;
}

/// The relaxed primal-dual (asynchronous PG-EXTRA) update.
#[derive(Debug, Clone)]
pub struct PrimalDualRule<'a> {
    start: Option<DMatrix<f64>>,
    prob: &'a ProblemInstance,
    net: &'a Network,
    step: StepSize,
    reference: Option<ErrorReference>,
}

impl<'a> PrimalDualRule<'a> {
    pub fn new(
        prob: &'a ProblemInstance,
        net: &'a Network,
        step: StepSize,
        reference: Option<ErrorReference>,
    ) -> Result<Self> {
        SolverState::initial(prob, net).check(prob, net)?;
        Ok(PrimalDualRule {
            start: None,
            prob,
            net,
            step,
            reference,
        })
    }
}

impl PrimalDualRule<'_> {
    /// Starts from `X⁰ = x0` instead of zero.
    pub fn with_start(mut self, x0: DMatrix<f64>) -> Result<Self> {
        check_start(&x0, self.net.n(), self.prob.p)?;
        self.start = Some(x0);
        Ok(self)
    }
}

impl LocalRule for PrimalDualRule<'_> {
    fn primal_dim(&self) -> usize {
        self.prob.p
    }

    fn dual_dim(&self) -> usize {
        self.prob.p
    }

    fn initial_state(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = SolverState::initial(self.prob, self.net);
        (self.start.clone().unwrap_or(s.x), s.y)
    }

    fn propose(&mut self, view: &ReadView<'_>) -> Result<Proposal> {
        let i = view.agent;
        let spec = &self.net.spec;
        let alpha = self.step.alpha(i);
        let own = view.own();
        let mut u = self.prob.objectives[i].grad_smooth(own) * (-alpha);
        for (&j, xj) in spec.neighbors(i).iter().zip(view.x) {
            u += xj * self.net.w(i, j);
        }
        for (&e, ye) in spec.incident_edges(i).iter().zip(view.y) {
            u -= ye * self.net.v(e, i);
        }
        let x = self.prob.objectives[i].prox(&u, alpha)?;
        let y = spec
            .owned_edges(i)
            .iter()
            .map(|&e| {
                let j = spec.other_end(e, i);
                view.y(e) + (own * self.net.v(e, i) + view.x(j) * self.net.v(e, j))
            })
            .collect();
        Ok(Proposal { x, y })
    }

    fn observe(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Observation> {
        let state = SolverState::new(x.clone(), y.clone());
        let residual = fixed_point_residual(&state, self.prob, self.net, &self.step)?;
        let rel_error = match &self.reference {
            Some(r) => r.rel_error(x)?,
            None => f64::NAN,
        };
        Ok(Observation { rel_error, residual })
    }
}

/// Relaxed proximal DGD with delayed neighbor reads.
#[derive(Debug, Clone)]
pub struct ProxDgdRule<'a> {
    start: Option<DMatrix<f64>>,
    prob: &'a ProblemInstance,
    net: &'a Network,
    alpha: f64,
    reference: Option<ErrorReference>,
}

impl<'a> ProxDgdRule<'a> {
    pub fn new(
        prob: &'a ProblemInstance,
        net: &'a Network,
        alpha: f64,
        reference: Option<ErrorReference>,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveScale(alpha));
        }
        SolverState::initial(prob, net).check(prob, net)?;
        Ok(ProxDgdRule {
            start: None,
            prob,
            net,
            alpha,
            reference,
        })
    }
}

impl ProxDgdRule<'_> {
    /// Starts from `X⁰ = x0` instead of zero.
    pub fn with_start(mut self, x0: DMatrix<f64>) -> Result<Self> {
        check_start(&x0, self.net.n(), self.prob.p)?;
        self.start = Some(x0);
        Ok(self)
    }
}

impl LocalRule for ProxDgdRule<'_> {
    fn primal_dim(&self) -> usize {
        self.prob.p
    }

    fn dual_dim(&self) -> usize {
        0
    }

    fn initial_state(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.start
                .clone()
                .unwrap_or_else(|| DMatrix::zeros(self.net.n(), self.prob.p)),
            DMatrix::zeros(self.net.m(), 0),
        )
    }

    fn propose(&mut self, view: &ReadView<'_>) -> Result<Proposal> {
        let i = view.agent;
        let mut u = self.prob.objectives[i].grad_smooth(view.own()) * (-self.alpha);
        for (&j, xj) in self.net.spec.neighbors(i).iter().zip(view.x) {
            u += xj * self.net.w(i, j);
        }
        let x = self.prob.objectives[i].prox(&u, self.alpha)?;
        let y = vec![DVector::zeros(0); self.net.spec.owned_edges(i).len()];
        Ok(Proposal { x, y })
    }

    /// The residual is `‖X − T X‖_F` for the proximal DGD map `T`.
    fn observe(&self, x: &DMatrix<f64>, _y: &DMatrix<f64>) -> Result<Observation> {
        let next = prox_dgd_step(x, self.prob, &self.net.weights, self.alpha)?;
        let rel_error = match &self.reference {
            Some(r) => r.rel_error(x)?,
            None => f64::NAN,
        };
        Ok(Observation {
            rel_error,
            residual: (x - next).norm(),
        })
    }
}

/// Carries no values; used to sample timing and delays only.
#[derive(Debug, Clone)]
pub struct NullRule<'a> {
    spec: &'a NetworkSpec,
}

impl<'a> NullRule<'a> {
    pub fn new(spec: &'a NetworkSpec) -> Self {
        NullRule { spec }
    }
}

impl LocalRule for NullRule<'_> {
    fn primal_dim(&self) -> usize {
        0
    }

    fn dual_dim(&self) -> usize {
        0
    }

    fn initial_state(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::zeros(self.spec.n(), 0),
            DMatrix::zeros(self.spec.m(), 0),
        )
    }

    fn propose(&mut self, view: &ReadView<'_>) -> Result<Proposal> {
        Ok(Proposal {
            x: DVector::zeros(0),
            y: vec![DVector::zeros(0); self.spec.owned_edges(view.agent).len()],
        })
    }

    fn observe(&self, _x: &DMatrix<f64>, _y: &DMatrix<f64>) -> Result<Observation> {
        Ok(Observation {
            rel_error: f64::NAN,
            residual: f64::NAN,
        })
    }
}

fn check_start(x0: &DMatrix<f64>, n: usize, p: usize) -> Result<()> {
    if x0.shape() != (n, p) {
        return Err(Error::ShapeMismatch(format!(
            "start is {:?}, expected ({n}, {p})",
            x0.shape()
        )));
    }
    Ok(())
}
