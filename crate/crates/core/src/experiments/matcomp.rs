//! Decentralized low-rank matrix completion by alternating minimization,
//! with the consensus step replaced by a single primal-dual iteration.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::{LocalRule, Observation, Proposal, ReadView};
use crate::graph::Network;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

use super::instances::MatrixCompletionData;

/// Ridge added to `XᵀX` when it is numerically singular.
pub const RIDGE: f64 = 1e-12;

/// Per-agent public copies `X^i` (`N × r`), private factors `Y^i`
/// (`r × K_i`), completions `Z^i` (`N × K_i`) and edge duals `Q^e` (`N × r`).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCompletionState {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub k: usize,
}

impl MatrixCompletionState {
    /// Random `X^i`, `Y^i`, `Z^i` with the observed entries of `Z^i` set to
    /// the data, and `Q = 0`.
    pub fn initialize(data: &MatrixCompletionData, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Initialization);
        let (rows, r, c) = (data.a.nrows(), data.rank, data.cols_per_agent);
        let mut gaussian =
            |nr: usize, nc: usize| DMatrix::from_fn(nr, nc, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = Vec::with_capacity(data.n());
        let mut y = Vec::with_capacity(data.n());
        let mut z = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            x.push(gaussian(rows, r));
            y.push(gaussian(r, c));
            let (a, mask) = data.block(i);
            let mut zi = gaussian(rows, c);
            zi.zip_apply(&mask, |v, observed| {
                if observed {
                    *v = 0.0;
                }
            });
            zi += a.zip_map(&mask, |v, observed| if observed { v } else { 0.0 });
            z.push(zi);
        }
        MatrixCompletionState {
            x,
            y,
            z,
            q: vec![DMatrix::zeros(rows, r); data.spec.m()],
            k: 0,
        }
    }

    /// `Z = [Z^1, …, Z^n]`.
    pub fn completion(&self) -> DMatrix<f64> {
        hstack(&self.z)
    }

    /// `‖X − 1 x̄ᵀ‖_F` over the flattened public copies.
    pub fn consensus_disagreement(&self) -> f64 {
        disagreement(self.x.iter())
    }
}

fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

fn disagreement<'a>(copies: impl Iterator<Item = &'a DMatrix<f64>> + Clone) -> f64 {
    let count = copies.clone().count();
    let Some(first) = copies.clone().next() else {
        return 0.0;
    };
    let mut mean = DMatrix::zeros(first.nrows(), first.ncols());
    for c in copies.clone() {
        mean += c;
    }
    mean /= count as f64;
    copies.map(|c| (c - &mean).norm_squared()).sum::<f64>().sqrt()
}

/// `‖Z − A‖_F / ‖Z⁰ − A‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionError {
    a: DMatrix<f64>,
    denom: f64,
}

impl CompletionError {
    pub fn new(a: DMatrix<f64>, z0: &DMatrix<f64>) -> Result<Self> {
        if a.shape() != z0.shape() {
            return Err(Error::ShapeMismatch(format!(
                "A is {:?}, Z⁰ is {:?}",
                a.shape(),
                z0.shape()
            )));
        }
        let denom = (z0 - &a).norm();
        if denom < 1e-15 {
            return Err(Error::DegenerateStart(denom));
        }
        Ok(CompletionError { a, denom })
    }

    pub fn rel_error(&self, z: &DMatrix<f64>) -> f64 {
        (z - &self.a).norm() / self.denom
    }
}

/// One primal-dual consensus iteration on `½‖X^i − Z^i (Y^i)ᵀ‖²`:
///
/// `X^i ← (Σ_j w_ij X^j − Σ_{e∈E_i} v_ei Q^e + α Z^i (Y^i)ᵀ)/(α + 1)`,
/// `Q^e ← Q^e + v_ei X^i + v_ej X^j` with the old `X`.
pub fn mc_step2_prime(state: &mut MatrixCompletionState, net: &Network, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveScale(alpha));
    }
    if state.x.len() != net.n() || state.q.len() != net.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} copies and {} duals on a network with n = {}, m = {}",
            state.x.len(),
            state.q.len(),
            net.n(),
            net.m()
        )));
    }
    let spec = &net.spec;
    let new_x = (0..net.n())
        .map(|i| {
            let target = &state.z[i] * state.y[i].transpose();
            if target.shape() != state.x[i].shape() {
                return Err(Error::ShapeMismatch(format!(
                    "Z^i (Y^i)ᵀ is {:?}, X^i is {:?}",
                    target.shape(),
                    state.x[i].shape()
                )));
            }
            let mut u = target * alpha;
            for &j in spec.neighbors(i) {
                u += &state.x[j] * net.w(i, j);
            }
            for &e in spec.incident_edges(i) {
                u -= &state.q[e] * net.v(e, i);
            }
            Ok(u / (alpha + 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    for (e, &(i, j)) in spec.edges().iter().enumerate() {
        state.q[e] += &state.x[i] * net.v(e, i) + &state.x[j] * net.v(e, j);
    }
    state.x = new_x;
    Ok(())
}

/// `Y = (XᵀX)⁻¹ Xᵀ Z` through a Cholesky solve, with a small ridge when
/// `XᵀX` is singular.
pub fn mc_step3(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "X is {:?}, Z is {:?}",
            x.shape(),
            z.shape()
        )));
    }
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(z);
    let well_posed = gram.clone().cholesky().filter(|c| {
        let d = c.l_dirty().diagonal();
        d.min() > 1e-8 * d.max()
    });
    if let Some(chol) = well_posed {
        return Ok(chol.solve(&rhs));
    }
    warn!("XᵀX is numerically singular; solving with a {RIDGE:e} ridge");
    let ridged = gram + DMatrix::identity(x.ncols(), x.ncols()) * RIDGE;
    ridged
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::RankDeficient(format!("XᵀX + {RIDGE:e} I is not positive definite")))
}

/// `Z = XY + P_Ω(A − XY)`.
pub fn mc_step4(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    mask: &DMatrix<bool>,
) -> Result<DMatrix<f64>> {
    if x.ncols() != y.nrows() || (x.nrows(), y.ncols()) != a.shape() || a.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "X {:?}, Y {:?}, A {:?}, Ω {:?}",
            x.shape(),
            y.shape(),
            a.shape(),
            mask.shape()
        )));
    }
    let xy = x * y;
    Ok(xy.zip_zip_map(a, mask, |fit, data, observed| if observed { data } else { fit }))
}

/// One synchronous outer iteration: Step 2′, then Steps 3 and 4 per agent.
pub fn mc_sync_iteration(
    state: &mut MatrixCompletionState,
    data: &MatrixCompletionData,
    net: &Network,
    alpha: f64,
) -> Result<()> {
    mc_step2_prime(state, net, alpha)?;
    for i in 0..data.n() {
        let (a, mask) = data.block(i);
        state.y[i] = mc_step3(&state.x[i], &state.z[i])?;
        state.z[i] = mc_step4(&state.x[i], &state.y[i], &a, &mask)?;
    }
    state.k += 1;
    Ok(())
}

/// The asynchronous variant: an activation runs a relaxed Step 2′ with the
/// values read, then Steps 3 and 4 on the agent's private factors. Primal
/// and dual rows are `X^i` and `Q^e` flattened column-major.
#[derive(Debug, Clone)]
pub struct MatrixCompletionRule<'a> {
    net: &'a Network,
    alpha: f64,
    rows: usize,
    rank: usize,
    blocks: Vec<(DMatrix<f64>, DMatrix<bool>)>,
    start: MatrixCompletionState,
    y: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    metric: CompletionError,
}

impl<'a> MatrixCompletionRule<'a> {
    pub fn new(
        data: &MatrixCompletionData,
        net: &'a Network,
        alpha: f64,
        start: MatrixCompletionState,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveScale(alpha));
        }
        let metric = CompletionError::new(data.a.clone(), &start.completion())?;
        Ok(MatrixCompletionRule {
            net,
            alpha,
            rows: data.a.nrows(),
            rank: data.rank,
            blocks: (0..data.n()).map(|i| data.block(i)).collect(),
            y: start.y.clone(),
            z: start.z.clone(),
            start,
            metric,
        })
    }

    fn unflatten(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.rank, v.as_slice())
    }

    /// Current completion `Z = [Z^1, …, Z^n]`.
    pub fn completion(&self) -> DMatrix<f64> {
        hstack(&self.z)
    }

    pub fn observed_entries_exact(&self) -> bool {
        self.z.iter().zip(&self.blocks).all(|(z, (a, mask))| {
            z.iter()
                .zip(a.iter())
                .zip(mask.iter())
                .all(|((zv, av), &m)| !m || zv == av)
        })
    }
}

fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

impl LocalRule for MatrixCompletionRule<'_> {
    fn primal_dim(&self) -> usize {
        self.rows * self.rank
    }

    fn dual_dim(&self) -> usize {
        self.rows * self.rank
    }

    fn initial_state(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let stack = |ms: &[DMatrix<f64>]| {
            let mut out = DMatrix::zeros(ms.len(), self.rows * self.rank);
            for (row, m) in ms.iter().enumerate() {
                out.row_mut(row).copy_from(&flatten(m).transpose());
            }
            out
        };
        (stack(&self.start.x), stack(&self.start.q))
    }

    fn propose(&mut self, view: &ReadView<'_>) -> Result<Proposal> {
        let i = view.agent;
        let spec = &self.net.spec;
        let target = &self.z[i] * self.y[i].transpose();
        let mut u = flatten(&target) * self.alpha;
        for (&j, xj) in spec.neighbors(i).iter().zip(view.x) {
            u += xj * self.net.w(i, j);
        }
        for (&e, qe) in spec.incident_edges(i).iter().zip(view.y) {
            u -= qe * self.net.v(e, i);
        }
        let own = view.own();
        let y = spec
            .owned_edges(i)
            .iter()
            .map(|&e| {
                let j = spec.other_end(e, i);
                view.y(e) + (own * self.net.v(e, i) + view.x(j) * self.net.v(e, j))
            })
            .collect();
        Ok(Proposal {
            x: u / (self.alpha + 1.0),
            y,
        })
    }

    fn after_write(&mut self, agent: usize, x_new: &DVector<f64>) -> Result<()> {
        let x = self.unflatten(x_new);
        let (a, mask) = &self.blocks[agent];
        self.y[agent] = mc_step3(&x, &self.z[agent])?;
        self.z[agent] = mc_step4(&x, &self.y[agent], a, mask)?;
        Ok(())
    }

    /// Relative completion error; the residual is the consensus disagreement.
    fn observe(&self, x: &DMatrix<f64>, _y: &DMatrix<f64>) -> Result<Observation> {
        let mean = x.row_mean();
        let spread = x.row_iter().map(|r| (r - &mean).norm_squared()).sum::<f64>();
        Ok(Observation {
            rel_error: self.metric.rel_error(&self.completion()),
            residual: spread.sqrt(),
        })
    }
}
