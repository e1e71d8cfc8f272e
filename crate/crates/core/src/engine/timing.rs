//! Timing laws, activation probabilities and relaxation parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Stream};
use crate::{Error, Result};

/// How the configured per-agent parameter maps to a mean duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// The parameter is the mean duration in ms.
    Mean,
    /// The parameter is a rate; the mean duration is its reciprocal.
    #[default]
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Exponential,
    /// Every duration equals its mean.
    Deterministic,
}

/// Effective mean compute durations per agent and the mean message latency.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingLaw {
    pub compute_means: Vec<f64>,
    pub comm_mean: f64,
    pub sampling: Sampling,
}

impl TimingLaw {
    /// Validates the parameters and converts them to mean durations.
    /// Communication may be instantaneous (`comm = 0` under `Mean`).
    pub fn new(
        compute: &[f64],
        comm: f64,
        parameterization: Parameterization,
        sampling: Sampling,
    ) -> Result<Self> {
        if let Some(&bad) = compute.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::NonPositiveMean(bad));
        }
        let comm_ok = match parameterization {
            Parameterization::Mean => comm >= 0.0 && comm.is_finite(),
            Parameterization::Rate => comm > 0.0 && comm.is_finite(),
        };
        if !comm_ok {
            return Err(Error::NonPositiveMean(comm));
        }
        let to_mean = |v: f64| match parameterization {
            Parameterization::Mean => v,
            Parameterization::Rate => 1.0 / v,
        };
        Ok(TimingLaw {
            compute_means: compute.iter().map(|&m| to_mean(m)).collect(),
            comm_mean: to_mean(comm),
            sampling,
        })
    }

    pub fn n(&self) -> usize {
        self.compute_means.len()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        match self.sampling {
            Sampling::Deterministic => mean,
            Sampling::Exponential if mean == 0.0 => 0.0,
            Sampling::Exponential => mean * rng.sample::<f64, _>(Exp1),
        }
    }
}

/// Per-agent compute parameters `μ_i = 2 + |N(0, 1)|`.
pub fn sample_compute_params(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::ComputeMeans);
    (0..n)
        .map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal).abs())
        .collect()
}

/// Latency parameter of the benchmark timing law.
pub const DEFAULT_COMM_PARAM: f64 = 0.6;

/// Activation probabilities of continuously computing agents:
/// `q_i = (1/μ_i) / Σ_j (1/μ_j)` for mean durations `μ_i`.
pub fn predicted_q(means: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = means.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::NonPositiveMean(bad));
    }
    let total: f64 = means.iter().map(|m| 1.0 / m).sum();
    Ok(means.iter().map(|m| (1.0 / m) / total).collect())
}

/// `η_i = η / (n q_i)`.
pub fn relaxation_parameters(q: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::NonPositiveScale(eta));
    }
    if let Some(&bad) = q.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::DegenerateProbability(format!("q_i = {bad}")));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::DegenerateProbability(format!("probabilities sum to {sum}")));
    }
    let n = q.len() as f64;
    Ok(q.iter().map(|qi| eta / (n * qi)).collect())
}

/// `n q_min / (2τ sqrt(κ q_min) + κ)`.
pub fn eta_max_bound(n: usize, q_min: f64, kappa: f64, tau: u64) -> f64 {
    let n = n as f64;
    n * q_min / (2.0 * tau as f64 * (kappa * q_min).sqrt() + kappa)
}

/// Charged duration of synchronous iterations: the slowest agent's compute
/// time plus the slowest of the `2m` directed neighbor messages.
#[derive(Debug, Clone)]
pub struct SyncClock {
    law: TimingLaw,
    directed_messages: usize,
    compute_rng: ChaCha8Rng,
    comm_rng: ChaCha8Rng,
    now: f64,
}

impl SyncClock {
    pub fn new(law: TimingLaw, edges: usize, seed: u64) -> Self {
        SyncClock {
            law,
            directed_messages: 2 * edges,
            compute_rng: stream(seed, Stream::SyncComputeTimes),
            comm_rng: stream(seed, Stream::SyncCommTimes),
            now: 0.0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Duration of the next iteration (not yet added to the clock).
    pub fn next_duration(&mut self) -> f64 {
        let compute = self
            .law
            .compute_means
            .iter()
            .map(|&m| self.law.sample(&mut self.compute_rng, m))
            .fold(0.0, f64::max);
        let comm = (0..self.directed_messages)
            .map(|_| self.law.sample(&mut self.comm_rng, self.law.comm_mean))
            .fold(0.0, f64::max);
        compute + comm
    }

    pub fn advance(&mut self, duration: f64) {
        self.now += duration;
    }

    /// Advances the clock by one iteration and returns the new time.
    pub fn tick(&mut self) -> f64 {
        let d = self.next_duration();
        self.advance(d);
        self.now
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_q_examples() {
        assert_eq!(predicted_q(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        let q = predicted_q(&[1.0, 3.0]).unwrap();
        assert!((q[0] - 0.75).abs() < 1e-15 && (q[1] - 0.25).abs() < 1e-15);
        assert!(matches!(predicted_q(&[1.0, 0.0]), Err(Error::NonPositiveMean(_))));
    }

    #[test]
    fn relaxation_examples() {
        let eta = relaxation_parameters(&[0.25; 4], 0.3).unwrap();
        assert!(eta.iter().all(|e| (e - 0.3).abs() < 1e-15));
        // η = 0.288 with n = 10 gives η_i = 0.0288/q_i
        let q = [0.05, 0.15, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let eta = relaxation_parameters(&q, 0.288).unwrap();
        for (e, qi) in eta.iter().zip(q) {
            assert!((e - 0.0288 / qi).abs() < 1e-12);
        }
        assert!(relaxation_parameters(&[0.5, 0.5], 0.0).is_err());
        assert!(matches!(
            relaxation_parameters(&[1.0, 0.0], 0.1),
            Err(Error::DegenerateProbability(_))
        ));
        assert!(relaxation_parameters(&[0.7, 0.7], 0.1).is_err());
    }

    #[test]
    fn eta_max_examples() {
        let kappa = (1.0 + 0.5f64.sqrt()) / (1.0 - 0.5f64.sqrt());
        assert!((eta_max_bound(2, 0.5, kappa, 0) - 1.0 / kappa).abs() < 1e-12);
        let one = 1.0 / (2.0 * (kappa * 0.5).sqrt() + kappa);
        assert!((eta_max_bound(2, 0.5, kappa, 1) - one).abs() < 1e-12);
        assert!((eta_max_bound(2, 0.5, 5.8284, 1) - 0.10819).abs() < 1e-4);
        for tau in 0..20 {
            assert!(eta_max_bound(10, 0.08, 4.0, tau + 1) < eta_max_bound(10, 0.08, 4.0, tau));
            assert!(eta_max_bound(10, 0.08, 4.5, tau) < eta_max_bound(10, 0.08, 4.0, tau));
        }
    }

    #[test]
    fn timing_law_validation() {
        assert!(TimingLaw::new(&[1.0], 0.0, Parameterization::Mean, Sampling::Exponential).is_ok());
        assert!(TimingLaw::new(&[1.0], 0.0, Parameterization::Rate, Sampling::Exponential).is_err());
        assert!(matches!(
            TimingLaw::new(&[0.0], 1.0, Parameterization::Mean, Sampling::Exponential),
            Err(Error::NonPositiveMean(_))
        ));
        let law = TimingLaw::new(&[4.0], 0.5, Parameterization::Rate, Sampling::Exponential).unwrap();
        assert_eq!(law.compute_means, vec![0.25]);
        assert_eq!(law.comm_mean, 2.0);
    }

    #[test]
    fn exponential_sample_mean() {
        let law = TimingLaw::new(&[3.0], 0.6, Parameterization::Mean, Sampling::Exponential).unwrap();
        let mut rng = stream(1, Stream::ComputeTimes);
        let n = 200_000;
        let mean = (0..n).map(|_| law.sample(&mut rng, 3.0)).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn compute_means_at_least_two() {
        let mu = sample_compute_params(1000, 5);
        assert!(mu.iter().all(|&m| m >= 2.0));
        let avg = mu.iter().sum::<f64>() / 1000.0;
        // E|N(0,1)| = sqrt(2/π)
        assert!((avg - 2.0 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05);
        assert_eq!(mu, sample_compute_params(1000, 5));
    }

    #[test]
    fn sync_clock_deterministic_durations() {
        let law = TimingLaw::new(&[2.0, 3.0, 1.0], 0.5, Parameterization::Mean, Sampling::Deterministic)
            .unwrap();
        let mut clock = SyncClock::new(law.clone(), 2, 0);
        assert_eq!(clock.tick(), 3.5);
        assert_eq!(clock.tick(), 7.0);
        let mut lonely = SyncClock::new(law, 0, 0);
        assert_eq!(lonely.tick(), 3.0);
    }
}
