//! Time partitions 0 = t_0 < t_1 < … < t_N = T.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("time horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("a partition needs at least one step")]
    ZeroSteps,
    #[error("partition times must start at 0 and strictly increase")]
    NotIncreasing,
}

/// A finite partition of [0, T] with cached steps τ_i = t_i − t_{i−1} and
/// fineness τ = max_i τ_i.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    steps: Vec<f64>,
    fineness: f64,
}

impl Partition {
    /// Uniform partition t_i = iT/N.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self, PartitionError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PartitionError::NonPositiveHorizon(horizon));
        }
        if n_steps == 0 {
            return Err(PartitionError::ZeroSteps);
        }
        let mut times: Vec<f64> = (0..=n_steps)
            .map(|i| i as f64 * horizon / n_steps as f64)
            .collect();
        // Pin the right endpoint; i*T/N can round off at i = N.
        times[n_steps] = horizon;
        Self::from_times(times)
    }

    /// Build from explicit node times; validates monotonicity and t_0 = 0.
    pub fn from_times(times: Vec<f64>) -> Result<Self, PartitionError> {
        if times.len() < 2 {
            return Err(PartitionError::ZeroSteps);
        }
        if times[0] != 0.0 {
            return Err(PartitionError::NotIncreasing);
        }
        let mut steps = Vec::with_capacity(times.len() - 1);
        for w in times.windows(2) {
            let tau = w[1] - w[0];
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(PartitionError::NotIncreasing);
            }
            steps.push(tau);
        }
        let fineness = steps.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            times,
            steps,
            fineness,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn fineness(&self) -> f64 {
        self.fineness
    }

    /// Index j ∈ 1..=N of the piece (t_{j−1}, t_j] containing t; t = 0 maps
    /// to the first piece.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.horizon()).contains(&t) {
            return None;
        }
        if t == 0.0 {
            return Some(1);
        }
        // First node ≥ t.
        let j = self.times.partition_point(|&node| node < t);
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_quarter_grid() {
        let p = Partition::uniform(1.0, 4).unwrap();
        assert_eq!(p.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.fineness(), 0.25);
    }

    #[test]
    fn uniform_single_step() {
        let p = Partition::uniform(1.0, 1).unwrap();
        assert_eq!(p.times(), &[0.0, 1.0]);
    }

    #[test]
    fn uniform_fineness() {
        let p = Partition::uniform(2.0, 8).unwrap();
        assert_eq!(p.fineness(), 0.25);
        assert_eq!(p.n_steps(), 8);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            Partition::uniform(0.0, 4),
            Err(PartitionError::NonPositiveHorizon(0.0))
        );
        assert_eq!(
            Partition::uniform(-1.0, 4),
            Err(PartitionError::NonPositiveHorizon(-1.0))
        );
        assert_eq!(Partition::uniform(1.0, 0), Err(PartitionError::ZeroSteps));
        assert_eq!(
            Partition::from_times(vec![0.0, 0.5, 0.5, 1.0]),
            Err(PartitionError::NotIncreasing)
        );
        assert_eq!(
            Partition::from_times(vec![0.1, 0.5, 1.0]),
            Err(PartitionError::NotIncreasing)
        );
    }

    #[test]
    fn steps_sum_to_horizon() {
        for n in [1usize, 3, 7, 100, 1024] {
            let p = Partition::uniform(3.7, n).unwrap();
            let sum: f64 = p.steps().iter().sum();
            assert!((sum - 3.7).abs() <= 1e-12 * 3.7);
            let max = p.steps().iter().cloned().fold(0.0, f64::max);
            assert_eq!(max, p.fineness());
        }
    }

    #[test]
    fn locate_pieces() {
        let p = Partition::uniform(1.0, 4).unwrap();
        assert_eq!(p.locate(0.0), Some(1));
        assert_eq!(p.locate(0.25), Some(1));
        assert_eq!(p.locate(0.2500001), Some(2));
        assert_eq!(p.locate(1.0), Some(4));
        assert_eq!(p.locate(1.0001), None);
        assert_eq!(p.locate(-0.1), None);
    }
}
