//! Discrete trajectories, interpolants, node-error functionals, and the CSV
//! trajectory format.

use crate::partition::Partition;
use crate::Vector;
use std::fmt;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("trajectory needs at least the initial state")]
    Empty,
    #[error("more states than partition nodes")]
    TooManyStates,
    #[error("time {0} outside the covered range")]
    OutOfRange(f64),
    #[error("trajectory already complete or failed")]
    Sealed,
    #[error("malformed trajectory CSV: {0}")]
    Csv(String),
}

/// Outcome of a single scheme step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// The step equation/minimization was solved to tolerance.
    Exact,
    /// The exact equation has no (reachable) solution; the step was accepted
    /// with a controlled residual.
    ResidualAccepted,
    /// The start point was stationary and was kept.
    Stationary,
    /// The step could not be produced.
    Failed,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Exact => "Exact",
            StepStatus::ResidualAccepted => "ResidualAccepted",
            StepStatus::Stationary => "Stationary",
            StepStatus::Failed => "Failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Exact" => Some(StepStatus::Exact),
            "ResidualAccepted" => Some(StepStatus::ResidualAccepted),
            "Stationary" => Some(StepStatus::Stationary),
            "Failed" => Some(StepStatus::Failed),
            _ => None,
        }
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-step diagnostics attached to every attempted step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub energy_before: f64,
    pub energy_after: f64,
    /// ‖u_i − u_{i−1}‖ (metric analog d(u_i, u_{i−1}) for metric schemes).
    pub increment_norm: f64,
    /// ‖Dφ(u_i)‖ or the slope/subgradient-selection analog.
    pub slope_norm: f64,
    /// De Giorgi residual value ρ_i = G_i(u_i, u_{i−1}) (scheme-specific G).
    pub residual: f64,
    pub solver_iterations: usize,
    pub status: StepStatus,
}

impl StepRecord {
    pub fn failed(energy_before: f64) -> Self {
        StepRecord {
            energy_before,
            energy_after: f64::NAN,
            increment_norm: f64::NAN,
            slope_norm: f64::NAN,
            residual: f64::NAN,
            solver_iterations: 0,
            status: StepStatus::Failed,
        }
    }
}

/// Node-error report from [`Trajectory::grid_sup_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridError {
    /// max_i ‖u_i − exact(t_i)‖ over available nodes.
    pub state: f64,
    /// max_i ‖(u_i − u_{i−1})/τ_i − exact'(t_i)‖ when a derivative was given.
    pub derivative: Option<f64>,
}

/// A time-discrete solution: partition, states u_0..u_m, and one record per
/// attempted step. `records.len() == states.len() - 1` for healthy
/// trajectories; a trailing `Failed` record marks truncation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    partition: Partition,
    states: Vec<Vector>,
    records: Vec<StepRecord>,
    failure: Option<String>,
}

impl Trajectory {
    pub fn new(partition: Partition, initial: Vector) -> Self {
        Self {
            partition,
            states: vec![initial],
            records: Vec::new(),
            failure: None,
        }
    }

    /// Wrap externally produced states (e.g. for certification); records are
    /// synthesized with increments only.
    pub fn from_states(partition: Partition, states: Vec<Vector>) -> Result<Self, TrajectoryError> {
        if states.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if states.len() > partition.times().len() {
            return Err(TrajectoryError::TooManyStates);
        }
        let dim = states[0].len();
        for s in &states {
            if s.len() != dim {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        let records = states
            .windows(2)
            .map(|w| StepRecord {
                energy_before: f64::NAN,
                energy_after: f64::NAN,
                increment_norm: (&w[1] - &w[0]).norm(),
                slope_norm: f64::NAN,
                residual: f64::NAN,
                solver_iterations: 0,
                status: StepStatus::Exact,
            })
            .collect();
        Ok(Self {
            partition,
            states,
            records,
            failure: None,
        })
    }

    pub fn push_step(&mut self, state: Vector, record: StepRecord) -> Result<(), TrajectoryError> {
        if self.is_complete() || self.failed() {
            return Err(TrajectoryError::Sealed);
        }
        if state.len() != self.dim() {
            return Err(TrajectoryError::DimensionMismatch {
                expected: self.dim(),
                got: state.len(),
            });
        }
        self.states.push(state);
        self.records.push(record);
        Ok(())
    }

    /// Record a failed attempt; the trajectory is truncated here.
    pub fn push_failure(&mut self, record: StepRecord, message: String) {
        debug_assert_eq!(record.status, StepStatus::Failed);
        self.records.push(record);
        self.failure = Some(message);
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn is_complete(&self) -> bool {
        self.states.len() == self.partition.times().len()
    }

    pub fn failed(&self) -> bool {
        matches!(
            self.records.last(),
            Some(StepRecord {
                status: StepStatus::Failed,
                ..
            })
        )
    }

    pub fn failure_message(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    /// Last time covered by an actual state.
    pub fn covered_horizon(&self) -> f64 {
        self.partition.times()[self.states.len() - 1]
    }

    /// Piecewise affine interpolant û(t).
    pub fn eval_affine(&self, t: f64) -> Result<Vector, TrajectoryError> {
        let j = self.piece_index(t)?;
        if t == 0.0 {
            return Ok(self.states[0].clone());
        }
        let times = self.partition.times();
        let tau = self.partition.steps()[j - 1];
        let theta = (t - times[j - 1]) / tau;
        Ok(&self.states[j - 1] * (1.0 - theta) + &self.states[j] * theta)
    }

    /// Backward constant interpolant ū(t) = u_j on (t_{j−1}, t_j], ū(0) = u_0.
    pub fn eval_constant(&self, t: f64) -> Result<Vector, TrajectoryError> {
        if t == 0.0 {
            return Ok(self.states[0].clone());
        }
        let j = self.piece_index(t)?;
        Ok(self.states[j].clone())
    }

    fn piece_index(&self, t: f64) -> Result<usize, TrajectoryError> {
        let j = self
            .partition
            .locate(t)
            .ok_or(TrajectoryError::OutOfRange(t))?;
        if j >= self.states.len() {
            return Err(TrajectoryError::OutOfRange(t));
        }
        Ok(j)
    }

    /// Sup over grid nodes of the state error against an exact solution, plus
    /// the backward-difference derivative error when `exact_derivative` is
    /// supplied (evaluated at the right node of each piece).
    pub fn grid_sup_error(
        &self,
        exact: impl Fn(f64) -> Vector,
        exact_derivative: Option<&dyn Fn(f64) -> Vector>,
    ) -> GridError {
        let times = self.partition.times();
        let mut state_err: f64 = 0.0;
        for (i, u) in self.states.iter().enumerate() {
            state_err = state_err.max((u - exact(times[i])).norm());
        }
        let derivative = exact_derivative.map(|du| {
            let mut err: f64 = 0.0;
            for (i, pair) in self.states.windows(2).enumerate() {
                let tau = self.partition.steps()[i];
                let quotient = (&pair[1] - &pair[0]) / tau;
                err = err.max((quotient - du(times[i + 1])).norm());
            }
            err
        });
        GridError {
            state: state_err,
            derivative,
        }
    }

    /// CSV schema: `step,t,u_0,...,u_{d-1},energy,increment_norm,slope_norm,residual,status`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header = String::from("step,t");
        for k in 0..d {
            header.push_str(&format!(",u_{k}"));
        }
        header.push_str(",energy,increment_norm,slope_norm,residual,status");
        writeln!(w, "{header}")?;
        let times = self.partition.times();
        for (i, state) in self.states.iter().enumerate() {
            let (energy, increment, slope, residual, status) = if i == 0 {
                let e0 = self
                    .records
                    .first()
                    .map(|r| r.energy_before)
                    .unwrap_or(f64::NAN);
                (e0, 0.0, 0.0, 0.0, StepStatus::Exact)
            } else {
                let r = &self.records[i - 1];
                (
                    r.energy_after,
                    r.increment_norm,
                    r.slope_norm,
                    r.residual,
                    r.status,
                )
            };
            let mut row = format!("{i},{}", times[i]);
            for k in 0..d {
                row.push_str(&format!(",{}", state[k]));
            }
            row.push_str(&format!(
                ",{energy},{increment},{slope},{residual},{status}"
            ));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TrajectoryError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| TrajectoryError::Csv("empty file".into()))?
            .map_err(|e| TrajectoryError::Csv(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 8 || cols[0] != "step" || cols[1] != "t" {
            return Err(TrajectoryError::Csv(format!(
                "unexpected header `{header}`"
            )));
        }
        let d = cols.len() - 7;
        for (k, c) in cols[2..2 + d].iter().enumerate() {
            if *c != format!("u_{k}") {
                return Err(TrajectoryError::Csv(format!(
                    "unexpected header `{header}`"
                )));
            }
        }
        let expected_tail = [
            "energy",
            "increment_norm",
            "slope_norm",
            "residual",
            "status",
        ];
        if cols[2 + d..] != expected_tail {
            return Err(TrajectoryError::Csv(format!(
                "unexpected header `{header}`"
            )));
        }

        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut rows = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let line = line.map_err(|e| TrajectoryError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(TrajectoryError::Csv(format!(
                    "row {}: expected {} fields, got {}",
                    line_no + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, TrajectoryError> {
                s.parse::<f64>()
                    .map_err(|_| TrajectoryError::Csv(format!("bad float `{s}`")))
            };
            times.push(parse(fields[1])?);
            let state = Vector::from_iterator(
                d,
                fields[2..2 + d]
                    .iter()
                    .map(|s| parse(s))
                    .collect::<Result<Vec<_>, _>>()?,
            );
            states.push(state);
            let energy = parse(fields[2 + d])?;
            let increment = parse(fields[3 + d])?;
            let slope = parse(fields[4 + d])?;
            let residual = parse(fields[5 + d])?;
            let status = StepStatus::parse(fields[6 + d])
                .ok_or_else(|| TrajectoryError::Csv(format!("bad status `{}`", fields[6 + d])))?;
            rows.push((energy, increment, slope, residual, status));
        }
        if states.is_empty() {
            return Err(TrajectoryError::Csv("no data rows".into()));
        }
        let partition =
            Partition::from_times(times).map_err(|e| TrajectoryError::Csv(e.to_string()))?;
        let mut records = Vec::with_capacity(states.len() - 1);
        for i in 1..states.len() {
            let (energy, increment, slope, residual, status) = rows[i];
            records.push(StepRecord {
                energy_before: rows[i - 1].0,
                energy_after: energy,
                increment_norm: increment,
                slope_norm: slope,
                residual,
                solver_iterations: 0,
                status,
            });
        }
        Ok(Self {
            partition,
            states,
            records,
            failure: None,
        })
    }
}
