//! Trajectory storage shared by the discrete network and the SDE simulator.

use nalgebra::DMatrix;

/// Which time indices of a trajectory are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    /// Only `x_0` and `x_T`.
    #[default]
    Endpoints,
    /// Every `k`-th step plus both endpoints.
    Stride(usize),
    Full,
}

impl Retention {
    pub fn keeps(&self, step: usize, total: usize) -> bool {
        if step == 0 || step == total {
            return true;
        }
        match *self {
            Retention::Endpoints => false,
            Retention::Stride(k) => k > 0 && step % k == 0,
            Retention::Full => true,
        }
    }
}

/// Flags trajectories that leave every reasonable scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplosionGuard {
    /// Linear-growth constant the coefficients are expected to respect, when known.
    pub growth_constant: Option<f64>,
    /// Norm above which a state counts as exploded.
    pub hard_cap: f64,
}

impl Default for ExplosionGuard {
    fn default() -> Self {
        ExplosionGuard {
            growth_constant: None,
            hard_cap: 1e6,
        }
    }
}

impl ExplosionGuard {
    /// Guard that only reacts to non-finite states.
    pub fn non_finite_only() -> Self {
        ExplosionGuard {
            growth_constant: None,
            hard_cap: f64::INFINITY,
        }
    }

    pub fn is_exploded(&self, x: &[f64]) -> bool {
        let mut sq = 0.0;
        for v in x {
            if !v.is_finite() {
                return true;
            }
            sq += v * v;
        }
        self.hard_cap.is_finite() && (!sq.is_finite() || sq.sqrt() > self.hard_cap)
    }
}

/// Trajectories of `N` coupled inputs over a time grid, for one parameter draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    n_inputs: usize,
    dim: usize,
    /// Step index of each retained snapshot.
    pub steps: Vec<usize>,
    /// Time of each retained snapshot.
    pub times: Vec<f64>,
    // layout [snapshot][input][dim]
    states: Vec<f64>,
    /// Per input: the step at which the trajectory was flagged, if ever.
    pub diverged_at: Vec<Option<usize>>,
}

impl PathBatch {
    pub(crate) fn new(n_inputs: usize, dim: usize) -> Self {
        PathBatch {
            n_inputs,
            dim,
            steps: Vec::new(),
            times: Vec::new(),
            states: Vec::new(),
            diverged_at: vec![None; n_inputs],
        }
    }

    /// Appends a snapshot from a `dim x n_inputs` matrix (one column per input).
    pub(crate) fn push(&mut self, step: usize, time: f64, x: &DMatrix<f64>) {
        debug_assert_eq!(x.shape(), (self.dim, self.n_inputs));
        self.steps.push(step);
        self.times.push(time);
        self.states.extend_from_slice(x.as_slice());
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_snapshots(&self) -> usize {
        self.steps.len()
    }

    /// State of input `n` at snapshot `k`.
    pub fn state(&self, n: usize, k: usize) -> &[f64] {
        let start = (k * self.n_inputs + n) * self.dim;
        &self.states[start..start + self.dim]
    }

    pub fn initial_state(&self, n: usize) -> &[f64] {
        self.state(n, 0)
    }

    pub fn final_state(&self, n: usize) -> &[f64] {
        self.state(n, self.n_snapshots() - 1)
    }

    /// Coordinate `d` of the final state of every input.
    pub fn final_coord(&self, d: usize) -> Vec<f64> {
        (0..self.n_inputs).map(|n| self.final_state(n)[d]).collect()
    }

    /// Final states as an `N x D` matrix.
    pub fn final_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_inputs, self.dim, |n, d| self.final_state(n)[d])
    }

    pub fn diverged(&self, n: usize) -> bool {
        self.diverged_at[n].is_some()
    }

    pub fn any_diverged(&self) -> bool {
        self.diverged_at.iter().any(Option::is_some)
    }

    /// Coordinate `d` of input `n` at every snapshot.
    pub fn coordinate_path(&self, n: usize, d: usize) -> Vec<f64> {
        (0..self.n_snapshots()).map(|k| self.state(n, k)[d]).collect()
    }
}

/// Column-per-input propagation state with freeze-on-divergence bookkeeping.
pub(crate) struct Propagator {
    pub x: DMatrix<f64>,
    pub active: Vec<bool>,
    pub batch: PathBatch,
    pub guard: ExplosionGuard,
    pub retention: Retention,
    pub total_steps: usize,
    pub horizon: f64,
}

impl Propagator {
    /// `x0` is `N x D` (one row per input); steps are `horizon / total_steps`.
    pub fn new(x0: &DMatrix<f64>, total_steps: usize, horizon: f64, guard: ExplosionGuard, retention: Retention) -> Self {
        let x = x0.transpose();
        let mut batch = PathBatch::new(x0.nrows(), x0.ncols());
        batch.push(0, 0.0, &x);
        Propagator {
            x,
            active: vec![true; x0.nrows()],
            batch,
            guard,
            retention,
            total_steps,
            horizon,
        }
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    /// Commits a candidate state for the active columns `idx` after `step` steps.
    pub fn commit(&mut self, step: usize, idx: &[usize], next: &DMatrix<f64>) {
        for (c, &i) in idx.iter().enumerate() {
            let col = next.column(c);
            if self.guard.is_exploded(col.as_slice()) {
                self.active[i] = false;
                self.batch.diverged_at[i] = Some(step);
                if col.iter().all(|v| v.is_finite()) {
                    self.x.set_column(i, &col);
                }
            } else {
                self.x.set_column(i, &col);
            }
        }
        if self.retention.keeps(step, self.total_steps) {
            let t = if step == self.total_steps {
                self.horizon
            } else {
                self.horizon / self.total_steps as f64 * step as f64
            };
            self.batch.push(step, t, &self.x);
        }
    }

    pub fn finish(self) -> PathBatch {
        self.batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_rules() {
        assert!(Retention::Endpoints.keeps(0, 10));
        assert!(!Retention::Endpoints.keeps(5, 10));
        assert!(Retention::Endpoints.keeps(10, 10));
        assert!(Retention::Stride(5).keeps(5, 10));
        assert!(!Retention::Stride(5).keeps(4, 10));
        assert!(Retention::Full.keeps(3, 10));
    }

    #[test]
    fn guard_flags_non_finite_and_large() {
        let g = ExplosionGuard::default();
        assert!(g.is_exploded(&[f64::NAN]));
        assert!(g.is_exploded(&[2e6, 0.0]));
        assert!(!g.is_exploded(&[1.0, -3.0]));
        assert!(!ExplosionGuard::non_finite_only().is_exploded(&[1e300]));
    }

    #[test]
    fn frozen_column_keeps_last_finite_value() {
        let x0 = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let mut p = Propagator::new(&x0, 2, 1.0, ExplosionGuard::default(), Retention::Full);
        let next = DMatrix::from_row_slice(1, 2, &[1.5, f64::INFINITY]);
        p.commit(1, &[0, 1], &next);
        assert_eq!(p.active_indices(), vec![0]);
        let next = DMatrix::from_row_slice(1, 1, &[1.7]);
        p.commit(2, &[0], &next);
        let b = p.finish();
        assert_eq!(b.final_state(1), &[2.0]);
        assert_eq!(b.final_state(0), &[1.7]);
        assert_eq!(b.diverged_at, vec![None, Some(1)]);
        assert_eq!(b.times, vec![0.0, 0.5, 1.0]);
    }
}
