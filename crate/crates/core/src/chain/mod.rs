//! Finite Markov chain on per-date grids, its Bayes reversal and path
//! samplers.

mod alias;

pub use alias::AliasTable;

use rand::Rng;
use thiserror::Error;

use crate::matrix::Matrix;

/// States whose marginal mass is at or below this value are unreachable.
pub const UNREACHABLE_FLOOR: f64 = 1e-15;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("distribution has no positive mass")]
    EmptyDistribution,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("inconsistent chain: {0}")]
    Shape(String),
    #[error("backward transitions have not been built")]
    NotReversed,
    #[error("state {index} at slice {slice} is unreachable")]
    UnreachableState { slice: usize, index: usize },
}

#[derive(Debug, Clone)]
pub struct ChainApproximation {
    times: Vec<f64>,
    grids: Vec<Vec<f64>>,
    marginals: Vec<Vec<f64>>,
    forward: Vec<Matrix>,
    step_variance: Vec<Vec<f64>>,
    backward: Option<Vec<Matrix>>,
}

impl ChainApproximation {
    /// Assembles a chain and propagates marginals from the point mass at
    /// slice 0.
    ///
    /// `forward[k]` has shape `|Γ_k| × |Γ_{k+1}|`; `step_variance[k][i]` is
    /// the one-step conditional variance out of node `i` of slice `k`, used by
    /// the barrier bridge correction.
    pub fn new(
        times: Vec<f64>,
        grids: Vec<Vec<f64>>,
        forward: Vec<Matrix>,
        step_variance: Vec<Vec<f64>>,
    ) -> Result<Self, ChainError> {
        let slices = grids.len();
        if slices < 2 || times.len() != slices {
            return Err(ChainError::Shape(format!(
                "need matching times and grids with at least two slices, got {} and {}",
                times.len(),
                slices
            )));
        }
        if grids[0].len() != 1 {
            return Err(ChainError::Shape("slice 0 must be a single point".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ChainError::Shape("times must be strictly increasing".into()));
        }
        if forward.len() != slices - 1 || step_variance.len() != slices - 1 {
            return Err(ChainError::Shape("need one matrix per step".into()));
        }
        for (k, g) in grids.iter().enumerate() {
            if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(ChainError::Shape(format!(
                    "grid {k} must be non-empty and strictly increasing"
                )));
            }
        }
        for (k, m) in forward.iter().enumerate() {
            if m.rows() != grids[k].len() || m.cols() != grids[k + 1].len() {
                return Err(ChainError::Shape(format!("matrix {k} has the wrong shape")));
            }
            if step_variance[k].len() != grids[k].len() {
                return Err(ChainError::Shape(format!("step variances {k} have the wrong length")));
            }
            for i in 0..m.rows() {
                let row = m.row(i);
                if row.iter().any(|x| !(*x >= 0.0)) {
                    return Err(ChainError::InvalidDistribution(format!(
                        "matrix {k} row {i} has a negative or NaN entry"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(ChainError::InvalidDistribution(format!(
                        "matrix {k} row {i} sums to {s}"
                    )));
                }
            }
        }
        let mut marginals = Vec::with_capacity(slices);
        marginals.push(vec![1.0]);
        for m in &forward {
            let next = m.left_mul_vec(marginals.last().unwrap());
            marginals.push(next);
        }
        Ok(Self {
            times,
            grids,
            marginals,
            forward,
            step_variance,
            backward: None,
        })
    }

    /// Index of the last slice.
    pub fn steps(&self) -> usize {
        self.grids.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn x0(&self) -> f64 {
        self.grids[0][0]
    }

    pub fn grid(&self, k: usize) -> &[f64] {
        &self.grids[k]
    }

    pub fn marginal(&self, k: usize) -> &[f64] {
        &self.marginals[k]
    }

    pub fn forward(&self, k: usize) -> &Matrix {
        &self.forward[k]
    }

    pub fn step_variance(&self, k: usize) -> &[f64] {
        &self.step_variance[k]
    }

    pub fn is_reachable(&self, k: usize, i: usize) -> bool {
        self.marginals[k][i] > UNREACHABLE_FLOOR
    }

    /// `Π^{k+1,k}` if [`reverse_transitions`](Self::reverse_transitions) ran.
    pub fn backward(&self, k: usize) -> Option<&Matrix> {
        self.backward.as_ref().map(|b| &b[k])
    }

    /// Builds `Π^{k+1,k}_{j,i} = Π^{k,k+1}_{i,j} P_i^k / P_j^{k+1}`.
    ///
    /// Rows of unreachable states are left at zero.
    pub fn reverse_transitions(&mut self) {
        let backward = (0..self.steps())
            .map(|k| {
                let fwd = &self.forward[k];
                let p_now = &self.marginals[k];
                let p_next = &self.marginals[k + 1];
                let mut b = Matrix::zeros(fwd.cols(), fwd.rows());
                for (j, &pj) in p_next.iter().enumerate() {
                    if pj <= UNREACHABLE_FLOOR {
                        continue;
                    }
                    let row = b.row_mut(j);
                    for (i, r) in row.iter_mut().enumerate() {
                        *r = fwd[(i, j)] * p_now[i] / pj;
                    }
                    let s: f64 = row.iter().sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|r| *r /= s);
                    }
                }
                b
            })
            .collect();
        self.backward = Some(backward);
    }

    pub fn with_backward(mut self) -> Self {
        self.reverse_transitions();
        self
    }
}

/// Alias tables for every row of every forward matrix.
#[derive(Debug, Clone)]
pub struct ForwardSampler {
    tables: Vec<Vec<AliasTable>>,
}

impl ForwardSampler {
    pub fn new(chain: &ChainApproximation) -> Result<Self, ChainError> {
        let tables = chain
            .forward
            .iter()
            .map(|m| (0..m.rows()).map(|i| AliasTable::new(m.row(i))).collect())
            .collect::<Result<_, _>>()?;
        Ok(Self { tables })
    }

    /// Fills `out` (length `steps + 1`) with one path of state indices.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        out[0] = 0;
        for (k, row_tables) in self.tables.iter().enumerate() {
            out[k + 1] = row_tables[out[k]].sample(rng);
        }
    }
}

/// Alias tables for every reachable row of every backward matrix.
#[derive(Debug, Clone)]
pub struct BackwardSampler {
    tables: Vec<Vec<Option<AliasTable>>>,
}

impl BackwardSampler {
    pub fn new(chain: &ChainApproximation) -> Result<Self, ChainError> {
        let backward = chain.backward.as_ref().ok_or(ChainError::NotReversed)?;
        let tables = backward
            .iter()
            .enumerate()
            .map(|(k, m)| {
                (0..m.rows())
                    .map(|j| {
                        if chain.is_reachable(k + 1, j) {
                            AliasTable::new(m.row(j)).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { tables })
    }

    /// Fills `out` with a path ending at `terminal`, sampled from the last
    /// slice back to slice 0 and stored in forward time order.
    pub fn sample_path<R: Rng + ?Sized>(
        &self,
        terminal: usize,
        rng: &mut R,
        out: &mut [usize],
    ) -> Result<(), ChainError> {
        let n = self.tables.len();
        if self.tables[n - 1].get(terminal).is_none_or(|t| t.is_none()) {
            return Err(ChainError::UnreachableState {
                slice: n,
                index: terminal,
            });
        }
        out[n] = terminal;
        for k in (0..n).rev() {
            // Predecessors drawn from a reachable row are reachable themselves.
            let table = self.tables[k][out[k + 1]]
                .as_ref()
                .expect("backward step reached an unreachable state");
            out[k] = table.sample(rng);
        }
        Ok(())
    }
}

/// Index paths stored contiguously, each of length `steps + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    len: usize,
    indices: Vec<u32>,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.indices.len() / self.len
    }

    pub fn path(&self, p: usize) -> &[u32] {
        &self.indices[p * self.len..(p + 1) * self.len]
    }

    /// Prices along path `p`.
    pub fn prices(&self, chain: &ChainApproximation, p: usize) -> Vec<f64> {
        self.path(p)
            .iter()
            .enumerate()
            .map(|(k, &i)| chain.grid(k)[i as usize])
            .collect()
    }
}

pub fn sample_forward<R: Rng + ?Sized>(
    chain: &ChainApproximation,
    n_paths: usize,
    rng: &mut R,
) -> Result<PathSet, ChainError> {
    let sampler = ForwardSampler::new(chain)?;
    let len = chain.steps() + 1;
    let mut buf = vec![0usize; len];
    let mut indices = Vec::with_capacity(n_paths * len);
    for _ in 0..n_paths {
        sampler.sample_path(rng, &mut buf);
        indices.extend(buf.iter().map(|&i| i as u32));
    }
    Ok(PathSet { len, indices })
}

pub fn sample_backward<R: Rng + ?Sized>(
    chain: &ChainApproximation,
    terminal: usize,
    n_paths: usize,
    rng: &mut R,
) -> Result<PathSet, ChainError> {
    let sampler = BackwardSampler::new(chain)?;
    let len = chain.steps() + 1;
    let mut buf = vec![0usize; len];
    let mut indices = Vec::with_capacity(n_paths * len);
    for _ in 0..n_paths {
        sampler.sample_path(terminal, rng, &mut buf)?;
        indices.extend(buf.iter().map(|&i| i as u32));
    }
    Ok(PathSet { len, indices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p0: [f64; 2], pi: [[f64; 2]; 2]) -> ChainApproximation {
        // Slice 0 jumps to slice 1 with law p0, then one step with pi.
        ChainApproximation::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![1.0], vec![0.9, 1.1], vec![0.9, 1.1]],
            vec![
                Matrix::from_rows(&[p0.to_vec()]),
                Matrix::from_rows(&[pi[0].to_vec(), pi[1].to_vec()]),
            ],
            vec![vec![0.01], vec![0.01, 0.01]],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_reversal() {
        let c = two_state([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]]).with_backward();
        assert_eq!(c.marginal(2), &[0.5, 0.5]);
        let b = c.backward(1).unwrap();
        assert!(b.max_abs_diff(&Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]])) < 1e-15);
    }

    #[test]
    fn hand_bayes_reversal() {
        let c = two_state([0.8, 0.2], [[0.5, 0.5], [0.0, 1.0]]).with_backward();
        let p = c.marginal(2);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let b = c.backward(1).unwrap();
        assert!((b[(1, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((b[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn unreachable_terminal_is_rejected() {
        let c = two_state([1.0, 0.0], [[1.0, 0.0], [0.5, 0.5]]).with_backward();
        let mut rng = crate::rng::stream(0, 0);
        assert_eq!(
            sample_backward(&c, 1, 1, &mut rng),
            Err(ChainError::UnreachableState { slice: 2, index: 1 })
        );
    }

    #[test]
    fn backward_needs_reversal() {
        let c = two_state([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]]);
        assert!(matches!(BackwardSampler::new(&c), Err(ChainError::NotReversed)));
    }

    #[test]
    fn one_step_backward_paths_need_no_sampling() {
        let c = ChainApproximation::new(
            vec![0.0, 1.0],
            vec![vec![1.0], vec![0.8, 1.0, 1.2]],
            vec![Matrix::from_rows(&[vec![0.2, 0.5, 0.3]])],
            vec![vec![0.04]],
        )
        .unwrap()
        .with_backward();
        let mut rng = crate::rng::stream(1, 0);
        let paths = sample_backward(&c, 2, 5, &mut rng).unwrap();
        for p in 0..5 {
            assert_eq!(paths.prices(&c, p), vec![1.0, 1.2]);
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = ChainApproximation::new(
            vec![0.0, 1.0],
            vec![vec![1.0], vec![0.8, 1.0]],
            vec![Matrix::from_rows(&[vec![0.2, 0.5]])],
            vec![vec![0.04]],
        );
        assert!(matches!(err, Err(ChainError::InvalidDistribution(_))));
    }
}
