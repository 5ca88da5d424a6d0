//! Anderson-accelerated fixed-point iteration with an incrementally updated
//! QR factorization of the residual-difference matrix.

use std::collections::VecDeque;

/// Columns are dropped while the triangular factor's diagonal ratio exceeds
/// this bound.
const MAX_CONDITION: f64 = 1e10;

/// A new residual norm above this multiple of the previous one resets the
/// history.
const RESIDUAL_GROWTH_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonOptions {
    /// History depth `m`; 0 gives plain fixed-point iteration.
    pub depth: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AndersonOptions {
    fn default() -> Self {
        Self {
            depth: 5,
            tol: 1e-5,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub solution: Vec<f64>,
    /// Number of map evaluations.
    pub iterations: usize,
    /// `‖x_{l+1} − x_l‖₂` after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Steps where the accelerated candidate was replaced by the plain one.
    pub safeguard_resets: usize,
    /// Mixing weights of the last accelerated step (they sum to 1).
    pub last_weights: Vec<f64>,
}

/// Thin QR factors of the residual-difference matrix, one column per stored
/// difference.
#[derive(Debug, Default)]
struct QrFactors {
    q: Vec<Vec<f64>>,
    /// Upper triangular, `r[i][j]` for `j ≥ i`.
    r: Vec<Vec<f64>>,
}

impl QrFactors {
    fn len(&self) -> usize {
        self.q.len()
    }

    fn clear(&mut self) {
        self.q.clear();
        self.r.clear();
    }

    /// Appends a column by modified Gram–Schmidt with one
    /// reorthogonalization pass. Returns false if the column is numerically
    /// dependent on the stored ones.
    fn push(&mut self, col: &[f64]) -> bool {
        let k = self.len();
        let mut v = col.to_vec();
        let mut coeffs = vec![0.0; k];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let h = dot(qi, &v);
                coeffs[i] += h;
                axpy(-h, qi, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > 1e-14 * dot(col, col).sqrt()) {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        self.q.push(v);
        for (row, c) in self.r.iter_mut().zip(&coeffs) {
            row.push(*c);
        }
        let mut last = vec![0.0; k + 1];
        last[k] = norm;
        self.r.push(last);
        true
    }

    /// Removes the first column and restores triangularity with Givens
    /// rotations.
    fn drop_first(&mut self) {
        let k = self.len();
        if k == 0 {
            return;
        }
        for row in self.r.iter_mut() {
            row.remove(0);
        }
        // r is now k × (k−1) upper Hessenberg.
        for i in 0..k - 1 {
            let a = self.r[i][i];
            let b = self.r[i + 1][i];
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for j in i..k - 1 {
                let (x, y) = (self.r[i][j], self.r[i + 1][j]);
                self.r[i][j] = c * x + s * y;
                self.r[i + 1][j] = -s * x + c * y;
            }
            let (qa, qb) = split_two(&mut self.q, i);
            for (x, y) in qa.iter_mut().zip(qb.iter_mut()) {
                let (u, w) = (*x, *y);
                *x = c * u + s * w;
                *y = -s * u + c * w;
            }
        }
        self.r.pop();
        self.q.pop();
    }

    fn condition_estimate(&self) -> f64 {
        let diag = (0..self.len()).map(|i| self.r[i][i].abs());
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Least-squares coefficients `argmin ‖f − QRγ‖`.
    fn solve(&self, f: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut rhs: Vec<f64> = self.q.iter().map(|qi| dot(qi, f)).collect();
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.r[i][j] * rhs[j]).sum();
            rhs[i] = (rhs[i] - s) / self.r[i][i];
        }
        rhs
    }
}

fn split_two(q: &mut [Vec<f64>], i: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    let (head, tail) = q.split_at_mut(i + 1);
    (&mut head[i], &mut tail[0])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solves `x = g(x)` starting from `x0`.
///
/// `admissible` rejects accelerated candidates (for grids: strict ordering);
/// a rejected candidate is replaced by the plain iterate `g(x)` and the
/// history is cleared. Stops once `‖x_{l+1} − x_l‖₂ ≤ tol`.
pub fn anderson_accelerate<G, A>(mut g: G, x0: &[f64], admissible: A, opts: &AndersonOptions) -> FixedPointReport
where
    G: FnMut(&[f64]) -> Vec<f64>,
    A: Fn(&[f64]) -> bool,
{
    let mut x = x0.to_vec();
    let mut qr = QrFactors::default();
    let mut dg: VecDeque<Vec<f64>> = VecDeque::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut prev_res_norm = f64::INFINITY;
    let mut residuals = Vec::new();
    let mut resets = 0;
    let mut last_weights = vec![1.0];

    for iter in 1..=opts.max_iter {
        let gx = g(&x);
        let f = diff(&gx, &x);
        let res_norm = norm(&f);
        if !res_norm.is_finite() {
            break;
        }

        let mut candidate = None;
        if opts.depth > 0 {
            if res_norm > RESIDUAL_GROWTH_LIMIT * prev_res_norm {
                qr.clear();
                dg.clear();
                resets += 1;
            } else if let Some((f_prev, g_prev)) = &prev {
                if qr.push(&diff(&f, f_prev)) {
                    dg.push_back(diff(&gx, g_prev));
                    if dg.len() > opts.depth {
                        qr.drop_first();
                        dg.pop_front();
                    }
                    while qr.len() > 1 && qr.condition_estimate() > MAX_CONDITION {
                        qr.drop_first();
                        dg.pop_front();
                    }
                }
            }
            if qr.len() > 0 {
                let gamma = qr.solve(&f);
                let mut xa = gx.clone();
                for (c, col) in gamma.iter().zip(&dg) {
                    axpy(-c, col, &mut xa);
                }
                if xa.iter().all(|v| v.is_finite()) && admissible(&xa) {
                    last_weights = weights_from_gamma(&gamma);
                    candidate = Some(xa);
                } else {
                    qr.clear();
                    dg.clear();
                    resets += 1;
                }
            }
        }
        let next = candidate.unwrap_or_else(|| {
            last_weights = vec![1.0];
            gx.clone()
        });

        let step = norm(&diff(&next, &x));
        residuals.push(step);
        prev = Some((f, gx));
        prev_res_norm = res_norm;
        x = next;
        if step <= opts.tol {
            return FixedPointReport {
                solution: x,
                iterations: iter,
                residuals,
                converged: true,
                safeguard_resets: resets,
                last_weights,
            };
        }
    }
    FixedPointReport {
        solution: x,
        iterations: residuals.len(),
        residuals,
        converged: false,
        safeguard_resets: resets,
        last_weights,
    }
}

/// Weights on `g(x_{l−m}), …, g(x_l)` equivalent to the difference-form
/// coefficients `γ` (oldest first).
fn weights_from_gamma(gamma: &[f64]) -> Vec<f64> {
    let m = gamma.len();
    let mut alpha = Vec::with_capacity(m + 1);
    alpha.push(gamma[0]);
    for i in 1..m {
        alpha.push(gamma[i] - gamma[i - 1]);
    }
    alpha.push(1.0 - gamma[m - 1]);
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_map(c: Vec<f64>, a: Vec<Vec<f64>>) -> impl FnMut(&[f64]) -> Vec<f64> {
        move |x: &[f64]| c.iter().zip(&a).map(|(ci, row)| ci + dot(row, x)).collect()
    }

    #[test]
    fn depth_zero_is_plain_iteration() {
        let opts = AndersonOptions {
            depth: 0,
            tol: 1e-12,
            max_iter: 500,
        };
        let g = |x: &[f64]| vec![0.5 * x[0] + 1.0];
        let rep = anderson_accelerate(g, &[0.0], |_| true, &opts);
        assert!(rep.converged);
        assert!((rep.solution[0] - 2.0).abs() < 1e-11);
        // Contraction 1/2: the step halves each time.
        for w in rep.residuals.windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_map_converges_to_closed_form_faster_than_plain() {
        let c = vec![1.0, -2.0, 0.5];
        let a = vec![vec![0.6, 0.2, 0.0], vec![0.1, 0.7, 0.1], vec![0.0, 0.2, 0.65]];
        // (I − A) x = c solved by Cramer's rule as an independent oracle.
        let m = [
            [1.0 - a[0][0], -a[0][1], -a[0][2]],
            [-a[1][0], 1.0 - a[1][1], -a[1][2]],
            [-a[2][0], -a[2][1], 1.0 - a[2][2]],
        ];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(m);
        let exact: Vec<f64> = (0..3)
            .map(|col| {
                let mut mc = m;
                for r in 0..3 {
                    mc[r][col] = c[r];
                }
                det3(mc) / d
            })
            .collect();

        let acc = AndersonOptions {
            depth: 2,
            tol: 1e-10,
            max_iter: 1000,
        };
        let plain = AndersonOptions { depth: 0, ..acc };
        let ra = anderson_accelerate(linear_map(c.clone(), a.clone()), &[0.0; 3], |_| true, &acc);
        let rp = anderson_accelerate(linear_map(c, a), &[0.0; 3], |_| true, &plain);
        assert!(ra.converged && rp.converged);
        for (x, e) in ra.solution.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-8, "{x} vs {e}");
        }
        assert!(ra.iterations < rp.iterations, "{} vs {}", ra.iterations, rp.iterations);
        assert!((ra.last_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_drop_first_matches_fresh_factorization() {
        let cols = [
            vec![1.0, 2.0, 0.5, -1.0],
            vec![0.3, -1.0, 2.0, 0.0],
            vec![1.5, 0.2, -0.7, 0.9],
        ];
        let mut updated = QrFactors::default();
        for c in &cols {
            assert!(updated.push(c));
        }
        updated.drop_first();
        let mut fresh = QrFactors::default();
        for c in &cols[1..] {
            fresh.push(c);
        }
        let f = [0.2, -0.4, 1.0, 3.0];
        let (a, b) = (updated.solve(&f), fresh.solve(&f));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inadmissible_candidates_fall_back_to_plain_step() {
        let opts = AndersonOptions {
            depth: 3,
            tol: 1e-12,
            max_iter: 1000,
        };
        let g = |x: &[f64]| vec![0.9 * x[0] + 0.1, 0.5 * x[1]];
        let rep = anderson_accelerate(g, &[5.0, 3.0], |_| false, &opts);
        assert!(rep.converged);
        assert!(rep.safeguard_resets > 0);
        assert!((rep.solution[0] - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(gamma in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let w = weights_from_gamma(&gamma);
            prop_assert_eq!(w.len(), gamma.len() + 1);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
