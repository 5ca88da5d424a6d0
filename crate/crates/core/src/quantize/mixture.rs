//! Closed-form cell integrals of a finite Gaussian mixture over the Voronoi
//! cells of a one-dimensional grid.

use rayon::prelude::*;

use crate::model::{ModelError, ModelSpec};
use crate::normal;

/// Cells lighter than this are treated as empty by the Lloyd map.
pub const EMPTY_CELL_MASS: f64 = 1e-14;

const PARALLEL_WORK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    weight: f64,
    mean: f64,
    std_dev: f64,
}

/// Law of `m(X) + v(X) Z` for a discrete `X`, i.e. one Euler step taken from
/// a weighted grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
}

/// Per-cell integrals, all centred on the cell's own grid point `γ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    /// `P(X ∈ C_j)`.
    pub mass: Vec<f64>,
    /// `E[(X − γ_j) 1{X ∈ C_j}]`.
    pub first: Vec<f64>,
    /// `E[(X − γ_j)² 1{X ∈ C_j}]`.
    pub second: Vec<f64>,
}

impl GaussianMixture {
    /// Components are `(weight, mean, std_dev)`. Zero-weight components are
    /// dropped; a zero standard deviation denotes a point mass.
    pub fn new(components: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let components = components
            .into_iter()
            .filter(|c| c.0 > 0.0)
            .map(|(weight, mean, std_dev)| {
                debug_assert!(std_dev >= 0.0 && mean.is_finite());
                Component { weight, mean, std_dev }
            })
            .collect();
        Self { components }
    }

    pub fn standard_normal() -> Self {
        Self::new([(1.0, 0.0, 1.0)])
    }

    /// Euler step of `model` over `[t, t + dt]` from nodes `grid` carrying
    /// masses `probs`.
    pub fn euler_step(model: &ModelSpec, t: f64, dt: f64, grid: &[f64], probs: &[f64]) -> Result<Self, ModelError> {
        let mut comps = Vec::with_capacity(grid.len());
        for (&x, &p) in grid.iter().zip(probs) {
            let law = model.conditional_law(t, dt, x)?;
            comps.push((p, law.mean, law.std_dev));
        }
        Ok(Self::new(comps))
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum::<f64>() / self.total_mass()
    }

    pub fn std_dev(&self) -> f64 {
        let mu = self.mean();
        let var = self
            .components
            .iter()
            .map(|c| c.weight * (c.std_dev * c.std_dev + (c.mean - mu).powi(2)))
            .sum::<f64>()
            / self.total_mass();
        var.max(0.0).sqrt()
    }

    /// Density of the continuous part.
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| c.std_dev > 0.0)
            .map(|c| c.weight * normal::pdf((x - c.mean) / c.std_dev) / c.std_dev)
            .sum()
    }

    pub fn moments(&self, grid: &[f64]) -> CellMoments {
        debug_assert!(grid.windows(2).all(|w| w[1] > w[0]), "grid must be increasing");
        let bounds = half_cells(grid);
        let n = grid.len();
        let per_component = |c: &Component| component_moments(c, grid, &bounds);
        let parts: Vec<[Vec<f64>; 3]> = if self.components.len() * n >= PARALLEL_WORK {
            self.components.par_iter().map(per_component).collect()
        } else {
            self.components.iter().map(per_component).collect()
        };
        // Summed in component order so results do not depend on scheduling.
        let mut out = CellMoments {
            mass: vec![0.0; n],
            first: vec![0.0; n],
            second: vec![0.0; n],
        };
        for [m, f, s] in parts {
            for j in 0..n {
                out.mass[j] += m[j];
                out.first[j] += f[j];
                out.second[j] += s[j];
            }
        }
        out
    }

    /// Mean squared distance to the nearest grid point.
    pub fn distortion(&self, grid: &[f64]) -> f64 {
        self.moments(grid).second.iter().sum()
    }

    /// `∂D/∂γ_j = −2 E[(X − γ_j) 1{X ∈ C_j}]`.
    pub fn gradient(&self, grid: &[f64]) -> Vec<f64> {
        self.moments(grid).first.iter().map(|f| -2.0 * f).collect()
    }

    /// One Lloyd I update: each point moves to its cell's conditional mean.
    /// Points of empty cells stay put.
    pub fn lloyd_map(&self, grid: &[f64]) -> Vec<f64> {
        let m = self.moments(grid);
        lloyd_from_moments(grid, &m)
    }

    /// Symmetric tridiagonal Hessian of the distortion as `(diagonal,
    /// off-diagonal)`.
    pub fn hessian(&self, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mass = self.moments(grid).mass;
        let n = grid.len();
        let mut diag: Vec<f64> = mass.iter().map(|m| 2.0 * m).collect();
        let mut off = vec![0.0; n.saturating_sub(1)];
        for j in 0..n.saturating_sub(1) {
            let gap = grid[j + 1] - grid[j];
            let edge = 0.5 * self.density(0.5 * (grid[j] + grid[j + 1])) * gap;
            diag[j] -= edge;
            diag[j + 1] -= edge;
            off[j] = -edge;
        }
        (diag, off)
    }
}

pub(crate) fn lloyd_from_moments(grid: &[f64], m: &CellMoments) -> Vec<f64> {
    grid.iter()
        .enumerate()
        .map(|(j, &g)| {
            if m.mass[j] >= EMPTY_CELL_MASS {
                g + m.first[j] / m.mass[j]
            } else {
                g
            }
        })
        .collect()
}

/// Voronoi boundaries `γ_{j+1/2}` for `j = 0..N−1`.
pub fn half_cells(grid: &[f64]) -> Vec<f64> {
    grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Probabilities that `N(mean, std_dev²)` falls in each Voronoi cell of
/// `grid`; a zero `std_dev` puts all mass in the cell `[a, b)` holding the
/// mean.
pub fn cell_probabilities(mean: f64, std_dev: f64, grid: &[f64]) -> Vec<f64> {
    let bounds = half_cells(grid);
    let c = Component {
        weight: 1.0,
        mean,
        std_dev,
    };
    let [mass, _, _] = component_moments(&c, grid, &bounds);
    mass
}

/// Tail-accurate normal quantities at one standardized boundary.
#[derive(Clone, Copy)]
struct Edge {
    z: f64,
    cdf: f64,
    sf: f64,
    pdf: f64,
}

impl Edge {
    fn at(z: f64) -> Self {
        // Beyond 40σ every tail quantity underflows to zero.
        if z < -40.0 {
            return Edge {
                z: f64::NEG_INFINITY,
                cdf: 0.0,
                sf: 1.0,
                pdf: 0.0,
            };
        }
        if z > 40.0 {
            return Edge {
                z: f64::INFINITY,
                cdf: 1.0,
                sf: 0.0,
                pdf: 0.0,
            };
        }
        let (cdf, sf) = if z < 0.0 {
            let c = normal::cdf(z);
            (c, 1.0 - c)
        } else {
            let s = normal::sf(z);
            (1.0 - s, s)
        };
        Edge {
            z,
            cdf,
            sf,
            pdf: normal::pdf(z),
        }
    }

    fn z_pdf(&self) -> f64 {
        if self.z.is_infinite() {
            0.0
        } else {
            self.z * self.pdf
        }
    }
}

fn interval(lo: &Edge, hi: &Edge) -> f64 {
    let p = if lo.z >= 0.0 {
        lo.sf - hi.sf
    } else if hi.z <= 0.0 {
        hi.cdf - lo.cdf
    } else {
        1.0 - hi.sf - lo.cdf
    };
    p.max(0.0)
}

fn component_moments(c: &Component, grid: &[f64], bounds: &[f64]) -> [Vec<f64>; 3] {
    let n = grid.len();
    let mut mass = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    if c.std_dev == 0.0 {
        let j = bounds.partition_point(|&b| b <= c.mean);
        let d = c.mean - grid[j];
        mass[j] = c.weight;
        first[j] = c.weight * d;
        second[j] = c.weight * d * d;
        return [mass, first, second];
    }
    let (m, v, w) = (c.mean, c.std_dev, c.weight);
    let mut lo = Edge::at(f64::NEG_INFINITY);
    for j in 0..n {
        let hi = if j + 1 < n {
            Edge::at((bounds[j] - m) / v)
        } else {
            Edge::at(f64::INFINITY)
        };
        let p = interval(&lo, &hi);
        let dphi = lo.pdf - hi.pdf;
        let d = m - grid[j];
        mass[j] = w * p;
        first[j] = w * (d * p + v * dphi);
        let s = d * d * p + 2.0 * d * v * dphi + v * v * (p + lo.z_pdf() - hi.z_pdf());
        second[j] = w * s.max(0.0);
        lo = hi;
    }
    [mass, first, second]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_at_mean_is_stationary() {
        let mix = GaussianMixture::new([(0.3, 1.0, 0.2), (0.7, 1.5, 0.1)]);
        let g = mix.gradient(&[mix.mean()]);
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_point_grid() {
        let mix = GaussianMixture::standard_normal();
        let next = mix.lloyd_map(&[-1.0, 1.0]);
        let a = (2.0 / std::f64::consts::PI).sqrt();
        assert!((next[0] + a).abs() < 1e-15 && (next[1] - a).abs() < 1e-15);
        let d = mix.distortion(&[-1.0, 1.0]);
        assert!((d - (2.0 - 2.0 * a)).abs() < 1e-14);
        assert!((mix.distortion(&[-a, a]) - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn point_mass_cells_are_half_open() {
        let p = cell_probabilities(1.0, 0.0, &[0.0, 2.0, 4.0]);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let p = cell_probabilities(3.0, 0.0, &[0.0, 2.0, 4.0]);
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn cell_probabilities_sum_to_one() {
        let p = cell_probabilities(1.36, 0.0058, &[1.2, 1.3, 1.35, 1.36, 1.37, 1.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let mix = GaussianMixture::new([(0.4, 0.0, 1.0), (0.6, 0.8, 0.5)]);
        let grid = [-1.5, -0.4, 0.3, 0.9, 2.0];
        let (diag, off) = mix.hessian(&grid);
        let h = 1e-6;
        for j in 0..grid.len() {
            let mut up = grid;
            let mut dn = grid;
            up[j] += h;
            dn[j] -= h;
            let (gu, gd) = (mix.gradient(&up), mix.gradient(&dn));
            for i in 0..grid.len() {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                let exact = if i == j {
                    diag[j]
                } else if i + 1 == j {
                    off[i]
                } else if j + 1 == i {
                    off[j]
                } else {
                    0.0
                };
                assert!((fd - exact).abs() < 1e-6, "({i},{j}) fd {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn far_tail_cells_keep_relative_precision() {
        let mix = GaussianMixture::standard_normal();
        let grid = [-1.0, 0.0, 1.0, 7.0, 8.0];
        let m = mix.moments(&grid);
        // The last cell starts at 7.5 standard deviations, where 1 − Φ ≈ 3.19e-14.
        let exact = normal::sf(7.5);
        assert!((m.mass[4] / exact - 1.0).abs() < 1e-12);
        let next = lloyd_from_moments(&grid, &m);
        let truncated_mean = normal::pdf(7.5) / exact;
        assert!((next[4] - truncated_mean).abs() < 1e-9, "{}", next[4]);
    }
}
