//! Matrix exponential by degree-13 Padé approximation with scaling and
//! squaring.

use crate::matrix::Matrix;

/// Largest ∞-norm for which the [13/13] approximant is accurate to unit
/// roundoff without scaling.
pub const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Number of squarings `s` with `‖A‖∞ / 2^s ≤ θ13`.
pub fn squarings(a: &Matrix) -> u32 {
    let norm = a.norm_inf();
    if norm <= THETA_13 {
        0
    } else {
        (norm / THETA_13).log2().ceil() as u32
    }
}

/// `e^A` for a square matrix, or `None` if the Padé denominator is singular.
pub fn expm(a: &Matrix) -> Option<Matrix> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.rows();
    let s = squarings(a);
    let a = a.scale(0.5f64.powi(s as i32));
    let b = &PADE_13;
    let ident = Matrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut inner_u = a6.scale(b[13]);
    inner_u.add_scaled(&a4, b[11]);
    inner_u.add_scaled(&a2, b[9]);
    let mut u = a6.matmul(&inner_u);
    u.add_scaled(&a6, b[7]);
    u.add_scaled(&a4, b[5]);
    u.add_scaled(&a2, b[3]);
    u.add_scaled(&ident, b[1]);
    let u = a.matmul(&u);

    let mut inner_v = a6.scale(b[12]);
    inner_v.add_scaled(&a4, b[10]);
    inner_v.add_scaled(&a2, b[8]);
    let mut v = a6.matmul(&inner_v);
    v.add_scaled(&a6, b[6]);
    v.add_scaled(&a4, b[4]);
    v.add_scaled(&a2, b[2]);
    v.add_scaled(&ident, b[0]);

    let mut p = v.clone();
    p.add_scaled(&u, 1.0);
    let mut q = v;
    q.add_scaled(&u, -1.0);
    let mut r = q.solve(&p)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = expm(&Matrix::zeros(4, 4)).unwrap();
        assert_eq!(e, Matrix::identity(4));
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -30.0]]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] / 1f64.exp() - 1.0).abs() < 1e-14);
        assert!((e[(1, 1)] / (-30f64).exp() - 1.0).abs() < 1e-10);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent_matrix() {
        // e^{[[0, t], [0, 0]]} = [[1, t], [0, 1]].
        let a = Matrix::from_rows(&[vec![0.0, 7.5], vec![0.0, 0.0]]);
        let e = expm(&a).unwrap();
        assert!(e.max_abs_diff(&Matrix::from_rows(&[vec![1.0, 7.5], vec![0.0, 1.0]])) < 1e-13);
    }

    #[test]
    fn rotation_generator() {
        let t = 2.0;
        let a = Matrix::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        let e = expm(&a).unwrap();
        let exact = Matrix::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]);
        assert!(e.max_abs_diff(&exact) < 1e-14);
    }
}
