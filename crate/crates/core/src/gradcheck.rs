//! Central finite-difference oracle for gradient checks.
//!
//! Used by the test suites to validate every analytic gradient the tape
//! produces. The oracle only ever evaluates forward values.

/// Central differences `(f(x + εe_i) − f(x − εe_i)) / 2ε` for every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Smallest gradient norm treated as nonzero by [`relative_error`].
pub const NORM_FLOOR: f64 = 1e-6;

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, NORM_FLOOR)`.
///
/// Norm-wise rather than per-component, so near-zero entries of a healthy
/// gradient do not dominate.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(NORM_FLOOR)
}
