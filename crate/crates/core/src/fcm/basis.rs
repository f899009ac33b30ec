//! Hierarchic 1D basis: two linear vertex modes plus integrated Legendre
//! bubbles, and Gauss-Legendre quadrature.

use super::FcmError;

/// Legendre polynomials `P_0..=P_n` at `x`.
pub fn legendre(n: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = x;
    }
    for k in 2..=n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// Values and `d/dxi` of the `p + 1` modes at `xi`, without bounds checks.
///
/// Mode 0 is `(1 - xi)/2`, mode 1 is `(1 + xi)/2`, mode `m >= 2` is the
/// integrated Legendre polynomial of degree `m`,
/// `(P_m - P_{m-2}) / sqrt(2(2m - 1))`, whose derivative is
/// `sqrt((2m - 1)/2) P_{m-1}`.
#[inline]
pub fn eval_modes(p: usize, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
    let mut leg = [0.0; 32];
    legendre(p, xi, &mut leg);
    values[0] = 0.5 * (1.0 - xi);
    values[1] = 0.5 * (1.0 + xi);
    derivs[0] = -0.5;
    derivs[1] = 0.5;
    for m in 2..=p {
        let two_m1 = (2 * m - 1) as f64;
        values[m] = (leg[m] - leg[m - 2]) / (2.0 * two_m1).sqrt();
        derivs[m] = (0.5 * two_m1).sqrt() * leg[m - 1];
    }
}

/// Hierarchic shape functions of order `p` and their derivatives at `xi`.
pub fn shape_functions_1d(p: usize, xi: f64) -> Result<(Vec<f64>, Vec<f64>), FcmError> {
    if p == 0 || p > 30 {
        return Err(FcmError::InvalidArgument(format!("order must lie in 1..=30, got {p}")));
    }
    if !(-1.0..=1.0).contains(&xi) {
        return Err(FcmError::InvalidArgument(format!("xi = {xi} outside [-1, 1]")));
    }
    let mut v = vec![0.0; p + 1];
    let mut d = vec![0.0; p + 1];
    eval_modes(p, xi, &mut v, &mut d);
    Ok((v, d))
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && n < 31);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut leg = [0.0; 32];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            legendre(n, x, &mut leg);
            // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
            let dp = n as f64 * (x * leg[n] - leg[n - 1]) / (x * x - 1.0);
            let dx = leg[n] / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        legendre(n, x, &mut leg);
        let dp = if n == 1 { 1.0 } else { n as f64 * (x * leg[n] - leg[n - 1]) / (x * x - 1.0) };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    (points, weights)
}
