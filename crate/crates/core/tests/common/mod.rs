//! Reference implementations for cross-checking the library.
//!
//! Nothing here calls into the filter or model code of the crate; the IMM
//! below is written out with nalgebra, uses the plain covariance update
//! `(I - KH)P` and normalizes mode weights directly in linear space.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

/// Tolerances used by the oracle comparisons.
pub struct OracleTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl OracleTolerance {
    /// Main filter against the naive IMM.
    pub const FILTER: OracleTolerance = OracleTolerance {
        relative: 1e-8,
        absolute: 1e-9,
    };
    /// Autodiff against central differences.
    pub const GRADIENT: OracleTolerance = OracleTolerance {
        relative: 1e-4,
        absolute: 1e-6,
    };

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.absolute + self.relative * a.abs().max(b.abs())
    }
}

fn f_matrix(tau: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, tau, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, tau, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn q_matrix(sigma_v: f64, tau: f64) -> Matrix4<f64> {
    let s2 = sigma_v * sigma_v;
    let (a, b, c) = (tau.powi(3) / 3.0 * s2, tau * tau / 2.0 * s2, tau * s2);
    Matrix4::new(
        a, b, 0.0, 0.0, //
        b, c, 0.0, 0.0, //
        0.0, 0.0, a, b, //
        0.0, 0.0, b, c,
    )
}

fn h_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

fn gauss_pdf(z: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
    let d = z - mean;
    let det = cov.determinant();
    let inv = cov.try_inverse().expect("invertible covariance");
    (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

fn gauss_log_pdf(z: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
    let d = z - mean;
    let inv = cov.try_inverse().expect("invertible covariance");
    -0.5 * (d.transpose() * inv * d)[(0, 0)] - 0.5 * cov.determinant().ln() - (2.0 * std::f64::consts::PI).ln()
}

/// Per-step output of the naive IMM.
#[derive(Debug, Clone)]
pub struct OracleStep {
    pub predicted_weights: Vec<f64>,
    pub posterior_weights: Vec<f64>,
    pub posterior_means: Vec<Vector4<f64>>,
    pub posterior_covs: Vec<Matrix4<f64>>,
    /// Weight-averaged predicted and posterior means.
    pub predicted_mean: Vector4<f64>,
    pub posterior_mean: Vector4<f64>,
    /// `-log N(z_t; z_hat, S_hat)` of the moment-matched prediction.
    pub nll: f64,
}

/// Naive IMM over `z`, initialized by two-point differencing with uniform
/// weights; one entry per step `t >= 2`.
pub fn naive_imm_reference(z: &[[f64; 2]], sigma_v: &[f64], p_stay: &[f64], sigma_r: f64, tau: f64) -> Vec<OracleStep> {
    let m = sigma_v.len();
    let pi = |i: usize, j: usize| -> f64 {
        if m == 1 {
            1.0
        } else if i == j {
            p_stay[i]
        } else {
            (1.0 - p_stay[i]) / (m - 1) as f64
        }
    };
    let f = f_matrix(tau);
    let h = h_matrix();
    let r = Matrix2::identity() * sigma_r * sigma_r;

    let r2 = sigma_r * sigma_r;
    let x0 = Vector4::new(z[1][0], (z[1][0] - z[0][0]) / tau, z[1][1], (z[1][1] - z[0][1]) / tau);
    let mut p0 = Matrix4::zeros();
    for b in [0, 2] {
        p0[(b, b)] = r2;
        p0[(b, b + 1)] = r2 / tau;
        p0[(b + 1, b)] = r2 / tau;
        p0[(b + 1, b + 1)] = 2.0 * r2 / (tau * tau);
    }
    let mut xs = vec![x0; m];
    let mut ps = vec![p0; m];
    let mut mu = vec![1.0 / m as f64; m];

    let mut out = Vec::new();
    for zt in &z[2..] {
        let zt = Vector2::new(zt[0], zt[1]);
        // interaction
        let c: Vec<f64> = (0..m).map(|j| (0..m).map(|i| pi(i, j) * mu[i]).sum()).collect();
        let mut x_mix = vec![Vector4::zeros(); m];
        let mut p_mix = vec![Matrix4::zeros(); m];
        for j in 0..m {
            for i in 0..m {
                x_mix[j] += xs[i] * (pi(i, j) * mu[i] / c[j]);
            }
            for i in 0..m {
                let d = xs[i] - x_mix[j];
                p_mix[j] += (ps[i] + d * d.transpose()) * (pi(i, j) * mu[i] / c[j]);
            }
        }
        // mode-matched prediction
        let x_pred: Vec<Vector4<f64>> = x_mix.iter().map(|x| f * x).collect();
        let p_pred: Vec<Matrix4<f64>> = (0..m).map(|j| f * p_mix[j] * f.transpose() + q_matrix(sigma_v[j], tau)).collect();
        let s: Vec<Matrix2<f64>> = p_pred.iter().map(|p| h * p * h.transpose() + r).collect();

        // moment-matched measurement prediction
        let mut x_bar = Vector4::zeros();
        for j in 0..m {
            x_bar += x_pred[j] * c[j];
        }
        let z_hat = h * x_bar;
        let mut s_hat = Matrix2::zeros();
        for j in 0..m {
            let nu = h * x_pred[j] - z_hat;
            s_hat += (s[j] + nu * nu.transpose()) * c[j];
        }
        let nll = -gauss_log_pdf(&zt, &z_hat, &s_hat);

        // update with the plain covariance form
        let mut lik = vec![0.0; m];
        for j in 0..m {
            let k = p_pred[j] * h.transpose() * s[j].try_inverse().expect("invertible innovation");
            xs[j] = x_pred[j] + k * (zt - h * x_pred[j]);
            ps[j] = (Matrix4::identity() - k * h) * p_pred[j];
            lik[j] = gauss_pdf(&zt, &(h * x_pred[j]), &s[j]);
        }
        let norm: f64 = (0..m).map(|j| lik[j] * c[j]).sum();
        mu = (0..m).map(|j| lik[j] * c[j] / norm).collect();

        let mut x_post = Vector4::zeros();
        for j in 0..m {
            x_post += xs[j] * mu[j];
        }
        out.push(OracleStep {
            predicted_weights: c,
            posterior_weights: mu.clone(),
            posterior_means: xs.clone(),
            posterior_covs: ps.clone(),
            predicted_mean: x_bar,
            posterior_mean: x_post,
            nll,
        });
    }
    out
}

/// Textbook Kalman filter with the same initialization; returns posterior
/// means and the summed NLL over steps `t >= 2`.
pub fn textbook_kf(z: &[[f64; 2]], sigma_v: f64, sigma_r: f64, tau: f64) -> (Vec<Vector4<f64>>, f64) {
    let f = f_matrix(tau);
    let h = h_matrix();
    let q = q_matrix(sigma_v, tau);
    let r = Matrix2::identity() * sigma_r * sigma_r;
    let r2 = sigma_r * sigma_r;
    let mut x = Vector4::new(z[1][0], (z[1][0] - z[0][0]) / tau, z[1][1], (z[1][1] - z[0][1]) / tau);
    let mut p = Matrix4::zeros();
    for b in [0, 2] {
        p[(b, b)] = r2;
        p[(b, b + 1)] = r2 / tau;
        p[(b + 1, b)] = r2 / tau;
        p[(b + 1, b + 1)] = 2.0 * r2 / (tau * tau);
    }
    let mut means = Vec::new();
    let mut nll = 0.0;
    for zt in &z[2..] {
        let zt = Vector2::new(zt[0], zt[1]);
        let xp = f * x;
        let pp = f * p * f.transpose() + q;
        let s = h * pp * h.transpose() + r;
        nll -= gauss_log_pdf(&zt, &(h * xp), &s);
        let k = pp * h.transpose() * s.try_inverse().expect("invertible innovation");
        x = xp + k * (zt - h * xp);
        p = (Matrix4::identity() - k * h) * pp;
        means.push(x);
    }
    (means, nll)
}

/// Central differences of `f` at `x` with step `h` per coordinate.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            assert!(up.is_finite() && down.is_finite(), "non-finite evaluation near coordinate {i}");
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative change `|a - b|_inf / |a|_inf` of the central-difference
/// gradient between steps `coarse` and `fine`.
pub fn step_sensitivity(f: impl Fn(&[f64]) -> f64, x: &[f64], coarse: f64, fine: f64) -> f64 {
    let a = finite_difference_gradient(&f, x, coarse);
    let b = finite_difference_gradient(&f, x, fine);
    let diff = a.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Expand a 4x1 library state into nalgebra for comparisons.
pub fn vec4(v: [f64; 4]) -> Vector4<f64> {
    Vector4::new(v[0], v[1], v[2], v[3])
}
