use crate::autodiff::{Cholesky, Matrix, Scalar};
use crate::error::Result;
use crate::models::{MeasurementModel, MotionModel};

/// Mean and covariance of one (mode-conditioned) estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<S = f64> {
    /// 4×1 state mean `(px, vx, py, vy)`.
    pub x: Matrix<S>,
    /// 4×4 covariance.
    pub p: Matrix<S>,
}

impl<S: Scalar> GaussianState<S> {
    pub fn new(x: Matrix<S>, p: Matrix<S>) -> Self {
        Self { x, p }
    }

    pub fn values(&self) -> GaussianState<f64> {
        GaussianState {
            x: self.x.values(),
            p: self.p.values(),
        }
    }
}

/// `x ↦ f(x)`, `P ↦ F P Fᵀ + Q`.
pub fn kf_predict<S: Scalar, M: MotionModel>(
    s: &GaussianState<S>,
    motion: &M,
    q: &Matrix<S>,
) -> Result<GaussianState<S>> {
    let f = motion.jacobian(&s.x.values());
    let x = motion.propagate(&s.x)?;
    let p = s.p.lmul_const(&f)?.rmul_const(&f.transpose())?.add(q)?.symmetrize()?;
    Ok(GaussianState { x, p })
}

/// Innovation covariance `S = H P Hᵀ + R`.
pub fn innovation_cov<S: Scalar>(p: &Matrix<S>, h: &Matrix<f64>, r: &Matrix<S>) -> Result<Matrix<S>> {
    p.lmul_const(h)?.rmul_const(&h.transpose())?.add(r)?.symmetrize()
}

/// Measurement update with the Joseph-form covariance.
///
/// Returns the posterior and `log N(z; h(x), S)`.
pub fn kf_update<S: Scalar, H: MeasurementModel>(
    s: &GaussianState<S>,
    z: &[f64],
    sensor: &H,
    r: &Matrix<S>,
) -> Result<(GaussianState<S>, S)> {
    let h = sensor.jacobian(&s.x.values());
    let innov = innovation_cov(&s.p, &h, r)?;
    let chol = Cholesky::factor(&innov)?;
    update_factored(s, z, sensor, &h, r, &chol)
}

/// Update given a factored innovation covariance (shared with the
/// measurement-moment computation of the IMM step).
pub(crate) fn update_factored<S: Scalar, H: MeasurementModel>(
    s: &GaussianState<S>,
    z: &[f64],
    sensor: &H,
    h: &Matrix<f64>,
    r: &Matrix<S>,
    chol: &Cholesky<S>,
) -> Result<(GaussianState<S>, S)> {
    let z_pred = sensor.measure(&s.x)?;
    let loglik = chol.log_pdf(z, &z_pred)?;

    // K = P Hᵀ S⁻¹, solved as Kᵀ = S⁻¹ (H P) with P and S symmetric.
    let hp = s.p.lmul_const(h)?;
    let gain = chol.solve(&hp)?.transpose();

    let nu = Matrix::from_fn(z.len(), 1, |i, _| S::constant(z[i]) - z_pred[(i, 0)]);
    let x = s.x.add(&gain.mul(&nu)?)?;

    let n = s.p.rows();
    let a = Matrix::<S>::identity(n).sub(&gain.rmul_const(h)?)?;
    let joseph = a.mul(&s.p)?.mul(&a.transpose())?;
    let noise = gain.mul(r)?.mul(&gain.transpose())?;
    let p = joseph.add(&noise)?.symmetrize()?;
    Ok((GaussianState { x, p }, loglik))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{solve_spd, DiffScalar};
    use crate::models::{build_q, build_r, DwnaMotion, ModelConfig, PositionSensor};

    fn cfg() -> ModelConfig {
        ModelConfig::new(1.0, 1).unwrap()
    }

    fn random_spd(seed: u64) -> Matrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
        a.mul(&a.transpose()).unwrap().add(&Matrix::identity(4).scale_real(0.1)).unwrap()
    }

    #[test]
    fn predict_identity_without_noise() {
        struct Still;
        impl MotionModel for Still {
            fn propagate<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
                Ok(x.clone())
            }
            fn jacobian(&self, _x: &Matrix<f64>) -> Matrix<f64> {
                Matrix::identity(4)
            }
        }
        let s = GaussianState::new(Matrix::column(&[1.0, 2.0, 3.0, 4.0]), random_spd(1));
        let out = kf_predict(&s, &Still, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn constant_velocity_step() {
        let motion = DwnaMotion::new(&cfg());
        let s = GaussianState::new(Matrix::column(&[0.0, 1.0, 0.0, 0.0]), Matrix::identity(4));
        let out = kf_predict(&s, &motion, &build_q(1.0, &cfg())).unwrap();
        assert_eq!(out.x, Matrix::column(&[1.0, 1.0, 0.0, 0.0]));
        assert!((out.p[(0, 0)] - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let s = GaussianState::new(Matrix::column(&[10.0, 1.0, -5.0, 2.0]), random_spd(2));
        let (post, _) = kf_update(&s, &[500.0, -300.0], &PositionSensor::default(), &build_r(1e6)).unwrap();
        for i in 0..4 {
            let prior = s.x[(i, 0)];
            assert!((post.x[(i, 0)] - prior).abs() <= 1e-3 * prior.abs(), "{i}");
        }
    }

    #[test]
    fn scalar_gain_halves_position_variance() {
        let s = GaussianState::new(Matrix::column(&[1.0, 0.5, 2.0, -0.5]), Matrix::identity(4));
        let (post, _) = kf_update(&s, &[1.0, 2.0], &PositionSensor::default(), &build_r(1.0)).unwrap();
        assert_eq!(post.x, s.x);
        assert!((post.p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((post.p[(2, 2)] - 0.5).abs() < 1e-15);
        assert!((post.p[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joseph_matches_simple_form_at_optimal_gain() {
        let h = crate::models::build_h();
        let r = build_r(1.7);
        for seed in 0..10 {
            let p = random_spd(seed + 10);
            let s = GaussianState::new(Matrix::column(&[0.0; 4]), p.clone());
            let (post, _) = kf_update(&s, &[0.3, -0.1], &PositionSensor::default(), &r).unwrap();
            let sm = innovation_cov(&p, &h, &r).unwrap();
            let k = solve_spd(&sm, &h.mul(&p).unwrap()).unwrap().transpose();
            let simple = Matrix::identity(4).sub(&k.mul(&h).unwrap()).unwrap().mul(&p).unwrap();
            for (a, b) in post.p.iter().zip(simple.iter()) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn non_pd_innovation_is_an_error() {
        let s = GaussianState::new(Matrix::column(&[0.0; 4]), Matrix::zeros(4, 4));
        let r = Matrix::diagonal(&[-1.0, 1.0]);
        assert!(kf_update(&s, &[0.0, 0.0], &PositionSensor::default(), &r).is_err());
    }

    #[test]
    fn update_gradient_wrt_measurement_noise() {
        type D = DiffScalar<5>;
        let p = random_spd(5);
        let run = |sr: D| {
            let s = GaussianState::new(Matrix::column(&[1.0, 0.2, -1.0, 0.1]).lift::<D>(), p.lift());
            kf_update(&s, &[2.0, -0.5], &PositionSensor::default(), &build_r(sr)).unwrap()
        };
        let (post, ll) = run(D::lift_parameter(1.5, 4).unwrap());
        let h = 1e-6;
        let (pp, lp) = run(D::lift_constant(1.5 + h));
        let (pm, lm) = run(D::lift_constant(1.5 - h));
        let fd = (lp.value - lm.value) / (2.0 * h);
        assert!((ll.tangent[4] - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        for i in 0..4 {
            let fd = (pp.x[(i, 0)].value - pm.x[(i, 0)].value) / (2.0 * h);
            assert!((post.x[(i, 0)].tangent[4] - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}
