use super::kalman::{innovation_cov, kf_predict, update_factored, GaussianState};
use crate::autodiff::{log_sum_exp, Cholesky, Matrix, Scalar};
use crate::error::{Error, Result};
use crate::models::{ImmModel, MeasurementModel, ModelConfig, TransitionMatrix, MEAS_DIM, STATE_DIM};

/// Predicted mode weights below this are clamped (without gradient).
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Below this the whole predicted mode distribution is considered collapsed.
const UNDERFLOW: f64 = 1e-300;

/// Per-mode estimates and mode weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmBelief<S = f64> {
    pub modes: Vec<GaussianState<S>>,
    pub weights: Vec<S>,
}

impl<S: Scalar> ImmBelief<S> {
    pub fn n_modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_values(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.value()).collect()
    }
}

/// Moment-matched one-step-ahead measurement distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasPrediction<S = f64> {
    /// 2×1 predicted measurement.
    pub z_hat: Matrix<S>,
    /// 2×2 predicted measurement covariance.
    pub s_hat: Matrix<S>,
}

impl<S: Scalar> MeasPrediction<S> {
    /// `log N(z; ẑ, Ŝ)`.
    pub fn log_likelihood(&self, z: &[f64]) -> Result<S> {
        Cholesky::factor(&self.s_hat)?.log_pdf(z, &self.z_hat)
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord<S = f64> {
    /// Predicted weights and mode-conditioned predicted states.
    pub predicted: ImmBelief<S>,
    pub posterior: ImmBelief<S>,
    /// `log Λ^j` per mode.
    pub per_mode_loglik: Vec<S>,
    /// `log c`.
    pub normalizer_log: S,
    pub meas_prediction: MeasPrediction<S>,
}

/// Mode interaction: predicted weights and mixed initial conditions.
pub fn imm_mix<S: Scalar>(
    b: &ImmBelief<S>,
    transition: &TransitionMatrix<S>,
) -> Result<(Vec<GaussianState<S>>, Vec<S>)> {
    let m = b.n_modes();
    if transition.modes() != m || b.modes.len() != m {
        return Err(Error::Config(format!(
            "belief has {m} modes, transition matrix has {}",
            transition.modes()
        )));
    }

    let mut raw = Vec::with_capacity(m);
    for j in 0..m {
        let w: S = (0..m).map(|i| transition.get(i, j) * b.weights[i]).sum();
        if !w.value().is_finite() || w.value() < 0.0 {
            return Err(Error::DegenerateWeight {
                mode: j,
                detail: format!("predicted weight {}", w.value()),
            });
        }
        raw.push(w);
    }
    let total: f64 = raw.iter().map(|w| w.value()).sum();
    if total < UNDERFLOW {
        let mode = (0..m)
            .min_by(|&a, &c| raw[a].value().total_cmp(&raw[c].value()))
            .unwrap_or(0);
        return Err(Error::DegenerateWeight {
            mode,
            detail: format!("predicted weights collapsed (sum {total:e})"),
        });
    }

    let mut mixed = Vec::with_capacity(m);
    for (j, &w_pred) in raw.iter().enumerate() {
        if w_pred.value() < UNDERFLOW {
            mixed.push(b.modes[j].clone());
            continue;
        }
        let mix_w: Vec<S> = (0..m)
            .map(|i| transition.get(i, j) * b.weights[i] / w_pred)
            .collect();
        let mut x = Matrix::zeros(STATE_DIM, 1);
        for (i, &w) in mix_w.iter().enumerate() {
            x = x.add(&b.modes[i].x.scale(w))?;
        }
        let mut p = Matrix::zeros(STATE_DIM, STATE_DIM);
        for (i, &w) in mix_w.iter().enumerate() {
            let d = b.modes[i].x.sub(&x)?;
            p = p.add(&b.modes[i].p.add(&Matrix::outer(&d, &d)?)?.scale(w))?;
        }
        mixed.push(GaussianState::new(x, p.symmetrize()?));
    }

    let mut predicted = raw;
    if predicted.iter().any(|w| w.value() < WEIGHT_FLOOR) {
        for w in &mut predicted {
            if w.value() < WEIGHT_FLOOR {
                *w = S::constant(WEIGHT_FLOOR);
            }
        }
        let sum: S = predicted.iter().copied().sum();
        for w in &mut predicted {
            *w = *w / sum;
        }
    }
    Ok((mixed, predicted))
}

/// Moment-matched predicted measurement from per-mode predicted states.
pub fn predicted_measurement_moments<S: Scalar, H: MeasurementModel>(
    modes: &[GaussianState<S>],
    weights: &[S],
    sensor: &H,
    r: &Matrix<S>,
) -> Result<MeasPrediction<S>> {
    let innov: Vec<Matrix<S>> = modes
        .iter()
        .map(|s| innovation_cov(&s.p, &sensor.jacobian(&s.x.values()), r))
        .collect::<Result<_>>()?;
    moments_with(modes, weights, sensor, &innov)
}

fn moments_with<S: Scalar, H: MeasurementModel>(
    modes: &[GaussianState<S>],
    weights: &[S],
    sensor: &H,
    innov: &[Matrix<S>],
) -> Result<MeasPrediction<S>> {
    let mut x_hat = Matrix::zeros(STATE_DIM, 1);
    for (s, &w) in modes.iter().zip(weights) {
        x_hat = x_hat.add(&s.x.scale(w))?;
    }
    let z_hat = sensor.measure(&x_hat)?;
    let mut s_hat = Matrix::zeros(MEAS_DIM, MEAS_DIM);
    for ((s, &w), si) in modes.iter().zip(weights).zip(innov) {
        let nu = sensor.measure(&s.x)?.sub(&z_hat)?;
        s_hat = s_hat.add(&si.add(&Matrix::outer(&nu, &nu)?)?.scale(w))?;
    }
    Ok(MeasPrediction {
        z_hat,
        s_hat: s_hat.symmetrize()?,
    })
}

/// One full IMM recursion: mix, predict, predict the measurement
/// distribution, update every mode, reweight.
pub fn imm_step<S: Scalar>(b: &ImmBelief<S>, z: &[f64], model: &ImmModel<S>) -> Result<StepRecord<S>> {
    let m = b.n_modes();
    if model.q.len() != m {
        return Err(Error::Config(format!(
            "belief has {m} modes, model has {}",
            model.q.len()
        )));
    }
    let (mixed, w_pred) = imm_mix(b, &model.transition)?;
    let predicted: Vec<GaussianState<S>> = mixed
        .iter()
        .zip(&model.q)
        .map(|(s, q)| kf_predict(s, &model.motion, q))
        .collect::<Result<_>>()?;

    let jacobians: Vec<Matrix<f64>> = predicted
        .iter()
        .map(|s| model.sensor.jacobian(&s.x.values()))
        .collect();
    let innov: Vec<Matrix<S>> = predicted
        .iter()
        .zip(&jacobians)
        .map(|(s, h)| innovation_cov(&s.p, h, &model.r))
        .collect::<Result<_>>()?;
    let meas_prediction = moments_with(&predicted, &w_pred, &model.sensor, &innov)?;

    let mut posterior_modes = Vec::with_capacity(m);
    let mut loglik = Vec::with_capacity(m);
    for ((s, h), si) in predicted.iter().zip(&jacobians).zip(&innov) {
        let chol = Cholesky::factor(si)?;
        let (post, ll) = update_factored(s, z, &model.sensor, h, &model.r, &chol)?;
        posterior_modes.push(post);
        loglik.push(ll);
    }

    let joint: Vec<S> = loglik
        .iter()
        .zip(&w_pred)
        .map(|(&l, &w)| Ok(l + w.ln()?))
        .collect::<Result<_>>()?;
    let normalizer_log = log_sum_exp(&joint).map_err(|_| Error::DegenerateWeight {
        mode: 0,
        detail: "all mode likelihoods vanished".into(),
    })?;
    let weights: Vec<S> = joint.iter().map(|&j| (j - normalizer_log).exp()).collect();

    Ok(StepRecord {
        predicted: ImmBelief {
            modes: predicted,
            weights: w_pred,
        },
        posterior: ImmBelief {
            modes: posterior_modes,
            weights,
        },
        per_mode_loglik: loglik,
        normalizer_log,
        meas_prediction,
    })
}

/// Condensed single-Gaussian representation of a belief.
pub fn imm_combine<S: Scalar>(b: &ImmBelief<S>) -> Result<GaussianState<S>> {
    let mut x = Matrix::zeros(STATE_DIM, 1);
    for (s, &w) in b.modes.iter().zip(&b.weights) {
        x = x.add(&s.x.scale(w))?;
    }
    let mut p = Matrix::zeros(STATE_DIM, STATE_DIM);
    for (s, &w) in b.modes.iter().zip(&b.weights) {
        let d = s.x.sub(&x)?;
        p = p.add(&s.p.add(&Matrix::outer(&d, &d)?)?.scale(w))?;
    }
    Ok(GaussianState::new(x, p.symmetrize()?))
}

/// Weighted mean position only; cheaper than [`imm_combine`] for metrics.
pub fn combined_mean<S: Scalar>(b: &ImmBelief<S>) -> Result<Matrix<S>> {
    let mut x = Matrix::zeros(STATE_DIM, 1);
    for (s, &w) in b.modes.iter().zip(&b.weights) {
        x = x.add(&s.x.scale(w))?;
    }
    Ok(x)
}

/// Two-point differencing initialization shared by all modes.
pub fn init_belief<S: Scalar>(z0: &[f64; 2], z1: &[f64; 2], sigma_r: S, cfg: &ModelConfig) -> ImmBelief<S> {
    let tau = cfg.tau;
    let var = sigma_r * sigma_r;
    let x = Matrix::column(&[
        S::constant(z1[0]),
        S::constant((z1[0] - z0[0]) / tau),
        S::constant(z1[1]),
        S::constant((z1[1] - z0[1]) / tau),
    ]);
    let mut p = Matrix::zeros(STATE_DIM, STATE_DIM);
    for base in [0, 2] {
        p[(base, base)] = var;
        p[(base, base + 1)] = var.scale(1.0 / tau);
        p[(base + 1, base)] = var.scale(1.0 / tau);
        p[(base + 1, base + 1)] = var.scale(2.0 / (tau * tau));
    }
    let state = GaussianState::new(x, p);
    let m = cfg.m;
    ImmBelief {
        modes: vec![state; m],
        weights: vec![S::constant(1.0 / m as f64); m],
    }
}

/// Run the filter over a measurement sequence: initialize on the first two
/// measurements, then step for `t = 2..T`, handing each record to `visit`.
pub fn run_filter<S: Scalar>(
    measurements: &[[f64; 2]],
    model: &ImmModel<S>,
    mut visit: impl FnMut(usize, &StepRecord<S>) -> Result<()>,
) -> Result<ImmBelief<S>> {
    if measurements.len() < 2 {
        return Err(Error::Data(format!(
            "need at least two measurements, got {}",
            measurements.len()
        )));
    }
    let mut belief = init_belief(&measurements[0], &measurements[1], model.sigma_r, &model.cfg);
    for (t, z) in measurements.iter().enumerate().skip(2) {
        let record = imm_step(&belief, z, model).map_err(|e| e.at_step(t))?;
        visit(t, &record).map_err(|e| e.at_step(t))?;
        belief = record.posterior;
    }
    Ok(belief)
}
