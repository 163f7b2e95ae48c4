//! Motion and measurement models, filter parameters and their
//! unconstrained reparametrization.
//!
//! The shipped models are the 2-D discretized white noise acceleration
//! (DWNA) motion model with state `(px, vx, py, vy)` and a linear sensor
//! observing both positions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DiffScalar, Matrix, Scalar};
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const MEAS_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Time step in seconds.
    pub tau: f64,
    /// Number of modes.
    pub m: usize,
}

impl ModelConfig {
    pub fn new(tau: f64, m: usize) -> Result<Self> {
        let cfg = Self { tau, m };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.m == 0 {
            return Err(Error::Config("at least one mode is required".into()));
        }
        Ok(())
    }

    /// Number of trainable parameters: one noise level per mode, one stay
    /// probability per mode when there is more than one mode, and the
    /// measurement noise.
    pub fn n_params(&self) -> usize {
        if self.m >= 2 {
            2 * self.m + 1
        } else {
            2
        }
    }

    pub fn param_names(&self) -> Vec<ParamName> {
        let mut names: Vec<_> = (0..self.m).map(ParamName::SigmaV).collect();
        if self.m >= 2 {
            names.extend((0..self.m).map(ParamName::PStay));
        }
        names.push(ParamName::SigmaR);
        names
    }

    /// Tangent/flat index of a parameter.
    pub fn slot_of(&self, name: ParamName) -> Option<usize> {
        self.param_names().iter().position(|&n| n == name)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { tau: 1.0, m: 2 }
    }
}

/// Addressable filter parameter, as used by sweeps and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    SigmaV(usize),
    PStay(usize),
    SigmaR,
}

impl ParamName {
    pub const VALID: &'static str = "sigma_v0, sigma_v1, p00, p11, sigma_r";
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamName::SigmaV(i) => write!(f, "sigma_v{i}"),
            ParamName::PStay(i) => write!(f, "p{i}{i}"),
            ParamName::SigmaR => write!(f, "sigma_r"),
        }
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown parameter '{s}'; valid names: {}", Self::VALID));
        if s == "sigma_r" {
            return Ok(ParamName::SigmaR);
        }
        if let Some(idx) = s.strip_prefix("sigma_v") {
            return idx.parse().map(ParamName::SigmaV).map_err(|_| unknown());
        }
        if let Some(rest) = s.strip_prefix('p') {
            let half = rest.len() / 2;
            if rest.len() % 2 == 0 && half > 0 && rest[..half] == rest[half..] {
                return rest[..half].parse().map(ParamName::PStay).map_err(|_| unknown());
            }
        }
        Err(unknown())
    }
}

/// Filter parameters in their natural (constrained) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<S = f64> {
    /// Process-noise standard deviation per mode, m/s^(3/2).
    pub sigma_v: Vec<S>,
    /// Probability of staying in each mode for one step.
    pub p_stay: Vec<S>,
    /// Measurement-noise standard deviation, metres.
    pub sigma_r: S,
}

impl ParamVector<f64> {
    pub fn new(sigma_v: Vec<f64>, p_stay: Vec<f64>, sigma_r: f64) -> Result<Self> {
        let p = Self {
            sigma_v,
            p_stay,
            sigma_r,
        };
        p.validate()?;
        Ok(p)
    }

    /// Single-mode parameter set; the stay probability is fixed to one.
    pub fn single_mode(sigma_v: f64, sigma_r: f64) -> Result<Self> {
        Self::new(vec![sigma_v], vec![1.0], sigma_r)
    }

    pub fn modes(&self) -> usize {
        self.sigma_v.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.sigma_v.len();
        if m == 0 || self.p_stay.len() != m {
            return Err(Error::Config(format!(
                "need one sigma_v and one p_stay per mode, got {} and {}",
                m,
                self.p_stay.len()
            )));
        }
        let all = self.sigma_v.iter().chain(&self.p_stay).chain(std::iter::once(&self.sigma_r));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Config("parameters must be finite".into()));
        }
        if self.sigma_v.iter().any(|&s| s <= 0.0) || self.sigma_r <= 0.0 {
            return Err(Error::Config("noise levels must be strictly positive".into()));
        }
        if m == 1 {
            if self.p_stay[0] != 1.0 {
                return Err(Error::Config("single-mode p_stay must be 1".into()));
            }
        } else if self.p_stay.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("p_stay must lie strictly inside (0, 1)".into()));
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> Option<f64> {
        match name {
            ParamName::SigmaV(i) => self.sigma_v.get(i).copied(),
            ParamName::PStay(i) if self.modes() >= 2 => self.p_stay.get(i).copied(),
            ParamName::PStay(_) => None,
            ParamName::SigmaR => Some(self.sigma_r),
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) -> Result<()> {
        let slot = match name {
            ParamName::SigmaV(i) => self.sigma_v.get_mut(i),
            ParamName::PStay(i) if self.sigma_v.len() >= 2 => self.p_stay.get_mut(i),
            ParamName::PStay(_) => None,
            ParamName::SigmaR => Some(&mut self.sigma_r),
        };
        match slot {
            Some(s) => {
                *s = value;
                Ok(())
            }
            None => Err(Error::Config(format!(
                "parameter {name} does not exist for {} mode(s)",
                self.modes()
            ))),
        }
    }

    /// `σ = exp(ρ)`, `p = sigmoid(λ)` inverted.
    pub fn to_unconstrained(&self) -> Result<UnconstrainedParams> {
        self.validate()?;
        let lambda_p = if self.modes() >= 2 {
            self.p_stay.iter().map(|&p| (p / (1.0 - p)).ln()).collect()
        } else {
            Vec::new()
        };
        Ok(UnconstrainedParams {
            rho_v: self.sigma_v.iter().map(|s| s.ln()).collect(),
            lambda_p,
            rho_r: self.sigma_r.ln(),
        })
    }

    pub fn lift<S: Scalar>(&self) -> ParamVector<S> {
        ParamVector {
            sigma_v: self.sigma_v.iter().map(|&v| S::constant(v)).collect(),
            p_stay: self.p_stay.iter().map(|&v| S::constant(v)).collect(),
            sigma_r: S::constant(self.sigma_r),
        }
    }
}

impl<S: Scalar> ParamVector<S> {
    pub fn values(&self) -> ParamVector<f64> {
        ParamVector {
            sigma_v: self.sigma_v.iter().map(|v| v.value()).collect(),
            p_stay: self.p_stay.iter().map(|v| v.value()).collect(),
            sigma_r: self.sigma_r.value(),
        }
    }
}

/// Optimization variables: `ρ = log σ`, `λ = logit p`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedParams {
    pub rho_v: Vec<f64>,
    /// Empty for a single-mode filter.
    pub lambda_p: Vec<f64>,
    pub rho_r: f64,
}

impl UnconstrainedParams {
    pub fn modes(&self) -> usize {
        self.rho_v.len()
    }

    pub fn to_constrained(&self) -> Result<ParamVector> {
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("unconstrained parameters must be finite".into()));
        }
        let p_stay = if self.modes() >= 2 {
            self.lambda_p.iter().map(|&l| l.sigmoid()).collect()
        } else {
            vec![1.0]
        };
        Ok(ParamVector {
            sigma_v: self.rho_v.iter().map(|r| r.exp()).collect(),
            p_stay,
            sigma_r: self.rho_r.exp(),
        })
    }

    /// Flat layout matching [`ModelConfig::param_names`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.rho_v.clone();
        v.extend(&self.lambda_p);
        v.push(self.rho_r);
        v
    }

    pub fn from_flat(m: usize, flat: &[f64]) -> Result<Self> {
        let n = ModelConfig { tau: 1.0, m }.n_params();
        if flat.len() != n {
            return Err(Error::Config(format!(
                "expected {n} unconstrained values for {m} mode(s), got {}",
                flat.len()
            )));
        }
        let lambda_len = if m >= 2 { m } else { 0 };
        Ok(Self {
            rho_v: flat[..m].to_vec(),
            lambda_p: flat[m..m + lambda_len].to_vec(),
            rho_r: flat[n - 1],
        })
    }

    /// Map to differentiable constrained parameters. Trainable coordinates
    /// are seeded into their own tangent slot; frozen ones are constants.
    pub fn lift<const D: usize>(&self, mask: &FreezeMask) -> Result<ParamVector<DiffScalar<D>>> {
        let m = self.modes();
        let cfg = ModelConfig { tau: 1.0, m };
        if cfg.n_params() > D {
            return Err(Error::Config(format!(
                "{} parameters exceed the {D} tangent slots of the engine",
                cfg.n_params()
            )));
        }
        let flat = self.to_flat();
        let names = cfg.param_names();
        let lifted: Vec<DiffScalar<D>> = flat
            .iter()
            .zip(&names)
            .enumerate()
            .map(|(slot, (&v, &name))| {
                if mask.is_trainable(name) {
                    DiffScalar::lift_parameter(v, slot)
                } else {
                    Ok(DiffScalar::lift_constant(v))
                }
            })
            .collect::<Result<_>>()?;
        let sigma_v = lifted[..m].iter().map(|r| r.exp()).collect();
        let p_stay = if m >= 2 {
            lifted[m..2 * m].iter().map(|l| l.sigmoid()).collect()
        } else {
            vec![DiffScalar::one()]
        };
        Ok(ParamVector {
            sigma_v,
            p_stay,
            sigma_r: lifted[lifted.len() - 1].exp(),
        })
    }
}

/// Which parameter groups are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub train_sigma_v: bool,
    pub train_p_stay: bool,
    pub train_sigma_r: bool,
}

impl FreezeMask {
    pub const ALL: FreezeMask = FreezeMask {
        train_sigma_v: true,
        train_p_stay: true,
        train_sigma_r: true,
    };
    pub const NONE: FreezeMask = FreezeMask {
        train_sigma_v: false,
        train_p_stay: false,
        train_sigma_r: false,
    };

    /// Motion group is process noise together with transition probabilities.
    pub fn from_groups(train_motion: bool, train_measurement: bool) -> Self {
        Self {
            train_sigma_v: train_motion,
            train_p_stay: train_motion,
            train_sigma_r: train_measurement,
        }
    }

    pub fn is_trainable(&self, name: ParamName) -> bool {
        match name {
            ParamName::SigmaV(_) => self.train_sigma_v,
            ParamName::PStay(_) => self.train_p_stay,
            ParamName::SigmaR => self.train_sigma_r,
        }
    }

    pub fn any(&self) -> bool {
        self.train_sigma_v || self.train_p_stay || self.train_sigma_r
    }
}

impl Default for FreezeMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// On-disk parameter document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDocument {
    pub sigma_v: Vec<f64>,
    pub p_stay: Vec<f64>,
    pub sigma_r: f64,
    pub tau: f64,
    pub m: usize,
}

impl ParamDocument {
    pub fn new(params: &ParamVector, cfg: &ModelConfig) -> Self {
        Self {
            sigma_v: params.sigma_v.clone(),
            p_stay: params.p_stay.clone(),
            sigma_r: params.sigma_r,
            tau: cfg.tau,
            m: cfg.m,
        }
    }

    pub fn split(&self) -> Result<(ParamVector, ModelConfig)> {
        let cfg = ModelConfig::new(self.tau, self.m)?;
        let params = ParamVector::new(self.sigma_v.clone(), self.p_stay.clone(), self.sigma_r)?;
        if params.modes() != cfg.m {
            return Err(Error::Config(format!(
                "m = {} but {} sigma_v entries given",
                cfg.m,
                params.modes()
            )));
        }
        Ok((params, cfg))
    }
}

/// DWNA transition matrix: `[[1, τ], [0, 1]]` per axis.
pub fn build_f(cfg: &ModelConfig) -> Matrix<f64> {
    let t = cfg.tau;
    Matrix::from_rows(&[
        &[1.0, t, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, t],
        &[0.0, 0.0, 0.0, 1.0],
    ])
    .expect("static shape")
}

/// DWNA process noise: `σ_v² [[τ³/3, τ²/2], [τ²/2, τ]]` per axis.
pub fn build_q<S: Scalar>(sigma_v: S, cfg: &ModelConfig) -> Matrix<S> {
    let t = cfg.tau;
    let var = sigma_v * sigma_v;
    let (a, b, c) = (var.scale(t * t * t / 3.0), var.scale(t * t / 2.0), var.scale(t));
    let mut q = Matrix::zeros(STATE_DIM, STATE_DIM);
    for base in [0, 2] {
        q[(base, base)] = a;
        q[(base, base + 1)] = b;
        q[(base + 1, base)] = b;
        q[(base + 1, base + 1)] = c;
    }
    q
}

/// Position selector.
pub fn build_h() -> Matrix<f64> {
    Matrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]]).expect("static shape")
}

/// `R = σ_r² I₂`.
pub fn build_r<S: Scalar>(sigma_r: S) -> Matrix<S> {
    let var = sigma_r * sigma_r;
    Matrix::diagonal(&[var, var])
}

/// Markov mode-transition matrix; entry `(i, j)` is `P(next = j | now = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<S = f64> {
    p: Matrix<S>,
}

impl<S: Scalar> TransitionMatrix<S> {
    /// Stay probabilities on the diagonal, the remainder split uniformly
    /// over the other modes.
    pub fn from_stay(p_stay: &[S]) -> Result<Self> {
        let m = p_stay.len();
        if m == 0 {
            return Err(Error::Config("transition matrix needs at least one mode".into()));
        }
        if m == 1 {
            return Ok(Self {
                p: Matrix::identity(1),
            });
        }
        if p_stay.iter().any(|p| !(p.value() >= 0.0 && p.value() <= 1.0)) {
            return Err(Error::Config("stay probabilities must lie in [0, 1]".into()));
        }
        let share = 1.0 / (m - 1) as f64;
        let p = Matrix::from_fn(m, m, |i, j| {
            if i == j {
                p_stay[i]
            } else {
                (S::one() - p_stay[i]).scale(share)
            }
        });
        Ok(Self { p })
    }

    pub fn from_matrix(p: Matrix<S>) -> Result<Self> {
        if p.rows() != p.cols() || p.rows() == 0 {
            return Err(Error::Shape {
                op: "transition_matrix",
                lhs: p.shape(),
                rhs: (p.rows(), p.rows()),
            });
        }
        for i in 0..p.rows() {
            let sum: f64 = (0..p.cols()).map(|j| p[(i, j)].value()).sum();
            if (sum - 1.0).abs() > 1e-9 || (0..p.cols()).any(|j| p[(i, j)].value() < 0.0) {
                return Err(Error::Config(format!("row {i} is not a probability distribution")));
            }
        }
        Ok(Self { p })
    }

    pub fn modes(&self) -> usize {
        self.p.rows()
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> S {
        self.p[(from, to)]
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.p
    }

    /// Stationary distribution of the chain (power iteration on the values).
    pub fn stationary(&self) -> Vec<f64> {
        let m = self.modes();
        if m == 2 {
            let (p00, p11) = (self.p[(0, 0)].value(), self.p[(1, 1)].value());
            let denom = 2.0 - p00 - p11;
            if denom > 0.0 {
                let pi0 = (1.0 - p11) / denom;
                return vec![pi0, 1.0 - pi0];
            }
            return vec![0.5, 0.5];
        }
        let mut pi = vec![1.0 / m as f64; m];
        for _ in 0..10_000 {
            let next: Vec<f64> = (0..m)
                .map(|j| (0..m).map(|i| pi[i] * self.p[(i, j)].value()).sum())
                .collect();
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }
}

/// State propagation `x ↦ f(x)` and its Jacobian.
pub trait MotionModel: Send + Sync {
    fn propagate<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>>;
    /// `∂f/∂x` evaluated at the value of `x`.
    fn jacobian(&self, x: &Matrix<f64>) -> Matrix<f64>;
}

/// Measurement function `x ↦ h(x)` and its Jacobian.
pub trait MeasurementModel: Send + Sync {
    fn measure<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>>;
    /// `∂h/∂x` evaluated at the value of `x`.
    fn jacobian(&self, x: &Matrix<f64>) -> Matrix<f64>;
}

#[derive(Debug, Clone)]
pub struct DwnaMotion {
    f: Matrix<f64>,
}

impl DwnaMotion {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self { f: build_f(cfg) }
    }
}

impl MotionModel for DwnaMotion {
    fn propagate<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        x.lmul_const(&self.f)
    }

    fn jacobian(&self, _x: &Matrix<f64>) -> Matrix<f64> {
        self.f.clone()
    }
}

#[derive(Debug, Clone)]
pub struct PositionSensor {
    h: Matrix<f64>,
}

impl Default for PositionSensor {
    fn default() -> Self {
        Self { h: build_h() }
    }
}

impl MeasurementModel for PositionSensor {
    fn measure<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        x.lmul_const(&self.h)
    }

    fn jacobian(&self, _x: &Matrix<f64>) -> Matrix<f64> {
        self.h.clone()
    }
}

/// Everything the IMM recursion needs for one parameter setting.
#[derive(Debug, Clone)]
pub struct ImmModel<S> {
    pub cfg: ModelConfig,
    pub motion: DwnaMotion,
    pub sensor: PositionSensor,
    /// Per-mode process noise.
    pub q: Vec<Matrix<S>>,
    pub r: Matrix<S>,
    pub transition: TransitionMatrix<S>,
    pub sigma_r: S,
}

impl<S: Scalar> ImmModel<S> {
    pub fn new(params: &ParamVector<S>, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        if params.sigma_v.len() != cfg.m || params.p_stay.len() != cfg.m {
            return Err(Error::Config(format!(
                "parameter vector has {} modes, config has {}",
                params.sigma_v.len(),
                cfg.m
            )));
        }
        Ok(Self {
            cfg: *cfg,
            motion: DwnaMotion::new(cfg),
            sensor: PositionSensor::default(),
            q: params.sigma_v.iter().map(|&s| build_q(s, cfg)).collect(),
            r: build_r(params.sigma_r),
            transition: TransitionMatrix::from_stay(&params.p_stay)?,
            sigma_r: params.sigma_r,
        })
    }
}
