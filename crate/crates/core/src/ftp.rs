//! Model-based predictors: AR extrapolation from true context and the
//! Kalman filter-then-predict recursion on the identified SSM.

use alloc::vec::Vec;

use crate::ar_ssm::{ArModel, Ssm};
use crate::error::dim_err;
use crate::metrics::{nmse, nse, to_db};
use crate::numerics::{solve_hermitian, ComplexMatrix, ComplexVector};
use crate::{Error, Result};

/// Prior and posterior moments of the augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// `x̂_{t|t−1}`.
    pub x_prior: ComplexVector,
    /// `P_{t|t−1}`.
    pub p_prior: ComplexMatrix,
    /// `x̂_{t|t}`.
    pub x_post: ComplexVector,
    /// `P_{t|t}`.
    pub p_post: ComplexMatrix,
    /// `ŷ_{t|t−1}`.
    pub y_pred: ComplexVector,
    /// `S_{t|t−1}`.
    pub s_pred: ComplexMatrix,
}

impl KalmanState {
    /// State holding the given posterior; the prior fields are filled by one
    /// prediction step.
    pub fn from_posterior(x_post: ComplexVector, p_post: ComplexMatrix, ssm: &Ssm) -> Result<Self> {
        let n = ssm.state_dim();
        if x_post.len() != n || p_post.shape() != (n, n) {
            return Err(dim_err("KalmanState::from_posterior", n, x_post.len()));
        }
        let m = ssm.signal_dim();
        let seed = Self {
            x_prior: x_post.clone(),
            p_prior: p_post.clone(),
            x_post,
            p_post,
            y_pred: ComplexVector::zeros(m),
            s_pred: ComplexMatrix::zeros(m, m),
        };
        kf_predict_step(&seed, ssm)
    }

    /// Zero-mean stationary start: `x̂_{0|0} = 0`, `P_{0|0} = blockdiag(Ĉ_0, …, Ĉ_0)`.
    pub fn stationary(ssm: &Ssm) -> Result<Self> {
        let p0 = ComplexMatrix::block_diag_repeat(&ssm.c0, ssm.p);
        Self::from_posterior(ComplexVector::zeros(ssm.state_dim()), p0, ssm)
    }
}

/// Kalman gain `K = P_{t|t−1}·Dᴴ·S⁻¹`, computed as `(S⁻¹·D·P)ᴴ`.
pub fn kalman_gain(state: &KalmanState, ssm: &Ssm) -> Result<ComplexMatrix> {
    let dp = &ssm.d * &state.p_prior;
    Ok(solve_hermitian(&state.s_pred.hermitian_part(), &dp)?.adjoint())
}

/// Measurement update with observation `y_t`.
pub fn kf_filter_step(state: &KalmanState, y: &ComplexVector, ssm: &Ssm) -> Result<KalmanState> {
    if y.len() != ssm.signal_dim() {
        return Err(dim_err("kf_filter_step", ssm.signal_dim(), y.len()));
    }
    let k = kalman_gain(state, ssm)?;
    let innovation = y - &state.y_pred;
    let x_post = &state.x_prior + &k.mul_vec(&innovation)?;
    let p_post = (&state.p_prior - &(&(&k * &state.s_pred) * &k.adjoint())).hermitian_part();
    Ok(KalmanState {
        x_post,
        p_post,
        ..state.clone()
    })
}

/// Time update: propagates the posterior through the transition model.
pub fn kf_predict_step(state: &KalmanState, ssm: &Ssm) -> Result<KalmanState> {
    let x_prior = ssm.a.mul_vec(&state.x_post)?;
    let bsb = &(&ssm.b * &ssm.sigma_u) * &ssm.b.adjoint();
    let p_prior = (&(&(&ssm.a * &state.p_post) * &ssm.a.adjoint()) + &bsb).hermitian_part();
    let y_pred = ssm.d.mul_vec(&x_prior)?;
    let s_pred = (&(&(&ssm.d * &p_prior) * &ssm.d.adjoint()) + &ssm.sigma_v_matrix()).hermitian_part();
    Ok(KalmanState {
        x_prior,
        p_prior,
        x_post: state.x_post.clone(),
        p_post: state.p_post.clone(),
        y_pred,
        s_pred,
    })
}

/// One prediction emitted after processing slot t.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// `ĥ_{t+1|t}`.
    pub h_pred: ComplexVector,
    /// `ŷ_{t+1|t}` (empty for predictors that do not model signals).
    pub y_pred: ComplexVector,
    /// `x̂_{t|t}` when the predictor has one.
    pub x_post: Option<ComplexVector>,
}

/// Sequence of one-step predictions, optionally scored against ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTrace {
    records: Vec<PredictionRecord>,
    nse: Option<Vec<f64>>,
}

impl PredictionTrace {
    /// Wraps records without scores.
    pub fn new(records: Vec<PredictionRecord>) -> Self {
        Self { records, nse: None }
    }

    /// Number of predictions.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// True when there are no predictions.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records.
    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    /// Predicted channel vectors in order.
    pub fn h_preds(&self) -> Vec<ComplexVector> {
        self.records.iter().map(|r| r.h_pred.clone()).collect()
    }

    /// Drops the first `n` records (warm-up steps).
    pub fn skip(mut self, n: usize) -> Self {
        let n = n.min(self.records.len());
        self.records.drain(..n);
        if let Some(s) = self.nse.as_mut() {
            s.drain(..n.min(s.len()));
        }
        self
    }

    /// Scores each prediction against the matching true channel.
    pub fn with_truth(mut self, truth: &[ComplexVector]) -> Result<Self> {
        if truth.len() != self.records.len() {
            return Err(dim_err("PredictionTrace::with_truth", self.records.len(), truth.len()));
        }
        self.nse = Some(
            self.records
                .iter()
                .zip(truth)
                .map(|(r, h)| nse(h, &r.h_pred))
                .collect::<Result<Vec<_>>>()?,
        );
        Ok(self)
    }

    /// Linear per-step NSEs, when scored.
    pub fn nses(&self) -> Option<&[f64]> {
        self.nse.as_deref()
    }

    /// NMSE in dB over all scored steps.
    pub fn nmse_db(&self) -> Result<f64> {
        Ok(to_db(nmse(self.nses().ok_or(Error::Empty("trace scores"))?)?))
    }
}

/// Runs filter-then-predict over the first `horizon` signals, emitting
/// `ĥ_{t+1|t}` after each one.
pub fn arkf_predict(signals: &[ComplexVector], ssm: &Ssm, init: KalmanState, horizon: usize) -> Result<PredictionTrace> {
    if horizon > signals.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "horizon {horizon} exceeds {} signals",
            signals.len()
        )));
    }
    let mut state = init;
    let mut records = Vec::with_capacity(horizon);
    for y in &signals[..horizon] {
        state = kf_filter_step(&state, y, ssm)?;
        let x_post = state.x_post.clone();
        state = kf_predict_step(&state, ssm)?;
        records.push(PredictionRecord {
            h_pred: ssm.extract(&state.x_prior),
            y_pred: state.y_pred.clone(),
            x_post: Some(x_post),
        });
    }
    Ok(PredictionTrace::new(records))
}

/// AR extrapolation from true past channels: predicts the last `horizon`
/// entries of `channels`, each from the `p` true channels preceding it.
pub fn ar_predict(channels: &[ComplexVector], ar: &ArModel, horizon: usize) -> Result<PredictionTrace> {
    let start = channels
        .len()
        .checked_sub(horizon)
        .filter(|&s| s >= ar.p)
        .ok_or_else(|| {
            Error::InvalidParameter(alloc::format!(
                "AR prediction of {horizon} steps needs {} channels, got {}",
                horizon + ar.p,
                channels.len()
            ))
        })?;
    let mut records = Vec::with_capacity(horizon);
    let mut context: Vec<ComplexVector> = Vec::with_capacity(ar.p);
    for t in start..channels.len() {
        context.clear();
        context.extend((1..=ar.p).map(|j| channels[t - j].clone()));
        records.push(PredictionRecord {
            h_pred: ar.predict_next(&context)?,
            y_pred: ComplexVector::zeros(0),
            x_post: None,
        });
    }
    Ok(PredictionTrace::new(records))
}
