//! AR(p) identification from noisy received signals and assembly of the
//! augmented linear-Gaussian state-space model.
//!
//! The autocovariance convention is `C_k = E[h_{t−k}·h_tᴴ]`, so that
//! `C_{−k} = C_kᴴ` and the Yule-Walker system reads `C_all·Φᴴ = C`,
//! `Σ_u = C_0 − Cᴴ·Φᴴ`.

use alloc::vec::Vec;

use crate::error::dim_err;
use crate::numerics::{pinv, project_psd, solve_hermitian, spectral_radius, ComplexMatrix, ComplexVector};
use crate::signal::{SignalSequence, TransformedPilot};
use crate::{Error, Result, C64};

/// Relative size of the default Tikhonov shift: `ε = 1e-6 · trace(Ĉ_all)/(pMN)`.
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-6;

/// Empirical `(1/(T−1))·Σ_t y_{t−k}·y_tᴴ` over the slots where both exist.
///
/// The `1/(T−1)` normalization is used for every lag.
pub fn empirical_signal_autocov(signals: &[ComplexVector], k: usize) -> Result<ComplexMatrix> {
    let t_len = signals.len();
    if t_len < 2 {
        return Err(Error::InvalidParameter(alloc::format!("need at least two signals, got {t_len}")));
    }
    if k >= t_len {
        return Err(Error::InvalidParameter(alloc::format!("lag {k} out of range for {t_len} signals")));
    }
    let dim = signals[0].len();
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for t in k..t_len {
        let (a, b) = (&signals[t - k], &signals[t]);
        if a.len() != dim || b.len() != dim {
            return Err(dim_err("empirical_signal_autocov", dim, a.len().max(b.len())));
        }
        for i in 0..dim {
            let ai = a[i];
            for j in 0..dim {
                acc[(i, j)] += ai * b[j].conj();
            }
        }
    }
    Ok(acc.scale_real(1.0 / (t_len - 1) as f64))
}

/// Channel autocovariance recovered from signals:
/// `Ĉ_k = Q†·(R̂_k − [k=0]·σ_v²·I)·(Qᴴ)†`.
pub fn channel_autocov_from_signals(
    signals: &[ComplexVector],
    q: &TransformedPilot,
    sigma_v: f64,
    k: usize,
) -> Result<ComplexMatrix> {
    let q_pinv = pinv(&q.q)?;
    let qh_pinv = q_pinv.adjoint();
    autocov_with_pinv(signals, &q_pinv, &qh_pinv, sigma_v, k)
}

fn autocov_with_pinv(
    signals: &[ComplexVector],
    q_pinv: &ComplexMatrix,
    qh_pinv: &ComplexMatrix,
    sigma_v: f64,
    k: usize,
) -> Result<ComplexMatrix> {
    let mut r = empirical_signal_autocov(signals, k)?;
    if r.rows() != q_pinv.cols() {
        return Err(dim_err("channel_autocov_from_signals", q_pinv.cols(), r.rows()));
    }
    if k == 0 {
        let noise = sigma_v * sigma_v;
        for i in 0..r.rows() {
            r[(i, i)] -= C64::new(noise, 0.0);
        }
    }
    Ok(&(q_pinv * &r) * qh_pinv)
}

/// Autocovariance estimates `Ĉ_0 … Ĉ_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSet {
    lags: Vec<ComplexMatrix>,
}

impl AutocovarianceSet {
    /// Wraps lags `0..=p`; lag 0 is symmetrized.
    pub fn new(mut lags: Vec<ComplexMatrix>) -> Result<Self> {
        let first = lags.first().ok_or(Error::Empty("autocovariance lags"))?;
        if !first.is_square() {
            return Err(dim_err("AutocovarianceSet", "square lags", alloc::format!("{}x{}", first.rows(), first.cols())));
        }
        let shape = first.shape();
        if let Some(bad) = lags.iter().find(|c| c.shape() != shape) {
            return Err(dim_err("AutocovarianceSet", shape.0, bad.rows()));
        }
        lags[0] = lags[0].hermitian_part();
        Ok(Self { lags })
    }

    /// Estimates lags `0..=p` from received signals.
    pub fn from_signals(signals: &[ComplexVector], q: &TransformedPilot, sigma_v: f64, p: usize) -> Result<Self> {
        let q_pinv = pinv(&q.q)?;
        let qh_pinv = q_pinv.adjoint();
        let lags = (0..=p)
            .map(|k| autocov_with_pinv(signals, &q_pinv, &qh_pinv, sigma_v, k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(lags)
    }

    /// Estimates lags `0..=p` directly from channel vectors (same normalization).
    pub fn from_channels(h: &[ComplexVector], p: usize) -> Result<Self> {
        Self::new((0..=p).map(|k| empirical_signal_autocov(h, k)).collect::<Result<Vec<_>>>()?)
    }

    /// AR order p (number of lags minus one).
    pub fn order(&self) -> usize {
        self.lags.len() - 1
    }

    /// Channel dimension MN.
    pub fn dim(&self) -> usize {
        self.lags[0].rows()
    }

    /// `Ĉ_k` for `k ≥ 0`.
    pub fn lag(&self, k: usize) -> &ComplexMatrix {
        &self.lags[k]
    }

    /// All lags.
    pub fn lags(&self) -> &[ComplexMatrix] {
        &self.lags
    }

    /// Block-Toeplitz `Ĉ_all` whose block (i, j) is `Ĉ_{i−j}`, with
    /// `Ĉ_{−k} = Ĉ_kᴴ`.
    pub fn toeplitz(&self) -> ComplexMatrix {
        let (p, d) = (self.order(), self.dim());
        let mut all = ComplexMatrix::zeros(p * d, p * d);
        for i in 0..p {
            for j in 0..p {
                let block = if i >= j {
                    self.lags[i - j].clone()
                } else {
                    self.lags[j - i].adjoint()
                };
                all.set_block(i * d, j * d, &block);
            }
        }
        all
    }

    /// Stacked right-hand side `[Ĉ_1; …; Ĉ_p]`.
    pub fn stacked(&self) -> ComplexMatrix {
        let (p, d) = (self.order(), self.dim());
        let mut c = ComplexMatrix::zeros(p * d, d);
        for k in 1..=p {
            c.set_block((k - 1) * d, 0, &self.lags[k]);
        }
        c
    }

    /// `1e-6 · trace(Ĉ_all)/(pMN)`.
    pub fn default_epsilon(&self) -> f64 {
        let n = (self.order() * self.dim()) as f64;
        DEFAULT_EPSILON_SCALE * self.toeplitz().trace().re / n
    }
}

/// Identified AR(p) dynamics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArModel {
    /// Order p.
    pub p: usize,
    /// `[Φ_1 … Φ_p]`, shape `MN × pMN`.
    pub phi: ComplexMatrix,
    /// Innovation covariance Σ_u (Hermitian PSD).
    pub sigma_u: ComplexMatrix,
    /// Tikhonov shift used in the solve.
    pub epsilon: f64,
    /// Lag-0 channel autocovariance Ĉ_0 the model was fitted from.
    pub c0: ComplexMatrix,
}

impl ArModel {
    /// Channel dimension MN.
    pub fn dim(&self) -> usize {
        self.phi.rows()
    }

    /// Coefficient block Φ_j, `1 ≤ j ≤ p`.
    pub fn phi_block(&self, j: usize) -> ComplexMatrix {
        let d = self.dim();
        self.phi.block(0, (j - 1) * d, d, d)
    }

    /// `Σ_j Φ_j·h_{t+1−j}` with `context[0] = h_t`, `context[1] = h_{t−1}`, ….
    pub fn predict_next(&self, context: &[ComplexVector]) -> Result<ComplexVector> {
        if context.len() < self.p {
            return Err(Error::InvalidParameter(alloc::format!(
                "AR prediction needs {} past channels, got {}",
                self.p,
                context.len()
            )));
        }
        let stacked = ComplexVector(context[..self.p].iter().flat_map(|h| h.0.iter().copied()).collect());
        self.phi.mul_vec(&stacked)
    }
}

/// Yule-Walker fit: `Φᴴ = (Ĉ_all + ε·I)⁻¹·Ĉ`, `Σ_u = Ĉ_0 − Ĉᴴ·Φᴴ`, with Σ_u
/// projected onto the Hermitian PSD cone.
pub fn fit_ar(autocov: &AutocovarianceSet, epsilon: f64) -> Result<ArModel> {
    let p = autocov.order();
    if p == 0 {
        return Err(Error::InvalidParameter("AR order must be at least 1".into()));
    }
    let mut lhs = autocov.toeplitz();
    for i in 0..lhs.rows() {
        lhs[(i, i)] += C64::new(epsilon, 0.0);
    }
    let rhs = autocov.stacked();
    let phi_h = solve_hermitian(&lhs, &rhs)?;
    let sigma_u = autocov.lag(0) - &(&rhs.adjoint() * &phi_h);
    Ok(ArModel {
        p,
        phi: phi_h.adjoint(),
        sigma_u: project_psd(&sigma_u)?,
        epsilon,
        c0: autocov.lag(0).clone(),
    })
}

/// Companion transition matrix: top block-row Φ, identity blocks on the
/// block sub-diagonal.
pub fn companion_matrix(phi: &ComplexMatrix, p: usize) -> Result<ComplexMatrix> {
    let d = phi.rows();
    if phi.cols() != p * d {
        return Err(dim_err("companion_matrix", p * d, phi.cols()));
    }
    let mut a = ComplexMatrix::zeros(p * d, p * d);
    a.set_block(0, 0, phi);
    for i in d..p * d {
        a[(i, i - d)] = C64::new(1.0, 0.0);
    }
    Ok(a)
}

/// Augmented linear-Gaussian SSM `x_t = A·x_{t−1} + B·u_t`, `y_t = D·x_t + v_t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ssm {
    /// Transition matrix A (`pMN × pMN`).
    pub a: ComplexMatrix,
    /// Selector B = `[I_MN; 0]` (`pMN × MN`).
    pub b: ComplexMatrix,
    /// Observation matrix D = Q·Bᵀ (`τN × pMN`).
    pub d: ComplexMatrix,
    /// Transformed pilot.
    pub q: TransformedPilot,
    /// Innovation covariance Σ_u.
    pub sigma_u: ComplexMatrix,
    /// Noise standard deviation σ_v.
    pub sigma_v: f64,
    /// AR coefficients `[Φ_1 … Φ_p]`.
    pub phi: ComplexMatrix,
    /// AR order p.
    pub p: usize,
    /// Lag-0 channel autocovariance, used for the stationary state prior.
    pub c0: ComplexMatrix,
}

impl Ssm {
    /// State dimension pMN.
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Channel dimension MN.
    pub fn channel_dim(&self) -> usize {
        self.b.cols()
    }

    /// Signal dimension τN.
    pub fn signal_dim(&self) -> usize {
        self.d.rows()
    }

    /// Observation noise covariance σ_v²·I.
    pub fn sigma_v_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::scaled_identity(self.signal_dim(), C64::new(self.sigma_v * self.sigma_v, 0.0))
    }

    /// Bᵀ·x: the first MN entries of a state.
    pub fn extract(&self, x: &ComplexVector) -> ComplexVector {
        x.head(self.channel_dim())
    }

    /// Spectral radius of A.
    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.a)
    }
}

/// Assembles the SSM from an AR model and the transformed pilot.
pub fn build_ssm(ar: &ArModel, q: &TransformedPilot, sigma_v: f64) -> Result<Ssm> {
    let d = ar.dim();
    if q.channel_dim() != d {
        return Err(dim_err("build_ssm", d, q.channel_dim()));
    }
    let a = companion_matrix(&ar.phi, ar.p)?;
    let mut b = ComplexMatrix::zeros(ar.p * d, d);
    b.set_block(0, 0, &ComplexMatrix::identity(d));
    let d_mat = &q.q * &b.transpose();
    Ok(Ssm {
        a,
        b,
        d: d_mat,
        q: q.clone(),
        sigma_u: ar.sigma_u.clone(),
        sigma_v,
        phi: ar.phi.clone(),
        p: ar.p,
        c0: ar.c0.clone(),
    })
}

/// Identification from signals alone: autocovariances, Yule-Walker fit with
/// `epsilon` (the scale-free default when `None`), and SSM assembly.
pub fn identify(
    signals: &SignalSequence,
    q: &TransformedPilot,
    p: usize,
    epsilon: Option<f64>,
) -> Result<(ArModel, Ssm)> {
    let autocov = AutocovarianceSet::from_signals(&signals.observations, q, signals.sigma_v, p)?;
    let eps = epsilon.unwrap_or_else(|| autocov.default_epsilon());
    let ar = fit_ar(&autocov, eps)?;
    let ssm = build_ssm(&ar, q, signals.sigma_v)?;
    Ok((ar, ssm))
}
