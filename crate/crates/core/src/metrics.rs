//! Prediction accuracy and downlink-rate metrics.

use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::{hermitian_eigen, unvec, ComplexMatrix, ComplexVector};
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Largest eigenvalue ratio of `ĤᴴĤ` accepted by [`zf_precoder`].
pub const ZF_MAX_CONDITION: f64 = 1e12;

/// Normalized squared error `‖h − ĥ‖²/‖h‖²`.
pub fn nse(h_true: &ComplexVector, h_pred: &ComplexVector) -> Result<f64> {
    if h_true.len() != h_pred.len() {
        return Err(crate::error::dim_err("nse", h_true.len(), h_pred.len()));
    }
    let power = h_true.norm_sqr();
    if power == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok((h_true - h_pred).norm_sqr() / power)
}

/// Linear-scale mean of per-step NSEs.
pub fn nmse(nses: &[f64]) -> Result<f64> {
    if nses.is_empty() {
        return Err(Error::Empty("nse list"));
    }
    Ok(nses.iter().sum::<f64>() / nses.len() as f64)
}

/// `10·log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `10^(db/10)`.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Zero-forcing precoder `(ĤᴴĤ)⁻¹Ĥᴴ` for an `N × M` channel.
pub fn zf_precoder(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    if h.rows() < h.cols() {
        return Err(Error::InvalidParameter(alloc::format!(
            "zero-forcing needs N >= M, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let gram = (&h.adjoint() * h).hermitian_part();
    let (vals, vecs) = hermitian_eigen(&gram)?;
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    if !(lo > 0.0) || hi / lo > ZF_MAX_CONDITION {
        return Err(Error::IllConditioned {
            op: "zf_precoder",
            cond: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    // (ĤᴴĤ)⁻¹ = V·Λ⁻¹·Vᴴ
    let inv_scaled = ComplexMatrix::from_fn(vecs.rows(), vecs.cols(), |i, j| vecs[(i, j)] / vals[j]);
    Ok(&(&inv_scaled * &vecs.adjoint()) * &h.adjoint())
}

/// `log2 det(I_M + ρ/(M·σ_v²)·P·Ĥ·Ĥᴴ·Pᴴ)` with the zero-forcing precoder of Ĥ.
pub fn achievable_rate(h: &ComplexMatrix, rho: f64, sigma_v: f64, n_tx: usize) -> Result<f64> {
    if h.cols() != n_tx {
        return Err(crate::error::dim_err("achievable_rate", n_tx, h.cols()));
    }
    if !(sigma_v > 0.0) || rho < 0.0 {
        return Err(Error::InvalidParameter(alloc::format!("rate needs rho >= 0 and sigma_v > 0, got {rho}, {sigma_v}")));
    }
    let p = zf_precoder(h)?;
    let ph = &p * h;
    let snr = rho / (n_tx as f64 * sigma_v * sigma_v);
    let gram = (&ph * &ph.adjoint()).hermitian_part();
    let (vals, _) = hermitian_eigen(&gram)?;
    Ok(vals.iter().map(|&l| (1.0 + snr * l.max(0.0)).log2()).sum())
}

/// Mean per-slot rate over predicted channel vectors of an `N × M` array.
pub fn mean_rate(h_preds: &[ComplexVector], n_rx: usize, n_tx: usize, rho: f64, sigma_v: f64) -> Result<f64> {
    if h_preds.is_empty() {
        return Err(Error::Empty("predicted channels"));
    }
    let mut total = 0.0;
    for h in h_preds {
        total += achievable_rate(&unvec(h, n_rx, n_tx)?, rho, sigma_v, n_tx)?;
    }
    Ok(total / h_preds.len() as f64)
}

/// Per-run evaluation summary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// Method label.
    pub method: String,
    /// Seed of the run.
    pub seed: u64,
    /// NSE of every horizon step in dB.
    pub nse_per_step_db: Vec<f64>,
    /// `10·log10(mean linear NSE)`.
    pub nmse_db: f64,
    /// Mean achievable rate in bits/s/Hz.
    pub rate_bits_per_s_per_hz: f64,
    /// Hash of the resolved configuration, filled in by the caller.
    pub config_hash: String,
}

impl EvalReport {
    /// Builds a report from linear per-step NSEs.
    pub fn new(method: impl Into<String>, seed: u64, nses: &[f64], rate: f64) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            seed,
            nse_per_step_db: nses.iter().map(|&x| to_db(x)).collect(),
            nmse_db: to_db(nmse(nses)?),
            rate_bits_per_s_per_hz: rate,
            config_hash: String::new(),
        })
    }

    /// NMSE in dB over the first `steps` horizon steps.
    pub fn nmse_db_at(&self, steps: usize) -> Result<f64> {
        let lin: Vec<f64> = self.nse_per_step_db.iter().take(steps).map(|&d| from_db(d)).collect();
        Ok(to_db(nmse(&lin)?))
    }
}
