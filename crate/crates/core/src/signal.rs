//! Pilot construction and the noisy observation model `y_t = Q·h_t + v_t`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::ChannelSequence;
use crate::error::dim_err;
use crate::numerics::{kron, ComplexMatrix, ComplexVector};
use crate::rng::{complex_gaussian_vector, seeded};
use crate::{Error, Result, C64};

/// Pilot and noise setting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PilotConfig {
    /// Transmit antennas M.
    pub n_tx: usize,
    /// Pilot length τ.
    pub tau: usize,
    /// Transmit power scale ρ.
    pub rho: f64,
    /// Noise standard deviation σ_v.
    pub sigma_v: f64,
}

/// The `M × τ` pilot `√τ·[I_M 0]`; with τ = M this is `√τ·I_M`.
pub fn make_pilot(cfg: &PilotConfig) -> Result<ComplexMatrix> {
    if cfg.n_tx == 0 {
        return Err(Error::InvalidParameter("pilot needs at least one transmit antenna".into()));
    }
    if cfg.tau < cfg.n_tx {
        return Err(Error::InvalidParameter(alloc::format!(
            "pilot length {} shorter than transmit antenna count {}",
            cfg.tau,
            cfg.n_tx
        )));
    }
    let s = (cfg.tau as f64).sqrt();
    Ok(ComplexMatrix::from_fn(cfg.n_tx, cfg.tau, |i, j| {
        if i == j {
            C64::new(s, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// `Q = √ρ · (Q_pilotᵀ ⊗ I_N)`, shape `τN × MN`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransformedPilot {
    /// The transformed pilot matrix.
    pub q: ComplexMatrix,
    /// Transmit power scale ρ.
    pub rho: f64,
    /// Pilot length τ.
    pub tau: usize,
    /// Receive antennas N.
    pub n_rx: usize,
    /// Transmit antennas M.
    pub n_tx: usize,
}

impl TransformedPilot {
    /// Signal dimension τN.
    pub fn signal_dim(&self) -> usize {
        self.q.rows()
    }

    /// Channel dimension MN.
    pub fn channel_dim(&self) -> usize {
        self.q.cols()
    }
}

/// Builds the transformed pilot for `n_rx` receive antennas.
pub fn transform_pilot(pilot: &ComplexMatrix, rho: f64, n_rx: usize) -> Result<TransformedPilot> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("transmit power scale must be positive (rho={rho})")));
    }
    if n_rx == 0 {
        return Err(Error::InvalidParameter("need at least one receive antenna".into()));
    }
    let q = kron(&pilot.transpose(), &ComplexMatrix::identity(n_rx)).scale_real(rho.sqrt());
    Ok(TransformedPilot {
        q,
        rho,
        tau: pilot.cols(),
        n_rx,
        n_tx: pilot.rows(),
    })
}

/// Transmit power scale that reaches `snr_db`, where SNR is the per-entry
/// received signal power over σ_v². With the default pilot that is
/// `ρ·τ·E|h|² / σ_v²`.
pub fn rho_for_snr(snr_db: f64, sigma_v: f64, pilot: &ComplexMatrix, reference_channel_power: f64) -> Result<f64> {
    if !(sigma_v > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("noise std must be positive (sigma_v={sigma_v})")));
    }
    if !(reference_channel_power > 0.0) {
        return Err(Error::ZeroChannel);
    }
    // ‖Q_pilot‖²_F / τ is the per-entry gain of Q_pilotᵀ ⊗ I_N (equals τ for √τ·I).
    let gain = pilot.norm_fro().powi(2) / pilot.cols() as f64;
    Ok(10f64.powf(snr_db / 10.0) * sigma_v * sigma_v / (gain * reference_channel_power))
}

/// Received signals, one τN vector per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence {
    /// 𝐲_t for every slot.
    pub observations: Vec<ComplexVector>,
    /// Noise standard deviation σ_v.
    pub sigma_v: f64,
    /// Transmit power scale ρ.
    pub rho: f64,
    /// Noise seed.
    pub seed: u64,
}

impl SignalSequence {
    /// Number of slots.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Whether there are no slots.
    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Signal dimension τN (zero when empty).
    pub fn dim(&self) -> usize {
        self.observations.first().map_or(0, ComplexVector::len)
    }

    /// Sub-sequence of slots `range`.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        Self {
            observations: self.observations[range].to_vec(),
            ..self.clone()
        }
    }
}

/// `y_t = Q·vec(H_t) + v_t` with `v_t ~ 𝒞𝒩(0, σ_v²·I)`, deterministic in `seed`.
pub fn observe(channels: &ChannelSequence, q: &TransformedPilot, sigma_v: f64, seed: u64) -> Result<SignalSequence> {
    if q.channel_dim() != channels.dim() {
        return Err(dim_err("observe", q.channel_dim(), channels.dim()));
    }
    if !(sigma_v >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("noise std must be non-negative (sigma_v={sigma_v})")));
    }
    let mut rng = seeded(seed);
    let variance = sigma_v * sigma_v;
    let observations = (0..channels.len())
        .map(|t| {
            let clean = q.q.mul_vec(&channels.h(t))?;
            if variance == 0.0 {
                return Ok(clean);
            }
            let noise = complex_gaussian_vector(&mut rng, clean.len(), variance);
            Ok(&clean + &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalSequence {
        observations,
        sigma_v,
        rho: q.rho,
        seed,
    })
}
