//! Ground-truth channel sequences.
//!
//! Two generators: a sum-of-sinusoids multipath surrogate whose per-path
//! Doppler rotations make a low-order AR fit mismatched, and an exact AR
//! process used where the identified model must match the truth.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::ar_ssm::companion_matrix;
use crate::numerics::{hermitian_eigen, spectral_radius, unvec, vec, ComplexMatrix, ComplexVector};
use crate::rng::{complex_gaussian_vector, seeded};
use crate::{Error, Result, C64};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Steps discarded before the AR oracle starts emitting frames.
pub const AR_BURN_IN: usize = 500;

/// Mobility and slot-length setting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DynamicCondition {
    /// UE speed in km/h.
    pub speed_kmh: f64,
    /// Carrier frequency in GHz.
    pub carrier_ghz: f64,
    /// Slot duration in units of the coherence time.
    pub aging: f64,
}

impl DynamicCondition {
    /// Validated constructor.
    pub fn new(speed_kmh: f64, carrier_ghz: f64, aging: f64) -> Result<Self> {
        let cond = Self {
            speed_kmh,
            carrier_ghz,
            aging,
        };
        cond.validate()?;
        Ok(cond)
    }

    fn validate(&self) -> Result<()> {
        if !(self.speed_kmh > 0.0 && self.carrier_ghz > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "speed and carrier frequency must be positive (v={}, f={})",
                self.speed_kmh,
                self.carrier_ghz
            )));
        }
        if !(self.aging > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("aging factor must be positive (k={})", self.aging)));
        }
        Ok(())
    }

    /// Coherence time in milliseconds.
    pub fn coherence_time_ms(&self) -> f64 {
        540.0 / (self.speed_kmh * self.carrier_ghz)
    }

    /// Slot duration in milliseconds.
    pub fn slot_ms(&self) -> f64 {
        self.aging * self.coherence_time_ms()
    }

    /// Maximum Doppler shift in Hz.
    pub fn doppler_hz(&self) -> f64 {
        (self.speed_kmh / 3.6) * (self.carrier_ghz * 1e9) / SPEED_OF_LIGHT
    }
}

/// `540 / (v·f)` in milliseconds.
pub fn coherence_time(cond: &DynamicCondition) -> Result<f64> {
    if !(cond.speed_kmh > 0.0 && cond.carrier_ghz > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "speed and carrier frequency must be positive (v={}, f={})",
            cond.speed_kmh,
            cond.carrier_ghz
        )));
    }
    Ok(cond.coherence_time_ms())
}

/// A sequence of `N × M` channel matrices, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSequence {
    /// Receive antennas N.
    pub n_rx: usize,
    /// Transmit antennas M.
    pub n_tx: usize,
    /// Slot duration in milliseconds.
    pub slot_ms: f64,
    /// Seed the sequence was generated from.
    pub seed: u64,
    frames: Vec<ComplexMatrix>,
}

impl ChannelSequence {
    /// Wraps frames after checking their shapes and finiteness.
    pub fn new(n_rx: usize, n_tx: usize, slot_ms: f64, seed: u64, frames: Vec<ComplexMatrix>) -> Result<Self> {
        for f in &frames {
            if f.shape() != (n_rx, n_tx) {
                return Err(crate::error::dim_err(
                    "ChannelSequence",
                    alloc::format!("{n_rx}x{n_tx}"),
                    alloc::format!("{}x{}", f.rows(), f.cols()),
                ));
            }
            if !f.is_finite() {
                return Err(Error::InvalidParameter("non-finite channel frame".into()));
            }
        }
        Ok(Self {
            n_rx,
            n_tx,
            slot_ms,
            seed,
            frames,
        })
    }

    /// Number of slots.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Whether there are no slots.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `MN`.
    pub fn dim(&self) -> usize {
        self.n_rx * self.n_tx
    }

    /// All frames.
    pub fn frames(&self) -> &[ComplexMatrix] {
        &self.frames
    }

    /// Vectorized channel 𝐡_t = vec(𝐇_t).
    pub fn h(&self, t: usize) -> ComplexVector {
        vec(&self.frames[t])
    }

    /// Vectorized channels for slots `range`.
    pub fn vectors(&self, range: core::ops::Range<usize>) -> Vec<ComplexVector> {
        range.map(|t| self.h(t)).collect()
    }

    /// Sub-sequence of slots `range`.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        Self {
            frames: self.frames[range].to_vec(),
            ..self.clone()
        }
    }

    /// Empirical mean of |h|² over all entries of the first `slots` frames.
    pub fn mean_entry_power(&self, slots: usize) -> f64 {
        let slots = slots.min(self.len());
        if slots == 0 {
            return 0.0;
        }
        let total: f64 = self.frames[..slots].iter().map(|f| f.norm_fro().powi(2)).sum();
        total / (slots * self.dim()) as f64
    }
}

/// Multipath profile of the surrogate generator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurrogateChannelParams {
    /// Number of multipath components.
    pub n_paths: usize,
    /// Path powers decay as `exp(−power_decay · l)` before normalization.
    pub power_decay: f64,
    /// Seed for the arrival/departure angles.
    pub angle_seed: u64,
    /// Seed for the per-path initial phases.
    pub phase_seed: u64,
    /// Ratio of the first path's power to the sum of the others, in dB.
    /// `None` keeps the plain exponential profile.
    pub rician_k_db: Option<f64>,
}

impl Default for SurrogateChannelParams {
    fn default() -> Self {
        Self {
            n_paths: 12,
            power_decay: 0.2,
            angle_seed: 1,
            phase_seed: 2,
            rician_k_db: None,
        }
    }
}

/// One propagation path of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    /// Amplitude a_l (powers a_l² sum to one over the path set).
    pub amplitude: f64,
    /// Angle between the direction of motion and the path, radians; sets the
    /// Doppler shift `f_D · cos(angle)`.
    pub arrival: f64,
    /// Departure angle at the transmit array, radians.
    pub departure: f64,
    /// Common phase offset, radians.
    pub phase: f64,
}

impl Path {
    /// Phase of antenna pair (n, m) at slot zero: half-wavelength uniform
    /// linear arrays on both ends.
    pub fn array_phase(&self, n: usize, m: usize) -> f64 {
        self.phase + PI * n as f64 * self.arrival.sin() + PI * m as f64 * self.departure.sin()
    }
}

/// Draws the path set described by `params`.
pub fn draw_paths(params: &SurrogateChannelParams) -> Result<Vec<Path>> {
    if params.n_paths == 0 {
        return Err(Error::InvalidParameter("surrogate needs at least one path".into()));
    }
    let mut powers: Vec<f64> = (0..params.n_paths).map(|l| (-params.power_decay * l as f64).exp()).collect();
    if let (Some(k_db), true) = (params.rician_k_db, params.n_paths > 1) {
        let rest: f64 = powers[1..].iter().sum();
        powers[0] = 10f64.powf(k_db / 10.0) * rest;
    }
    let total: f64 = powers.iter().sum();
    let mut angles = seeded(params.angle_seed);
    let mut phases = seeded(params.phase_seed);
    Ok(powers
        .into_iter()
        .map(|p| Path {
            amplitude: (p / total).sqrt(),
            arrival: angles.random_range(-PI..PI),
            departure: angles.random_range(-PI..PI),
            phase: phases.random_range(-PI..PI),
        })
        .collect())
}

/// Sum-of-sinusoids channel with the given paths.
pub fn generate_from_paths(
    cond: &DynamicCondition,
    paths: &[Path],
    n_rx: usize,
    n_tx: usize,
    length: usize,
    seed: u64,
) -> Result<ChannelSequence> {
    cond.validate()?;
    if length == 0 {
        return Err(Error::InvalidParameter("channel length must be at least 1".into()));
    }
    let slot_s = cond.slot_ms() * 1e-3;
    let f_d = cond.doppler_hz();
    let step_phase: Vec<f64> = paths.iter().map(|p| 2.0 * PI * f_d * p.arrival.cos() * slot_s).collect();
    let frames = (0..length)
        .map(|t| {
            ComplexMatrix::from_fn(n_rx, n_tx, |n, m| {
                paths
                    .iter()
                    .zip(&step_phase)
                    .map(|(p, w)| C64::from_polar(p.amplitude, w * t as f64 + p.array_phase(n, m)))
                    .sum()
            })
        })
        .collect();
    ChannelSequence::new(n_rx, n_tx, cond.slot_ms(), seed, frames)
}

/// Surrogate multipath channel: deterministic in the parameter seeds.
pub fn generate_surrogate(
    cond: &DynamicCondition,
    params: &SurrogateChannelParams,
    n_rx: usize,
    n_tx: usize,
    length: usize,
) -> Result<ChannelSequence> {
    let paths = draw_paths(params)?;
    generate_from_paths(cond, &paths, n_rx, n_tx, length, params.angle_seed)
}

/// Exact vector AR(p) process `h_t = Σ_j Φ_j h_{t−j} + u_t`.
#[derive(Debug, Clone)]
pub struct ArOracle {
    phi: ComplexMatrix,
    noise_factor: ComplexMatrix,
    n_rx: usize,
    n_tx: usize,
    p: usize,
}

impl ArOracle {
    /// Validates stability of Φ and factors Σ_u.
    pub fn new(phi: &ComplexMatrix, sigma_u: &ComplexMatrix, n_rx: usize, n_tx: usize, p: usize) -> Result<Self> {
        let dim = n_rx * n_tx;
        if phi.shape() != (dim, p * dim) {
            return Err(crate::error::dim_err(
                "ArOracle phi",
                alloc::format!("{dim}x{}", p * dim),
                alloc::format!("{}x{}", phi.rows(), phi.cols()),
            ));
        }
        if sigma_u.shape() != (dim, dim) {
            return Err(crate::error::dim_err("ArOracle sigma_u", dim, sigma_u.rows()));
        }
        let radius = spectral_radius(&companion_matrix(phi, p)?)?;
        if !(radius < 1.0) {
            return Err(Error::Unstable(radius));
        }
        if !sigma_u.is_hermitian(1e-9 * sigma_u.max_abs().max(1.0)) {
            return Err(Error::NotHermitian("ArOracle sigma_u"));
        }
        let (values, vectors) = hermitian_eigen(sigma_u)?;
        // Σ_u = L·Lᴴ with L = V·Λ^{1/2}
        let noise_factor = ComplexMatrix::from_fn(dim, dim, |i, j| vectors[(i, j)] * values[j].max(0.0).sqrt());
        Ok(Self {
            phi: phi.clone(),
            noise_factor,
            n_rx,
            n_tx,
            p,
        })
    }

    /// Stationary sequence after [`AR_BURN_IN`] discarded steps.
    pub fn generate(&self, length: usize, seed: u64) -> Result<ChannelSequence> {
        self.generate_from(&[], length, seed, AR_BURN_IN)
    }

    /// Runs the recursion from `history` (most recent last; missing entries
    /// are zero), discarding `burn_in` steps before emitting `length` frames.
    pub fn generate_from(
        &self,
        history: &[ComplexVector],
        length: usize,
        seed: u64,
        burn_in: usize,
    ) -> Result<ChannelSequence> {
        let dim = self.n_rx * self.n_tx;
        let mut rng = seeded(seed);
        // past[0] = h_{t−1}, past[1] = h_{t−2}, ...
        let mut past: Vec<ComplexVector> = (0..self.p)
            .map(|j| {
                history
                    .len()
                    .checked_sub(j + 1)
                    .map_or_else(|| ComplexVector::zeros(dim), |i| history[i].clone())
            })
            .collect();
        let mut frames = Vec::with_capacity(length);
        for step in 0..burn_in + length {
            let z = complex_gaussian_vector(&mut rng, dim, 1.0);
            let mut h = self.noise_factor.mul_vec(&z)?;
            for (j, prev) in past.iter().enumerate() {
                let block = self.phi.block(0, j * dim, dim, dim);
                h = &h + &block.mul_vec(prev)?;
            }
            past.rotate_right(1);
            past[0] = h.clone();
            if step >= burn_in {
                frames.push(unvec(&h, self.n_rx, self.n_tx)?);
            }
        }
        ChannelSequence::new(self.n_rx, self.n_tx, 1.0, seed, frames)
    }
}

/// Stationary AR(p) channel sequence driven by 𝒞𝒩(0, Σ_u) innovations.
pub fn generate_ar_oracle(
    phi: &ComplexMatrix,
    sigma_u: &ComplexMatrix,
    n_rx: usize,
    n_tx: usize,
    p: usize,
    length: usize,
    seed: u64,
) -> Result<ChannelSequence> {
    ArOracle::new(phi, sigma_u, n_rx, n_tx, p)?.generate(length, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[x]])
    }

    fn lag_corr(seq: &ChannelSequence, lag: usize) -> C64 {
        let xs: Vec<C64> = seq.frames().iter().map(|f| f[(0, 0)]).collect();
        let n = xs.len() - lag;
        (0..n).map(|t| xs[t] * xs[t + lag].conj()).sum::<C64>() / n as f64
    }

    #[test]
    fn coherence_time_values() {
        let c = |v, f| coherence_time(&DynamicCondition { speed_kmh: v, carrier_ghz: f, aging: 1.0 }).unwrap();
        assert!((c(60.0, 28.0) - 0.321_428_571_428_571_4).abs() < 1e-15);
        assert_eq!(c(540.0, 1.0), 1.0);
        assert!((c(30.0, 28.0) - 2.0 * c(60.0, 28.0)).abs() < 1e-15);
        assert!(coherence_time(&DynamicCondition { speed_kmh: 0.0, carrier_ghz: 28.0, aging: 1.0 }).is_err());
        assert!(DynamicCondition::new(60.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn slot_duration_scales_with_aging() {
        let cond = DynamicCondition::new(60.0, 28.0, 2.5).unwrap();
        assert_eq!(cond.slot_ms(), 2.5 * cond.coherence_time_ms());
    }

    #[test]
    fn single_path_is_pure_rotation() {
        let cond = DynamicCondition::new(60.0, 28.0, 1.0).unwrap();
        let path = Path {
            amplitude: 1.0,
            arrival: 0.0,
            departure: 0.0,
            phase: 0.0,
        };
        let seq = generate_from_paths(&cond, &[path], 2, 2, 20, 0).unwrap();
        let w = 2.0 * PI * cond.doppler_hz() * cond.slot_ms() * 1e-3;
        for (t, f) in seq.frames().iter().enumerate() {
            for z in f.as_slice() {
                assert!((z.norm() - 1.0).abs() < 1e-12);
                assert!((z - C64::from_polar(1.0, w * t as f64)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn frozen_channel_limit() {
        let params = SurrogateChannelParams::default();
        let ratio = |k: f64| {
            let seq = generate_surrogate(&DynamicCondition::new(60.0, 28.0, k).unwrap(), &params, 4, 2, 2).unwrap();
            (&seq.frames()[1] - &seq.frames()[0]).norm_fro() / seq.frames()[0].norm_fro()
        };
        assert!(ratio(1e-6) < 1e-4);
        assert!(ratio(1e-6) < ratio(1e-3));
    }

    #[test]
    fn surrogate_is_deterministic() {
        let cond = DynamicCondition::new(60.0, 28.0, 1.0).unwrap();
        let params = SurrogateChannelParams::default();
        let a = generate_surrogate(&cond, &params, 4, 2, 50).unwrap();
        let b = generate_surrogate(&cond, &params, 4, 2, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_powers_sum_to_one() {
        for k_db in [None, Some(3.0)] {
            let params = SurrogateChannelParams {
                rician_k_db: k_db,
                ..Default::default()
            };
            let paths = draw_paths(&params).unwrap();
            let total: f64 = paths.iter().map(|p| p.amplitude * p.amplitude).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(draw_paths(&SurrogateChannelParams { n_paths: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn surrogate_stationarity_proxy() {
        let cond = DynamicCondition::new(60.0, 28.0, 1.0).unwrap();
        let seq = generate_surrogate(&cond, &SurrogateChannelParams::default(), 2, 2, 5000).unwrap();
        let mean_mod = |r: core::ops::Range<usize>| {
            let n = r.len() as f64;
            r.map(|t| seq.frames()[t].as_slice().iter().map(|z| z.norm()).sum::<f64>() / 4.0).sum::<f64>() / n
        };
        let (a, b) = (mean_mod(0..2500), mean_mod(2500..5000));
        assert!((a - b).abs() / a < 0.1, "{a} vs {b}");
    }

    #[test]
    fn faster_aging_decorrelates_more() {
        let params = SurrogateChannelParams::default();
        let corr = |k: f64| {
            let seq = generate_surrogate(&DynamicCondition::new(60.0, 28.0, k).unwrap(), &params, 1, 1, 5000).unwrap();
            let c0 = lag_corr(&seq, 0).re;
            lag_corr(&seq, 1).norm() / c0
        };
        assert!(corr(0.5) > corr(2.0), "{} vs {}", corr(0.5), corr(2.0));
    }

    #[test]
    fn ar_oracle_white_noise() {
        let seq = generate_ar_oracle(&scalar(0.0), &scalar(1.0), 1, 1, 1, 10_000, 3).unwrap();
        assert!(lag_corr(&seq, 1).norm() < 0.05);
    }

    #[test]
    fn ar_oracle_stationary_variance() {
        let seq = generate_ar_oracle(&scalar(0.9), &scalar(0.19), 1, 1, 1, 20_000, 4).unwrap();
        let c0 = lag_corr(&seq, 0).re;
        assert!((c0 - 1.0).abs() < 0.05, "C0 = {c0}");
    }

    #[test]
    fn ar_oracle_noiseless_decay() {
        let oracle = ArOracle::new(&scalar(0.5), &scalar(0.0), 1, 1, 1).unwrap();
        let h0 = ComplexVector(alloc::vec![C64::new(2.0, -1.0)]);
        let seq = oracle.generate_from(&[h0.clone()], 10, 0, 0).unwrap();
        for (t, f) in seq.frames().iter().enumerate() {
            let expected = h0[0] * 0.5f64.powi(t as i32 + 1);
            assert!((f[(0, 0)] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn ar_oracle_rejects_unstable() {
        assert!(matches!(generate_ar_oracle(&scalar(1.01), &scalar(1.0), 1, 1, 1, 10, 0), Err(Error::Unstable(_))));
    }

    #[test]
    fn ar_oracle_matches_yule_walker_autocovariance() {
        // Scalar AR(2) with φ = (0.5, 0.3): C1/C0 = φ1 / (1 − φ2).
        let phi = ComplexMatrix::from_real_rows(&[&[0.5, 0.3]]);
        let seq = generate_ar_oracle(&phi, &scalar(1.0), 1, 1, 2, 100_000, 9).unwrap();
        let rho1 = (lag_corr(&seq, 1) / lag_corr(&seq, 0)).re;
        assert!((rho1 - 0.5 / 0.7).abs() < 0.02, "rho1 = {rho1}");

        // 2×2 diagonal VAR(1): per-entry stationary variance σ²/(1−φ²).
        let phi = ComplexMatrix::from_real_rows(&[&[0.8, 0.0], &[0.0, -0.5]]);
        let sigma = ComplexMatrix::identity(2);
        let seq = generate_ar_oracle(&phi, &sigma, 2, 1, 1, 50_000, 10).unwrap();
        let var = |i: usize| seq.frames().iter().map(|f| f[(i, 0)].norm_sqr()).sum::<f64>() / seq.len() as f64;
        assert!((var(0) - 1.0 / 0.36).abs() / (1.0 / 0.36) < 0.05);
        assert!((var(1) - 1.0 / 0.75).abs() / (1.0 / 0.75) < 0.05);
    }
}
