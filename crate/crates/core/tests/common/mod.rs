#![allow(dead_code)]

use kpin_core::ar_ssm::{build_ssm, ArModel, Ssm};
use kpin_core::numerics::{ComplexMatrix, ComplexVector};
use kpin_core::rng::{complex_gaussian_matrix, complex_gaussian_vector, seeded};
use kpin_core::signal::{make_pilot, transform_pilot, PilotConfig, TransformedPilot};

/// Transformed `√τ·[I_M 0]` pilot for an `n_rx × n_tx` array with τ = M.
pub fn pilot(n_rx: usize, n_tx: usize, rho: f64, sigma_v: f64) -> TransformedPilot {
    let p = make_pilot(&PilotConfig {
        n_tx,
        tau: n_tx,
        rho,
        sigma_v,
    })
    .unwrap();
    transform_pilot(&p, rho, n_rx).unwrap()
}

/// SSM of a known AR model.
pub fn ssm_of(phi: ComplexMatrix, sigma_u: ComplexMatrix, p: usize, q: TransformedPilot, sigma_v: f64) -> Ssm {
    let d = sigma_u.rows();
    let ar = ArModel {
        p,
        phi,
        sigma_u,
        epsilon: 0.0,
        c0: ComplexMatrix::identity(d),
    };
    build_ssm(&ar, &q, sigma_v).unwrap()
}

/// Scalar AR(p) SSM observed through the unit pilot.
pub fn scalar_ssm(phi: &[f64], sigma_u2: f64, sigma_v: f64) -> Ssm {
    ssm_of(
        ComplexMatrix::from_real_rows(&[phi]),
        ComplexMatrix::from_real_rows(&[&[sigma_u2]]),
        phi.len(),
        pilot(1, 1, 1.0, sigma_v),
        sigma_v,
    )
}

/// Random contractive SSM for an `n_rx × n_tx` array.
pub fn random_ssm(n_rx: usize, n_tx: usize, p: usize, rho: f64, sigma_v: f64, seed: u64) -> Ssm {
    let d = n_rx * n_tx;
    let mut rng = seeded(seed);
    let phi = complex_gaussian_matrix(&mut rng, d, p * d, 0.3 / (p * d) as f64);
    ssm_of(phi, ComplexMatrix::identity(d).scale_real(0.2), p, pilot(n_rx, n_tx, rho, sigma_v), sigma_v)
}

/// Unit-variance complex Gaussian vectors.
pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<ComplexVector> {
    let mut rng = seeded(seed);
    (0..n).map(|_| complex_gaussian_vector(&mut rng, dim, 1.0)).collect()
}

/// Relative Frobenius error `‖a − b‖/‖b‖`.
pub fn rel_fro(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm_fro() / b.norm_fro()
}

/// Steady-state prior variance of a scalar Kalman filter by plain iteration.
pub fn riccati_prior(a: f64, s_u: f64, s_v: f64) -> f64 {
    let mut p = 1.0;
    for _ in 0..10_000 {
        let post = p - p * p / (p + s_v);
        p = a * a * post + s_u;
    }
    p
}
