#![allow(dead_code)]

use gcs_core::state::{symplectic_form, GaussianState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `exp(ΩG)` for a random symmetric `G` with entries in `[−scale, scale]`.
pub fn random_symplectic(n_modes: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let d = 2 * n_modes;
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = rng.random_range(-scale..scale);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    (symplectic_form(n_modes) * g).exp()
}

/// `S diag(ν) Sᵀ` with thermal factors `ν ∈ [1, 2]`, so the state is valid by construction.
pub fn random_state(n_modes: usize, rng: &mut impl Rng) -> GaussianState {
    let s = random_symplectic(n_modes, 0.4, rng);
    let nus: Vec<f64> = (0..n_modes)
        .flat_map(|_| {
            let nu = rng.random_range(1.0..2.0);
            [nu, nu]
        })
        .collect();
    let cm = &s * DMatrix::from_diagonal(&DVector::from_vec(nus)) * s.transpose();
    let cm = (&cm + cm.transpose()) * 0.5;
    let mean = DVector::from_fn(2 * n_modes, |_, _| rng.random_range(-1.0..1.0));
    GaussianState::from_cm(cm).unwrap().with_mean(mean).unwrap()
}

/// Conditional covariance after projecting `mode` onto a pure squeezed state with
/// covariance `γ`; tends to the homodyne update as the squeezing grows.
pub fn general_dyne(cm: &DMatrix<f64>, mode: usize, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let kept: Vec<usize> = (0..cm.nrows()).filter(|q| q / 2 != mode).collect();
    let meas = [2 * mode, 2 * mode + 1];
    let a = DMatrix::from_fn(kept.len(), kept.len(), |i, j| cm[(kept[i], kept[j])]);
    let b = DMatrix::from_fn(2, 2, |i, j| cm[(meas[i], meas[j])]);
    let c = DMatrix::from_fn(kept.len(), 2, |i, j| cm[(kept[i], meas[j])]);
    let inv = (b + gamma).try_inverse().expect("B + γ is positive definite");
    &a - &c * inv * c.transpose()
}

/// Pure-state covariance squeezed by `r` in `x`, or in `p` when `x_squeezed` is false.
pub fn squeezed_projector(r: f64, x_squeezed: bool) -> DMatrix<f64> {
    let (lo, hi) = ((-2.0 * r).exp(), (2.0 * r).exp());
    if x_squeezed {
        DMatrix::from_diagonal(&DVector::from_vec(vec![lo, hi]))
    } else {
        DMatrix::from_diagonal(&DVector::from_vec(vec![hi, lo]))
    }
}
