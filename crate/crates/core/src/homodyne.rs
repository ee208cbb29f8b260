//! Homodyne measurement of a single quadrature and the conditional Gaussian update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::state::{pq, xq, GaussianState};

/// Variances below this are treated as a deterministic quadrature.
pub const SINGULAR_VARIANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    X,
    P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomodyneResult {
    /// The remaining `N − 1` modes after conditioning.
    pub post_state: GaussianState,
    /// Shift applied to the kept mean, already included in `post_state`.
    pub displacement: DVector<f64>,
    /// The measurement record `z`.
    pub outcome: f64,
}

/// Measures `x` on `mode`. Without an explicit `outcome`, `z` is drawn from the
/// marginal distribution of the measured quadrature using `rng`.
pub fn homodyne_x<R: Rng + ?Sized>(state: &GaussianState, mode: usize, outcome: Option<f64>, rng: &mut R) -> Result<HomodyneResult> {
    homodyne(state, mode, Quadrature::X, outcome, rng)
}

/// Measures `p` on `mode`.
pub fn homodyne_p<R: Rng + ?Sized>(state: &GaussianState, mode: usize, outcome: Option<f64>, rng: &mut R) -> Result<HomodyneResult> {
    homodyne(state, mode, Quadrature::P, outcome, rng)
}

pub fn homodyne<R: Rng + ?Sized>(
    state: &GaussianState,
    mode: usize,
    quadrature: Quadrature,
    outcome: Option<f64>,
    rng: &mut R,
) -> Result<HomodyneResult> {
    let n = state.n_modes();
    if n < 2 {
        return invalid("homodyne needs at least two modes");
    }
    if mode >= n {
        return invalid(format!("mode {mode} out of range for {n} modes"));
    }
    if let Some(z) = outcome {
        if !z.is_finite() {
            return invalid(format!("outcome must be finite, got {z}"));
        }
    }
    let q = match quadrature {
        Quadrature::X => xq(mode),
        Quadrature::P => pq(mode),
    };
    let kept: Vec<usize> = (0..2 * n).filter(|&i| i / 2 != mode).collect();
    let cm = state.cm();
    let mean = state.mean();

    let a = DMatrix::from_fn(kept.len(), kept.len(), |i, j| cm[(kept[i], kept[j])]);
    let c = DVector::from_fn(kept.len(), |i, _| cm[(kept[i], q)]);
    let b = cm[(q, q)];
    let mean_q = mean[q];

    let z = match outcome {
        Some(z) => z,
        None if b < SINGULAR_VARIANCE => mean_q,
        None => Normal::new(mean_q, b.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng),
    };

    let (a_post, displacement) = if b < SINGULAR_VARIANCE {
        (a, DVector::zeros(kept.len()))
    } else {
        let a_post = &a - &c * c.transpose() / b;
        let d = &c * ((z - mean_q) / b);
        (a_post, d)
    };
    let a_post = (&a_post + a_post.transpose()) * 0.5;
    let kept_mean = DVector::from_fn(kept.len(), |i, _| mean[kept[i]]) + &displacement;
    let tags = state.modes().iter().enumerate().filter(|(m, _)| *m != mode).map(|(_, t)| t.clone()).collect();
    let post_state = GaussianState::new(kept_mean, a_post, tags)?;
    Ok(HomodyneResult { post_state, displacement, outcome: z })
}

/// Measures the listed modes one after another in the given order, all in the same
/// quadrature. Mode indices refer to the input state. Returns the final state and
/// the outcome record.
pub fn homodyne_sequence<R: Rng + ?Sized>(
    state: &GaussianState,
    modes: &[usize],
    quadrature: Quadrature,
    outcomes: Option<&[f64]>,
    rng: &mut R,
) -> Result<(GaussianState, Vec<f64>)> {
    if let Some(o) = outcomes {
        if o.len() != modes.len() {
            return invalid(format!("{} outcomes given for {} measurements", o.len(), modes.len()));
        }
    }
    let mut remaining: Vec<usize> = (0..state.n_modes()).collect();
    let mut current = state.clone();
    let mut record = Vec::with_capacity(modes.len());
    for (k, &m) in modes.iter().enumerate() {
        let pos =
            remaining.iter().position(|&r| r == m).ok_or_else(|| Error::InvalidArgument(format!("mode {m} missing or measured twice")))?;
        let res = homodyne(&current, pos, quadrature, outcomes.map(|o| o[k]), rng)?;
        remaining.remove(pos);
        record.push(res.outcome);
        current = res.post_state;
    }
    Ok((current, record))
}
