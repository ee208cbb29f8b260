//! Closed-form reference computations that share no code path with the
//! generator-exponential builders or the sequential homodyne update.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Heisenberg map of both interaction rounds of the two-mode composite protocol,
/// written out row by row on `(x_A, p_A, x_L, p_L, x_i1, p_i1, x_i2, p_i2)`.
pub fn two_mode_heisenberg(kappa: f64) -> DMatrix<f64> {
    let k = kappa;
    #[rustfmt::skip]
    let rows = [
        // x_A' = x_A
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        // p_A' = p_A + κ x_L − κ p_i1 − κ p_i2
        [0.0, 1.0, k, 0.0, 0.0, -k, 0.0, -k],
        // x_L' = x_L
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        // p_L' = p_L − κ x_A − x_i1 − x_i2
        [-k, 0.0, 0.0, 1.0, -1.0, 0.0, -1.0, 0.0],
        // x_i1' = x_i1 + κ x_A
        [k, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        // p_i1' = p_i1 − x_L
        [0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        // x_i2' = x_i2 + κ x_A
        [k, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        // p_i2' = p_i2 − x_L
        [0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    DMatrix::from_fn(8, 8, |i, j| rows[i][j])
}

/// Input covariance: vacuum atom and light, pulses with `Var x = e^{2r}`, `Var p = e^{−2r}`.
pub fn two_mode_input_cm(squeezing: f64) -> DMatrix<f64> {
    let (a, s) = ((2.0 * squeezing).exp(), (-2.0 * squeezing).exp());
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, a, s, a, s]))
}

/// Pre-measurement covariance `M σ_in Mᵀ`.
pub fn two_mode_pre_measurement(kappa: f64, squeezing: f64) -> DMatrix<f64> {
    let m = two_mode_heisenberg(kappa);
    &m * two_mode_input_cm(squeezing) * m.transpose()
}

/// Joint homodyne of the quadratures `measured` (indices into `cm`), computed
/// with the Moore–Penrose pseudo-inverse of the full measured block. The rows of
/// the result follow `kept` order.
pub struct JointConditioning {
    pub cm: DMatrix<f64>,
    /// Gain matrix `C B⁺` mapping centred outcomes to the kept-mean shift.
    pub gain: DMatrix<f64>,
}

pub fn joint_conditioning(cm: &DMatrix<f64>, kept: &[usize], measured: &[usize]) -> Result<JointConditioning> {
    let dim = cm.nrows();
    if kept.iter().chain(measured).any(|&q| q >= dim) {
        return invalid("quadrature index out of range");
    }
    let a = DMatrix::from_fn(kept.len(), kept.len(), |i, j| cm[(kept[i], kept[j])]);
    let b = DMatrix::from_fn(measured.len(), measured.len(), |i, j| cm[(measured[i], measured[j])]);
    let c = DMatrix::from_fn(kept.len(), measured.len(), |i, j| cm[(kept[i], measured[j])]);
    let b_pinv = b.pseudo_inverse(1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
    let gain = &c * b_pinv;
    let out = &a - &gain * c.transpose();
    Ok(JointConditioning { cm: (&out + out.transpose()) * 0.5, gain })
}

/// Final atom–light covariance of the two-mode composite protocol after
/// x-homodyne on both pulses.
pub fn two_mode_final_cm(kappa: f64, squeezing: f64) -> DMatrix<f64> {
    let pre = two_mode_pre_measurement(kappa, squeezing);
    joint_conditioning(&pre, &[0, 1, 2, 3], &[4, 6]).expect("fixed indices are in range").cm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::symplectic_form;

    #[test]
    fn heisenberg_map_is_symplectic() {
        for k in [0.0, 0.5, 0.8, 1.0] {
            let m = two_mode_heisenberg(k);
            let o = symplectic_form(4);
            assert!((&m * &o * m.transpose() - o).amax() < 1e-15);
        }
    }

    #[test]
    fn kappa_zero_final_is_vacuum() {
        let f = two_mode_final_cm(0.0, 0.0);
        // x_i1 and x_i2 carry no atom–light information at κ = 0; only p_L picks up x_i noise,
        // which the x-measurement removes exactly.
        assert!((f - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn joint_conditioning_rank_one_matches_formula() {
        let cm = DMatrix::from_row_slice(4, 4, &[2.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, -1.0, 1.0, 0.0, 2.0, 0.0, 0.0, -1.0, 0.0, 2.0]);
        let j = joint_conditioning(&cm, &[0, 1], &[2]).unwrap();
        assert!((j.cm[(0, 0)] - 1.5).abs() < 1e-14);
        assert!((j.cm[(1, 1)] - 2.0).abs() < 1e-14);
        assert!((j.gain[(0, 0)] - 0.5).abs() < 1e-14);
    }
}
