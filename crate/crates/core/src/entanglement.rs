//! Symplectic spectra, partial transposition, PPT verdicts and nullifier variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::state::{pq, symplectic_form, GaussianState};

/// Threshold below which a partially transposed eigenvalue certifies entanglement.
pub const ENTANGLEMENT_TOL: f64 = 1e-9;

/// Relative tolerance used when pairing the `±iν` eigenvalues of `Ωσ`.
pub const PAIR_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    /// Sorted ascending, one value per mode.
    pub eigenvalues: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    /// True when every value is at least `1 − tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|&v| v >= 1.0 - tol)
    }
}

fn check_cm_shape(cm: &DMatrix<f64>) -> Result<()> {
    if cm.nrows() != cm.ncols() || cm.nrows() == 0 || !cm.nrows().is_multiple_of(2) {
        return invalid(format!("covariance matrix must be square with even size, got {}x{}", cm.nrows(), cm.ncols()));
    }
    if cm.iter().any(|v| !v.is_finite()) {
        return invalid("covariance matrix has non-finite entries");
    }
    let asym = (cm - cm.transpose()).amax();
    if asym > 1e-10 {
        return invalid(format!("covariance matrix is not symmetric (residual {asym:e})"));
    }
    Ok(())
}

/// Spectrum of an arbitrary real symmetric `2N×2N` matrix, from the moduli of the
/// eigenvalues of `Ωσ`. Also used on partially transposed matrices that need not be
/// valid states.
pub fn spectrum_of_matrix(cm: &DMatrix<f64>) -> Result<SymplecticSpectrum> {
    check_cm_shape(cm)?;
    let n = cm.nrows() / 2;
    let m = symplectic_form(n) * cm;
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    if moduli.len() != 2 * n || moduli.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation failed".into()));
    }
    moduli.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    for pair in moduli.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        if (a - b).abs() > PAIR_TOL * a.abs().max(1.0) {
            log::debug!("unpaired symplectic eigenvalues {a} and {b}");
        }
        out.push(0.5 * (a + b));
    }
    Ok(SymplecticSpectrum { eigenvalues: out })
}

pub fn symplectic_spectrum(state: &GaussianState) -> Result<SymplecticSpectrum> {
    spectrum_of_matrix(state.cm())
}

/// A partially transposed covariance matrix. It is deliberately not a
/// [`GaussianState`] because it may violate the uncertainty principle.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialTranspose {
    pub matrix: DMatrix<f64>,
    pub party: Vec<usize>,
}

impl PartialTranspose {
    pub fn spectrum(&self) -> Result<SymplecticSpectrum> {
        spectrum_of_matrix(&self.matrix)
    }
}

fn check_party(n_modes: usize, party: &[usize]) -> Result<Vec<usize>> {
    let mut p = party.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.len() != party.len() {
        return invalid("party lists a mode twice");
    }
    if let Some(&m) = p.iter().find(|&&m| m >= n_modes) {
        return invalid(format!("party mode {m} out of range for {n_modes} modes"));
    }
    if p.is_empty() || p.len() == n_modes {
        return invalid("party must be a non-empty proper subset of the modes");
    }
    Ok(p)
}

/// Flips the sign of `p` on every mode of `party`.
pub fn partial_transpose_matrix(cm: &DMatrix<f64>, party: &[usize]) -> Result<PartialTranspose> {
    check_cm_shape(cm)?;
    let party = check_party(cm.nrows() / 2, party)?;
    let mut diag = DVector::from_element(cm.nrows(), 1.0);
    for &m in &party {
        diag[pq(m)] = -1.0;
    }
    let p = DMatrix::from_diagonal(&diag);
    Ok(PartialTranspose { matrix: &p * cm * &p, party })
}

pub fn partial_transpose(state: &GaussianState, party: &[usize]) -> Result<PartialTranspose> {
    partial_transpose_matrix(state.cm(), party)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PptVerdict {
    pub min_symplectic_eigenvalue: f64,
    pub entangled: bool,
    pub partition: (Vec<usize>, Vec<usize>),
    /// True when PPT is known to be necessary and sufficient for this cut
    /// (one side is a single mode). Otherwise a separable verdict is inconclusive.
    pub sufficient: bool,
}

pub fn ppt_test_matrix(cm: &DMatrix<f64>, party: &[usize]) -> Result<PptVerdict> {
    let pt = partial_transpose_matrix(cm, party)?;
    let n = cm.nrows() / 2;
    let rest: Vec<usize> = (0..n).filter(|m| !pt.party.contains(m)).collect();
    let sufficient = pt.party.len() == 1 || rest.len() == 1;
    if !sufficient {
        log::warn!("PPT is only sufficient for separability on 1|N cuts; verdict for {:?}|{:?} is one-sided", pt.party, rest);
    }
    let nu = pt.spectrum()?.min();
    Ok(PptVerdict { min_symplectic_eigenvalue: nu, entangled: nu < 1.0 - ENTANGLEMENT_TOL, partition: (pt.party, rest), sufficient })
}

pub fn ppt_test(state: &GaussianState, party: &[usize]) -> Result<PptVerdict> {
    ppt_test_matrix(state.cm(), party)
}

/// `Σ max(0, −ln ν̃ᵢ)` over the partially transposed spectrum.
pub fn log_negativity(state: &GaussianState, party: &[usize]) -> Result<f64> {
    let spec = partial_transpose(state, party)?.spectrum()?;
    Ok(log_negativity_of(&spec))
}

fn log_negativity_of(pt_spectrum: &SymplecticSpectrum) -> f64 {
    pt_spectrum.eigenvalues.iter().filter(|&&v| v < 1.0).map(|v| -v.ln()).sum()
}

/// A linear quadrature combination `coeffs · R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullifierSpec {
    pub coeffs: Vec<f64>,
    pub name: String,
}

impl NullifierSpec {
    pub fn new(coeffs: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("nullifier coefficients must be finite");
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return invalid("nullifier coefficients are all zero");
        }
        Ok(NullifierSpec { coeffs, name: name.into() })
    }

    /// Builds `Σ c · R_q` from `(quadrature index, coefficient)` terms.
    pub fn from_terms(n_modes: usize, terms: &[(usize, f64)], name: impl Into<String>) -> Result<Self> {
        let mut coeffs = vec![0.0; 2 * n_modes];
        for &(q, c) in terms {
            if q >= coeffs.len() {
                return invalid(format!("quadrature {q} out of range for {n_modes} modes"));
            }
            coeffs[q] += c;
        }
        Self::new(coeffs, name)
    }
}

/// `cᵀ σ c`. Means are ignored because homodyne displacements are known.
pub fn nullifier_variance(state: &GaussianState, n: &NullifierSpec) -> Result<f64> {
    let dim = state.cm().nrows();
    if n.coeffs.len() != dim {
        return invalid(format!("nullifier has {} coefficients, state has {dim} quadratures", n.coeffs.len()));
    }
    let c = DVector::from_column_slice(&n.coeffs);
    Ok((c.transpose() * state.cm() * &c)[(0, 0)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub partition: Vec<Vec<usize>>,
    pub spectrum: Vec<f64>,
    pub pt_spectrum: Vec<f64>,
    pub nu_min: f64,
    pub entangled: bool,
    pub log_negativity: f64,
    pub sufficient: bool,
}

pub fn entanglement_report(state: &GaussianState, party: &[usize]) -> Result<EntanglementReport> {
    entanglement_report_matrix(state.cm(), party)
}

pub fn entanglement_report_matrix(cm: &DMatrix<f64>, party: &[usize]) -> Result<EntanglementReport> {
    let spectrum = spectrum_of_matrix(cm)?;
    let verdict = ppt_test_matrix(cm, party)?;
    let pt = partial_transpose_matrix(cm, party)?.spectrum()?;
    Ok(EntanglementReport {
        partition: vec![verdict.partition.0, verdict.partition.1],
        spectrum: spectrum.eigenvalues,
        log_negativity: log_negativity_of(&pt),
        pt_spectrum: pt.eigenvalues,
        nu_min: verdict.min_symplectic_eigenvalue,
        entangled: verdict.entangled,
        sufficient: verdict.sufficient,
    })
}

impl EntanglementReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}
