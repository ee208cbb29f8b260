//! Gaussian states over `N` bosonic modes.
//!
//! A state is fully described by its first moments (the mean vector) and its
//! covariance matrix (CM). All vectors and matrices use the interleaved
//! quadrature ordering `(x₁, p₁, x₂, p₂, …, x_N, p_N)`, and the vacuum has
//! unit variance in every quadrature, so the vacuum CM is the identity.
//!
//! A CM describes a physical state iff it is symmetric and satisfies the
//! uncertainty relation `σ + iΩ ≥ 0`, where `Ω` is the symplectic form.
//! States are plain values: every operation returns a new state.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Physical role of a mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Atomic,
    #[default]
    ClusterLight,
    InteractionPulse,
}

/// Label and kind of one mode. An empty label marks an anonymous mode;
/// anonymous modes are exempt from the label-uniqueness rule.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeTag {
    pub label: String,
    pub kind: ModeKind,
}

impl ModeTag {
    pub fn new(label: impl Into<String>, kind: ModeKind) -> Self {
        ModeTag { label: label.into(), kind }
    }

    pub fn is_anonymous(&self) -> bool {
        self.label.is_empty()
    }
}

/// Numerical tolerances for state validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Maximum allowed `|σ_ij − σ_ji|`.
    pub symmetry: f64,
    /// Smallest eigenvalue of `σ + iΩ` may dip this far below zero.
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { symmetry: 1e-10, positivity: 1e-9 }
    }
}

/// Index of the `x` quadrature of `mode`.
#[inline]
pub fn xq(mode: usize) -> usize {
    2 * mode
}

/// Index of the `p` quadrature of `mode`.
#[inline]
pub fn pq(mode: usize) -> usize {
    2 * mode + 1
}

/// The symplectic form `Ω_N`: block diagonal with `[[0, 1], [−1, 0]]` blocks.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(xq(k), pq(k))] = 1.0;
        omega[(pq(k), xq(k))] = -1.0;
    }
    omega
}

/// Smallest eigenvalue of the Hermitian matrix `m + iΩ`.
///
/// Computed through the real symmetric embedding `[[m, −Ω], [Ω, m]]`, whose
/// spectrum is that of `m + iΩ` with every eigenvalue doubled.
pub fn min_eigenvalue_with_form(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let omega = symplectic_form(dim / 2);
    let sym = (m + m.transpose()) * 0.5;
    let mut big = DMatrix::zeros(2 * dim, 2 * dim);
    big.view_mut((0, 0), (dim, dim)).copy_from(&sym);
    big.view_mut((dim, dim), (dim, dim)).copy_from(&sym);
    big.view_mut((0, dim), (dim, dim)).copy_from(&(-&omega));
    big.view_mut((dim, 0), (dim, dim)).copy_from(&omega);
    big.symmetric_eigenvalues().min()
}

fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Outcome of [`validate_state`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub symmetry_residual: f64,
    pub min_eigenvalue: f64,
    pub symmetric: bool,
    pub positive: bool,
    pub mean_length_ok: bool,
    pub labels_unique: bool,
    pub finite: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.symmetric && self.positive && self.mean_length_ok && self.labels_unique && self.finite
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.finite {
            out.push("non-finite entries");
        }
        if !self.symmetric {
            out.push("covariance matrix not symmetric");
        }
        if !self.positive {
            out.push("uncertainty relation violated");
        }
        if !self.mean_length_ok {
            out.push("mean length mismatch");
        }
        if !self.labels_unique {
            out.push("duplicate mode labels");
        }
        out
    }
}

/// A Gaussian state: mean vector, covariance matrix and mode registry.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cm: DMatrix<f64>,
    modes: Vec<ModeTag>,
}

impl GaussianState {
    /// Assembles a state, checking only shapes and label uniqueness.
    ///
    /// Physical validity is reported by [`validate_state`]; use
    /// [`GaussianState::new_checked`] to reject unphysical matrices.
    pub fn new(mean: DVector<f64>, cm: DMatrix<f64>, modes: Vec<ModeTag>) -> Result<Self> {
        let n = modes.len();
        if n == 0 {
            return invalid("a Gaussian state needs at least one mode");
        }
        if cm.nrows() != 2 * n || cm.ncols() != 2 * n {
            return invalid(format!("covariance matrix is {}x{}, expected {}x{} for {} modes", cm.nrows(), cm.ncols(), 2 * n, 2 * n, n));
        }
        if mean.len() != 2 * n {
            return invalid(format!("mean has length {}, expected {}", mean.len(), 2 * n));
        }
        if let Some(dup) = duplicate_label(&modes) {
            return invalid(format!("duplicate mode label {dup:?}"));
        }
        Ok(GaussianState { mean, cm, modes })
    }

    /// Like [`GaussianState::new`], but also requires the state to pass
    /// [`validate_state`] at the default tolerances.
    pub fn new_checked(mean: DVector<f64>, cm: DMatrix<f64>, modes: Vec<ModeTag>) -> Result<Self> {
        let state = Self::new(mean, cm, modes)?;
        let report = validate_state(&state);
        if !report.passed() {
            return invalid(format!("unphysical state: {}", report.failures().join(", ")));
        }
        Ok(state)
    }

    /// Zero-mean state with the given CM and anonymous default tags.
    pub fn from_cm(cm: DMatrix<f64>) -> Result<Self> {
        if !cm.nrows().is_multiple_of(2) || cm.nrows() != cm.ncols() {
            return invalid(format!("covariance matrix must be square with even size, got {}x{}", cm.nrows(), cm.ncols()));
        }
        let n = cm.nrows() / 2;
        Self::new(DVector::zeros(2 * n), cm, vec![ModeTag::default(); n])
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cm(&self) -> &DMatrix<f64> {
        &self.cm
    }

    pub fn modes(&self) -> &[ModeTag] {
        &self.modes
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        if label.is_empty() {
            return None;
        }
        self.modes.iter().position(|m| m.label == label)
    }

    /// Like [`GaussianState::index_of`] but an unknown label is an error.
    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::InvalidArgument(format!("no mode labelled {label:?}")))
    }

    pub fn with_tags(mut self, modes: Vec<ModeTag>) -> Result<Self> {
        if modes.len() != self.modes.len() {
            return invalid(format!("expected {} tags, got {}", self.modes.len(), modes.len()));
        }
        if let Some(dup) = duplicate_label(&modes) {
            return invalid(format!("duplicate mode label {dup:?}"));
        }
        self.modes = modes;
        Ok(self)
    }

    pub fn with_mean(mut self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.mean.len() {
            return invalid(format!("mean has length {}, expected {}", mean.len(), self.mean.len()));
        }
        self.mean = mean;
        Ok(self)
    }

    /// Variance of the `x` quadrature of `mode`.
    pub fn var_x(&self, mode: usize) -> f64 {
        self.cm[(xq(mode), xq(mode))]
    }

    /// Variance of the `p` quadrature of `mode`.
    pub fn var_p(&self, mode: usize) -> f64 {
        self.cm[(pq(mode), pq(mode))]
    }

    /// 2×2 CM block of a single mode.
    pub fn mode_block(&self, mode: usize) -> DMatrix<f64> {
        self.cm.view((2 * mode, 2 * mode), (2, 2)).into_owned()
    }

    /// The state restricted to `keep` (in the given order).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return invalid("cannot restrict to zero modes");
        }
        let n = self.n_modes();
        if let Some(&bad) = keep.iter().find(|&&k| k >= n) {
            return invalid(format!("mode index {bad} out of range for {n} modes"));
        }
        let idx = quadrature_indices(keep);
        let cm = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cm[(idx[i], idx[j])]);
        let mean = DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]]);
        let modes = keep.iter().map(|&k| self.modes[k].clone()).collect();
        GaussianState::new(mean, cm, modes)
    }
}

/// Quadrature indices `(x_k, p_k)` for each listed mode, in order.
pub fn quadrature_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&k| [xq(k), pq(k)]).collect()
}

fn duplicate_label(modes: &[ModeTag]) -> Option<String> {
    let mut seen = HashSet::new();
    modes.iter().filter(|m| !m.is_anonymous()).find(|m| !seen.insert(m.label.as_str())).map(|m| m.label.clone())
}

/// Checks every state invariant and reports the residuals. Never fails.
pub fn validate_state(state: &GaussianState) -> ValidationReport {
    validate_state_with(state, &Tolerances::default())
}

pub fn validate_state_with(state: &GaussianState, tol: &Tolerances) -> ValidationReport {
    let finite = state.cm.iter().chain(state.mean.iter()).all(|v| v.is_finite());
    let symmetry_residual = symmetry_residual(&state.cm);
    let min_eigenvalue = if finite { min_eigenvalue_with_form(&state.cm) } else { f64::NAN };
    ValidationReport {
        symmetry_residual,
        min_eigenvalue,
        symmetric: symmetry_residual <= tol.symmetry,
        positive: min_eigenvalue >= -tol.positivity,
        mean_length_ok: state.mean.len() == 2 * state.n_modes(),
        labels_unique: duplicate_label(&state.modes).is_none(),
        finite,
    }
}

/// The `n`-mode vacuum: zero mean, identity CM, anonymous tags.
pub fn vacuum_state(n: usize) -> Result<GaussianState> {
    if n == 0 {
        return invalid("vacuum_state needs at least one mode");
    }
    GaussianState::from_cm(DMatrix::identity(2 * n, 2 * n))
}

/// Thermal state of one mode with CM `ν·𝟙`, `ν ≥ 1`.
pub fn thermal_state(nu: f64) -> Result<GaussianState> {
    if !nu.is_finite() || nu < 1.0 {
        return invalid(format!("thermal variance must be finite and >= 1, got {nu}"));
    }
    GaussianState::from_cm(DMatrix::identity(2, 2) * nu)
}

/// Two-mode squeezed vacuum with squeezing `r`:
/// CM `[[c·𝟙, s·Z], [s·Z, c·𝟙]]`, `c = cosh 2r`, `s = sinh 2r`, `Z = diag(1, −1)`.
pub fn two_mode_squeezed_vacuum(r: f64) -> Result<GaussianState> {
    if !r.is_finite() {
        return invalid("squeezing must be finite");
    }
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let cm = DMatrix::from_row_slice(
        4,
        4,
        &[
            c, 0.0, s, 0.0, //
            0.0, c, 0.0, -s, //
            s, 0.0, c, 0.0, //
            0.0, -s, 0.0, c,
        ],
    );
    GaussianState::from_cm(cm)
}

/// Direct sum of two independent systems.
pub fn tensor(a: &GaussianState, b: &GaussianState) -> Result<GaussianState> {
    let (da, db) = (a.cm.nrows(), b.cm.nrows());
    let mut cm = DMatrix::zeros(da + db, da + db);
    cm.view_mut((0, 0), (da, da)).copy_from(&a.cm);
    cm.view_mut((da, da), (db, db)).copy_from(&b.cm);
    let mean = DVector::from_iterator(da + db, a.mean.iter().chain(b.mean.iter()).copied());
    let modes: Vec<ModeTag> = a.modes.iter().chain(b.modes.iter()).cloned().collect();
    if let Some(dup) = duplicate_label(&modes) {
        return invalid(format!("label {dup:?} appears in both factors"));
    }
    GaussianState::new(mean, cm, modes)
}

/// Reorders modes so that new mode `j` is old mode `perm[j]`.
pub fn permute_modes(state: &GaussianState, perm: &[usize]) -> Result<GaussianState> {
    let n = state.n_modes();
    if perm.len() != n {
        return invalid(format!("permutation has length {}, state has {n} modes", perm.len()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return invalid(format!("{perm:?} is not a permutation of 0..{n}"));
        }
        seen[p] = true;
    }
    state.restrict(perm)
}

/// Inverse of a permutation given in the convention of [`permute_modes`].
pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// Partial trace over `modes`: for Gaussian states this keeps the complementary
/// rows and columns of the CM and mean.
pub fn trace_out(state: &GaussianState, modes: &[usize]) -> Result<GaussianState> {
    let n = state.n_modes();
    if let Some(&bad) = modes.iter().find(|&&k| k >= n) {
        return invalid(format!("mode index {bad} out of range for {n} modes"));
    }
    let drop: HashSet<usize> = modes.iter().copied().collect();
    let keep: Vec<usize> = (0..n).filter(|k| !drop.contains(k)).collect();
    if keep.is_empty() {
        return invalid("cannot trace out every mode");
    }
    state.restrict(&keep)
}

/// On-disk form of a state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub n_modes: usize,
    pub ordering: String,
    pub mean: Vec<f64>,
    pub cm: Vec<Vec<f64>>,
    pub modes: Vec<ModeTag>,
}

pub const ORDERING: &str = "xpxp";

impl From<&GaussianState> for StateFile {
    fn from(s: &GaussianState) -> Self {
        StateFile {
            n_modes: s.n_modes(),
            ordering: ORDERING.to_string(),
            mean: s.mean.iter().copied().collect(),
            cm: s.cm.row_iter().map(|r| r.iter().copied().collect()).collect(),
            modes: s.modes.clone(),
        }
    }
}

impl TryFrom<StateFile> for GaussianState {
    type Error = Error;

    fn try_from(f: StateFile) -> Result<Self> {
        if f.ordering != ORDERING {
            return Err(Error::Parse(format!("unsupported ordering {:?}, expected {ORDERING:?}", f.ordering)));
        }
        if f.modes.len() != f.n_modes {
            return Err(Error::Parse(format!("n_modes = {} but {} mode tags given", f.n_modes, f.modes.len())));
        }
        let dim = f.cm.len();
        if f.cm.iter().any(|row| row.len() != dim) {
            return Err(Error::Parse("covariance matrix rows have unequal lengths".into()));
        }
        let cm = DMatrix::from_fn(dim, dim, |i, j| f.cm[i][j]);
        let mean = DVector::from_vec(f.mean);
        GaussianState::new(mean, cm, f.modes).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl GaussianState {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StateFile::from(self)).expect("state serialization is infallible")
    }

    /// Parses the JSON state format. Structural problems are parse errors;
    /// physical validity is not checked here.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        GaussianState::try_from(file)
    }
}
