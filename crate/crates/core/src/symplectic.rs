//! Symplectic transformations generated by quadratic Hamiltonians.
//!
//! Every builder here starts from a Hamiltonian `H = ½ Rᵀ G R` and
//! exponentiates its generator. With `[x, p] = i` the Heisenberg equations are
//! `dR/dt = Ω G R`, so unit-time evolution maps `R ↦ M R` with `M = exp(Ω G)`.
//! The CM then transforms as `σ ↦ M σ Mᵀ`. We store `S = Mᵀ` so that the
//! update reads `σ_out = Sᵀ σ_in S`, and means follow the same rule.
//!
//! Composition: applying `a` and then `b` is the single transform `a.then(&b)`,
//! whose matrix is the product `S_a S_b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::state::{pq, symplectic_form, xq, GaussianState};

/// Maximum entry of `|SᵀΩS − Ω|` accepted by certification.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// A quadratic Hamiltonian over `n_modes` modes, stored as the symmetric
/// matrix `G` of `H = ½ Rᵀ G R`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian {
    g: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    pub fn new(n_modes: usize) -> Self {
        QuadraticHamiltonian { g: DMatrix::zeros(2 * n_modes, 2 * n_modes) }
    }

    /// Adds `coeff · R_a R_b` (symmetrised when `a ≠ b`).
    pub fn add(&mut self, a: usize, b: usize, coeff: f64) -> &mut Self {
        if a == b {
            self.g[(a, a)] += 2.0 * coeff;
        } else {
            self.g[(a, b)] += coeff;
            self.g[(b, a)] += coeff;
        }
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn n_modes(&self) -> usize {
        self.g.nrows() / 2
    }

    /// Generator `Ω G` of the Heisenberg flow.
    pub fn generator(&self) -> DMatrix<f64> {
        symplectic_form(self.n_modes()) * &self.g
    }
}

/// A certified symplectic matrix acting as `σ ↦ Sᵀ σ S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticTransform {
    matrix: DMatrix<f64>,
    description: String,
}

/// Max-entry residual `|SᵀΩS − Ω|`. Also accepts non-symplectic input; used for
/// certification and for auditing printed matrices.
pub fn symplectic_residual(s: &DMatrix<f64>) -> f64 {
    if s.nrows() != s.ncols() || !s.nrows().is_multiple_of(2) {
        return f64::INFINITY;
    }
    let omega = symplectic_form(s.nrows() / 2);
    (s.transpose() * &omega * s - omega).amax()
}

impl SymplecticTransform {
    /// Certifies `matrix` and wraps it. Rejects anything that is not square,
    /// of even dimension, finite and symplectic within [`SYMPLECTIC_TOL`].
    pub fn new(matrix: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(2) || matrix.nrows() == 0 {
            return invalid(format!("symplectic matrix must be square with even size, got {}x{}", matrix.nrows(), matrix.ncols()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return invalid("symplectic matrix has non-finite entries");
        }
        let residual = symplectic_residual(&matrix);
        if residual > SYMPLECTIC_TOL {
            return invalid(format!("matrix is not symplectic: max |SᵀΩS − Ω| = {residual:e}"));
        }
        Ok(SymplecticTransform { matrix, description: description.into() })
    }

    /// Wraps a Heisenberg-picture map `R ↦ M R`.
    pub fn from_heisenberg(m: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        Self::new(m.transpose(), description)
    }

    /// Unit-time evolution under `h`.
    pub fn from_hamiltonian(h: &QuadraticHamiltonian, description: impl Into<String>) -> Result<Self> {
        let m = h.generator().exp();
        Self::from_heisenberg(m, description)
    }

    pub fn identity(n_modes: usize) -> Self {
        SymplecticTransform { matrix: DMatrix::identity(2 * n_modes, 2 * n_modes), description: "identity".into() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The Heisenberg map `M = Sᵀ`.
    pub fn heisenberg(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.dim() / 2
    }

    pub fn residual(&self) -> f64 {
        symplectic_residual(&self.matrix)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SymplecticTransform) -> Result<Self> {
        if self.dim() != next.dim() {
            return invalid(format!("cannot compose {}-dim and {}-dim transforms", self.dim(), next.dim()));
        }
        SymplecticTransform::new(&self.matrix * &next.matrix, format!("{}; {}", self.description, next.description))
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

fn check_modes(n_modes: usize, modes: &[usize]) -> Result<()> {
    for (i, &m) in modes.iter().enumerate() {
        if m >= n_modes {
            return invalid(format!("mode {m} out of range for {n_modes} modes"));
        }
        if modes[..i].contains(&m) {
            return invalid(format!("mode {m} used twice in one interaction"));
        }
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite, got {v}"))
    }
}

/// General atom–light QND coupling `κ p_L (p_A cos α + x_A sin α)`.
///
/// Signs follow the Faraday-interaction convention for a pulse crossing the
/// ensemble: `x_A → x_A − κ p_L cos α`, `p_A → p_A + κ p_L sin α`,
/// `x_L → x_L − κ (p_A cos α + x_A sin α)`, `p_L` conserved. This is the flow of
/// the Hamiltonian with the opposite overall sign in the `dR/dt = Ω G R`
/// convention used by the other builders.
pub fn qnd_general(n_modes: usize, atom: usize, light: usize, kappa: f64, alpha: f64) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[atom, light])?;
    check_finite("kappa", kappa)?;
    check_finite("alpha", alpha)?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(pq(light), pq(atom), -kappa * alpha.cos()).add(pq(light), xq(atom), -kappa * alpha.sin());
    SymplecticTransform::from_hamiltonian(&h, format!("qnd(kappa={kappa}, alpha={alpha}) on atom {atom}, light {light}"))
}

/// QND coupling `κ x_A p_i`: the pulse picks up `x_i → x_i + κ x_A`, with
/// backaction `p_A → p_A − κ p_i`.
pub fn qnd_xp(n_modes: usize, atom: usize, pulse: usize, kappa: f64) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[atom, pulse])?;
    check_finite("kappa", kappa)?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(xq(atom), pq(pulse), kappa);
    SymplecticTransform::from_hamiltonian(&h, format!("qnd_xp(kappa={kappa}) atom {atom} <- pulse {pulse}"))
}

/// QND coupling `κ x_A x_i`: `p_A → p_A − κ x_i`, `p_i → p_i − κ x_A`.
pub fn qnd_xx(n_modes: usize, atom: usize, pulse: usize, kappa: f64) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[atom, pulse])?;
    check_finite("kappa", kappa)?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(xq(atom), xq(pulse), kappa);
    SymplecticTransform::from_hamiltonian(&h, format!("qnd_xx(kappa={kappa}) atom {atom} <-> pulse {pulse}"))
}

/// Beamsplitter-plus-squeezers coupling `x_L x_i` with unit strength:
/// `p_L → p_L − x_i`, `p_i → p_i − x_L`.
pub fn beamsplitter_xx(n_modes: usize, light: usize, pulse: usize) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[light, pulse])?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(xq(light), xq(pulse), 1.0);
    SymplecticTransform::from_hamiltonian(&h, format!("beamsplitter_xx light {light} <-> pulse {pulse}"))
}

/// Single-mode squeezer: `x → e^{r} x`, `p → e^{−r} p`. Positive `r` squeezes `p`.
pub fn squeezer(n_modes: usize, mode: usize, r: f64) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[mode])?;
    check_finite("r", r)?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(xq(mode), pq(mode), r);
    SymplecticTransform::from_hamiltonian(&h, format!("squeeze(r={r}) mode {mode}"))
}

/// Phase rotation by `theta`: `x → x cos θ + p sin θ`, `p → p cos θ − x sin θ`.
pub fn phase_rotation(n_modes: usize, mode: usize, theta: f64) -> Result<SymplecticTransform> {
    check_modes(n_modes, &[mode])?;
    check_finite("theta", theta)?;
    let mut h = QuadraticHamiltonian::new(n_modes);
    h.add(xq(mode), xq(mode), 0.5 * theta).add(pq(mode), pq(mode), 0.5 * theta);
    SymplecticTransform::from_hamiltonian(&h, format!("rotate(theta={theta}) mode {mode}"))
}

/// `σ ↦ Sᵀ σ S`, `mean ↦ Sᵀ mean`.
pub fn apply(state: &GaussianState, s: &SymplecticTransform) -> Result<GaussianState> {
    if s.dim() != state.cm().nrows() {
        return invalid(format!("transform is {}-dimensional, state has {} quadratures", s.dim(), state.cm().nrows()));
    }
    let st = s.matrix.transpose();
    let cm = &st * state.cm() * &s.matrix;
    // symmetrise away round-off so long chains keep an exactly symmetric CM
    let cm = (&cm + cm.transpose()) * 0.5;
    let mean: DVector<f64> = &st * state.mean();
    GaussianState::new(mean, cm, state.modes().to_vec())
}

/// Mode layout of the two-mode composite protocol: atom, cluster light and
/// the two interaction pulses.
pub mod composite {
    pub const ATOM: usize = 0;
    pub const LIGHT: usize = 1;
    pub const PULSE1: usize = 2;
    pub const PULSE2: usize = 3;
    pub const N_MODES: usize = 4;
}

/// First round of the two-mode composite protocol on an arbitrary register:
/// the pulse crosses the ensemble (`κ x_A p_i`) and then meets the cluster
/// light on the beamsplitter (`x_L x_i`).
pub fn pickup_then_beamsplit(n_modes: usize, atom: usize, light: usize, pulse: usize, kappa: f64) -> Result<SymplecticTransform> {
    qnd_xp(n_modes, atom, pulse, kappa)?
        .then(&beamsplitter_xx(n_modes, light, pulse)?)
        .map(|s| s.with_description(format!("pulse {pulse}: qnd_xp(kappa={kappa}) with atom {atom}, then beamsplitter with light {light}")))
}

/// Second round: beamsplitter first, then the ensemble.
pub fn beamsplit_then_pickup(n_modes: usize, atom: usize, light: usize, pulse: usize, kappa: f64) -> Result<SymplecticTransform> {
    beamsplitter_xx(n_modes, light, pulse)?
        .then(&qnd_xp(n_modes, atom, pulse, kappa)?)
        .map(|s| s.with_description(format!("pulse {pulse}: beamsplitter with light {light}, then qnd_xp(kappa={kappa}) with atom {atom}")))
}

/// First interaction round on the 4-mode register `(A, L, i₁, i₂)`.
pub fn s_int1(kappa: f64) -> Result<SymplecticTransform> {
    use composite::*;
    pickup_then_beamsplit(N_MODES, ATOM, LIGHT, PULSE1, kappa).map(|s| s.with_description(format!("S_int1(kappa={kappa})")))
}

/// Second interaction round on the 4-mode register `(A, L, i₁, i₂)`.
pub fn s_int2(kappa: f64) -> Result<SymplecticTransform> {
    use composite::*;
    beamsplit_then_pickup(N_MODES, ATOM, LIGHT, PULSE2, kappa).map(|s| s.with_description(format!("S_int2(kappa={kappa})")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformFile {
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    pub description: String,
}

impl From<&SymplecticTransform> for TransformFile {
    fn from(s: &SymplecticTransform) -> Self {
        TransformFile {
            dim: s.dim(),
            matrix: s.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            description: s.description.clone(),
        }
    }
}

impl SymplecticTransform {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TransformFile::from(self)).expect("transform serialization is infallible")
    }

    /// Parses and certifies a transform.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: TransformFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if f.matrix.len() != f.dim || f.matrix.iter().any(|r| r.len() != f.dim) {
            return Err(Error::Parse(format!("matrix shape does not match dim = {}", f.dim)));
        }
        let m = DMatrix::from_fn(f.dim, f.dim, |i, j| f.matrix[i][j]);
        SymplecticTransform::new(m, f.description).map_err(|e| Error::Parse(e.to_string()))
    }
}
