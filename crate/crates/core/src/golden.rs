//! Reference matrices for the two-mode composite protocol, stored as polynomial
//! tables in κ and evaluated on demand, plus per-entry discrepancy reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial coefficients in ascending powers of κ.
type Poly = &'static [f64];

const Z: Poly = &[];
const ONE: Poly = &[1.0];
const NEG1: Poly = &[-1.0];
const K: Poly = &[0.0, 1.0];
const NEGK: Poly = &[0.0, -1.0];
const TWO: Poly = &[2.0];
const TWOK: Poly = &[0.0, 2.0];

/// `−(2/3) κ (1 + κ²)`
const M23K1K2: Poly = &[0.0, -2.0 / 3.0, 0.0, -2.0 / 3.0];
/// `(2/3) κ (1 + κ²)²`
const P23K1K2SQ: Poly = &[0.0, 2.0 / 3.0, 0.0, 4.0 / 3.0, 0.0, 2.0 / 3.0];

const S_INT1: [[Poly; 8]; 8] = [
    [ONE, Z, Z, Z, K, Z, Z, Z],
    [Z, ONE, Z, Z, Z, Z, Z, Z],
    [Z, K, ONE, Z, Z, NEG1, Z, Z],
    [Z, Z, Z, ONE, Z, Z, Z, Z],
    [Z, Z, Z, NEG1, ONE, Z, Z, Z],
    [Z, K, Z, Z, Z, ONE, Z, Z],
    [Z, Z, Z, Z, Z, Z, ONE, Z],
    [Z, Z, Z, Z, Z, Z, Z, ONE],
];

const S_INT2: [[Poly; 8]; 8] = [
    [ONE, Z, Z, NEGK, Z, Z, Z, Z],
    [Z, ONE, Z, Z, Z, Z, ONE, Z],
    [Z, Z, ONE, Z, Z, Z, Z, NEG1],
    [Z, Z, Z, ONE, Z, Z, Z, Z],
    [Z, Z, Z, Z, ONE, Z, Z, Z],
    [Z, Z, Z, NEG1, Z, ONE, Z, Z],
    [Z, K, Z, Z, Z, Z, ONE, Z],
    [Z, Z, Z, Z, Z, Z, Z, ONE],
];

const K2P1: Poly = &[1.0, 0.0, 1.0];
const NEGK2P1: Poly = &[-1.0, 0.0, -1.0];
const K2: Poly = &[0.0, 0.0, 1.0];

const SIGMA_OUT: [[Poly; 8]; 8] = [
    [&[1.0, 0.0, 3.0], Z, Z, NEGK, TWOK, Z, TWOK, Z],
    [Z, ONE, K, Z, Z, NEGK, Z, NEGK],
    [Z, K, &[3.0, 0.0, 1.0], Z, Z, NEGK2P1, Z, NEGK2P1],
    [NEGK, Z, Z, ONE, NEG1, Z, NEG1, Z],
    [TWOK, Z, Z, NEG1, TWO, Z, ONE, Z],
    [Z, NEGK, NEGK2P1, Z, Z, K2P1, Z, K2],
    [TWOK, Z, Z, NEG1, ONE, Z, TWO, Z],
    [Z, NEGK, NEGK2P1, Z, Z, K2, Z, K2P1],
];

const SIGMA_FIN: [[Poly; 4]; 4] = [
    [&[1.0, 0.0, 1.0 / 3.0], M23K1K2, &[0.0, 0.0, -8.0 / 3.0], &[0.0, -5.0 / 3.0, 0.0, -2.0 / 3.0]],
    [M23K1K2, &[1.0, 2.0 / 3.0, 0.0, 4.0 / 3.0, 0.0, 2.0 / 3.0], &[0.0, 1.0 / 3.0, 0.0, -2.0 / 3.0], P23K1K2SQ],
    [&[0.0, 0.0, -8.0 / 3.0], &[0.0, 1.0 / 3.0, 0.0, -2.0 / 3.0], &[3.0, 0.0, -5.0 / 3.0], M23K1K2],
    [&[0.0, -5.0 / 3.0, 0.0, -2.0 / 3.0], P23K1K2SQ, M23K1K2, &[5.0 / 3.0, 0.0, 4.0 / 3.0, 0.0, 2.0 / 3.0]],
];

fn eval_poly(p: Poly, kappa: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * kappa + c)
}

/// Which reference matrix to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Golden {
    /// First interaction round, 8×8.
    SInt1,
    /// Second interaction round, 8×8.
    SInt2,
    /// Covariance matrix after both rounds, before measurement, 8×8.
    SigmaOut,
    /// Atom–light covariance matrix after measuring both pulses, 4×4.
    SigmaFin,
}

impl Golden {
    pub const ALL: [Golden; 4] = [Golden::SInt1, Golden::SInt2, Golden::SigmaOut, Golden::SigmaFin];

    pub fn name(self) -> &'static str {
        match self {
            Golden::SInt1 => "s_int1",
            Golden::SInt2 => "s_int2",
            Golden::SigmaOut => "sigma_out",
            Golden::SigmaFin => "sigma_fin",
        }
    }

    pub fn evaluate(self, kappa: f64) -> DMatrix<f64> {
        match self {
            Golden::SInt1 => DMatrix::from_fn(8, 8, |i, j| eval_poly(S_INT1[i][j], kappa)),
            Golden::SInt2 => DMatrix::from_fn(8, 8, |i, j| eval_poly(S_INT2[i][j], kappa)),
            Golden::SigmaOut => DMatrix::from_fn(8, 8, |i, j| eval_poly(SIGMA_OUT[i][j], kappa)),
            Golden::SigmaFin => DMatrix::from_fn(4, 4, |i, j| eval_poly(SIGMA_FIN[i][j], kappa)),
        }
    }
}

/// One entry of a reference-versus-computed comparison. Indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub matrix_name: String,
    pub i: usize,
    pub j: usize,
    #[serde(rename = "paper_value")]
    pub reference_value: f64,
    pub computed_value: f64,
    pub delta: f64,
}

pub fn discrepancy_rows(matrix_name: &str, reference: &DMatrix<f64>, computed: &DMatrix<f64>) -> Result<Vec<DiscrepancyRow>> {
    if reference.shape() != computed.shape() {
        return Err(Error::InvalidArgument(format!(
            "{matrix_name}: reference is {:?}, computed is {:?}",
            reference.shape(),
            computed.shape()
        )));
    }
    let mut rows = Vec::with_capacity(reference.len());
    for i in 0..reference.nrows() {
        for j in 0..reference.ncols() {
            let (p, c) = (reference[(i, j)], computed[(i, j)]);
            rows.push(DiscrepancyRow {
                matrix_name: matrix_name.to_string(),
                i: i + 1,
                j: j + 1,
                reference_value: p,
                computed_value: c,
                delta: c - p,
            });
        }
    }
    Ok(rows)
}

pub fn max_abs_delta(rows: &[DiscrepancyRow]) -> f64 {
    rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max)
}

pub fn discrepancy_csv(rows: &[DiscrepancyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}
