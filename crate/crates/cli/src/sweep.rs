use gcs_core::entanglement::ppt_test;
use gcs_core::protocols::NullifierRow;
use gcs_core::qubrick::{run_chain, ChainMode, QubrickChain};
use gcs_core::state::vacuum_state;
use gcs_core::symplectic::{apply, squeezer};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{check_kappa, resolve, run_protocol, to_json, write, Resolved};
use crate::{Failure, Format, SweepArgs};

const CHAIN_INPUT_SQUEEZING: f64 = 1.0;

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    kappa: f64,
    squeezing: f64,
    nu_min: f64,
    nullifiers: Vec<NullifierRow>,
    chain_noise_slope: Option<f64>,
}

/// Inclusive grid from `min` to `max`; a single point when both bounds are absent.
fn axis(min: Option<f64>, max: Option<f64>, step: Option<f64>, point: f64, name: &str) -> Result<Vec<f64>, Failure> {
    let (lo, hi) = match (min, max) {
        (None, None) => return Ok(vec![point]),
        (Some(lo), None) => (lo, lo),
        (None, Some(hi)) => (point, hi),
        (Some(lo), Some(hi)) => (lo, hi),
    };
    if !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Failure::User(format!("empty {name} grid: [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    let step = step.ok_or_else(|| Failure::User(format!("--{name}-step is required for a {name} range")))?;
    if !step.is_finite() || step <= 0.0 {
        return Err(Failure::User(format!("{name} step must be positive, got {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(Failure::User(format!("{name} grid has {n} points")));
    }
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

/// Least-squares slope of the added `p` variance over the brick index.
fn chain_slope(kappa: f64, squeezing: f64, length: usize, seed: u64) -> Result<f64, Failure> {
    let mut c = QubrickChain::new(length, kappa, squeezing, ChainMode::FreshBricks);
    c.seed = seed;
    let input = apply(&vacuum_state(1)?, &squeezer(1, 0, CHAIN_INPUT_SQUEEZING)?)?;
    let rep = run_chain(&c, &input)?;
    if length == 1 {
        return Ok(rep.stages[0].added_p_variance);
    }
    let n = length as f64;
    let kbar = (n + 1.0) / 2.0;
    let ybar = rep.stages.iter().map(|s| s.added_p_variance).sum::<f64>() / n;
    let (num, den) = rep.stages.iter().fold((0.0, 0.0), |(num, den), s| {
        let dk = s.index as f64 - kbar;
        (num + dk * (s.added_p_variance - ybar), den + dk * dk)
    });
    Ok(num / den)
}

fn point(r: &Resolved, kappa: f64, squeezing: f64, chain_length: usize) -> Result<SweepRow, Failure> {
    let trace = run_protocol(r, kappa, squeezing)?;
    let nu_min = ppt_test(&trace.final_state, &[0])?.min_symplectic_eigenvalue;
    let nullifiers = trace.nullifier_table();
    let chain_noise_slope = match chain_length {
        0 => None,
        n => Some(chain_slope(kappa, squeezing, n, r.seed)?),
    };
    Ok(SweepRow { kappa, squeezing, nu_min, nullifiers, chain_noise_slope })
}

fn csv_text(rows: &[SweepRow]) -> Result<String, Failure> {
    let mut header = vec!["kappa".to_string(), "squeezing".into(), "nu_min".into()];
    header.extend(rows[0].nullifiers.iter().map(|n| n.name.clone()));
    header.push("chain_noise_slope".into());
    let mut out = vec![header];
    for row in rows {
        let mut cells = vec![row.kappa.to_string(), row.squeezing.to_string(), row.nu_min.to_string()];
        cells.extend(row.nullifiers.iter().map(|n| n.variance.to_string()));
        cells.push(row.chain_noise_slope.map(|v| v.to_string()).unwrap_or_default());
        out.push(cells);
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in &out {
        w.write_record(r).map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Internal(e.to_string()))
}

pub fn run(a: &SweepArgs) -> Result<(), Failure> {
    let r = resolve(&a.source)?;
    let kappas = axis(a.kappa_min, a.kappa_max, a.kappa_step, r.kappa, "kappa")?;
    for &k in &kappas {
        check_kappa(k)?;
    }
    let rs = axis(a.r_min, a.r_max, a.r_step, r.squeezing, "r")?;
    let grid: Vec<(f64, f64)> = kappas.iter().flat_map(|&k| rs.iter().map(move |&s| (k, s))).collect();
    log::info!("sweeping {} grid points", grid.len());
    let rows = grid.par_iter().map(|&(k, s)| point(&r, k, s, a.chain_length)).collect::<Result<Vec<_>, _>>()?;
    let text = match a.output.format {
        Format::Csv => csv_text(&rows)?,
        Format::Json => to_json(&rows)?,
    };
    write(a.output.out.as_deref(), &text)
}
