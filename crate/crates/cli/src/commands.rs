use std::path::Path;

use gcs_core::entanglement::{entanglement_report, EntanglementReport};
use gcs_core::golden::{discrepancy_csv, discrepancy_rows, max_abs_delta, DiscrepancyRow, Golden};
use gcs_core::oracle::two_mode_final_cm;
use gcs_core::protocols::{
    build_41_composite, build_four_mode_square, build_general, build_two_mode_composite, GraphSpec, ProtocolParams, ProtocolTrace,
};
use gcs_core::qubrick::{run_chain, ChainMode, QubrickChain};
use gcs_core::state::{vacuum_state, validate_state, GaussianState};
use gcs_core::symplectic::{apply, s_int1, s_int2, squeezer};
use log::info;

use crate::{BuildArgs, ChainArgs, ChainModeArg, Failure, Format, Protocol, ReportArgs, Source, VerifyArgs};

pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_SQUEEZING: f64 = 0.0;
const APPENDIX_KAPPAS: [f64; 3] = [0.5, 0.8, 1.0];
const ORACLE_TOL: f64 = 1e-9;

/// What to build, with flags taking precedence over values stored in a graph file.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub graph: Option<GraphSpec>,
    pub protocol: Protocol,
    pub kappa: f64,
    pub squeezing: f64,
    pub seed: u64,
}

pub fn resolve(src: &Source) -> Result<Resolved, Failure> {
    let graph = match &src.graph {
        Some(path) => Some(GraphSpec::from_json_str(&read(path)?)?),
        None => None,
    };
    let kappa = src.kappa.or(graph.as_ref().and_then(|g| g.kappa)).unwrap_or(DEFAULT_KAPPA);
    let squeezing = src.squeezing.or(graph.as_ref().and_then(|g| g.squeezing)).unwrap_or(DEFAULT_SQUEEZING);
    check_kappa(kappa)?;
    if !squeezing.is_finite() {
        return Err(Failure::User(format!("squeezing must be finite, got {squeezing}")));
    }
    Ok(Resolved { graph, protocol: src.protocol.unwrap_or(Protocol::TwoMode), kappa, squeezing, seed: src.seed })
}

pub fn check_kappa(kappa: f64) -> Result<(), Failure> {
    if kappa.is_finite() && kappa >= 0.0 {
        Ok(())
    } else {
        Err(Failure::User(format!("kappa must be finite and non-negative, got {kappa}")))
    }
}

pub fn run_protocol(r: &Resolved, kappa: f64, squeezing: f64) -> Result<ProtocolTrace, Failure> {
    let p = ProtocolParams::new(kappa, squeezing).with_seed(r.seed);
    let trace = match (&r.graph, r.protocol) {
        (Some(g), _) => build_general(g, &p)?,
        (None, Protocol::TwoMode) => build_two_mode_composite(&p)?,
        (None, Protocol::Square) => build_four_mode_square(&p)?,
        (None, Protocol::Composite41) => build_41_composite(&p)?,
    };
    Ok(trace)
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
}

pub fn write(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| Failure::User(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| Failure::Internal(e.to_string()))
}

pub fn to_csv<T: serde::Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Internal(e.to_string()))
}

pub fn build(a: &BuildArgs) -> Result<(), Failure> {
    let r = resolve(&a.source)?;
    let trace = run_protocol(&r, r.kappa, r.squeezing)?;
    info!("{}: {} steps, outcomes {:?}", trace.protocol, trace.steps.len(), trace.outcomes);
    let text = match a.output.format {
        Format::Json => trace.to_json() + "\n",
        Format::Csv => trace.nullifier_csv()?,
    };
    write(a.output.out.as_deref(), &text)
}

fn appendix_rows(kappa: f64) -> Result<(Vec<DiscrepancyRow>, f64), Failure> {
    let trace = build_two_mode_composite(&ProtocolParams::new(kappa, 0.0))?;
    let pre = trace.pre_measurement.as_ref().ok_or_else(|| Failure::Internal("two-mode trace has no measurement".into()))?;
    let oracle_delta = (trace.final_state.cm() - two_mode_final_cm(kappa, 0.0)).amax();
    let mut rows = Vec::new();
    for (golden, computed) in [
        (Golden::SInt1, s_int1(kappa)?.matrix().clone()),
        (Golden::SInt2, s_int2(kappa)?.matrix().clone()),
        (Golden::SigmaOut, pre.cm().clone()),
        (Golden::SigmaFin, trace.final_state.cm().clone()),
    ] {
        let name = format!("{}@{kappa}", golden.name());
        let part = discrepancy_rows(&name, &golden.evaluate(kappa), &computed)?;
        info!("{name}: max |reference - computed| = {}", max_abs_delta(&part));
        rows.extend(part);
    }
    Ok((rows, oracle_delta))
}

pub fn verify_appendix(a: &VerifyArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for k in APPENDIX_KAPPAS {
        let (part, delta) = appendix_rows(k)?;
        worst = worst.max(delta);
        rows.extend(part);
    }
    for g in Golden::ALL {
        let prefix = format!("{}@", g.name());
        let mine: Vec<DiscrepancyRow> = rows.iter().filter(|r| r.matrix_name.starts_with(&prefix)).cloned().collect();
        eprintln!("{}: max |reference - computed| = {:e}", g.name(), max_abs_delta(&mine));
    }
    eprintln!("pipeline vs oracle: max delta = {worst:e}");
    let text = match a.format {
        Format::Csv => discrepancy_csv(&rows)?,
        Format::Json => to_json(&rows)?,
    };
    write(a.out.as_deref(), &text)?;
    if worst < ORACLE_TOL {
        Ok(())
    } else {
        Err(Failure::Internal(format!("pipeline deviates from the oracle by {worst}")))
    }
}

pub fn chain(a: &ChainArgs) -> Result<(), Failure> {
    check_kappa(a.kappa)?;
    let mode = match a.mode {
        ChainModeArg::Fresh => ChainMode::FreshBricks,
        ChainModeArg::Loop => ChainMode::SingleBrickLoop,
    };
    let mut c = QubrickChain::new(a.length, a.kappa, a.squeezing, mode);
    c.seed = a.seed;
    let input = apply(&vacuum_state(1)?, &squeezer(1, 0, a.input_squeezing)?)?;
    let report = run_chain(&c, &input)?;
    let text = match a.output.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv()?,
    };
    write(a.output.out.as_deref(), &text)
}

#[derive(serde::Serialize)]
struct ReportRow {
    party: String,
    nu_min: f64,
    entangled: bool,
    log_negativity: f64,
    sufficient: bool,
}

pub fn entangle_report(a: &ReportArgs) -> Result<(), Failure> {
    let state = match &a.state {
        Some(path) => {
            let s = GaussianState::from_json_str(&read(path)?)?;
            let report = validate_state(&s);
            if !report.passed() {
                return Err(Failure::User(format!("{} is not a physical state: {:?}", path.display(), report.failures())));
            }
            s
        }
        None => {
            let r = resolve(&a.source)?;
            run_protocol(&r, r.kappa, r.squeezing)?.final_state
        }
    };
    let report: EntanglementReport = entanglement_report(&state, &a.party)?;
    let text = match a.output.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => to_csv(&[ReportRow {
            party: a.party.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "),
            nu_min: report.nu_min,
            entangled: report.entangled,
            log_negativity: report.log_negativity,
            sufficient: report.sufficient,
        }])?,
    };
    write(a.output.out.as_deref(), &text)
}
