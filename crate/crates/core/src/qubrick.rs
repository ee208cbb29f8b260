//! Chains of small (4,1) cluster processors ("qubricks") that hand a single mode
//! from brick to brick through their light modes, and the closed-form error
//! scaling model comparing chains with one monolithic cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entanglement::symplectic_spectrum;
use crate::error::{invalid, Error, Result};
use crate::homodyne::{homodyne, Quadrature};
use crate::protocols::{build_41_composite, ProtocolParams, ProtocolTrace};
use crate::state::{tensor, validate_state, GaussianState, ModeKind, ModeTag};
use crate::symplectic::{apply, beamsplitter_xx};

pub const INPUT_NODE: &str = "A1";
pub const OUTPUT_LIGHT: &str = "L";
pub const CARRIER: &str = "in";
const ATOMS: [&str; 4] = ["A1", "A2", "A3", "A4"];

#[derive(Clone, Debug, PartialEq)]
pub struct Qubrick {
    pub state: GaussianState,
    pub input_node: String,
    pub output_light: String,
    pub trace: ProtocolTrace,
}

/// Builds one (4,1) composite brick with input node `A1` and output light `L`.
pub fn make_qubrick(kappa: f64, squeezing: f64, seed: u64) -> Result<Qubrick> {
    let trace = build_41_composite(&ProtocolParams::new(kappa, squeezing).with_seed(seed))?;
    let state = trace.final_state.clone();
    let light = state.require(OUTPUT_LIGHT)?;
    if state.modes()[light].kind != ModeKind::ClusterLight {
        return Err(Error::Invariant("brick output is not a cluster light mode".into()));
    }
    Ok(Qubrick { state, input_node: INPUT_NODE.into(), output_light: OUTPUT_LIGHT.into(), trace })
}

/// Measurement bases for loading and transferring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BrickIo {
    /// Quadrature measured on the input carrier after coupling it to the input node.
    pub load: Quadrature,
    /// Quadratures measured on `A1..A4` to move the state onto the light mode.
    pub transfer: [Quadrature; 4],
}

impl Default for BrickIo {
    fn default() -> Self {
        BrickIo { load: Quadrature::P, transfer: [Quadrature::X; 4] }
    }
}

/// Couples a single-mode `input` to the brick's input node with the `x x`
/// beamsplitter interaction and measures the carrier.
pub fn load_input<R: Rng + ?Sized>(
    q: &Qubrick,
    input: &GaussianState,
    io: &BrickIo,
    outcome: Option<f64>,
    rng: &mut R,
) -> Result<GaussianState> {
    if input.n_modes() != 1 {
        return invalid(format!("input must be single-mode, got {} modes", input.n_modes()));
    }
    let carrier = input.clone().with_tags(vec![ModeTag::new(CARRIER, ModeKind::ClusterLight)])?;
    let joint = tensor(&q.state, &carrier)?;
    let (node, c) = (joint.require(&q.input_node)?, joint.require(CARRIER)?);
    let coupled = apply(&joint, &beamsplitter_xx(joint.n_modes(), c, node)?)?;
    Ok(homodyne(&coupled, c, io.load, outcome, rng)?.post_state)
}

/// Measures the four atomic nodes in index order, leaving the light mode.
pub fn transfer_to_light<R: Rng + ?Sized>(
    state: &GaussianState,
    io: &BrickIo,
    outcomes: Option<&[f64; 4]>,
    rng: &mut R,
) -> Result<GaussianState> {
    if state.n_modes() != 5 {
        return invalid(format!("transfer expects a 5-mode brick, got {} modes", state.n_modes()));
    }
    let mut current = state.clone();
    for (k, atom) in ATOMS.iter().enumerate() {
        let m = current.require(atom)?;
        current = homodyne(&current, m, io.transfer[k], outcomes.map(|o| o[k]), rng)?.post_state;
    }
    current.require(OUTPUT_LIGHT)?;
    Ok(current)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// A newly generated brick for every stage.
    FreshBricks,
    /// One brick regenerated with identical parameters and seed at every stage.
    SingleBrickLoop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QubrickChain {
    pub length: usize,
    pub kappa: f64,
    pub squeezing: f64,
    pub mode: ChainMode,
    pub seed: u64,
    pub io: BrickIo,
}

impl QubrickChain {
    pub fn new(length: usize, kappa: f64, squeezing: f64, mode: ChainMode) -> Self {
        QubrickChain { length, kappa, squeezing, mode, seed: 0, io: BrickIo::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub index: usize,
    /// `Var p` of the stage output minus `Var p` of the chain input.
    pub added_p_variance: f64,
    pub added_x_variance: f64,
    pub output_cm: [[f64; 2]; 2],
    pub output_mean: [f64; 2],
    /// Symplectic eigenvalue of the single-mode output.
    pub nu_min_out: f64,
    pub brick_nullifier_variances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub kappa: f64,
    pub squeezing: f64,
    pub mode: ChainMode,
    pub input_cm: [[f64; 2]; 2],
    pub stages: Vec<StageReport>,
    pub model_table: Vec<ScalingRow>,
}

fn cm2(s: &GaussianState) -> [[f64; 2]; 2] {
    let c = s.cm();
    [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]]
}

fn stage_seed(base: u64, stage: usize, mode: ChainMode) -> u64 {
    match mode {
        ChainMode::FreshBricks => base.wrapping_add(stage as u64),
        ChainMode::SingleBrickLoop => base,
    }
}

/// Runs `load → transfer` through `length` bricks and records the added noise on
/// the carried mode after every stage.
pub fn run_chain(c: &QubrickChain, input: &GaussianState) -> Result<ChainReport> {
    if c.length == 0 {
        return invalid("chain length must be at least 1");
    }
    if input.n_modes() != 1 {
        return invalid("chain input must be single-mode");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut current = input.clone();
    let mut stages = Vec::with_capacity(c.length);
    let mut looped: Option<Qubrick> = None;
    for index in 1..=c.length {
        let brick = match (c.mode, &looped) {
            (ChainMode::SingleBrickLoop, Some(b)) => b.clone(),
            _ => make_qubrick(c.kappa, c.squeezing, stage_seed(c.seed, index, c.mode))?,
        };
        if c.mode == ChainMode::SingleBrickLoop {
            looped = Some(brick.clone());
        }
        let loaded = load_input(&brick, &current, &c.io, None, &mut rng)?;
        let out = transfer_to_light(&loaded, &c.io, None, &mut rng)?;
        for s in [&loaded, &out] {
            let report = validate_state(s);
            if !report.passed() {
                return Err(Error::Invariant(format!("stage {index}: {:?}", report.failures())));
            }
        }
        stages.push(StageReport {
            index,
            added_p_variance: out.var_p(0) - input.var_p(0),
            added_x_variance: out.var_x(0) - input.var_x(0),
            output_cm: cm2(&out),
            output_mean: [out.mean()[0], out.mean()[1]],
            nu_min_out: symplectic_spectrum(&out)?.min(),
            brick_nullifier_variances: brick.trace.nullifier_variances(),
        });
        current = out;
    }
    Ok(ChainReport {
        kappa: c.kappa,
        squeezing: c.squeezing,
        mode: c.mode,
        input_cm: cm2(input),
        stages,
        model_table: compare_error_scaling(&ErrorScalingModel::default(), &[c.length * 4])?,
    })
}

impl ChainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain report serialization is infallible")
    }

    /// One row per stage: index, added p and x variance, output `nu`.
    pub fn to_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            index: usize,
            added_p_variance: f64,
            added_x_variance: f64,
            nu_min_out: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.stages {
            w.serialize(Row {
                index: s.index,
                added_p_variance: s.added_p_variance,
                added_x_variance: s.added_x_variance,
                nu_min_out: s.nu_min_out,
            })
            .map_err(|e| Error::Numerical(e.to_string()))?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?).map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Exponential error model. A monolithic square cluster of `n` nodes carries
/// error `C·exp(rate·n)`; a chain of bricks of `brick_size` nodes carries
/// `a·exp(per_brick·⌈n / brick_size⌉)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorScalingModel {
    pub monolithic_constant: f64,
    pub qubrick_constant: f64,
    pub monolithic_rate: f64,
    pub per_brick_exponent: f64,
    pub brick_size: usize,
}

impl Default for ErrorScalingModel {
    /// Calibrated so a 16-node cluster gives `C·e⁶` and four bricks give `a·e⁸`.
    fn default() -> Self {
        ErrorScalingModel {
            monolithic_constant: 1.0,
            qubrick_constant: 1.0,
            monolithic_rate: 6.0 / 16.0,
            per_brick_exponent: 2.0,
            brick_size: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub bricks: usize,
    pub monolithic_error: f64,
    pub qubrick_error: f64,
    pub ratio: f64,
}

impl ErrorScalingModel {
    fn check(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.monolithic_constant) || !positive(self.qubrick_constant) {
            return invalid("model constants must be positive");
        }
        if !self.monolithic_rate.is_finite() || !self.per_brick_exponent.is_finite() || self.brick_size == 0 {
            return invalid("model exponents must be finite and brick size positive");
        }
        Ok(())
    }

    pub fn monolithic_error(&self, n: usize) -> f64 {
        self.monolithic_constant * (self.monolithic_rate * n as f64).exp()
    }

    pub fn bricks(&self, n: usize) -> usize {
        n.div_ceil(self.brick_size)
    }

    pub fn qubrick_error(&self, n: usize) -> f64 {
        self.qubrick_constant * (self.per_brick_exponent * self.bricks(n) as f64).exp()
    }

    /// Size at which the monolithic error overtakes the chain, treating the brick
    /// count as continuous. `None` when the monolithic curve never catches up.
    pub fn crossover(&self) -> Option<f64> {
        let slope = self.monolithic_rate - self.per_brick_exponent / self.brick_size as f64;
        if slope <= 0.0 {
            return None;
        }
        Some(((self.qubrick_constant / self.monolithic_constant).ln() / slope).max(0.0))
    }
}

pub fn compare_error_scaling(m: &ErrorScalingModel, sizes: &[usize]) -> Result<Vec<ScalingRow>> {
    m.check()?;
    if sizes.is_empty() {
        return invalid("no cluster sizes given");
    }
    Ok(sizes
        .iter()
        .map(|&n| {
            let (mono, qb) = (m.monolithic_error(n), m.qubrick_error(n));
            ScalingRow { n, bricks: m.bricks(n), monolithic_error: mono, qubrick_error: qb, ratio: qb / mono }
        })
        .collect())
}
