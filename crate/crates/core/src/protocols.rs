//! End-to-end cluster constructions: the two-mode atom–light composite, the
//! four-mode square atomic cluster, its (4,1) extension and general graphs.
//!
//! Every builder lays the cluster modes out first and the interaction pulses
//! after them, so nullifiers defined on the cluster can be evaluated at any
//! intermediate step by zero-padding.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entanglement::{nullifier_variance, NullifierSpec};
use crate::error::{invalid, Error, Result};
use crate::homodyne::{homodyne, Quadrature};
use crate::state::{min_eigenvalue_with_form, pq, tensor, vacuum_state, xq, GaussianState, ModeKind, ModeTag, StateFile};
use crate::symplectic::{apply, beamsplit_then_pickup, pickup_then_beamsplit, qnd_xp, qnd_xx, squeezer, SymplecticTransform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Atomic,
    Light,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub label: String,
    pub kind: VertexKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Per-edge coupling; the protocol κ when absent.
    pub kappa: Option<f64>,
}

/// An undirected graph of atomic and light vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    pub kappa: Option<f64>,
    pub squeezing: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeEntry {
    Plain(String, String),
    Weighted(String, String, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    vertices: Vec<Vertex>,
    edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    squeezing: Option<f64>,
}

impl GraphSpec {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        if vertices.is_empty() {
            return invalid("graph has no vertices");
        }
        let mut seen = BTreeSet::new();
        for v in &vertices {
            if v.label.is_empty() {
                return invalid("vertex labels must be non-empty");
            }
            if !seen.insert(v.label.as_str()) {
                return invalid(format!("duplicate vertex label {:?}", v.label));
            }
        }
        let mut pairs = BTreeSet::new();
        for e in &edges {
            if e.a >= vertices.len() || e.b >= vertices.len() {
                return invalid(format!("edge ({}, {}) references a missing vertex", e.a, e.b));
            }
            if e.a == e.b {
                return invalid(format!("self-loop on {:?}", vertices[e.a].label));
            }
            if !pairs.insert((e.a.min(e.b), e.a.max(e.b))) {
                return invalid(format!("duplicate edge {:?}-{:?}", vertices[e.a].label, vertices[e.b].label));
            }
            if let Some(k) = e.kappa {
                if !k.is_finite() || k < 0.0 {
                    return invalid(format!("edge coupling must be finite and non-negative, got {k}"));
                }
            }
        }
        let g = GraphSpec { vertices, edges, kappa: None, squeezing: None };
        if !g.is_connected() {
            log::warn!("graph is not connected");
        }
        Ok(g)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.label == label)
    }

    /// Neighbours of `v` in ascending index order, with the edge coupling.
    pub fn neighbors(&self, v: usize) -> Vec<(usize, Option<f64>)> {
        let mut out: Vec<(usize, Option<f64>)> = self
            .edges
            .iter()
            .filter_map(|e| match (e.a == v, e.b == v) {
                (true, _) => Some((e.b, e.kappa)),
                (_, true) => Some((e.a, e.kappa)),
                _ => None,
            })
            .collect();
        out.sort_by_key(|&(u, _)| u);
        out
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (u, _) in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn from_labels(vertices: &[(&str, VertexKind)], edges: &[(&str, &str)]) -> Self {
        let vs: Vec<Vertex> = vertices.iter().map(|&(l, kind)| Vertex { label: l.into(), kind }).collect();
        let idx = |l: &str| vs.iter().position(|v| v.label == l).expect("label defined above");
        let es = edges.iter().map(|&(a, b)| Edge { a: idx(a), b: idx(b), kappa: None }).collect();
        GraphSpec::new(vs, es).expect("built-in graphs are valid")
    }

    /// Atom `A` joined to light mode `L`.
    pub fn atom_light_pair() -> Self {
        Self::from_labels(&[("A", VertexKind::Atomic), ("L", VertexKind::Light)], &[("A", "L")])
    }

    /// Four atoms on a square with edges 1–2, 1–3, 2–4, 3–4.
    pub fn square() -> Self {
        use VertexKind::Atomic;
        Self::from_labels(
            &[("A1", Atomic), ("A2", Atomic), ("A3", Atomic), ("A4", Atomic)],
            &[("A1", "A2"), ("A1", "A3"), ("A2", "A4"), ("A3", "A4")],
        )
    }

    /// The square plus light mode `L` attached to `A4`.
    pub fn square_with_light() -> Self {
        use VertexKind::{Atomic, Light};
        Self::from_labels(
            &[("A1", Atomic), ("A2", Atomic), ("A3", Atomic), ("A4", Atomic), ("L", Light)],
            &[("A1", "A2"), ("A1", "A3"), ("A2", "A4"), ("A3", "A4"), ("A4", "L")],
        )
    }

    /// A path of `n` atoms `A1 – A2 – … – An`.
    pub fn atomic_chain(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("chain needs at least one vertex");
        }
        let vertices = (1..=n).map(|k| Vertex { label: format!("A{k}"), kind: VertexKind::Atomic }).collect();
        let edges = (0..n - 1).map(|k| Edge { a: k, b: k + 1, kappa: None }).collect();
        GraphSpec::new(vertices, edges)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let index: HashMap<&str, usize> = f.vertices.iter().enumerate().map(|(i, v)| (v.label.as_str(), i)).collect();
        let lookup = |l: &str| index.get(l).copied().ok_or_else(|| Error::Parse(format!("edge references unknown vertex {l:?}")));
        let mut edges = Vec::with_capacity(f.edges.len());
        for e in &f.edges {
            let (a, b, kappa) = match e {
                EdgeEntry::Plain(a, b) => (a, b, None),
                EdgeEntry::Weighted(a, b, k) => (a, b, Some(*k)),
            };
            edges.push(Edge { a: lookup(a)?, b: lookup(b)?, kappa });
        }
        for (name, v) in [("kappa", f.kappa), ("squeezing", f.squeezing)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Parse(format!("{name} must be finite")));
                }
            }
        }
        if f.kappa.is_some_and(|k| k < 0.0) {
            return Err(Error::Parse("kappa must be non-negative".into()));
        }
        let mut g = GraphSpec::new(f.vertices, edges).map_err(|e| Error::Parse(e.to_string()))?;
        g.kappa = f.kappa;
        g.squeezing = f.squeezing;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let f = GraphFile {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let (a, b) = (self.vertices[e.a].label.clone(), self.vertices[e.b].label.clone());
                    match e.kappa {
                        Some(k) => EdgeEntry::Weighted(a, b, k),
                        None => EdgeEntry::Plain(a, b),
                    }
                })
                .collect(),
            kappa: self.kappa,
            squeezing: self.squeezing,
        };
        serde_json::to_string_pretty(&f).expect("graph serialization is infallible")
    }
}

/// One nullifier `p_v − Σ_{u ∈ N(v)} x_u` per vertex, over the graph's modes.
pub fn nullifiers_for_graph(g: &GraphSpec) -> Vec<NullifierSpec> {
    let n = g.vertices.len();
    (0..n)
        .map(|v| {
            let mut terms = vec![(pq(v), 1.0)];
            let mut name = format!("p_{}", g.vertices[v].label);
            for (u, _) in g.neighbors(v) {
                terms.push((xq(u), -1.0));
                name.push_str(&format!(" - x_{}", g.vertices[u].label));
            }
            NullifierSpec::from_terms(n, &terms, name).expect("p_v coefficient is non-zero")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams {
    pub kappa: f64,
    /// Pulse squeezing `r`; positive values squeeze `p`.
    pub squeezing: f64,
    /// Homodyne outcomes in measurement order; sampled when absent.
    pub outcomes: Option<Vec<f64>>,
    pub seed: u64,
}

impl ProtocolParams {
    pub fn new(kappa: f64, squeezing: f64) -> Self {
        ProtocolParams { kappa, squeezing, outcomes: None, seed: 0 }
    }

    pub fn with_outcomes(mut self, outcomes: Vec<f64>) -> Self {
        self.outcomes = Some(outcomes);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return invalid(format!("kappa must be finite and non-negative, got {}", self.kappa));
        }
        if !self.squeezing.is_finite() {
            return invalid(format!("squeezing must be finite, got {}", self.squeezing));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepKind {
    Prepare,
    Transform { dim: usize },
    Measurement { mode: String, quadrature: String, outcome: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub description: String,
    pub kind: StepKind,
    /// Variances of the nullifiers active at this step, in nullifier order.
    pub nullifier_variances: Vec<f64>,
    /// Smallest eigenvalue of `σ + iΩ` after this step.
    pub min_uncertainty_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTrace {
    pub protocol: String,
    pub kappa: f64,
    pub squeezing: f64,
    pub steps: Vec<TraceStep>,
    pub nullifiers: Vec<NullifierSpec>,
    pub final_state: GaussianState,
    pub outcomes: Vec<f64>,
    /// State immediately before the first measurement.
    pub pre_measurement: Option<GaussianState>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullifierRow {
    pub name: String,
    pub variance: f64,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    protocol: &'a str,
    kappa: f64,
    squeezing: f64,
    steps: &'a [TraceStep],
    nullifiers: Vec<NullifierRow>,
    outcomes: &'a [f64],
    final_state: StateFile,
}

impl ProtocolTrace {
    pub fn nullifier_variances(&self) -> Vec<f64> {
        self.nullifiers.iter().map(|n| nullifier_variance(&self.final_state, n).expect("nullifiers match the final state")).collect()
    }

    pub fn nullifier_table(&self) -> Vec<NullifierRow> {
        self.nullifiers.iter().zip(self.nullifier_variances()).map(|(n, v)| NullifierRow { name: n.name.clone(), variance: v }).collect()
    }

    pub fn to_json(&self) -> String {
        let f = TraceFile {
            protocol: &self.protocol,
            kappa: self.kappa,
            squeezing: self.squeezing,
            steps: &self.steps,
            nullifiers: self.nullifier_table(),
            outcomes: &self.outcomes,
            final_state: StateFile::from(&self.final_state),
        };
        serde_json::to_string_pretty(&f).expect("trace serialization is infallible")
    }

    pub fn nullifier_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.nullifier_table() {
            w.serialize(row).map_err(|e| Error::Numerical(e.to_string()))?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?).map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Single-mode vacuum squeezed in `p` by `r`, tagged as an interaction pulse.
pub fn squeezed_pulse(label: &str, r: f64) -> Result<GaussianState> {
    apply(&vacuum_state(1)?, &squeezer(1, 0, r)?)?.with_tags(vec![ModeTag::new(label, ModeKind::InteractionPulse)])
}

fn cluster_register(vertices: &[(&str, ModeKind)]) -> Result<GaussianState> {
    vacuum_state(vertices.len())?.with_tags(vertices.iter().map(|&(l, k)| ModeTag::new(l, k)).collect())
}

fn with_pulses(cluster: GaussianState, labels: &[String], r: f64) -> Result<GaussianState> {
    labels.iter().try_fold(cluster, |acc, l| tensor(&acc, &squeezed_pulse(l, r)?))
}

struct Runner<'a> {
    state: GaussianState,
    nullifiers: Vec<NullifierSpec>,
    steps: Vec<TraceStep>,
    outcomes: Option<&'a [f64]>,
    record: Vec<f64>,
    rng: ChaCha8Rng,
    pre_measurement: Option<GaussianState>,
}

impl<'a> Runner<'a> {
    fn new(params: &'a ProtocolParams, n_measurements: usize) -> Result<Self> {
        params.check()?;
        if let Some(o) = &params.outcomes {
            if o.len() != n_measurements {
                return invalid(format!("protocol performs {n_measurements} measurements, {} outcomes given", o.len()));
            }
        }
        Ok(Runner {
            state: vacuum_state(1)?,
            nullifiers: Vec::new(),
            steps: Vec::new(),
            outcomes: params.outcomes.as_deref(),
            record: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            pre_measurement: None,
        })
    }

    fn variances(&self) -> Vec<f64> {
        let dim = self.state.cm().nrows();
        self.nullifiers
            .iter()
            .map(|n| {
                let mut coeffs = n.coeffs.clone();
                coeffs.resize(dim, 0.0);
                let padded = NullifierSpec { coeffs, name: n.name.clone() };
                nullifier_variance(&self.state, &padded).expect("padded to state dimension")
            })
            .collect()
    }

    fn push(&mut self, description: String, kind: StepKind) {
        let nullifier_variances = self.variances();
        let min_uncertainty_eigenvalue = min_eigenvalue_with_form(self.state.cm());
        self.steps.push(TraceStep { description, kind, nullifier_variances, min_uncertainty_eigenvalue });
    }

    fn prepare(&mut self, state: GaussianState, nullifiers: Vec<NullifierSpec>, description: &str) {
        self.state = state;
        self.nullifiers = nullifiers;
        self.push(description.to_string(), StepKind::Prepare);
    }

    fn idx(&self, label: &str) -> Result<usize> {
        self.state.require(label)
    }

    fn n(&self) -> usize {
        self.state.n_modes()
    }

    fn transform(&mut self, s: SymplecticTransform) -> Result<()> {
        self.state = apply(&self.state, &s)?;
        self.push(s.description().to_string(), StepKind::Transform { dim: s.dim() });
        Ok(())
    }

    fn measure_x(&mut self, label: &str) -> Result<()> {
        let m = self.idx(label)?;
        let given = self.outcomes.map(|o| o[self.record.len()]);
        if self.pre_measurement.is_none() {
            self.pre_measurement = Some(self.state.clone());
        }
        let res = homodyne(&self.state, m, Quadrature::X, given, &mut self.rng)?;
        self.state = res.post_state;
        self.record.push(res.outcome);
        self.push(
            format!("homodyne x on {label}"),
            StepKind::Measurement { mode: label.to_string(), quadrature: "x".into(), outcome: res.outcome },
        );
        Ok(())
    }

    fn finish(self, protocol: &str, params: &ProtocolParams) -> Result<ProtocolTrace> {
        let report = crate::state::validate_state(&self.state);
        if !report.passed() {
            return Err(Error::Invariant(format!("{protocol}: final state fails {:?}", report.failures())));
        }
        Ok(ProtocolTrace {
            protocol: protocol.to_string(),
            kappa: params.kappa,
            squeezing: params.squeezing,
            steps: self.steps,
            nullifiers: self.nullifiers,
            final_state: self.state,
            outcomes: self.record,
            pre_measurement: self.pre_measurement,
        })
    }
}

fn labels(prefix: &str, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    range.map(|k| format!("{prefix}{k}")).collect()
}

/// Atom `A` and light `L` entangled by two pulses: the first crosses the
/// ensemble and then the beamsplitter, the second the reverse; both are then
/// measured in `x`.
pub fn build_two_mode_composite(params: &ProtocolParams) -> Result<ProtocolTrace> {
    let mut run = Runner::new(params, 2)?;
    let cluster = cluster_register(&[("A", ModeKind::Atomic), ("L", ModeKind::ClusterLight)])?;
    let pulses = labels("i", 1..=2);
    run.prepare(
        with_pulses(cluster, &pulses, params.squeezing)?,
        nullifiers_for_graph(&GraphSpec::atom_light_pair()),
        "vacuum atom and light, squeezed pulses",
    );
    let (a, l, n) = (run.idx("A")?, run.idx("L")?, run.n());
    run.transform(pickup_then_beamsplit(n, a, l, run.idx("i1")?, params.kappa)?)?;
    run.transform(beamsplit_then_pickup(n, a, l, run.idx("i2")?, params.kappa)?)?;
    for p in &pulses {
        run.measure_x(p)?;
    }
    run.finish("two-mode", params)
}

/// Rounds of the square protocol: `(target, neighbours)` for pulses `i1..i4`.
const SQUARE_ROUNDS: [(&str, [&str; 2]); 4] = [("A1", ["A2", "A3"]), ("A2", ["A1", "A4"]), ("A3", ["A1", "A4"]), ("A4", ["A2", "A3"])];

fn run_square(run: &mut Runner, params: &ProtocolParams) -> Result<()> {
    let atoms = [("A1", ModeKind::Atomic), ("A2", ModeKind::Atomic), ("A3", ModeKind::Atomic), ("A4", ModeKind::Atomic)];
    let pulses = labels("i", 1..=4);
    run.prepare(
        with_pulses(cluster_register(&atoms)?, &pulses, params.squeezing)?,
        nullifiers_for_graph(&GraphSpec::square()),
        "vacuum ensembles A1..A4, squeezed pulses i1..i4",
    );
    let k = params.kappa;
    for ((target, neighbours), pulse) in SQUARE_ROUNDS.iter().zip(&pulses) {
        let (n, i) = (run.n(), run.idx(pulse)?);
        for nb in neighbours {
            run.transform(qnd_xp(n, run.idx(nb)?, i, k)?)?;
        }
        run.transform(qnd_xx(n, run.idx(target)?, i, k)?)?;
    }
    for p in &pulses {
        run.measure_x(p)?;
    }
    Ok(())
}

/// Four atomic ensembles entangled on a square: each pulse picks up `x` of two
/// ensembles via `κ x_A p_i` and writes it onto the third via `κ x_A x_i`.
pub fn build_four_mode_square(params: &ProtocolParams) -> Result<ProtocolTrace> {
    let mut run = Runner::new(params, 4)?;
    run_square(&mut run, params)?;
    run.finish("square", params)
}

/// The square cluster with a light mode `L` attached to `A4` by the two-pulse
/// atom–light coupling.
pub fn build_41_composite(params: &ProtocolParams) -> Result<ProtocolTrace> {
    let mut run = Runner::new(params, 6)?;
    run_square(&mut run, params)?;
    let light = cluster_register(&[("L", ModeKind::ClusterLight)])?;
    let pulses = labels("i", 5..=6);
    let extended = with_pulses(tensor(&run.state, &light)?, &pulses, params.squeezing)?;
    run.prepare(extended, nullifiers_for_graph(&GraphSpec::square_with_light()), "add vacuum light L and squeezed pulses i5, i6");
    let (a4, l, n) = (run.idx("A4")?, run.idx("L")?, run.n());
    run.transform(pickup_then_beamsplit(n, a4, l, run.idx("i5")?, params.kappa)?)?;
    run.transform(beamsplit_then_pickup(n, a4, l, run.idx("i6")?, params.kappa)?)?;
    for p in &pulses {
        run.measure_x(p)?;
    }
    run.finish("composite-41", params)
}

/// Interaction schedule compiled from a graph.
#[derive(Clone, Debug, PartialEq)]
enum Round {
    /// One pulse picks up `x` of every atomic neighbour and writes onto `target`.
    Atomic { target: usize, neighbours: Vec<(usize, f64)> },
    /// Two pulses couple atom and light as in the two-mode composite protocol.
    AtomLight { atom: usize, light: usize, kappa: f64 },
}

fn compile(g: &GraphSpec, kappa: f64) -> Result<Vec<Round>> {
    let kind = |v: usize| g.vertices[v].kind;
    for e in &g.edges {
        if kind(e.a) == VertexKind::Light && kind(e.b) == VertexKind::Light {
            return invalid(format!("light–light edge {:?}-{:?} is not supported", g.vertices[e.a].label, g.vertices[e.b].label));
        }
    }
    let mut rounds = Vec::new();
    for v in 0..g.vertices.len() {
        let nbs = g.neighbors(v);
        match kind(v) {
            VertexKind::Atomic => {
                let atomic: Vec<(usize, f64)> =
                    nbs.iter().filter(|(u, _)| kind(*u) == VertexKind::Atomic).map(|&(u, k)| (u, k.unwrap_or(kappa))).collect();
                if !atomic.is_empty() {
                    rounds.push(Round::Atomic { target: v, neighbours: atomic });
                }
            }
            VertexKind::Light if nbs.is_empty() => {
                return invalid(format!("light vertex {:?} has no neighbours", g.vertices[v].label));
            }
            VertexKind::Light => {}
        }
    }
    for v in (0..g.vertices.len()).filter(|&v| kind(v) == VertexKind::Light) {
        for (u, k) in g.neighbors(v) {
            rounds.push(Round::AtomLight { atom: u, light: v, kappa: k.unwrap_or(kappa) });
        }
    }
    Ok(rounds)
}

/// Number of interaction pulses `build_general` uses for `g`.
pub fn pulse_count(g: &GraphSpec) -> Result<usize> {
    Ok(compile(g, 1.0)?.iter().map(|r| if matches!(r, Round::Atomic { .. }) { 1 } else { 2 }).sum())
}

/// Compiles an arbitrary graph. Atomic vertices with atomic neighbours get one
/// pulse each, in vertex order, that picks up the neighbours' `x` and writes
/// onto the vertex. Every atom–light edge then gets the two-pulse coupling.
/// All pulses are finally measured in `x`, in creation order.
pub fn build_general(g: &GraphSpec, params: &ProtocolParams) -> Result<ProtocolTrace> {
    let rounds = compile(g, params.kappa)?;
    let n_pulses = pulse_count(g)?;
    let pulses = labels("i", 1..=n_pulses);
    for p in &pulses {
        if g.index_of(p).is_some() {
            return invalid(format!("vertex label {p:?} collides with a pulse label"));
        }
    }
    let mut run = Runner::new(params, n_pulses)?;
    let register: Vec<(&str, ModeKind)> = g
        .vertices
        .iter()
        .map(|v| (v.label.as_str(), if v.kind == VertexKind::Atomic { ModeKind::Atomic } else { ModeKind::ClusterLight }))
        .collect();
    run.prepare(
        with_pulses(cluster_register(&register)?, &pulses, params.squeezing)?,
        nullifiers_for_graph(g),
        "vacuum vertices, squeezed pulses",
    );
    let n = run.n();
    let mut next = g.vertices.len();
    for round in rounds {
        match round {
            Round::Atomic { target, neighbours } => {
                for (u, k) in neighbours {
                    run.transform(qnd_xp(n, u, next, k)?)?;
                }
                run.transform(qnd_xx(n, target, next, params.kappa)?)?;
                next += 1;
            }
            Round::AtomLight { atom, light, kappa } => {
                run.transform(pickup_then_beamsplit(n, atom, light, next, kappa)?)?;
                run.transform(beamsplit_then_pickup(n, atom, light, next + 1, kappa)?)?;
                next += 2;
            }
        }
    }
    for p in &pulses {
        run.measure_x(p)?;
    }
    run.finish("graph", params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::validate_state;

    fn p(k: f64, r: f64) -> ProtocolParams {
        ProtocolParams::new(k, r)
    }

    #[test]
    fn nullifiers_two_vertex_path() {
        let ns = nullifiers_for_graph(&GraphSpec::atom_light_pair());
        assert_eq!(ns[0].coeffs, vec![0.0, 1.0, -1.0, 0.0]);
        assert_eq!(ns[1].coeffs, vec![-1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ns[0].name, "p_A - x_L");
    }

    #[test]
    fn nullifiers_square() {
        let ns = nullifiers_for_graph(&GraphSpec::square());
        let names: Vec<&str> = ns.iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, ["p_A1 - x_A2 - x_A3", "p_A2 - x_A1 - x_A4", "p_A3 - x_A1 - x_A4", "p_A4 - x_A2 - x_A3"]);
    }

    #[test]
    fn nullifier_single_vertex() {
        let g = GraphSpec::atomic_chain(1).unwrap();
        let ns = nullifiers_for_graph(&g);
        assert_eq!(ns.len(), 1);
        assert_eq!(ns[0].coeffs, vec![0.0, 1.0]);
    }

    #[test]
    fn graph_json_roundtrip_and_errors() {
        let text = r#"{"vertices":[{"label":"a","kind":"atomic"},{"label":"l","kind":"light"}],"edges":[["a","l",0.5]],"kappa":1.0}"#;
        let g = GraphSpec::from_json_str(text).unwrap();
        assert_eq!(g.edges()[0].kappa, Some(0.5));
        assert_eq!(GraphSpec::from_json_str(&g.to_json()).unwrap(), g);
        for bad in [
            r#"{"vertices":[],"edges":[]}"#,
            r#"{"vertices":[{"label":"a","kind":"atomic"}],"edges":[["a","a"]]}"#,
            r#"{"vertices":[{"label":"a","kind":"atomic"}],"edges":[["a","b"]]}"#,
            r#"{"vertices":[{"label":"a","kind":"atomic"},{"label":"a","kind":"light"}],"edges":[]}"#,
            r#"{"vertices":[{"label":"a","kind":"qubit"}],"edges":[]}"#,
            r#"{"vertices":[{"label":"a","kind":"atomic"}],"edges":[],"kappa":-1}"#,
            r#"[1,2"#,
        ] {
            assert!(matches!(GraphSpec::from_json_str(bad), Err(Error::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn two_mode_kappa_one_vacuum_pulses() {
        let t = build_two_mode_composite(&p(1.0, 0.0)).unwrap();
        let f = t.final_state.cm();
        assert_eq!(t.final_state.n_modes(), 2);
        assert!(validate_state(&t.final_state).passed());
        let oracle = crate::oracle::two_mode_final_cm(1.0, 0.0);
        assert!((f - oracle).amax() < 1e-12);
        assert_eq!(t.steps.len(), 5);
        assert_eq!(t.outcomes.len(), 2);
    }

    #[test]
    fn two_mode_kappa_zero_is_vacuum() {
        let t = build_two_mode_composite(&p(0.0, 0.0)).unwrap();
        assert!((t.final_state.cm() - nalgebra::DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn square_kappa_zero_is_vacuum() {
        let t = build_four_mode_square(&p(0.0, 1.0)).unwrap();
        assert!((t.final_state.cm() - nalgebra::DMatrix::<f64>::identity(8, 8)).amax() < 1e-12);
    }

    #[test]
    fn square_nullifiers_respect_mirror_symmetry() {
        for r in [0.0, 1.0, 3.0] {
            let v = build_four_mode_square(&p(1.0, r)).unwrap().nullifier_variances();
            assert!((v[0] - v[3]).abs() < 1e-9 && (v[1] - v[2]).abs() < 1e-9, "{v:?}");
        }
    }

    #[test]
    fn square_vacuum_pulses_closed_form() {
        // 3.4 from an independent Heisenberg-picture computation
        let v = build_four_mode_square(&p(1.0, 0.0)).unwrap().nullifier_variances();
        assert!(v.iter().all(|x| (x - 3.4).abs() < 1e-9), "{v:?}");
    }

    #[test]
    fn composite_41_kappa_zero_light_uncorrelated() {
        let t = build_41_composite(&p(0.0, 2.0)).unwrap();
        let cm = t.final_state.cm();
        let l = t.final_state.require("L").unwrap();
        for a in 0..4 {
            for (qa, ql) in [(xq(a), xq(l)), (xq(a), pq(l)), (pq(a), xq(l)), (pq(a), pq(l))] {
                assert!(cm[(qa, ql)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn general_reproduces_hand_written() {
        for (k, r) in [(1.0, 0.0), (0.8, 1.0), (1.0, 3.0)] {
            let a = build_two_mode_composite(&p(k, r)).unwrap();
            let b = build_general(&GraphSpec::atom_light_pair(), &p(k, r)).unwrap();
            assert!((a.final_state.cm() - b.final_state.cm()).amax() < 1e-9);
            let sq = build_four_mode_square(&p(k, r)).unwrap();
            let gs = build_general(&GraphSpec::square(), &p(k, r)).unwrap();
            assert!((sq.final_state.cm() - gs.final_state.cm()).amax() < 1e-9);
            let c = build_41_composite(&p(k, r)).unwrap();
            let gc = build_general(&GraphSpec::square_with_light(), &p(k, r)).unwrap();
            assert!((c.final_state.cm() - gc.final_state.cm()).amax() < 1e-9);
        }
    }

    #[test]
    fn general_rejects_bad_graphs() {
        let ll = GraphSpec::new(
            vec![Vertex { label: "L1".into(), kind: VertexKind::Light }, Vertex { label: "L2".into(), kind: VertexKind::Light }],
            vec![Edge { a: 0, b: 1, kappa: None }],
        )
        .unwrap();
        assert!(build_general(&ll, &p(1.0, 0.0)).is_err());
        let lonely = GraphSpec::new(vec![Vertex { label: "L".into(), kind: VertexKind::Light }], vec![]).unwrap();
        assert!(build_general(&lonely, &p(1.0, 0.0)).is_err());
        let clash = GraphSpec::new(
            vec![Vertex { label: "i1".into(), kind: VertexKind::Atomic }, Vertex { label: "b".into(), kind: VertexKind::Atomic }],
            vec![Edge { a: 0, b: 1, kappa: None }],
        )
        .unwrap();
        assert!(build_general(&clash, &p(1.0, 0.0)).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(build_two_mode_composite(&p(-0.1, 0.0)).is_err());
        assert!(build_four_mode_square(&p(f64::NAN, 0.0)).is_err());
        assert!(build_41_composite(&p(1.0, f64::INFINITY)).is_err());
        assert!(build_two_mode_composite(&p(1.0, 0.0).with_outcomes(vec![0.0])).is_err());
    }

    #[test]
    fn trace_exports() {
        let t = build_two_mode_composite(&p(0.8, 0.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["final_state"]["n_modes"], 2);
        assert_eq!(v["steps"].as_array().unwrap().len(), 5);
        let csv = t.nullifier_csv().unwrap();
        assert!(csv.starts_with("name,variance\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
