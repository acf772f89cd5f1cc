//! Fault injection: single and sampled double Pauli faults, ideal final
//! error correction and logical-error verdicts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{locations, Circuit, FaultLocation, Position};
use crate::code::{CssCode, Gf2Basis, LogicalClass};
use crate::layout::Qubit;
use crate::pauli::{format_error, GeneralizedError, PauliLetter};
use crate::sim::{Amp, BranchSet, InjectedError, SimConfig, SimError, SimResult, Simulator, SparseState};

pub const REPORT_SCHEMA: &str = "tofprep.analysis/1";
/// Fidelity above which a corrected output counts as the ideal one.
pub const MATCH: f64 = 1.0 - 1e-9;
/// Scenario probabilities below this are treated as zero.
pub const NEGLIGIBLE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("noiseless run does not produce a unique logical output: {0}")]
    Reference(String),
    #[error("output register `{0}` is not a code block")]
    BadOutput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub location: FaultLocation,
    pub letter: PauliLetter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub faults: Vec<Fault>,
    pub label: String,
}

impl FaultScenario {
    pub fn new(circuit: &Circuit, mut faults: Vec<Fault>) -> Self {
        faults.sort();
        let label = faults.iter().map(|f| fault_label(circuit, f)).collect::<Vec<_>>().join("; ");
        FaultScenario { faults, label }
    }

    pub fn empty() -> Self {
        FaultScenario { faults: Vec::new(), label: "no fault".into() }
    }

    pub fn errors(&self) -> Vec<InjectedError> {
        self.faults
            .iter()
            .map(|f| InjectedError {
                timestep: f.location.timestep,
                position: f.location.position,
                error: GeneralizedError::single(f.letter, f.location.qubit),
            })
            .collect()
    }

    fn first_timestep(&self) -> usize {
        self.faults.iter().map(|f| f.location.timestep).min().unwrap_or(usize::MAX)
    }
}

fn fault_label(circuit: &Circuit, f: &Fault) -> String {
    let e = GeneralizedError::single(f.letter, f.location.qubit);
    let text = if f.letter == PauliLetter::Y {
        format!("Y[{}]", circuit.layout.name_of(f.location.qubit))
    } else {
        format_error(&e, &circuit.layout)
    };
    let pos = match f.location.position {
        Position::Before => "before",
        Position::After => "after",
    };
    format!("{text} {pos} t{}", f.location.timestep)
}

/// Outcome of one branch after ideal error correction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    /// Matches the ideal output without any correction.
    Benign,
    /// Matches after correction, or was rejected by post-selection.
    Correctable,
    /// A nonidentity logical Pauli, one letter per output block.
    Logical { blocks: Vec<LogicalClass> },
    /// Differs from the ideal output by something that is not a logical Pauli.
    NonPauli,
}

impl Classification {
    pub fn is_logical(&self) -> bool {
        matches!(self, Classification::Logical { .. } | Classification::NonPauli)
    }

    pub fn describe(&self, outputs: &[String]) -> String {
        match self {
            Classification::Benign => "benign".into(),
            Classification::Correctable => "correctable".into(),
            Classification::NonPauli => "logical (non-Pauli)".into(),
            Classification::Logical { blocks } => {
                let parts: Vec<String> = blocks
                    .iter()
                    .zip(outputs)
                    .filter(|(l, _)| **l != LogicalClass::I)
                    .map(|(l, o)| format!("{}bar[{o}]", l.as_str()))
                    .collect();
                format!("logical {}", parts.join(" * "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub record: BTreeMap<String, bool>,
    pub probability: f64,
    pub classification: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultVerdict {
    pub branch_outcomes: Vec<BranchOutcome>,
    pub logical_probability: f64,
    pub rejected_probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioClass {
    Benign,
    Correctable,
    Logical,
}

impl ScenarioClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioClass::Benign => "benign",
            ScenarioClass::Correctable => "correctable",
            ScenarioClass::Logical => "logical",
        }
    }
}

impl FaultVerdict {
    pub fn class(&self) -> ScenarioClass {
        if self.logical_probability > NEGLIGIBLE {
            ScenarioClass::Logical
        } else if self.rejected_probability > NEGLIGIBLE
            || self
                .branch_outcomes
                .iter()
                .any(|b| b.probability > NEGLIGIBLE && b.classification != Classification::Benign)
        {
            ScenarioClass::Correctable
        } else {
            ScenarioClass::Benign
        }
    }
}

/// One scenario per (location, letter), in location order then X, Y, Z.
pub fn enumerate_single_faults(circuit: &Circuit) -> Vec<FaultScenario> {
    locations(circuit)
        .into_iter()
        .flat_map(|location| PauliLetter::ALL.into_iter().map(move |letter| Fault { location, letter }))
        .map(|f| FaultScenario::new(circuit, vec![f]))
        .collect()
}

/// Decodes output blocks after noiseless projective syndrome measurement and
/// lookup correction. Works on logical amplitude vectors indexed by
/// `bit j = logical value of output block j`.
struct IdealEc {
    n: usize,
    offsets: Vec<usize>,
    /// Rowspace of `h_x`, indexed by coefficient vector.
    group: Vec<u64>,
    group_index: FxHashMap<u64, usize>,
    basis: Gf2Basis,
    /// Z correction for each syndrome over the independent X checks.
    z_fix: FxHashMap<usize, u64>,
    code: CssCode,
}

struct Decoded {
    weight: f64,
    corrected: bool,
    logical: Vec<Amp>,
}

impl IdealEc {
    fn new(code: &CssCode, circuit: &Circuit) -> Result<Self, FaultError> {
        let mut offsets = Vec::new();
        for o in &circuit.outputs {
            let r = circuit.layout.register(o).map_err(|_| FaultError::BadOutput(o.clone()))?;
            if r.size != code.n {
                return Err(FaultError::BadOutput(o.clone()));
            }
            offsets.push(r.offset);
        }
        let mut basis = Gf2Basis::default();
        let rows: Vec<u64> = code.h_x.iter().filter(|&&r| basis.insert(r)).copied().collect();
        let group: Vec<u64> = (0..1usize << rows.len())
            .map(|m| rows.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).fold(0, |v, (_, r)| v ^ r))
            .collect();
        let group_index = group.iter().enumerate().map(|(i, g)| (*g, i)).collect();
        let sigma = |z: u64| rows.iter().enumerate().fold(0usize, |s, (i, r)| s | (((r & z).count_ones() & 1) as usize) << i);
        let mut z_fix = FxHashMap::default();
        z_fix.insert(0, 0);
        for (_, corr) in code.z_table() {
            z_fix.entry(sigma(corr)).or_insert(corr);
        }
        Ok(IdealEc { n: code.n, offsets, group, group_index, basis, z_fix, code: code.clone() })
    }

    fn word(&self, key: u128, j: usize) -> u64 {
        ((key >> self.offsets[j]) as u64) & ((1u64 << self.n) - 1)
    }

    fn with_word(&self, key: u128, j: usize, w: u64) -> u128 {
        let m = (((1u128 << self.n) - 1) << self.offsets[j]) as u128;
        (key & !m) | ((w as u128) << self.offsets[j])
    }

    fn decode(&self, entries: Vec<(u128, Amp)>) -> Vec<Decoded> {
        let m = self.offsets.len();
        // X errors: project onto Z-check syndromes and correct.
        let mut buckets: BTreeMap<Vec<u64>, Vec<(u128, Amp)>> = BTreeMap::new();
        for (k, a) in entries {
            let syn: Vec<u64> = (0..m).map(|j| self.code.x_syndrome(self.word(k, j))).collect();
            buckets.entry(syn).or_default().push((k, a));
        }
        let mut stage: Vec<(bool, Vec<(u128, Amp)>)> = Vec::new();
        for (syn, mut list) in buckets {
            let mut corrected = false;
            for (j, &s) in syn.iter().enumerate() {
                if s == 0 {
                    continue;
                }
                corrected = true;
                let fix = self.code.x_correction(s).unwrap_or(0);
                for e in &mut list {
                    e.0 = self.with_word(e.0, j, self.word(e.0, j) ^ fix);
                }
            }
            stage.push((corrected, list));
        }
        // Z errors: block by block, split by X-check syndrome.
        for j in 0..m {
            let mut next = Vec::new();
            for (corrected, list) in stage {
                next.extend(self.z_project(j, list).into_iter().map(|(s, l)| (corrected || s, l)));
            }
            stage = next;
        }
        let norm = (self.group.len() as f64).powi(m as i32).sqrt();
        stage
            .into_iter()
            .filter_map(|(corrected, list)| {
                let weight: f64 = list.iter().map(|(_, a)| a.norm_sqr()).sum();
                if weight < 1e-14 {
                    return None;
                }
                let mut logical = vec![Amp::new(0.0, 0.0); 1 << m];
                for (k, a) in list {
                    let mut v = 0;
                    for j in 0..m {
                        match self.code.logical_value(self.word(k, j)) {
                            Some(true) => v |= 1 << j,
                            Some(false) => {}
                            None => unreachable!("corrected word outside the code"),
                        }
                    }
                    logical[v] += a / norm;
                }
                Some(Decoded { weight, corrected, logical })
            })
            .collect()
    }

    /// Splits `list` by the X-check syndrome of block `j` and applies the
    /// matching Z correction. The flag marks a nonzero syndrome.
    fn z_project(&self, j: usize, list: Vec<(u128, Amp)>) -> Vec<(bool, Vec<(u128, Amp)>)> {
        let g = self.group.len();
        let mut orbits: FxHashMap<u128, Vec<Amp>> = FxHashMap::default();
        for (k, a) in list {
            let w = self.word(k, j);
            let rep = self.basis.reduce(w);
            let gi = self.group_index[&(w ^ rep)];
            orbits.entry(self.with_word(k, j, rep)).or_insert_with(|| vec![Amp::new(0.0, 0.0); g])[gi] += a;
        }
        let mut orbits: Vec<(u128, Vec<Amp>)> = orbits.into_iter().collect();
        orbits.sort_by_key(|o| o.0);
        let sign = |s: usize, m: usize| if (s & m).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        let mut out = Vec::new();
        for s in 0..g {
            let walsh: Vec<Amp> = orbits
                .iter()
                .map(|(_, v)| v.iter().enumerate().map(|(h, a)| a * sign(s, h)).sum::<Amp>() / g as f64)
                .collect();
            if walsh.iter().all(|w| w.norm_sqr() < 1e-28) {
                continue;
            }
            let fix = self.z_fix.get(&s).copied().unwrap_or(0);
            let mut part = Vec::with_capacity(orbits.len() * g);
            for ((key, _), w) in orbits.iter().zip(&walsh) {
                if w.norm_sqr() < 1e-28 {
                    continue;
                }
                let rep = self.word(*key, j);
                for (h, elem) in self.group.iter().enumerate() {
                    let word = rep ^ elem;
                    let ph = if (word & fix).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
                    part.push((self.with_word(*key, j, word), w * sign(s, h) * ph));
                }
            }
            out.push((s != 0, part));
        }
        out
    }
}

/// Ideal output as logical amplitudes, computed from the noiseless run.
fn reference_state(ec: &IdealEc, result: &SimResult) -> Result<Vec<Amp>, FaultError> {
    let mut reference: Option<Vec<Amp>> = None;
    for b in &result.branches {
        for d in ec.decode(b.state.entries()?) {
            let v = normalized(&d.logical, d.weight);
            match &reference {
                None => reference = Some(v),
                Some(r) if fidelity(r, &v) > MATCH => {}
                Some(_) => return Err(FaultError::Reference("branches decode to different states".into())),
            }
        }
    }
    reference.ok_or_else(|| FaultError::Reference("no surviving branch".into()))
}

fn normalized(v: &[Amp], weight: f64) -> Vec<Amp> {
    let s = weight.sqrt();
    v.iter().map(|a| a / s).collect()
}

fn fidelity(a: &[Amp], b: &[Amp]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

/// `P` applied to a logical vector; block `j` carries letter `p[j]`.
fn apply_logical(v: &[Amp], p: &[LogicalClass]) -> Vec<Amp> {
    let mut out = vec![Amp::new(0.0, 0.0); v.len()];
    for (i, a) in v.iter().enumerate() {
        let mut idx = i;
        let mut sign = 1.0;
        for (j, l) in p.iter().enumerate() {
            let (x, z) = l.bits();
            if z && i >> j & 1 == 1 {
                sign = -sign;
            }
            if x {
                idx ^= 1 << j;
            }
        }
        out[idx] = a * sign;
    }
    out
}

/// Nonidentity logical Pauli products on `m` blocks, lowest weight first.
fn logical_paulis(m: usize) -> Vec<Vec<LogicalClass>> {
    const L: [LogicalClass; 4] = [LogicalClass::I, LogicalClass::X, LogicalClass::Z, LogicalClass::Y];
    let mut all: Vec<Vec<LogicalClass>> = (1..4usize.pow(m as u32))
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let l = L[c % 4];
                    c /= 4;
                    l
                })
                .collect()
        })
        .collect();
    all.sort_by_key(|p| p.iter().filter(|l| **l != LogicalClass::I).count());
    all
}

/// Runs scenarios against one circuit, sharing the noiseless reference.
pub struct Analyzer<'a> {
    circuit: &'a Circuit,
    sim: Simulator<'a>,
    input: Option<SparseState>,
    ec: IdealEc,
    reference: Vec<Amp>,
    paulis: Vec<Vec<LogicalClass>>,
}

impl<'a> Analyzer<'a> {
    pub fn new(circuit: &'a Circuit, code: &'a CssCode, config: SimConfig, input: Option<SparseState>) -> Result<Self, FaultError> {
        let sim = Simulator::new(circuit, code, config)?;
        let ec = IdealEc::new(code, circuit)?;
        let noiseless = sim.run(input.as_ref(), &[])?;
        let reference = reference_state(&ec, &noiseless)?;
        let paulis = logical_paulis(circuit.outputs.len());
        Ok(Analyzer { circuit, sim, input, ec, reference, paulis })
    }

    pub fn simulator(&self) -> &Simulator<'a> {
        &self.sim
    }

    /// Ideal output as logical amplitudes (bit j = output block j).
    pub fn reference(&self) -> &[Amp] {
        &self.reference
    }

    fn check(&self, s: &FaultScenario) -> Result<(), FaultError> {
        let nt = self.circuit.num_timesteps();
        let nq = self.circuit.num_qubits();
        for (i, f) in s.faults.iter().enumerate() {
            if f.location.timestep >= nt || f.location.qubit.index() >= nq {
                return Err(FaultError::BadScenario(format!("location {:?} outside the circuit", f.location)));
            }
            if s.faults[..i].iter().any(|g| g.location == f.location) {
                return Err(FaultError::BadScenario("repeated location".into()));
            }
        }
        Ok(())
    }

    pub fn run_scenario(&self, s: &FaultScenario) -> Result<FaultVerdict, FaultError> {
        self.check(s)?;
        let result = self.sim.run(self.input.as_ref(), &s.errors())?;
        self.verdict(&result)
    }

    pub fn classify(&self, logical: &[Amp], corrected: bool) -> Classification {
        if fidelity(&self.reference, logical) > MATCH {
            return if corrected { Classification::Correctable } else { Classification::Benign };
        }
        for p in &self.paulis {
            if fidelity(&apply_logical(&self.reference, p), logical) > MATCH {
                return Classification::Logical { blocks: p.clone() };
            }
        }
        Classification::NonPauli
    }

    pub fn verdict(&self, result: &SimResult) -> Result<FaultVerdict, FaultError> {
        let mut outcomes: Vec<BranchOutcome> = Vec::new();
        for b in &result.branches {
            for d in self.ec.decode(b.state.entries()?) {
                let classification = self.classify(&normalized(&d.logical, d.weight), d.corrected);
                let probability = b.prob * d.weight;
                match outcomes.iter_mut().find(|o| o.record == b.record && o.classification == classification) {
                    Some(o) => o.probability += probability,
                    None => outcomes.push(BranchOutcome { record: b.record.clone(), probability, classification }),
                }
            }
        }
        let logical_probability =
            outcomes.iter().filter(|o| o.classification.is_logical()).map(|o| o.probability).sum::<f64>().clamp(0.0, 1.0) + 0.0;
        Ok(FaultVerdict { branch_outcomes: outcomes, logical_probability, rejected_probability: result.rejected })
    }

    /// Runs every scenario. A noiseless cursor is advanced through each
    /// chunk of time-sorted scenarios so only the faulty suffix is redone.
    /// Results come back in input order regardless of `workers`.
    pub fn run_many(&self, scenarios: &[FaultScenario], workers: usize) -> Vec<Result<FaultVerdict, FaultError>> {
        let mut order: Vec<usize> = (0..scenarios.len()).collect();
        order.sort_by_key(|&i| (scenarios[i].first_timestep(), i));
        let workers = workers.max(1);
        let chunk = order.len().div_ceil(workers * 4).max(1);
        let run_chunk = |idx: &[usize]| -> Vec<(usize, Result<FaultVerdict, FaultError>)> {
            let mut cursor: Option<Result<BranchSet, FaultError>> = None;
            idx.iter()
                .map(|&i| {
                    let s = &scenarios[i];
                    let r = self.check(s).and_then(|_| {
                        let c = cursor.get_or_insert_with(|| self.sim.start(self.input.as_ref()).map_err(FaultError::from));
                        let c = c.as_mut().map_err(|e| e.clone())?;
                        self.sim.advance(c, s.first_timestep(), &[])?;
                        let mut set = c.clone();
                        self.sim.advance(&mut set, usize::MAX, &s.errors())?;
                        self.verdict(&self.sim.finish(set)?)
                    });
                    (i, r)
                })
                .collect()
        };
        let pieces: Vec<Vec<(usize, Result<FaultVerdict, FaultError>)>> = if workers == 1 {
            order.chunks(chunk).map(run_chunk).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build();
            match pool {
                Ok(p) => p.install(|| order.par_chunks(chunk).map(run_chunk).collect()),
                Err(_) => order.chunks(chunk).map(run_chunk).collect(),
            }
        };
        let mut out: Vec<Option<Result<FaultVerdict, FaultError>>> = (0..scenarios.len()).map(|_| None).collect();
        for (i, r) in pieces.into_iter().flatten() {
            out[i] = Some(r);
        }
        out.into_iter().map(|r| r.expect("every scenario runs")).collect()
    }
}

/// Every final branch decoded to normalized logical amplitudes (`bit j` =
/// output block `j`) after ideal correction, with its record and
/// probability. Phases within one branch are kept.
pub fn decode_outputs(
    circuit: &Circuit,
    code: &CssCode,
    result: &SimResult,
) -> Result<Vec<(BTreeMap<String, bool>, f64, Vec<Amp>)>, FaultError> {
    let ec = IdealEc::new(code, circuit)?;
    let mut out = Vec::new();
    for b in &result.branches {
        for d in ec.decode(b.state.entries()?) {
            out.push((b.record.clone(), b.prob * d.weight, normalized(&d.logical, d.weight)));
        }
    }
    Ok(out)
}

/// Runs one scenario from scratch.
pub fn run_scenario(circuit: &Circuit, scenario: &FaultScenario, code: &CssCode) -> Result<FaultVerdict, FaultError> {
    let config = SimConfig { hadamard_frame: true, ..SimConfig::default() };
    Analyzer::new(circuit, code, config, None)?.run_scenario(scenario)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOptions {
    pub order: usize,
    /// Number of sampled fault pairs; `None` means exhaustive.
    pub sample_budget: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub sim: SimConfig,
    /// Adds wall-clock time to the report (which makes it run-dependent).
    pub timing: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            order: 1,
            sample_budget: None,
            seed: 0,
            workers: 1,
            sim: SimConfig { hadamard_frame: true, ..SimConfig::default() },
            timing: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub benign: usize,
    pub correctable: usize,
    pub logical: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub timestep: usize,
    pub position: Position,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: String,
    pub faults: Vec<FaultEntry>,
    pub class: ScenarioClass,
    pub logical_probability: f64,
    pub rejected_probability: f64,
    pub branches: Vec<BranchReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub record: BTreeMap<String, bool>,
    pub probability: f64,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub label: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub tool_version: String,
    pub circuit: String,
    pub code: String,
    pub rounds: usize,
    pub order: usize,
    pub sampled: bool,
    pub sample_budget: Option<usize>,
    pub seed: Option<u64>,
    pub scenarios: usize,
    pub simulations: usize,
    pub totals: Totals,
    pub max_logical_probability: f64,
    /// True iff no scenario has a logical error.
    pub fault_tolerant: bool,
    pub offending: Vec<ScenarioReport>,
    pub failures: Vec<FailureReport>,
    pub config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

fn scenario_report(circuit: &Circuit, s: &FaultScenario, v: &FaultVerdict) -> ScenarioReport {
    ScenarioReport {
        label: s.label.clone(),
        faults: s
            .faults
            .iter()
            .map(|f| FaultEntry {
                timestep: f.location.timestep,
                position: f.location.position,
                error: format!("{}[{}]", f.letter.as_char(), circuit.layout.name_of(f.location.qubit)),
            })
            .collect(),
        class: v.class(),
        logical_probability: v.logical_probability,
        rejected_probability: v.rejected_probability,
        branches: v
            .branch_outcomes
            .iter()
            .map(|b| BranchReport {
                record: b.record.clone(),
                probability: b.probability,
                verdict: b.classification.describe(&circuit.outputs),
            })
            .collect(),
    }
}

/// Scenarios for `order` 2: all pairs of distinct locations with all
/// letter pairs, or `budget` of them drawn without replacement.
pub fn pair_scenarios(circuit: &Circuit, budget: Option<usize>, seed: u64) -> Vec<FaultScenario> {
    let locs = locations(circuit);
    let l = locs.len();
    let pairs = l * l.saturating_sub(1) / 2;
    let total = pairs * 9;
    let decode = |idx: usize| {
        let (p, letters) = (idx / 9, idx % 9);
        // Row-major index over a < b.
        let mut a = 0;
        let mut rest = p;
        while rest >= l - 1 - a {
            rest -= l - 1 - a;
            a += 1;
        }
        let b = a + 1 + rest;
        let la = PauliLetter::ALL[letters / 3];
        let lb = PauliLetter::ALL[letters % 3];
        FaultScenario::new(circuit, vec![Fault { location: locs[a], letter: la }, Fault { location: locs[b], letter: lb }])
    };
    match budget {
        None => (0..total).map(decode).collect(),
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, total, k.min(total)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(decode).collect()
        }
    }
}

/// Runs all order-1 scenarios, or order-2 pairs (sampled when a budget is
/// given). Scenarios whose faults sit in the same equivalence classes are
/// simulated once.
pub fn analyze(circuit: &Circuit, code: &CssCode, options: &AnalyzeOptions) -> Result<AnalysisReport, FaultError> {
    let start = Instant::now();
    let scenarios = match options.order {
        1 => enumerate_single_faults(circuit),
        2 => pair_scenarios(circuit, options.sample_budget, options.seed),
        o => return Err(FaultError::BadScenario(format!("fault order {o} is not supported"))),
    };
    let analyzer = Analyzer::new(circuit, code, options.sim.clone(), None)?;

    let mut reps: Vec<FaultScenario> = Vec::new();
    let mut rep_of: Vec<usize> = Vec::with_capacity(scenarios.len());
    let mut seen: FxHashMap<Vec<((Qubit, Option<usize>), PauliLetter)>, usize> = FxHashMap::default();
    for s in &scenarios {
        let mut key: Vec<_> = s.faults.iter().map(|f| (circuit.equivalence_class(&f.location), f.letter)).collect();
        key.sort();
        let next = reps.len();
        let r = *seen.entry(key).or_insert(next);
        if r == next {
            reps.push(s.clone());
        }
        rep_of.push(r);
    }
    let results: Vec<Arc<Result<FaultVerdict, FaultError>>> =
        analyzer.run_many(&reps, options.workers).into_iter().map(Arc::new).collect();

    let mut totals = Totals::default();
    let mut offending = Vec::new();
    let mut failures = Vec::new();
    let mut max_logical: f64 = 0.0;
    for (s, &r) in scenarios.iter().zip(&rep_of) {
        match &*results[r] {
            Ok(v) => {
                max_logical = max_logical.max(v.logical_probability);
                match v.class() {
                    ScenarioClass::Benign => totals.benign += 1,
                    ScenarioClass::Correctable => totals.correctable += 1,
                    ScenarioClass::Logical => {
                        totals.logical += 1;
                        offending.push(scenario_report(circuit, s, v));
                    }
                }
            }
            Err(e) => {
                totals.failed += 1;
                failures.push(FailureReport { label: s.label.clone(), error: e.to_string() });
            }
        }
    }
    let sampled = options.order == 2 && options.sample_budget.is_some();
    Ok(AnalysisReport {
        schema: REPORT_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        circuit: circuit.name.clone(),
        code: circuit.code.clone(),
        rounds: circuit.rounds,
        order: options.order,
        sampled,
        sample_budget: if sampled { options.sample_budget } else { None },
        seed: sampled.then_some(options.seed),
        scenarios: scenarios.len(),
        simulations: reps.len(),
        fault_tolerant: totals.logical == 0,
        totals,
        max_logical_probability: max_logical,
        offending,
        failures,
        config: BTreeMap::new(),
        wall_clock_seconds: options.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "circuit {} ({} code, {} rounds), fault order {}", self.circuit, self.code, self.rounds, self.order);
        if self.sampled {
            let _ = writeln!(s, "sampled {} scenarios, seed {}", self.scenarios, self.seed.unwrap_or(0));
        }
        let _ = writeln!(s, "scenarios   {:>8}", self.scenarios);
        let _ = writeln!(s, "simulated   {:>8}", self.simulations);
        let _ = writeln!(s, "benign      {:>8}", self.totals.benign);
        let _ = writeln!(s, "correctable {:>8}", self.totals.correctable);
        let _ = writeln!(s, "logical     {:>8}", self.totals.logical);
        let _ = writeln!(s, "failed      {:>8}", self.totals.failed);
        let _ = writeln!(s, "max logical probability {:.6}", self.max_logical_probability);
        if !self.offending.is_empty() {
            let _ = writeln!(s, "\n{:<36} {:>9} {:>9}  verdicts", "scenario", "p_logical", "p_reject");
            for o in &self.offending {
                let mut verdicts: Vec<&str> = o.branches.iter().map(|b| b.verdict.as_str()).collect();
                verdicts.sort_unstable();
                verdicts.dedup();
                let _ = writeln!(
                    s,
                    "{:<36} {:>9.6} {:>9.6}  {}",
                    o.label,
                    o.logical_probability,
                    o.rejected_probability,
                    verdicts.join(", ")
                );
            }
        }
        for f in &self.failures {
            let _ = writeln!(s, "FAILED {}: {}", f.label, f.error);
        }
        let _ = writeln!(s, "\n{}", if self.fault_tolerant { "no logical-error scenario" } else { "logical-error scenarios found" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_modified_prep, build_shor_prep};
    use crate::circuit::{Gate, GateKind};
    use crate::layout::{Init, RegisterRole};

    #[test]
    fn single_gate_circuit_has_twelve_scenarios() {
        let mut c = Circuit::empty("one", "steane");
        c.layout.add("Q", 2, RegisterRole::Block, Init::Zero).unwrap();
        c.gates.push(Gate::new(GateKind::CX, &[Qubit(0), Qubit(1)], 0));
        assert_eq!(enumerate_single_faults(&c).len(), 12);
        assert!(enumerate_single_faults(&Circuit::empty("e", "steane")).is_empty());
    }

    #[test]
    fn shor_prep_verdicts() {
        let code = CssCode::steane();
        let c = build_shor_prep(&code, 3).unwrap();
        let cfg = SimConfig { hadamard_frame: true, ..SimConfig::default() };
        let a = Analyzer::new(&c, &code, cfg, None).unwrap();
        let empty = a.run_scenario(&FaultScenario::empty()).unwrap();
        assert_eq!(empty.class(), ScenarioClass::Benign);
        let t3 = c.layout.qubit("T3", 2).unwrap();
        let t1 = c.layout.qubit("T1", 2).unwrap();
        let x = |q, ts| FaultScenario::new(&c, vec![Fault { location: FaultLocation { timestep: ts, position: Position::Before, qubit: q }, letter: PauliLetter::X }]);
        let v = a.run_scenario(&x(t3, 0)).unwrap();
        assert!((v.logical_probability - 1.0).abs() < 1e-9, "{v:?}");
        let v = a.run_scenario(&x(t1, 0)).unwrap();
        assert!(v.logical_probability > 0.5 - 1e-9, "{v:?}");
    }

    #[test]
    fn modified_prep_empty_scenario_is_benign() {
        let code = CssCode::steane();
        let c = build_modified_prep(&code, 3, false).unwrap();
        let v = run_scenario(&c, &FaultScenario::empty(), &code).unwrap();
        assert_eq!(v.class(), ScenarioClass::Benign);
        assert!((v.branch_outcomes.iter().map(|b| b.probability).sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
