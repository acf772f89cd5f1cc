//! Gate-level circuits over named registers, their text format, structural
//! validation and fault locations.
//!
//! Text format (one item per line, `#` comments):
//!
//! ```text
//! circuit NAME
//! code steane|trivial|NAME
//! rounds N
//! reg NAME SIZE block|aux|verify|syndrome|qubits zero|plus|input
//! output REG [REG ...]
//! report NAME [NAME ...]
//! let NAME = EXPR
//! TS KIND Q[,Q...] [-> BIT] [?EXPR]
//! ```
//!
//! `KIND` is one of `H X Z CX CZ CCX CCZ MZ MX RESET REJECT BARRIER`. Qubits
//! are written `REG.index`. `MZ`/`MX` write the named bit. `RESET` returns a
//! qubit to |0>. `REJECT` takes no qubits and discards the run when its
//! condition holds. A measurement that is skipped by its condition leaves its
//! bit at 0.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::layout::{Init, Layout, LayoutError, Qubit, RegisterRole};
use crate::pauli::Unitary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Z,
    CX,
    CZ,
    CCX,
    CCZ,
    MeasureZ,
    MeasureX,
    Reset,
    Reject,
    Barrier,
}

impl GateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::CX => "CX",
            GateKind::CZ => "CZ",
            GateKind::CCX => "CCX",
            GateKind::CCZ => "CCZ",
            GateKind::MeasureZ => "MZ",
            GateKind::MeasureX => "MX",
            GateKind::Reset => "RESET",
            GateKind::Reject => "REJECT",
            GateKind::Barrier => "BARRIER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "H" => GateKind::H,
            "X" => GateKind::X,
            "Z" => GateKind::Z,
            "CX" => GateKind::CX,
            "CZ" => GateKind::CZ,
            "CCX" => GateKind::CCX,
            "CCZ" => GateKind::CCZ,
            "MZ" => GateKind::MeasureZ,
            "MX" => GateKind::MeasureX,
            "RESET" => GateKind::Reset,
            "REJECT" => GateKind::Reject,
            "BARRIER" => GateKind::Barrier,
            _ => return None,
        })
    }

    /// Required operand count; `None` for any.
    pub fn arity(self) -> Option<usize> {
        match self {
            GateKind::H | GateKind::X | GateKind::Z | GateKind::MeasureZ | GateKind::MeasureX | GateKind::Reset => {
                Some(1)
            }
            GateKind::CX | GateKind::CZ => Some(2),
            GateKind::CCX | GateKind::CCZ => Some(3),
            GateKind::Reject => Some(0),
            GateKind::Barrier => None,
        }
    }

    pub fn is_measurement(self) -> bool {
        matches!(self, GateKind::MeasureZ | GateKind::MeasureX)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub operands: Vec<Qubit>,
    pub timestep: usize,
    /// Classical control; the gate acts only when this evaluates to 1.
    pub condition: Option<Expr>,
    /// Bit written by a measurement.
    pub output: Option<String>,
}

impl Gate {
    pub fn new(kind: GateKind, operands: &[Qubit], timestep: usize) -> Self {
        Gate { kind, operands: operands.to_vec(), timestep, condition: None, output: None }
    }

    pub fn is_classically_controlled(&self) -> bool {
        self.condition.is_some()
    }

    pub fn unitary(&self) -> Option<Unitary> {
        let o = &self.operands;
        Some(match self.kind {
            GateKind::H => Unitary::H(o[0]),
            GateKind::X => Unitary::X(o[0]),
            GateKind::Z => Unitary::Z(o[0]),
            GateKind::CX => Unitary::CX(o[0], o[1]),
            GateKind::CZ => Unitary::CZ(o[0], o[1]),
            GateKind::CCX => Unitary::CCX(o[0], o[1], o[2]),
            GateKind::CCZ => Unitary::CCZ(o[0], o[1], o[2]),
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("rounds must be at least 1 (got {0})")]
    InvalidRounds(usize),
    #[error("majority vote needs an odd number of rounds (got {0})")]
    EvenRounds(usize),
    #[error("cat states of size {0} are not supported (4 or 7)")]
    UnsupportedCatSize(usize),
    #[error("syndrome_rounds must be 1 or 2 (got {0})")]
    InvalidSyndromeRounds(usize),
    #[error("gate {index} ({kind}): {reason}")]
    BadGate { index: usize, kind: &'static str, reason: String },
    #[error("timestep {0}: qubit {1} used by two gates")]
    TimestepConflict(usize, String),
    #[error("timestep {0} has no gates")]
    NonContiguous(usize),
    #[error("unknown classical name `{0}`")]
    UnknownName(String),
    #[error("`{name}` is read at timestep {at} before it is written")]
    NotReady { name: String, at: usize },
    #[error("duplicate classical name `{0}`")]
    DuplicateName(String),
    #[error("register `{0}` cannot be an output")]
    BadOutput(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub name: String,
    /// Name of the code the blocks are encoded in.
    pub code: String,
    pub rounds: usize,
    pub layout: Layout,
    /// Output registers; the verdict decodes these as code blocks.
    pub outputs: Vec<String>,
    /// Classical names kept in per-branch records for reports.
    pub report: Vec<String>,
    /// Named classical functions of measurement bits, in definition order.
    pub lets: Vec<(String, Expr)>,
    /// Sorted by timestep.
    pub gates: Vec<Gate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    Before,
    After,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultLocation {
    pub timestep: usize,
    pub position: Position,
    pub qubit: Qubit,
}

impl Circuit {
    pub fn empty(name: &str, code: &str) -> Self {
        Circuit {
            name: name.into(),
            code: code.into(),
            rounds: 0,
            layout: Layout::new(),
            outputs: vec![],
            report: vec![],
            lets: vec![],
            gates: vec![],
        }
    }

    pub fn num_timesteps(&self) -> usize {
        self.gates.iter().map(|g| g.timestep + 1).max().unwrap_or(0)
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.num_qubits()
    }

    /// Gate indices grouped by timestep.
    pub fn layers(&self) -> Vec<Vec<usize>> {
        let mut l = vec![Vec::new(); self.num_timesteps()];
        for (i, g) in self.gates.iter().enumerate() {
            l[g.timestep].push(i);
        }
        l
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }

    /// Timestep at which each measured bit is written.
    pub fn bit_times(&self) -> HashMap<String, usize> {
        self.gates.iter().filter_map(|g| g.output.clone().map(|b| (b, g.timestep))).collect()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let nq = self.num_qubits();
        let mut prev_ts = 0;
        for (index, g) in self.gates.iter().enumerate() {
            let bad = |reason: String| CircuitError::BadGate { index, kind: g.kind.as_str(), reason };
            if g.timestep < prev_ts {
                return Err(bad("gates are not sorted by timestep".into()));
            }
            prev_ts = g.timestep;
            if let Some(a) = g.kind.arity() {
                if g.operands.len() != a {
                    return Err(bad(format!("expected {a} operands, got {}", g.operands.len())));
                }
            }
            let mut seen = HashSet::new();
            for q in &g.operands {
                if q.index() >= nq {
                    return Err(bad(format!("qubit {} outside the layout", q.0)));
                }
                if !seen.insert(*q) {
                    return Err(bad(format!("qubit {} repeated", self.layout.name_of(*q))));
                }
            }
            if g.kind.is_measurement() != g.output.is_some() {
                return Err(bad("measurements, and only measurements, write a bit".into()));
            }
        }
        for (ts, layer) in self.layers().iter().enumerate() {
            if layer.is_empty() {
                return Err(CircuitError::NonContiguous(ts));
            }
            let mut used = HashSet::new();
            for &i in layer {
                for q in &self.gates[i].operands {
                    if !used.insert(*q) {
                        return Err(CircuitError::TimestepConflict(ts, self.layout.name_of(*q)));
                    }
                }
            }
        }
        // Classical names: each bit written once, lets after their inputs.
        let mut ready: HashMap<String, usize> = HashMap::new();
        for g in &self.gates {
            if let Some(b) = &g.output {
                if ready.insert(b.clone(), g.timestep + 1).is_some() {
                    return Err(CircuitError::DuplicateName(b.clone()));
                }
            }
        }
        for (name, e) in &self.lets {
            if ready.contains_key(name) {
                return Err(CircuitError::DuplicateName(name.clone()));
            }
            let mut t = 0;
            for v in e.vars() {
                t = t.max(*ready.get(&v).ok_or_else(|| CircuitError::UnknownName(v.clone()))?);
            }
            ready.insert(name.clone(), t);
        }
        for g in &self.gates {
            if let Some(c) = &g.condition {
                for v in c.vars() {
                    let t = *ready.get(&v).ok_or_else(|| CircuitError::UnknownName(v.clone()))?;
                    if t > g.timestep {
                        return Err(CircuitError::NotReady { name: v, at: g.timestep });
                    }
                }
            }
        }
        for r in &self.report {
            if !ready.contains_key(r) {
                return Err(CircuitError::UnknownName(r.clone()));
            }
        }
        for o in &self.outputs {
            self.layout.register(o)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "circuit {}", self.name);
        let _ = writeln!(s, "code {}", self.code);
        let _ = writeln!(s, "rounds {}", self.rounds);
        for r in self.layout.registers() {
            let _ = writeln!(s, "reg {} {} {} {}", r.name, r.size, r.role.as_str(), r.init.as_str());
        }
        if !self.outputs.is_empty() {
            let _ = writeln!(s, "output {}", self.outputs.join(" "));
        }
        if !self.report.is_empty() {
            let _ = writeln!(s, "report {}", self.report.join(" "));
        }
        for (n, e) in &self.lets {
            let _ = writeln!(s, "let {n} = {e}");
        }
        for g in &self.gates {
            let _ = write!(s, "{} {}", g.timestep, g.kind.as_str());
            if !g.operands.is_empty() {
                let ops: Vec<String> = g.operands.iter().map(|q| self.layout.name_of(*q)).collect();
                let _ = write!(s, " {}", ops.join(","));
            }
            if let Some(b) = &g.output {
                let _ = write!(s, " -> {b}");
            }
            if let Some(c) = &g.condition {
                let _ = write!(s, " ?{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CircuitError> {
        let mut c = Circuit::empty("circuit", "trivial");
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| CircuitError::Parse { line: line_no, reason };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match head {
                "circuit" => c.name = rest.to_string(),
                "code" => c.code = rest.to_string(),
                "rounds" => c.rounds = rest.parse().map_err(|_| err(format!("bad round count `{rest}`")))?,
                "reg" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(err("expected `reg NAME SIZE ROLE INIT`".into()));
                    }
                    let size = f[1].parse().map_err(|_| err(format!("bad size `{}`", f[1])))?;
                    let role = RegisterRole::parse(f[2]).ok_or_else(|| err(format!("bad role `{}`", f[2])))?;
                    let init = Init::parse(f[3]).ok_or_else(|| err(format!("bad init `{}`", f[3])))?;
                    c.layout.add(f[0], size, role, init).map_err(|e| err(e.to_string()))?;
                }
                "output" => c.outputs = rest.split_whitespace().map(String::from).collect(),
                "report" => c.report = rest.split_whitespace().map(String::from).collect(),
                "let" => {
                    let (n, e) = rest.split_once('=').ok_or_else(|| err("expected `let NAME = EXPR`".into()))?;
                    let e = Expr::parse(e.trim()).map_err(err)?;
                    c.lets.push((n.trim().to_string(), e));
                }
                _ => {
                    let ts: usize = head.parse().map_err(|_| err(format!("unknown directive `{head}`")))?;
                    let (body, cond) = match rest.split_once('?') {
                        Some((b, cnd)) => (b.trim(), Some(Expr::parse(cnd.trim()).map_err(err)?)),
                        None => (rest, None),
                    };
                    let (body, output) = match body.split_once("->") {
                        Some((b, o)) => (b.trim(), Some(o.trim().to_string())),
                        None => (body, None),
                    };
                    let (kind, ops) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
                    let kind = GateKind::parse(kind).ok_or_else(|| err(format!("unknown gate `{kind}`")))?;
                    let operands = ops
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|q| c.layout.parse_qubit(q))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| err(e.to_string()))?;
                    c.gates.push(Gate { kind, operands, timestep: ts, condition: cond, output });
                }
            }
        }
        c.gates.sort_by_key(|g| g.timestep);
        c.validate()?;
        Ok(c)
    }

    /// Index of the first gate touching `q` at a timestep >= `from`.
    fn next_gate_on(&self, q: Qubit, from: usize) -> Option<usize> {
        self.gates.iter().position(|g| g.timestep >= from && g.operands.contains(&q))
    }

    /// Canonical representative of a location: a Pauli anywhere between two
    /// consecutive gates on a qubit has the same effect, so locations are
    /// identified by the next gate on the qubit (`None` = end of circuit).
    pub fn equivalence_class(&self, loc: &FaultLocation) -> (Qubit, Option<usize>) {
        let from = match loc.position {
            Position::Before => loc.timestep,
            Position::After => loc.timestep + 1,
        };
        (loc.qubit, self.next_gate_on(loc.qubit, from))
    }
}

/// Every (timestep, position, qubit) where a fault can occur, in that
/// order. A qubit is live from timestep 0 when its register starts in a
/// prepared state, otherwise from its first gate; it stops being live when
/// measured and is live again from its next gate (a reset brings it back
/// after the reset).
pub fn locations(c: &Circuit) -> Vec<FaultLocation> {
    let nq = c.num_qubits();
    let nt = c.num_timesteps();
    let mut gate_at: Vec<Vec<Option<GateKind>>> = vec![vec![None; nq]; nt];
    for g in &c.gates {
        for q in &g.operands {
            gate_at[g.timestep][q.index()] = Some(g.kind);
        }
    }
    let mut live: Vec<bool> = (0..nq)
        .map(|i| {
            c.layout.register_of(Qubit(i as u16)).map(|(r, _)| r.init != Init::Zero).unwrap_or(false)
        })
        .collect();
    let mut out = Vec::new();
    for (ts, row) in gate_at.iter().enumerate() {
        let mut after = Vec::new();
        for q in 0..nq {
            let g = row[q];
            let before = match g {
                Some(GateKind::Reset) | Some(GateKind::Barrier) | None => live[q],
                Some(_) => true,
            };
            if before {
                out.push(FaultLocation { timestep: ts, position: Position::Before, qubit: Qubit(q as u16) });
            }
            live[q] = match g {
                Some(k) if k.is_measurement() => false,
                Some(GateKind::Barrier) | None => live[q],
                Some(_) => true,
            };
            if live[q] {
                after.push(FaultLocation { timestep: ts, position: Position::After, qubit: Qubit(q as u16) });
            }
        }
        out.extend(after);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_qubit() -> Circuit {
        let mut c = Circuit::empty("t", "trivial");
        c.layout.add("Q", 2, RegisterRole::Generic, Init::Zero).unwrap();
        c.gates.push(Gate::new(GateKind::CX, &[Qubit(0), Qubit(1)], 0));
        c
    }

    #[test]
    fn location_counts() {
        assert!(locations(&Circuit::empty("e", "trivial")).is_empty());
        assert_eq!(locations(&two_qubit()).len(), 4);
    }

    #[test]
    fn text_round_trip() {
        let text = "circuit demo\ncode trivial\nrounds 1\nreg Q 3 qubits zero\nreg B 1 block plus\noutput B\nreport p\nlet p = par(m0,m1)\n0 H Q.0\n1 CX Q.0,Q.1\n2 MZ Q.0 -> m0\n2 MX Q.1 -> m1\n3 X B.0 ?p\n3 REJECT ?and(m0,not(m1))\n";
        let c = Circuit::from_text(text).unwrap();
        assert_eq!(c.to_text(), text);
        assert_eq!(c.gates[4].condition, Some(Expr::name("p")));
    }

    #[test]
    fn validation_errors() {
        let mut c = two_qubit();
        c.gates.push(Gate::new(GateKind::X, &[Qubit(0)], 0));
        assert!(matches!(c.validate(), Err(CircuitError::TimestepConflict(0, _))));
        let mut c = two_qubit();
        c.gates.push(Gate::new(GateKind::X, &[Qubit(0)], 2));
        assert_eq!(c.validate(), Err(CircuitError::NonContiguous(1)));
        let mut c = two_qubit();
        c.gates[0].operands = vec![Qubit(0), Qubit(0)];
        assert!(matches!(c.validate(), Err(CircuitError::BadGate { .. })));
        let mut c = two_qubit();
        c.gates[0].condition = Some(Expr::name("m"));
        assert_eq!(c.validate(), Err(CircuitError::UnknownName("m".into())));
        let mut c = two_qubit();
        let mut m = Gate::new(GateKind::MeasureZ, &[Qubit(0)], 1);
        m.output = Some("m".into());
        c.gates.push(m);
        let mut x = Gate::new(GateKind::X, &[Qubit(1)], 1);
        x.condition = Some(Expr::name("m"));
        c.gates.push(x);
        assert!(matches!(c.validate(), Err(CircuitError::NotReady { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = Circuit::from_text("reg Q 1 qubits zero\n0 FOO Q.0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        let e = Circuit::from_text("reg Q 1 qubits zero\n0 H Q.5\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
    }

    #[test]
    fn measured_qubits_stop_being_live() {
        let mut c = Circuit::empty("m", "trivial");
        c.layout.add("Q", 1, RegisterRole::Generic, Init::Zero).unwrap();
        c.layout.add("R", 1, RegisterRole::Generic, Init::Zero).unwrap();
        c.gates.push(Gate::new(GateKind::H, &[Qubit(0)], 0));
        let mut m = Gate::new(GateKind::MeasureZ, &[Qubit(0)], 1);
        m.output = Some("m".into());
        c.gates.push(m);
        c.gates.push(Gate::new(GateKind::X, &[Qubit(1)], 2));
        c.gates.push(Gate::new(GateKind::Reset, &[Qubit(0)], 3));
        let locs = locations(&c);
        let q0: Vec<_> = locs.iter().filter(|l| l.qubit == Qubit(0)).map(|l| (l.timestep, l.position)).collect();
        assert_eq!(
            q0,
            vec![(0, Position::Before), (0, Position::After), (1, Position::Before), (3, Position::After)]
        );
        let loc = FaultLocation { timestep: 0, position: Position::After, qubit: Qubit(0) };
        assert_eq!(c.equivalence_class(&loc), (Qubit(0), Some(1)));
    }
}
