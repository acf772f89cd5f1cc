//! Pauli operators and products of (multi-)controlled Pauli terms.
//!
//! Conventions:
//! * `PauliOperator` stores `phase · X^x · Z^z` (X part leftmost), so a
//!   single-qubit Y is `i · X · Z` and `X · Z = -iY`.
//! * A `GeneralizedError` is `phase · terms[0] · terms[1] · …`; the rightmost
//!   term is applied to a state first.
//! * An X term flips its target when every control is 1. A Z term is the
//!   diagonal phase `(-1)^(product of its qubits)`, stored as target = the
//!   largest qubit and controls = the rest.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::CssCode;
use crate::layout::{Layout, LayoutError, Qubit};

/// A power of `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_power(k: i64) -> Phase {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn power(self) -> u8 {
        self.0
    }

    pub fn conj(self) -> Phase {
        Phase((4 - self.0) % 4)
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    X,
    Z,
}

/// Single-qubit fault letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliLetter {
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub const ALL: [PauliLetter; 3] = [PauliLetter::X, PauliLetter::Y, PauliLetter::Z];

    pub fn as_char(self) -> char {
        match self {
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }

    pub fn parse(c: char) -> Option<Self> {
        match c {
            'X' => Some(PauliLetter::X),
            'Y' => Some(PauliLetter::Y),
            'Z' => Some(PauliLetter::Z),
            _ => None,
        }
    }
}

/// The unitary gate set errors are conjugated through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unitary {
    H(Qubit),
    X(Qubit),
    Z(Qubit),
    CX(Qubit, Qubit),
    CZ(Qubit, Qubit),
    CCX(Qubit, Qubit, Qubit),
    CCZ(Qubit, Qubit, Qubit),
}

impl Unitary {
    pub fn qubits(&self) -> Vec<Qubit> {
        match *self {
            Unitary::H(a) | Unitary::X(a) | Unitary::Z(a) => vec![a],
            Unitary::CX(a, b) | Unitary::CZ(a, b) => vec![a, b],
            Unitary::CCX(a, b, c) | Unitary::CCZ(a, b, c) => vec![a, b, c],
        }
    }

    /// The gate written as an error term, when it is one (everything but H).
    pub fn as_term(&self) -> Option<ErrorTerm> {
        Some(match *self {
            Unitary::H(_) => return None,
            Unitary::X(t) => ErrorTerm::x(t, &[]),
            Unitary::CX(c, t) => ErrorTerm::x(t, &[c]),
            Unitary::CCX(a, b, t) => ErrorTerm::x(t, &[a, b]),
            Unitary::Z(a) => ErrorTerm::z(&[a]),
            Unitary::CZ(a, b) => ErrorTerm::z(&[a, b]),
            Unitary::CCZ(a, b, c) => ErrorTerm::z(&[a, b, c]),
        })
    }
}

/// A multi-controlled single-letter term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorTerm {
    pub letter: Letter,
    pub target: Qubit,
    /// Sorted, never contains `target`.
    pub controls: Vec<Qubit>,
}

impl ErrorTerm {
    pub fn x(target: Qubit, controls: &[Qubit]) -> Self {
        let mut controls = controls.to_vec();
        controls.sort();
        controls.dedup();
        assert!(!controls.contains(&target), "control equals target");
        ErrorTerm { letter: Letter::X, target, controls }
    }

    /// Diagonal term over `qubits` (at least one).
    pub fn z(qubits: &[Qubit]) -> Self {
        let mut all = qubits.to_vec();
        all.sort();
        all.dedup();
        let target = all.pop().expect("Z term needs a qubit");
        ErrorTerm { letter: Letter::Z, target, controls: all }
    }

    /// All qubits of a Z term, sorted.
    fn z_support(&self) -> Vec<Qubit> {
        let mut v = self.controls.clone();
        v.push(self.target);
        v.sort();
        v
    }

    pub fn qubits(&self) -> Vec<Qubit> {
        let mut v = self.controls.clone();
        v.push(self.target);
        v
    }

    pub fn to_unitary(&self) -> Unitary {
        let c = &self.controls;
        match (self.letter, c.len()) {
            (Letter::X, 0) => Unitary::X(self.target),
            (Letter::X, 1) => Unitary::CX(c[0], self.target),
            (Letter::X, _) => Unitary::CCX(c[0], c[1], self.target),
            (Letter::Z, 0) => Unitary::Z(self.target),
            (Letter::Z, 1) => Unitary::CZ(c[0], self.target),
            (Letter::Z, _) => Unitary::CCZ(c[0], c[1], self.target),
        }
    }

    fn check_closure(&self) -> Result<(), PauliError> {
        if self.controls.len() > 2 {
            return Err(PauliError::ClosureFailure(format!(
                "{:?} term with {} controls",
                self.letter,
                self.controls.len()
            )));
        }
        Ok(())
    }
}

/// Projector onto `|value>` of one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Projector {
    pub qubit: Qubit,
    pub value: bool,
}

impl Projector {
    pub fn accepts(&self, key: u128) -> bool {
        (key & self.qubit.bit() != 0) == self.value
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("conjugated error leaves the controlled-Pauli class: {0}")]
    ClosureFailure(String),
    #[error("cannot parse error `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneralizedError {
    pub terms: Vec<ErrorTerm>,
    pub phase: Phase,
}

impl GeneralizedError {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.terms.is_empty() && self.phase == Phase::ONE
    }

    pub fn from_terms(terms: Vec<ErrorTerm>) -> Self {
        GeneralizedError { terms, phase: Phase::ONE }
    }

    pub fn single(letter: PauliLetter, q: Qubit) -> Self {
        match letter {
            PauliLetter::X => Self::from_terms(vec![ErrorTerm::x(q, &[])]),
            PauliLetter::Z => Self::from_terms(vec![ErrorTerm::z(&[q])]),
            PauliLetter::Y => GeneralizedError {
                terms: vec![ErrorTerm::x(q, &[]), ErrorTerm::z(&[q])],
                phase: Phase::I,
            },
        }
    }

    pub fn from_pauli(p: &PauliOperator) -> Self {
        let mut terms = Vec::new();
        for q in 0..p.n {
            if p.x >> q & 1 == 1 {
                terms.push(ErrorTerm::x(Qubit(q as u16), &[]));
            }
        }
        for q in 0..p.n {
            if p.z >> q & 1 == 1 {
                terms.push(ErrorTerm::z(&[Qubit(q as u16)]));
            }
        }
        GeneralizedError { terms, phase: p.phase }
    }

    /// Qubits touched by any term.
    pub fn support(&self) -> u128 {
        self.terms.iter().flat_map(|t| t.qubits()).fold(0, |m, q| m | q.bit())
    }

    /// Removes adjacent equal terms (each term is an involution).
    pub fn simplified(mut self) -> Self {
        let mut out: Vec<ErrorTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            if out.last() == Some(&t) {
                out.pop();
            } else {
                out.push(t);
            }
        }
        self.terms = out;
        self
    }

    pub fn inverse(&self) -> Self {
        GeneralizedError {
            terms: self.terms.iter().rev().cloned().collect(),
            phase: self.phase.conj(),
        }
    }
}

/// `a · b`: applying the result equals applying `b`, then `a`.
pub fn compose(a: &GeneralizedError, b: &GeneralizedError) -> GeneralizedError {
    let mut terms = a.terms.clone();
    terms.extend(b.terms.iter().cloned());
    GeneralizedError { terms, phase: a.phase * b.phase }.simplified()
}

fn union(a: &[Qubit], b: &[Qubit]) -> Vec<Qubit> {
    let mut v: Vec<Qubit> = a.iter().chain(b).copied().collect();
    v.sort();
    v.dedup();
    v
}

fn without(a: &[Qubit], q: Qubit) -> Vec<Qubit> {
    a.iter().copied().filter(|&x| x != q).collect()
}

/// Conjugates a single term; returns the replacement product and a sign.
fn conjugate_term(term: &ErrorTerm, gate: &Unitary) -> Result<(Vec<ErrorTerm>, Phase), PauliError> {
    let keep = || Ok((vec![term.clone()], Phase::ONE));
    // Permutation gates: target t', controls n.
    let perm = match *gate {
        Unitary::X(t) => Some((t, vec![])),
        Unitary::CX(c, t) => Some((t, vec![c])),
        Unitary::CCX(a, b, t) => Some((t, union(&[a], &[b]))),
        _ => None,
    };
    // Diagonal gates: support g.
    let diag = match *gate {
        Unitary::Z(a) => Some(vec![a]),
        Unitary::CZ(a, b) => Some(union(&[a], &[b])),
        Unitary::CCZ(a, b, c) => Some(union(&[a, b], &[c])),
        _ => None,
    };

    let out = match (term.letter, gate) {
        (Letter::X, Unitary::H(q)) => {
            if term.controls.contains(q) {
                return Err(PauliError::ClosureFailure(
                    "Hadamard on a control of an X term".into(),
                ));
            }
            if *q == term.target {
                (vec![ErrorTerm::z(&term.qubits())], Phase::ONE)
            } else {
                return keep();
            }
        }
        (Letter::Z, Unitary::H(q)) => {
            let m = term.z_support();
            if m.contains(q) {
                (vec![ErrorTerm::x(*q, &without(&m, *q))], Phase::ONE)
            } else {
                return keep();
            }
        }
        (Letter::Z, _) if diag.is_some() => return keep(),
        (Letter::X, _) if diag.is_some() => {
            let g = diag.unwrap();
            if !g.contains(&term.target) {
                return keep();
            }
            let h = union(&term.controls, &without(&g, term.target));
            if h.is_empty() {
                (vec![term.clone()], Phase::MINUS_ONE)
            } else {
                (vec![term.clone(), ErrorTerm::z(&h)], Phase::ONE)
            }
        }
        (Letter::Z, _) => {
            let (tp, n) = perm.unwrap();
            let m = term.z_support();
            if !m.contains(&tp) {
                return keep();
            }
            let extra = union(&without(&m, tp), &n);
            if extra.is_empty() {
                (vec![term.clone()], Phase::MINUS_ONE)
            } else {
                (vec![term.clone(), ErrorTerm::z(&extra)], Phase::ONE)
            }
        }
        (Letter::X, _) => {
            let (tp, n) = perm.unwrap();
            let t = term.target;
            let c = &term.controls;
            if t == tp {
                return keep();
            } else if n.contains(&t) {
                if c.contains(&tp) {
                    // Target of the gate is a control of the term: no simple
                    // rule, write G·E·G explicitly.
                    let g = gate.as_term().unwrap();
                    (vec![g.clone(), term.clone(), g], Phase::ONE)
                } else {
                    let spread = ErrorTerm::x(tp, &union(c, &without(&n, t)));
                    (vec![term.clone(), spread], Phase::ONE)
                }
            } else if c.contains(&tp) {
                let extra = ErrorTerm::x(t, &union(&without(c, tp), &n));
                (vec![term.clone(), extra], Phase::ONE)
            } else {
                return keep();
            }
        }
    };
    for t in &out.0 {
        t.check_closure()?;
    }
    Ok(out)
}

/// `G · err · G†`: the error after the gate equivalent to `err` before it.
pub fn conjugate_through_gate(
    err: &GeneralizedError,
    gate: &Unitary,
) -> Result<GeneralizedError, PauliError> {
    let mut terms = Vec::with_capacity(err.terms.len() + 2);
    let mut phase = err.phase;
    for t in &err.terms {
        let (ts, ph) = conjugate_term(t, gate)?;
        terms.extend(ts);
        phase = phase * ph;
    }
    Ok(GeneralizedError { terms, phase }.simplified())
}

/// `phase · X^x · Z^z` on up to 128 qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliOperator {
    pub n: usize,
    pub x: u128,
    pub z: u128,
    pub phase: Phase,
}

impl PauliOperator {
    pub fn identity(n: usize) -> Self {
        PauliOperator { n, x: 0, z: 0, phase: Phase::ONE }
    }

    pub fn new(n: usize, x: u128, z: u128) -> Self {
        PauliOperator { n, x, z, phase: Phase::ONE }
    }

    pub fn single(n: usize, q: usize, letter: PauliLetter) -> Self {
        let b = 1u128 << q;
        match letter {
            PauliLetter::X => Self::new(n, b, 0),
            PauliLetter::Z => Self::new(n, 0, b),
            PauliLetter::Y => PauliOperator { n, x: b, z: b, phase: Phase::I },
        }
    }

    /// Parses a letter string such as `"XIZY"` (qubit 0 first), with an
    /// optional leading sign `+`, `-`, `i`, `-i`.
    pub fn from_letters(s: &str) -> Option<Self> {
        let (mut phase, body) = if let Some(r) = s.strip_prefix("-i") {
            (Phase::MINUS_I, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (Phase::MINUS_ONE, r)
        } else if let Some(r) = s.strip_prefix('i') {
            (Phase::I, r)
        } else {
            (Phase::ONE, s.strip_prefix('+').unwrap_or(s))
        };
        let mut p = PauliOperator::identity(body.chars().count());
        for (q, ch) in body.chars().enumerate() {
            match ch {
                'I' => {}
                'X' => p.x |= 1 << q,
                'Z' => p.z |= 1 << q,
                'Y' => {
                    p.x |= 1 << q;
                    p.z |= 1 << q;
                    phase = phase * Phase::I;
                }
                _ => return None,
            }
        }
        p.phase = phase;
        Some(p)
    }

    pub fn to_letters(&self) -> String {
        let mut s = String::new();
        let ys = (self.x & self.z).count_ones() as i64;
        // phase · X Z = phase · (-i)^ys · Y...
        let shown = self.phase * Phase::from_power(-ys);
        s.push_str(match shown.power() {
            0 => "+",
            1 => "i",
            2 => "-",
            _ => "-i",
        });
        for q in 0..self.n {
            s.push(match (self.x >> q & 1, self.z >> q & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (0, 1) => 'Z',
                _ => 'Y',
            });
        }
        s
    }

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn commutes(&self, other: &PauliOperator) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones() % 2 == 0
    }

    /// `self · other`.
    pub fn compose(&self, other: &PauliOperator) -> PauliOperator {
        let sign = if (self.z & other.x).count_ones() % 2 == 1 { Phase::MINUS_ONE } else { Phase::ONE };
        PauliOperator {
            n: self.n.max(other.n),
            x: self.x ^ other.x,
            z: self.z ^ other.z,
            phase: self.phase * other.phase * sign,
        }
    }

    /// Same operator with phase dropped.
    pub fn unsigned(&self) -> PauliOperator {
        PauliOperator { phase: Phase::ONE, ..*self }
    }
}

pub fn weight(p: &PauliOperator) -> u32 {
    p.weight()
}

pub fn commutes(a: &PauliOperator, b: &PauliOperator) -> bool {
    a.commutes(b)
}

// ---------------------------------------------------------------------------
// Text notation
// ---------------------------------------------------------------------------
//
//   error  := [sign] product
//   sign   := "-" | "i*" | "-i*"
//   product:= "I" | term (" * " term)*
//   term   := X[q] | Y[q] | Z[q] | CX[c -> t] | CCX[c, c -> t]
//           | CZ[a, b] | CCZ[a, b, c] | Xbar[REG] | Zbar[REG]
//
// Qubits are written `REG.index`. `Y`, `Xbar` and `Zbar` are expanded when
// parsed, so printing never produces them.

fn format_term(t: &ErrorTerm, layout: &Layout) -> String {
    let name = |q: &Qubit| layout.name_of(*q);
    let cs: Vec<String> = t.controls.iter().map(name).collect();
    match (t.letter, cs.len()) {
        (Letter::X, 0) => format!("X[{}]", name(&t.target)),
        (Letter::X, 1) => format!("CX[{} -> {}]", cs[0], name(&t.target)),
        (Letter::X, _) => format!("CCX[{} -> {}]", cs.join(", "), name(&t.target)),
        (Letter::Z, k) => {
            let all: Vec<String> = t.z_support().iter().map(name).collect();
            let head = match k {
                0 => "Z",
                1 => "CZ",
                _ => "CCZ",
            };
            format!("{head}[{}]", all.join(", "))
        }
    }
}

pub fn format_error(e: &GeneralizedError, layout: &Layout) -> String {
    let sign = match e.phase.power() {
        0 => "",
        1 => "i*",
        2 => "-",
        _ => "-i*",
    };
    let body = if e.terms.is_empty() {
        "I".to_string()
    } else {
        e.terms.iter().map(|t| format_term(t, layout)).collect::<Vec<_>>().join(" * ")
    };
    format!("{sign}{body}")
}

pub fn parse_error(
    text: &str,
    layout: &Layout,
    code: Option<&CssCode>,
) -> Result<GeneralizedError, PauliError> {
    let bad = |reason: &str| PauliError::Parse { text: text.to_string(), reason: reason.to_string() };
    let s = text.trim();
    let (mut phase, body) = if let Some(r) = s.strip_prefix("-i*") {
        (Phase::MINUS_I, r)
    } else if let Some(r) = s.strip_prefix("i*") {
        (Phase::I, r)
    } else if let Some(r) = s.strip_prefix('-') {
        (Phase::MINUS_ONE, r)
    } else {
        (Phase::ONE, s)
    };
    let body = body.trim();
    let mut terms = Vec::new();
    if body != "I" {
        for part in body.split('*') {
            let part = part.trim();
            let open = part.find('[').ok_or_else(|| bad("missing `[`"))?;
            let inner = part[open + 1..].strip_suffix(']').ok_or_else(|| bad("missing `]`"))?;
            let head = &part[..open];
            let (ctl, tgt) = match inner.split_once("->") {
                Some((c, t)) => (Some(c), t),
                None => (None, inner),
            };
            let list = |s: &str| -> Result<Vec<Qubit>, PauliError> {
                s.split(',').map(|q| layout.parse_qubit(q).map_err(PauliError::from)).collect()
            };
            let block = |reg: &str| -> Result<Vec<Qubit>, PauliError> {
                let code = code.ok_or_else(|| bad("logical operator needs a code"))?;
                let r = layout.register(reg.trim())?;
                if r.size != code.n {
                    return Err(bad("register is not a code block"));
                }
                Ok(r.qubits())
            };
            match (head, ctl) {
                ("X", None) | ("Y", None) | ("Z", None) => {
                    let q = list(tgt)?;
                    if q.len() != 1 {
                        return Err(bad("single-qubit term takes one qubit"));
                    }
                    let l = PauliLetter::parse(head.chars().next().unwrap()).unwrap();
                    let g = GeneralizedError::single(l, q[0]);
                    phase = phase * g.phase;
                    terms.extend(g.terms);
                }
                ("CX", Some(c)) | ("CCX", Some(c)) => {
                    let cs = list(c)?;
                    let t = list(tgt)?;
                    let want = if head == "CX" { 1 } else { 2 };
                    if cs.len() != want || t.len() != 1 || cs.contains(&t[0]) {
                        return Err(bad("wrong operands for controlled X"));
                    }
                    let mut d = cs.clone();
                    d.dedup();
                    if d.len() != cs.len() {
                        return Err(bad("repeated control"));
                    }
                    terms.push(ErrorTerm::x(t[0], &cs));
                }
                ("CZ", None) | ("CCZ", None) => {
                    let qs = list(tgt)?;
                    let want = if head == "CZ" { 2 } else { 3 };
                    let mut d = qs.clone();
                    d.sort();
                    d.dedup();
                    if qs.len() != want || d.len() != want {
                        return Err(bad("wrong operands for controlled Z"));
                    }
                    terms.push(ErrorTerm::z(&qs));
                }
                ("Xbar", None) => {
                    let qs = block(tgt)?;
                    let lx = code.unwrap().logical_x;
                    terms.extend(qs.iter().enumerate().filter(|(i, _)| lx >> i & 1 == 1).map(|(_, q)| ErrorTerm::x(*q, &[])));
                }
                ("Zbar", None) => {
                    let qs = block(tgt)?;
                    let lz = code.unwrap().logical_z;
                    terms.extend(qs.iter().enumerate().filter(|(i, _)| lz >> i & 1 == 1).map(|(_, q)| ErrorTerm::z(&[*q])));
                }
                _ => return Err(bad(&format!("unknown term `{part}`"))),
            }
        }
    }
    Ok(GeneralizedError { terms, phase })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Init, RegisterRole};

    fn q(i: u16) -> Qubit {
        Qubit(i)
    }

    // Small dense reference, independent of the sparse simulator.
    fn apply_term_dense(v: &[Complex64], t: &ErrorTerm) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        let on = |k: usize, qs: &[Qubit]| qs.iter().all(|q| k >> q.0 & 1 == 1);
        for (k, a) in v.iter().enumerate() {
            match t.letter {
                Letter::X => {
                    let k2 = if on(k, &t.controls) { k ^ (1 << t.target.0) } else { k };
                    out[k2] += a;
                }
                Letter::Z => {
                    let s = if on(k, &t.qubits()) { -1.0 } else { 1.0 };
                    out[k] += a * s;
                }
            }
        }
        out
    }

    fn apply_dense(v: &[Complex64], e: &GeneralizedError) -> Vec<Complex64> {
        let mut v = v.to_vec();
        for t in e.terms.iter().rev() {
            v = apply_term_dense(&v, t);
        }
        v.iter().map(|a| a * e.phase.to_complex()).collect()
    }

    fn apply_gate_dense(v: &[Complex64], g: &Unitary) -> Vec<Complex64> {
        match *g {
            Unitary::H(h) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
                for (k, a) in v.iter().enumerate() {
                    let b = 1 << h.0;
                    let sign = if k & b != 0 { -1.0 } else { 1.0 };
                    out[k & !b] += a * s;
                    out[k | b] += a * s * sign;
                }
                out
            }
            _ => apply_dense(v, &GeneralizedError::from_terms(vec![g.as_term().unwrap()])),
        }
    }

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..1 << n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn close(a: &[Complex64], b: &[Complex64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-12)
    }

    fn gates4() -> Vec<Unitary> {
        let mut g = Vec::new();
        for a in 0..4u16 {
            g.push(Unitary::H(q(a)));
            g.push(Unitary::X(q(a)));
            g.push(Unitary::Z(q(a)));
            for b in 0..4u16 {
                if a == b {
                    continue;
                }
                g.push(Unitary::CX(q(a), q(b)));
                g.push(Unitary::CZ(q(a), q(b)));
                for c in 0..4u16 {
                    if c != a && c != b && a < b {
                        g.push(Unitary::CCX(q(a), q(b), q(c)));
                        g.push(Unitary::CCZ(q(a), q(b), q(c)));
                    }
                }
            }
        }
        g
    }

    #[test]
    fn conjugation_matches_dense_application_for_single_letters() {
        let v = random_state(4, 7);
        for g in gates4() {
            for target in 0..4u16 {
                for l in PauliLetter::ALL {
                    let e = GeneralizedError::single(l, q(target));
                    let lhs = apply_gate_dense(&apply_dense(&v, &e), &g);
                    let ce = conjugate_through_gate(&e, &g).unwrap();
                    let rhs = apply_dense(&apply_gate_dense(&v, &g), &ce);
                    assert!(close(&lhs, &rhs), "{l:?} on {target} through {g:?} -> {ce:?}");
                }
            }
        }
    }

    #[test]
    fn conjugation_matches_dense_for_controlled_terms() {
        let v = random_state(4, 11);
        let terms = vec![
            ErrorTerm::x(q(2), &[q(1)]),
            ErrorTerm::x(q(3), &[q(0)]),
            ErrorTerm::z(&[q(0), q(1)]),
            ErrorTerm::z(&[q(1), q(2), q(3)]),
            ErrorTerm::x(q(0), &[q(1), q(3)]),
        ];
        for g in gates4() {
            for t in &terms {
                let e = GeneralizedError::from_terms(vec![t.clone()]);
                match conjugate_through_gate(&e, &g) {
                    Ok(ce) => {
                        let lhs = apply_gate_dense(&apply_dense(&v, &e), &g);
                        let rhs = apply_dense(&apply_gate_dense(&v, &g), &ce);
                        assert!(close(&lhs, &rhs), "{t:?} through {g:?}");
                    }
                    Err(PauliError::ClosureFailure(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn propagation_rules() {
        // X on a control of a Toffoli spreads a CNOT error to the other control/target.
        let e = GeneralizedError::single(PauliLetter::X, q(0));
        let ce = conjugate_through_gate(&e, &Unitary::CCX(q(0), q(1), q(2))).unwrap();
        assert_eq!(ce.terms, vec![ErrorTerm::x(q(0), &[]), ErrorTerm::x(q(2), &[q(1)])]);
        // Z on the target spreads a CZ between the controls.
        let e = GeneralizedError::single(PauliLetter::Z, q(2));
        let ce = conjugate_through_gate(&e, &Unitary::CCX(q(0), q(1), q(2))).unwrap();
        assert_eq!(ce.terms, vec![ErrorTerm::z(&[q(2)]), ErrorTerm::z(&[q(0), q(1)])]);
        // X on a CNOT control copies to the target.
        let e = GeneralizedError::single(PauliLetter::X, q(0));
        let ce = conjugate_through_gate(&e, &Unitary::CX(q(0), q(1))).unwrap();
        assert_eq!(ce.terms, vec![ErrorTerm::x(q(0), &[]), ErrorTerm::x(q(1), &[])]);
        assert!(conjugate_through_gate(&GeneralizedError::identity(), &Unitary::H(q(0)))
            .unwrap()
            .is_identity());
    }

    #[test]
    fn too_many_controls_is_a_closure_failure() {
        let e = GeneralizedError::from_terms(vec![ErrorTerm::x(q(3), &[q(1), q(2)])]);
        let r = conjugate_through_gate(&e, &Unitary::CCX(q(3), q(0), q(4)));
        assert!(matches!(r, Err(PauliError::ClosureFailure(_))));
        let e = GeneralizedError::from_terms(vec![ErrorTerm::x(q(1), &[q(0)])]);
        assert!(conjugate_through_gate(&e, &Unitary::H(q(0))).is_err());
    }

    #[test]
    fn compose_examples() {
        let x1 = GeneralizedError::single(PauliLetter::X, q(1));
        assert!(compose(&x1, &x1).is_identity());
        // X·Z = -iY, Y = i·X·Z.
        let z1 = GeneralizedError::single(PauliLetter::Z, q(1));
        let xz = compose(&x1, &z1);
        let y = GeneralizedError::single(PauliLetter::Y, q(1));
        let v = random_state(2, 3);
        let a = apply_dense(&v, &xz);
        let b = apply_dense(&v, &y);
        let minus_i = Complex64::new(0.0, -1.0);
        assert!(close(&a, &b.iter().map(|c| c * minus_i).collect::<Vec<_>>()));
        // CX(1->2) after X_0... indices shifted to 0-based: CX(1->2)·X_0 on |100>.
        let e = compose(&GeneralizedError::from_terms(vec![ErrorTerm::x(q(2), &[q(1)])]), &GeneralizedError::single(PauliLetter::X, q(0)));
        let mut v = vec![Complex64::new(0.0, 0.0); 8];
        v[1] = Complex64::new(1.0, 0.0);
        let out = apply_dense(&v, &e);
        assert!((out[0] - 1.0).norm() < 1e-15);
    }

    #[test]
    fn pauli_operator_basics() {
        let id = PauliOperator::identity(7);
        assert_eq!(id.weight(), 0);
        let s = PauliOperator::new(7, 0b1111000, 0);
        assert_eq!(weight(&s), 4);
        let x1 = PauliOperator::single(3, 1, PauliLetter::X);
        let z1 = PauliOperator::single(3, 1, PauliLetter::Z);
        let z2 = PauliOperator::single(3, 2, PauliLetter::Z);
        assert!(!commutes(&x1, &z1));
        assert!(commutes(&x1, &z2));
        let y = PauliOperator::single(1, 0, PauliLetter::Y);
        let yy = y.compose(&y);
        assert_eq!((yy.x, yy.z, yy.phase), (0, 0, Phase::ONE));
        assert_eq!(x1.compose(&z1).to_letters(), "-iIYI");
        assert_eq!(PauliOperator::from_letters("XIZY").unwrap().to_letters(), "+XIZY");
        assert_eq!(PauliOperator::from_letters("-iYZ").unwrap().to_letters(), "-iYZ");
    }

    #[test]
    fn notation_round_trip() {
        let mut l = Layout::new();
        for r in ["T1", "T2", "T3"] {
            l.add(r, 7, RegisterRole::Block, Init::Plus).unwrap();
        }
        l.add("A1", 7, RegisterRole::Aux, Init::Zero).unwrap();
        for s in [
            "X[T1.3]",
            "CX[T2.3 -> A1.3]",
            "CZ[T1.3, T2.3]",
            "CCX[T1.0, T2.0 -> A1.0]",
            "CCZ[T1.1, T2.1, T3.1]",
            "-i*X[T1.0] * Z[T1.0]",
            "I",
            "-I",
        ] {
            let e = parse_error(s, &l, None).unwrap();
            assert_eq!(format_error(&e, &l), s);
        }
        let y = parse_error("Y[T1.0]", &l, None).unwrap();
        assert_eq!(format_error(&y, &l), "i*X[T1.0] * Z[T1.0]");
        let code = crate::code::CssCode::steane();
        let xb = parse_error("Xbar[T3]", &l, Some(&code)).unwrap();
        assert_eq!(format_error(&xb, &l), "X[T3.0] * X[T3.1] * X[T3.2]");
        assert!(parse_error("CX[T1.0 -> T1.0]", &l, None).is_err());
        assert!(parse_error("W[T1.0]", &l, None).is_err());
        assert!(parse_error("Xbar[T3]", &l, None).is_err());
    }
}
