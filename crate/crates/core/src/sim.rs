//! Exact sparse simulation.
//!
//! A state is a product of factors, each a sparse map from basis keys (bits
//! at global qubit positions) to amplitudes. Qubits outside every factor
//! are |0>. X/CX/CCX permute keys, Z/CZ/CCZ change phases, H is the only
//! gate that can grow the support. A gate touching several factors merges
//! them; measuring a qubit resets it to |0> and removes it from its factor.
//!
//! With the Hadamard frame enabled, H gates are recorded in a per-qubit
//! frame instead of being applied: the represented state is
//! `H_frame |stored>`. Targets of CX/CCX in the frame turn into CZ/CCZ and
//! X-basis measurement of a framed qubit needs no H at all, which keeps
//! parity registers as two-term cat states instead of 64-term parity states.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{BuildHasherDefault, Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use rustc_hash::{FxHashMap, FxHasher};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, GateKind, Position};
use crate::code::CssCode;
use crate::expr::Expr;
use crate::layout::{Init, Layout, Qubit, RegisterRole};
use crate::pauli::{ErrorTerm, GeneralizedError, Letter, Unitary};

pub type Amp = Complex64;

pub const PRUNE: f64 = 1e-14;
pub const TOLERANCE: f64 = 1e-10;
pub const DEFAULT_SUPPORT_CAP: usize = 1 << 24;
pub const DEFAULT_BRANCH_CAP: usize = 1 << 16;
/// Branches below this probability are dropped.
const MIN_PROB: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state support {size} exceeds the cap of {cap} entries")]
    SupportOverflow { size: usize, cap: usize },
    #[error("{count} measurement branches exceed the cap of {cap}")]
    BranchOverflow { count: usize, cap: usize },
    #[error("forced outcome {outcome} on {qubit} has probability below 1e-12")]
    ImpossibleOutcome { qubit: String, outcome: bool },
    #[error("every branch was discarded by forced outcomes or post-selection")]
    NoBranches,
    #[error("bad input state: {0}")]
    BadInput(String),
    #[error("not a unitary gate: {0}")]
    NotUnitary(&'static str),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    X,
    Z,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub mask: u128,
    pub entries: Vec<(u128, Amp)>,
}

impl Factor {
    fn unit(mask: u128) -> Self {
        Factor { mask, entries: vec![(0, Amp::new(1.0, 0.0))] }
    }

    fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    fn sort(&mut self) {
        self.entries.sort_unstable_by_key(|e| e.0);
    }
}

/// Hasher for basis keys: sparse bit patterns need a full avalanche.
#[derive(Default, Clone, Copy)]
pub struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix64(self.0 ^ b as u64);
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = mix64(self.0 ^ mix64(v as u64) ^ (v >> 64) as u64);
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = mix64(self.0 ^ v);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

type KeyMap<V> = HashMap<u128, V, BuildHasherDefault<KeyHasher>>;

fn bits_of(mask: u128) -> impl Iterator<Item = usize> {
    (0..128).filter(move |i| mask >> i & 1 == 1)
}

#[derive(Clone, Debug)]
pub struct SparseState {
    n: usize,
    factors: Vec<Factor>,
    scale: Amp,
    frame: u128,
    lazy_h: bool,
    cap: usize,
    /// Factors sorted by mask, entries by key.
    canonical: bool,
}

/// Outcomes of a joint measurement that leave the same state; `prob` is
/// the probability of each single outcome pattern.
#[derive(Clone, Debug)]
pub struct OutcomeClass {
    pub patterns: Vec<u128>,
    pub prob: f64,
    pub state: SparseState,
}

impl SparseState {
    /// |0...0> on `n` qubits.
    pub fn new(n: usize) -> Self {
        SparseState {
            n,
            factors: vec![],
            scale: Amp::new(1.0, 0.0),
            frame: 0,
            lazy_h: false,
            cap: DEFAULT_SUPPORT_CAP,
            canonical: false,
        }
    }

    pub fn basis(n: usize, key: u128) -> Self {
        Self::from_entries(n, vec![(key, Amp::new(1.0, 0.0))])
    }

    /// One factor holding the given (not necessarily normalized) entries.
    pub fn from_entries(n: usize, entries: Vec<(u128, Amp)>) -> Self {
        let mut s = Self::new(n);
        let entries: Vec<_> = entries.into_iter().filter(|(_, a)| a.norm_sqr() >= PRUNE * PRUNE).collect();
        let mask = entries.iter().fold(0, |m, (k, _)| m | k);
        if !(entries.len() == 1 && mask == 0) {
            s.factors.push(Factor { mask, entries });
        } else {
            s.scale = entries[0].1;
        }
        s
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Enables lazy Hadamards (see module docs).
    pub fn with_hadamard_frame(mut self, on: bool) -> Self {
        if !on {
            self.flush(self.frame);
        }
        self.lazy_h = on;
        self
    }

    /// Declares the stored amplitudes of the `mask` qubits to be in the
    /// Hadamard-rotated basis, as the lazy frame keeps them.
    pub fn with_frame(mut self, mask: u128) -> Self {
        self.lazy_h = true;
        self.frame = mask;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn frame(&self) -> u128 {
        self.frame
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Tensor product with a state on disjoint qubits.
    pub fn tensor(mut self, other: SparseState) -> Result<Self, SimError> {
        let mine = self.factors.iter().fold(0, |m, f| m | f.mask);
        for f in &other.factors {
            if f.mask & mine != 0 {
                return Err(SimError::BadInput("tensor factors overlap".into()));
            }
        }
        let mut other = other;
        other.flush(other.frame);
        self.factors.extend(other.factors);
        self.scale *= other.scale;
        self.canonical = false;
        Ok(self)
    }

    /// Number of stored entries of the expanded state.
    pub fn support_size(&self) -> usize {
        self.factors.iter().map(|f| f.entries.len()).product()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_sqr()).product::<f64>() * self.scale.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale /= n;
        }
    }

    fn factor_of(&self, bit: u128) -> Option<usize> {
        self.factors.iter().position(|f| f.mask & bit != 0)
    }

    /// Merges every factor meeting `mask` into one that covers `mask`.
    fn gather(&mut self, mask: u128) -> Result<usize, SimError> {
        self.canonical = false;
        let mut idx: Vec<usize> = (0..self.factors.len()).filter(|&i| self.factors[i].mask & mask != 0).collect();
        let size: usize = idx.iter().map(|&i| self.factors[i].entries.len()).product();
        if size > self.cap {
            return Err(SimError::SupportOverflow { size, cap: self.cap });
        }
        if idx.len() == 1 {
            self.factors[idx[0]].mask |= mask;
            return Ok(idx[0]);
        }
        let mut merged = Factor::unit(mask);
        idx.sort_unstable_by(|a, b| b.cmp(a));
        for i in idx {
            let f = self.factors.swap_remove(i);
            let mut entries = Vec::with_capacity(merged.entries.len() * f.entries.len());
            for &(k1, a1) in &merged.entries {
                for &(k2, a2) in &f.entries {
                    entries.push((k1 | k2, a1 * a2));
                }
            }
            merged = Factor { mask: merged.mask | f.mask, entries };
        }
        self.factors.push(merged);
        Ok(self.factors.len() - 1)
    }

    fn is_zero_qubit(&self, bit: u128) -> bool {
        self.factor_of(bit).is_none()
    }

    /// Flips `target` where all `controls` are 1.
    fn raw_perm(&mut self, controls: u128, target: u128) -> Result<(), SimError> {
        if bits_of(controls).any(|q| self.is_zero_qubit(1 << q)) {
            return Ok(());
        }
        let f = self.gather(controls | target)?;
        for e in &mut self.factors[f].entries {
            if e.0 & controls == controls {
                e.0 ^= target;
            }
        }
        Ok(())
    }

    /// Negates amplitudes where all bits of `mask` are 1.
    fn raw_diag(&mut self, mask: u128) -> Result<(), SimError> {
        if bits_of(mask).any(|q| self.is_zero_qubit(1 << q)) {
            return Ok(());
        }
        let f = self.gather(mask)?;
        for e in &mut self.factors[f].entries {
            if e.0 & mask == mask {
                e.1 = -e.1;
            }
        }
        Ok(())
    }

    fn raw_h(&mut self, bit: u128) -> Result<(), SimError> {
        let f = self.gather(bit)?;
        let old = std::mem::take(&mut self.factors[f].entries);
        if old.len() * 2 > self.cap {
            return Err(SimError::SupportOverflow { size: old.len() * 2, cap: self.cap });
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut map: KeyMap<Amp> = KeyMap::default();
        map.reserve(old.len() * 2);
        for (k, a) in old {
            let k0 = k & !bit;
            let a = a * s;
            *map.entry(k0).or_default() += a;
            *map.entry(k0 | bit).or_default() += if k & bit != 0 { -a } else { a };
        }
        self.factors[f].entries = map.into_iter().filter(|(_, a)| a.norm_sqr() >= PRUNE * PRUNE).collect();
        Ok(())
    }

    /// Applies H to the framed qubits in `mask` and removes them from the frame.
    pub fn flush(&mut self, mask: u128) {
        let m = mask & self.frame;
        for q in bits_of(m) {
            self.raw_h(1 << q).expect("support cap while flushing the Hadamard frame");
        }
        self.frame &= !m;
    }

    fn try_flush(&mut self, mask: u128) -> Result<(), SimError> {
        let m = mask & self.frame;
        for q in bits_of(m) {
            self.raw_h(1 << q)?;
            self.frame &= !(1 << q);
        }
        Ok(())
    }

    pub fn apply_unitary(&mut self, u: &Unitary) -> Result<(), SimError> {
        let b = |q: &Qubit| q.bit();
        let inf = |s: &Self, q: &Qubit| s.frame & q.bit() != 0;
        match u {
            Unitary::H(q) => {
                if self.lazy_h {
                    self.frame ^= b(q);
                    Ok(())
                } else {
                    self.raw_h(b(q))
                }
            }
            Unitary::X(q) => {
                if inf(self, q) {
                    self.raw_diag(b(q))
                } else {
                    self.raw_perm(0, b(q))
                }
            }
            Unitary::Z(q) => {
                if inf(self, q) {
                    self.raw_perm(0, b(q))
                } else {
                    self.raw_diag(b(q))
                }
            }
            Unitary::CX(c, t) => {
                self.try_flush(b(c))?;
                if inf(self, t) {
                    self.raw_diag(b(c) | b(t))
                } else {
                    self.raw_perm(b(c), b(t))
                }
            }
            Unitary::CCX(c1, c2, t) => {
                self.try_flush(b(c1) | b(c2))?;
                if inf(self, t) {
                    self.raw_diag(b(c1) | b(c2) | b(t))
                } else {
                    self.raw_perm(b(c1) | b(c2), b(t))
                }
            }
            Unitary::CZ(x, y) => self.framed_diag(&[*x, *y]),
            Unitary::CCZ(x, y, z) => self.framed_diag(&[*x, *y, *z]),
        }
    }

    /// Multi-qubit Z-type gate: with exactly one operand in the frame it
    /// becomes a controlled X on that operand.
    fn framed_diag(&mut self, qs: &[Qubit]) -> Result<(), SimError> {
        let all = qs.iter().fold(0, |m, q| m | q.bit());
        let framed: Vec<&Qubit> = qs.iter().filter(|q| self.frame & q.bit() != 0).collect();
        if framed.is_empty() {
            return self.raw_diag(all);
        }
        let t = framed[framed.len() - 1].bit();
        self.try_flush(all & !t)?;
        self.raw_perm(all & !t, t)
    }

    pub fn apply_term(&mut self, t: &ErrorTerm) -> Result<(), SimError> {
        let controls = t.controls.iter().fold(0, |m, q| m | q.bit());
        if t.controls.len() <= 2 {
            return self.apply_unitary(&t.to_unitary());
        }
        let all = controls | t.target.bit();
        self.try_flush(all)?;
        match t.letter {
            Letter::X => self.raw_perm(controls, t.target.bit()),
            Letter::Z => self.raw_diag(all),
        }
    }

    /// Applies the terms right to left, then the phase.
    pub fn apply_error(&mut self, e: &GeneralizedError) -> Result<(), SimError> {
        for t in e.terms.iter().rev() {
            self.apply_term(t)?;
        }
        self.scale *= e.phase.to_complex();
        Ok(())
    }

    /// Unitary gates only; measurement and classical gates go through
    /// [`SparseState::measure`] or the [`Simulator`].
    pub fn apply_gate(&mut self, g: &Gate) -> Result<(), SimError> {
        match g.unitary() {
            Some(u) => self.apply_unitary(&u),
            None if g.kind == GateKind::Barrier => Ok(()),
            None => Err(SimError::NotUnitary(g.kind.as_str())),
        }
    }

    /// Joint measurement with reset to |0>: qubits in `z_mask` in the Z
    /// basis and qubits in `x_mask` in the X basis of the represented state.
    /// Outcomes that leave the same state (up to a global sign) are grouped
    /// into one class.
    pub fn measure_joint(mut self, z_mask: u128, x_mask: u128) -> Result<Vec<OutcomeClass>, SimError> {
        // In the stored representation a framed qubit swaps its basis.
        let stored_z = (z_mask & !self.frame) | (x_mask & self.frame);
        let stored_x = (z_mask & self.frame) | (x_mask & !self.frame);
        let all = z_mask | x_mask;
        self.frame &= !all;
        self.canonical = false;
        let covered = self.factors.iter().fold(0, |m, f| m | f.mask);
        for q in bits_of(stored_x & !covered) {
            self.factors.push(Factor::unit(1 << q));
        }
        let mut involved = Vec::new();
        let mut i = 0;
        while i < self.factors.len() {
            if self.factors[i].mask & all != 0 {
                involved.push(self.factors.swap_remove(i));
            } else {
                i += 1;
            }
        }
        // Measured factors come back normalized; keep their weight in the scale.
        for f in &involved {
            self.scale *= f.norm_sqr().sqrt();
        }
        let mut results = vec![OutcomeClass { patterns: vec![0], prob: 1.0, state: self }];
        for f in involved {
            let options = measure_factor(f, stored_z, stored_x)?;
            if results.len() == 1 {
                let mut r = results.pop().expect("one result");
                let n = options.len();
                for (i, (pats, p, fac)) in options.into_iter().enumerate() {
                    let mut s = if i + 1 == n { std::mem::replace(&mut r.state, SparseState::new(0)) } else { r.state.clone() };
                    if fac.mask == 0 {
                        s.scale *= fac.entries[0].1;
                    } else {
                        s.factors.push(fac);
                    }
                    let patterns = r.patterns.iter().flat_map(|a| pats.iter().map(move |b| a | b)).collect();
                    results.push(OutcomeClass { patterns, prob: r.prob * p, state: s });
                }
                continue;
            }
            let mut next = Vec::with_capacity(results.len() * options.len());
            for r in &results {
                for (pats, p, fac) in &options {
                    let mut s = r.state.clone();
                    if fac.mask == 0 {
                        s.scale *= fac.entries[0].1;
                    } else {
                        s.factors.push(fac.clone());
                    }
                    let patterns = r.patterns.iter().flat_map(|a| pats.iter().map(move |b| a | b)).collect();
                    next.push(OutcomeClass { patterns, prob: r.prob * p, state: s });
                }
            }
            results = next;
        }
        Ok(results)
    }

    /// Single-qubit measurement that leaves the qubit in the observed
    /// eigenstate. Without `forced` the likelier outcome is returned.
    pub fn measure(&self, q: Qubit, basis: Basis, forced: Option<bool>) -> Result<(SparseState, bool, f64), SimError> {
        let all = self.measure_all(q, basis)?;
        let pick = match forced {
            Some(v) => all.into_iter().find(|o| o.0 == v && o.1 >= 1e-12),
            None => all.into_iter().max_by(|a, b| a.1.total_cmp(&b.1)),
        };
        match pick {
            Some((b, p, s)) => Ok((s, b, p)),
            None => Err(SimError::ImpossibleOutcome { qubit: format!("{}", q.0), outcome: forced.unwrap_or(false) }),
        }
    }

    /// Every outcome of a single-qubit measurement with its probability.
    pub fn measure_all(&self, q: Qubit, basis: Basis) -> Result<Vec<(bool, f64, SparseState)>, SimError> {
        let (z, x) = match basis {
            Basis::Z => (q.bit(), 0),
            Basis::X => (0, q.bit()),
        };
        let mut out = Vec::new();
        for class in self.clone().measure_joint(z, x)? {
            for pat in class.patterns {
                let bit = pat != 0;
                let mut s = class.state.clone();
                match basis {
                    Basis::Z if bit => s.raw_perm(0, q.bit())?,
                    Basis::Z => {}
                    Basis::X => {
                        s.raw_h(q.bit())?;
                        if bit {
                            s.raw_diag(q.bit())?;
                        }
                    }
                }
                out.push((bit, class.prob, s));
            }
        }
        out.sort_by_key(|o| o.0);
        Ok(out)
    }

    /// The expanded state, sorted by key, frame resolved.
    pub fn entries(&self) -> Result<Vec<(u128, Amp)>, SimError> {
        let mut s = self.clone();
        s.try_flush(s.frame)?;
        let size = s.support_size();
        if size > s.cap {
            return Err(SimError::SupportOverflow { size, cap: s.cap });
        }
        let mut out = vec![(0u128, s.scale)];
        for f in &s.factors {
            let mut next = Vec::with_capacity(out.len() * f.entries.len());
            for &(k1, a1) in &out {
                for &(k2, a2) in &f.entries {
                    next.push((k1 | k2, a1 * a2));
                }
            }
            out = next;
        }
        out.sort_unstable_by_key(|e| e.0);
        Ok(out)
    }

    /// Amplitude of one basis state.
    pub fn amplitude(&self, key: u128) -> Amp {
        let mut s = self.clone();
        s.flush(s.frame);
        let covered = s.factors.iter().fold(0, |m, f| m | f.mask);
        if key & !covered != 0 {
            return Amp::new(0.0, 0.0);
        }
        let mut a = s.scale;
        for f in &s.factors {
            let k = key & f.mask;
            a *= f.entries.iter().find(|e| e.0 == k).map(|e| e.1).unwrap_or_default();
        }
        a
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &SparseState) -> Result<Amp, SimError> {
        let (mut a, mut b) = (self.clone(), other.clone());
        let diff = a.frame ^ b.frame;
        a.try_flush(diff)?;
        b.try_flush(diff)?;
        let scale = a.scale.conj() * b.scale;
        let masks = |s: &SparseState| s.factors.iter().map(|f| f.mask).collect::<BTreeSet<_>>();
        if masks(&a) == masks(&b) {
            let mut total = scale;
            for fa in &a.factors {
                let fb = b.factors.iter().find(|f| f.mask == fa.mask).expect("same masks");
                total *= factor_overlap(&fa.entries, &fb.entries);
            }
            return Ok(total);
        }
        a.frame = 0;
        b.frame = 0;
        a.scale = Amp::new(1.0, 0.0);
        b.scale = Amp::new(1.0, 0.0);
        Ok(scale * factor_overlap(&a.entries()?, &b.entries()?))
    }

    /// `|<a|b>|² / (|a|²|b|²)`.
    pub fn fidelity(&self, other: &SparseState) -> Result<f64, SimError> {
        let o = self.overlap(other)?;
        Ok(o.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// One line per basis state: `bitstring re im`, qubit 0 leftmost,
    /// sorted by bitstring.
    pub fn dump(&self) -> Result<String, SimError> {
        let mut lines: Vec<String> = self
            .entries()?
            .into_iter()
            .map(|(k, a)| {
                let bits: String = (0..self.n).map(|q| if k >> q & 1 == 1 { '1' } else { '0' }).collect();
                format!("{bits} {} {}", fmt_num(a.re), fmt_num(a.im))
            })
            .collect();
        lines.sort();
        Ok(lines.into_iter().map(|l| l + "\n").collect())
    }

    fn canonicalize(&mut self) {
        if self.canonical {
            return;
        }
        for f in &mut self.factors {
            f.sort();
        }
        self.factors.sort_unstable_by_key(|f| f.mask);
        self.canonical = true;
    }

    fn fingerprint(&self) -> u64 {
        let mut h = FxHasher::default();
        self.frame.hash(&mut h);
        for f in &self.factors {
            f.mask.hash(&mut h);
            for e in &f.entries {
                e.0.hash(&mut h);
            }
        }
        h.finish()
    }

    /// Equality up to global phase for canonicalized states with the same
    /// factor structure; `false` is always a safe answer.
    fn same_ray(&self, other: &SparseState) -> bool {
        if self.frame != other.frame || self.factors.len() != other.factors.len() {
            return false;
        }
        for (fa, fb) in self.factors.iter().zip(&other.factors) {
            if fa.mask != fb.mask || fa.entries.len() != fb.entries.len() {
                return false;
            }
            let r = match fa.entries.first() {
                Some(e) => fb.entries[0].1 / e.1,
                None => continue,
            };
            if (r.norm() - 1.0).abs() > TOLERANCE {
                return false;
            }
            for (x, y) in fa.entries.iter().zip(&fb.entries) {
                if x.0 != y.0 || (y.1 - x.1 * r).norm() > TOLERANCE {
                    return false;
                }
            }
        }
        true
    }

    /// The state restricted to the qubits in `mask`, shifted so that the
    /// lowest qubit of `mask` becomes bit 0. Requires every factor to lie
    /// inside or outside `mask`.
    pub fn restrict(&self, mask: u128) -> Result<Vec<(u128, Amp)>, SimError> {
        let mut s = self.clone();
        s.try_flush(s.frame)?;
        for f in &s.factors {
            if f.mask & mask != 0 && f.mask & !mask != 0 {
                return Err(SimError::BadInput("restricted qubits are entangled with the rest".into()));
            }
        }
        s.factors.retain(|f| f.mask & !mask == 0);
        s.n = self.n;
        let shift = mask.trailing_zeros();
        Ok(s.entries()?.into_iter().map(|(k, a)| (k >> shift, a)).collect())
    }
}

/// Measures the stored-basis Z qubits `sz` and X qubits `sx` of one
/// factor. Returns `(outcome patterns, probability of each, factor)`.
fn measure_factor(f: Factor, sz: u128, sx: u128) -> Result<Vec<(Vec<u128>, f64, Factor)>, SimError> {
    let zm = f.mask & sz;
    let xm = f.mask & sx;
    let rest_mask = f.mask & !(zm | xm);
    let total = f.norm_sqr();
    if zm == 0 {
        return x_classes(f.entries, xm, rest_mask, total);
    }
    let mut buckets: KeyMap<Vec<(u128, Amp)>> = KeyMap::default();
    for (k, a) in f.entries {
        buckets.entry(k & zm).or_default().push((k & !zm, a));
    }
    let mut keys: Vec<u128> = buckets.keys().copied().collect();
    keys.sort_unstable();
    let mut out = Vec::new();
    for zp in keys {
        let entries = buckets.remove(&zp).expect("bucket key");
        if xm == 0 {
            let w: f64 = entries.iter().map(|(_, a)| a.norm_sqr()).sum();
            let p = w / total;
            if p < MIN_PROB {
                continue;
            }
            let s = 1.0 / w.sqrt();
            let entries = entries.into_iter().map(|(k, a)| (k, a * s)).collect();
            out.push((vec![zp], p, Factor { mask: rest_mask, entries }));
        } else {
            for (pats, p, fac) in x_classes(entries, xm, rest_mask, total)? {
                out.push((pats.into_iter().map(|x| x | zp).collect(), p, fac));
            }
        }
    }
    Ok(out)
}

/// X-basis measurement of the `xm` bits. With `D` the span of differences
/// of the bit patterns present, outcomes `o` and `o'` leave the same state
/// up to sign exactly when `o ^ o'` is orthogonal to `D`, so there are
/// `2^dim D` classes.
fn x_classes(
    entries: Vec<(u128, Amp)>,
    xm: u128,
    rest_mask: u128,
    total: f64,
) -> Result<Vec<(Vec<u128>, f64, Factor)>, SimError> {
    let pos: Vec<usize> = bits_of(xm).collect();
    let k = pos.len();
    if k > 63 {
        return Err(SimError::BadInput("more than 63 X-measured qubits in one factor".into()));
    }
    let compress = |key: u128| pos.iter().enumerate().fold(0u64, |m, (i, &q)| m | ((key >> q & 1) as u64) << i);
    let expand = |v: u64| pos.iter().enumerate().fold(0u128, |m, (i, &q)| m | ((v >> i & 1) as u128) << q);
    let mut slot_of: KeyMap<u32> = KeyMap::default();
    slot_of.reserve(entries.len());
    let mut rests: Vec<u128> = Vec::new();
    let items: Vec<(u32, u64, Amp)> = entries
        .into_iter()
        .map(|(key, a)| {
            let r = key & !xm;
            let slot = *slot_of.entry(r).or_insert_with(|| {
                rests.push(r);
                rests.len() as u32 - 1
            });
            (slot, compress(key), a)
        })
        .collect();
    let b0 = items[0].1;
    let mut basis: Vec<u64> = Vec::new();
    for it in &items {
        let mut v = it.1 ^ b0;
        for &g in &basis {
            if v >> (63 - g.leading_zeros()) & 1 == 1 {
                v ^= g;
            }
        }
        if v != 0 {
            let p = 63 - v.leading_zeros();
            for g in basis.iter_mut() {
                if *g >> p & 1 == 1 {
                    *g ^= v;
                }
            }
            basis.push(v);
        }
    }
    let d = basis.len();
    if d > 20 {
        return Err(SimError::SupportOverflow { size: 1 << d, cap: 1 << 20 });
    }
    let pivots: Vec<u32> = basis.iter().map(|g| 63 - g.leading_zeros()).collect();
    let null: Vec<u64> = (0..k as u32)
        .filter(|b| !pivots.contains(b))
        .map(|f| {
            basis.iter().zip(&pivots).fold(1u64 << f, |m, (g, &p)| if g >> f & 1 == 1 { m | 1 << p } else { m })
        })
        .collect();
    let norm = (2f64).powi(-(k as i32)).sqrt();
    let mut out = Vec::with_capacity(1 << d);
    for c in 0..1usize << d {
        let o = pivots.iter().enumerate().fold(0u64, |m, (j, &p)| if c >> j & 1 == 1 { m | 1 << p } else { m });
        let mut acc = vec![Amp::new(0.0, 0.0); rests.len()];
        for &(slot, b, a) in &items {
            acc[slot as usize] += if (o & b).count_ones() & 1 == 1 { -a } else { a };
        }
        let mut ents: Vec<(u128, Amp)> = rests
            .iter()
            .zip(acc)
            .map(|(&r, a)| (r, a * norm))
            .filter(|(_, a)| a.norm_sqr() >= PRUNE * PRUNE)
            .collect();
        let w: f64 = ents.iter().map(|(_, a)| a.norm_sqr()).sum();
        let p = w / total;
        if p < MIN_PROB {
            continue;
        }
        let s = 1.0 / w.sqrt();
        for e in &mut ents {
            e.1 *= s;
        }
        let mut pats = Vec::with_capacity(1 << null.len());
        for m in 0..1usize << null.len() {
            let v = null.iter().enumerate().fold(o, |acc, (j, &n)| if m >> j & 1 == 1 { acc ^ n } else { acc });
            pats.push(expand(v));
        }
        pats.sort_unstable();
        out.push((pats, p, Factor { mask: rest_mask, entries: ents }));
    }
    Ok(out)
}

fn factor_overlap(a: &[(u128, Amp)], b: &[(u128, Amp)]) -> Amp {
    let map: KeyMap<Amp> = a.iter().copied().collect();
    b.iter().filter_map(|(k, y)| map.get(k).map(|x| x.conj() * y)).sum()
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.12}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".to_string()
    } else {
        s
    }
}

/// `Σ_j amps[j] |j̄>` on the listed blocks; bit `i` of `j` is the logical
/// value of `blocks[i]`.
pub fn encode(code: &CssCode, layout: &Layout, blocks: &[&str], amps: &[Amp]) -> Result<SparseState, SimError> {
    if code.k != 1 || amps.len() != 1 << blocks.len() {
        return Err(SimError::BadInput("one logical qubit per block, 2^blocks amplitudes".into()));
    }
    let regs = blocks
        .iter()
        .map(|b| layout.register(b).map_err(|e| SimError::BadInput(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let words = [code.codewords(false), code.codewords(true)];
    let norm = ((words[0].len() as f64).powi(blocks.len() as i32)).sqrt();
    let mut entries: Vec<(u128, Amp)> = vec![];
    for (j, &a) in amps.iter().enumerate() {
        if a.norm_sqr() < PRUNE * PRUNE {
            continue;
        }
        let mut keys = vec![0u128];
        for (i, r) in regs.iter().enumerate() {
            let ws = &words[j >> i & 1];
            keys = keys.iter().flat_map(|k| ws.iter().map(move |w| k | (*w as u128) << r.offset)).collect();
        }
        entries.extend(keys.into_iter().map(|k| (k, a / norm)));
    }
    Ok(SparseState::from_entries(layout.num_qubits(), entries))
}

/// Logical basis state `|v_1 ... v_m>` on the listed blocks.
pub fn encode_basis(code: &CssCode, layout: &Layout, blocks: &[(&str, bool)]) -> Result<SparseState, SimError> {
    let names: Vec<&str> = blocks.iter().map(|b| b.0).collect();
    let idx = blocks.iter().enumerate().fold(0, |m, (i, b)| m | (b.1 as usize) << i);
    let mut amps = vec![Amp::new(0.0, 0.0); 1 << blocks.len()];
    amps[idx] = Amp::new(1.0, 0.0);
    encode(code, layout, &names, &amps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub support_cap: usize,
    pub branch_cap: usize,
    /// Measurement outcomes fixed by bit name; other outcomes are dropped.
    pub forced: BTreeMap<String, bool>,
    /// Named values inverted after evaluation.
    pub flip_lets: BTreeSet<String>,
    pub hadamard_frame: bool,
    pub merge_branches: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            support_cap: DEFAULT_SUPPORT_CAP,
            branch_cap: DEFAULT_BRANCH_CAP,
            forced: BTreeMap::new(),
            flip_lets: BTreeSet::new(),
            hadamard_frame: false,
            merge_branches: true,
        }
    }
}

/// An error applied at `(timestep, position)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectedError {
    pub timestep: usize,
    pub position: Position,
    pub error: GeneralizedError,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub prob: f64,
    /// Indexed by classical variable id; `None` = unset or no longer needed.
    pub record: Vec<Option<bool>>,
    pub state: Arc<SparseState>,
}

#[derive(Clone, Debug)]
pub struct BranchSet {
    /// Next timestep to execute.
    pub next_ts: usize,
    pub branches: Vec<Branch>,
    /// Probability discarded by post-selection.
    pub rejected: f64,
}

/// A finished branch: reported names and the state of the output qubits.
#[derive(Clone, Debug)]
pub struct FinalBranch {
    pub prob: f64,
    pub record: BTreeMap<String, bool>,
    pub state: SparseState,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub branches: Vec<FinalBranch>,
    pub rejected: f64,
}

impl SimResult {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.prob).sum::<f64>() + self.rejected
    }
}

/// Classical bookkeeping compiled from a circuit.
#[derive(Clone, Debug)]
struct Plan {
    names: Vec<String>,
    conds: Vec<Option<Expr<usize>>>,
    outs: Vec<Option<usize>>,
    /// `(var, expr, ts)`: evaluated after timestep `ts - 1` (at start if 0).
    lets: Vec<(usize, Expr<usize>, usize)>,
    /// Indices into `lets` by evaluation time.
    lets_at: Vec<Vec<usize>>,
    /// Vars cleared after each timestep.
    drop_after: Vec<Vec<usize>>,
    report: Vec<usize>,
    layers: Vec<Vec<usize>>,
    flip: Vec<bool>,
    forced: Vec<Option<bool>>,
}

impl Plan {
    fn new(c: &Circuit, config: &SimConfig) -> Result<Self, SimError> {
        c.validate()?;
        let mut names = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut ready: Vec<usize> = Vec::new();
        for g in &c.gates {
            if let Some(b) = &g.output {
                ids.insert(b.clone(), names.len());
                names.push(b.clone());
                ready.push(g.timestep + 1);
            }
        }
        let lookup = |ids: &HashMap<String, usize>, v: &String| -> Result<usize, SimError> {
            ids.get(v).copied().ok_or_else(|| SimError::Circuit(CircuitError::UnknownName(v.clone())))
        };
        let mut lets = Vec::new();
        for (name, e) in &c.lets {
            let e = e.map_vars(&mut |v| lookup(&ids, v))?;
            let t = e.vars().iter().map(|&v| ready[v]).max().unwrap_or(0);
            let id = names.len();
            ids.insert(name.clone(), id);
            names.push(name.clone());
            ready.push(t);
            lets.push((id, e, t));
        }
        let conds = c
            .gates
            .iter()
            .map(|g| g.condition.as_ref().map(|e| e.map_vars(&mut |v| lookup(&ids, v))).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        let outs = c.gates.iter().map(|g| g.output.as_ref().map(|b| ids[b])).collect();
        let nt = c.num_timesteps();
        let mut last: Vec<usize> = ready.iter().map(|&r| r.saturating_sub(1)).collect();
        for (g, cond) in c.gates.iter().zip(&conds) {
            if let Some(e) = cond {
                for v in e.vars() {
                    last[v] = last[v].max(g.timestep);
                }
            }
        }
        for (_, e, t) in &lets {
            for v in e.vars() {
                last[v] = last[v].max(t.saturating_sub(1));
            }
        }
        let report = c.report.iter().map(|r| lookup(&ids, r)).collect::<Result<Vec<_>, _>>()?;
        let mut drop_after = vec![Vec::new(); nt.max(1)];
        for (v, &l) in last.iter().enumerate() {
            if !report.contains(&v) {
                drop_after[l.min(nt.max(1) - 1)].push(v);
            }
        }
        let flip = names.iter().map(|n| config.flip_lets.contains(n)).collect();
        let forced = names.iter().map(|n| config.forced.get(n).copied()).collect();
        let mut lets_at = vec![Vec::new(); nt + 1];
        for (i, l) in lets.iter().enumerate() {
            lets_at[l.2].push(i);
        }
        Ok(Plan { names, conds, outs, lets, lets_at, drop_after, report, layers: c.layers(), flip, forced })
    }

    fn eval(&self, e: &Expr<usize>, rec: &[Option<bool>]) -> bool {
        e.eval(&|v: &usize| rec[*v].unwrap_or(false))
    }
}

pub struct Simulator<'a> {
    circuit: &'a Circuit,
    code: &'a CssCode,
    config: SimConfig,
    plan: Plan,
}

impl<'a> Simulator<'a> {
    pub fn new(circuit: &'a Circuit, code: &'a CssCode, config: SimConfig) -> Result<Self, SimError> {
        let plan = Plan::new(circuit, &config)?;
        Ok(Simulator { circuit, code, config, plan })
    }

    pub fn circuit(&self) -> &Circuit {
        self.circuit
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Register initial states: `Plus` blocks are logical |+>, other `Plus`
    /// registers physical |+>; `Input` registers come from `input`, whose
    /// support must lie inside them.
    pub fn initial_state(&self, input: Option<&SparseState>) -> Result<SparseState, SimError> {
        let layout = &self.circuit.layout;
        let n = layout.num_qubits();
        let mut state = SparseState::new(n).with_cap(self.config.support_cap);
        let mut input_mask = 0u128;
        for r in layout.registers() {
            match (r.init, r.role) {
                (Init::Plus, RegisterRole::Block) => {
                    let h = std::f64::consts::FRAC_1_SQRT_2;
                    let s = encode(self.code, layout, &[&r.name], &[Amp::new(h, 0.0), Amp::new(h, 0.0)])?;
                    state = state.tensor(s)?;
                }
                (Init::Plus, _) => {
                    for q in r.qubits() {
                        let h = std::f64::consts::FRAC_1_SQRT_2;
                        let s = SparseState::from_entries(n, vec![(0, Amp::new(h, 0.0)), (q.bit(), Amp::new(h, 0.0))]);
                        state = state.tensor(s)?;
                    }
                }
                (Init::Input, _) => input_mask |= r.mask(),
                (Init::Zero, _) => {}
            }
        }
        if let Some(inp) = input {
            if inp.n != n {
                return Err(SimError::BadInput(format!("input has {} qubits, layout {}", inp.n, n)));
            }
            let mut inp = inp.clone();
            inp.flush(inp.frame);
            if inp.factors.iter().any(|f| f.mask & !input_mask != 0) {
                return Err(SimError::BadInput("input touches non-input registers".into()));
            }
            let mut inp = inp;
            inp.normalize();
            state = state.tensor(inp)?;
        }
        let mut state = state.with_hadamard_frame(self.config.hadamard_frame);
        state.cap = self.config.support_cap;
        Ok(state)
    }

    pub fn start(&self, input: Option<&SparseState>) -> Result<BranchSet, SimError> {
        let state = self.initial_state(input)?;
        let mut record = vec![None; self.plan.names.len()];
        self.eval_lets(0, &mut record);
        Ok(BranchSet { next_ts: 0, branches: vec![Branch { prob: 1.0, record, state: Arc::new(state) }], rejected: 0.0 })
    }

    fn eval_lets(&self, ts: usize, record: &mut [Option<bool>]) {
        if let Some(list) = self.plan.lets_at.get(ts) {
            for &i in list {
                let (v, e, _) = &self.plan.lets[i];
                record[*v] = Some(self.plan.eval(e, record) ^ self.plan.flip[*v]);
            }
        }
    }

    pub fn is_done(&self, set: &BranchSet) -> bool {
        set.next_ts >= self.plan.layers.len()
    }

    /// Executes timestep `set.next_ts`, applying the matching entries of
    /// `errors` before or after its gates.
    pub fn step(&self, set: &mut BranchSet, errors: &[InjectedError]) -> Result<(), SimError> {
        let ts = set.next_ts;
        let layer = &self.plan.layers[ts];
        let gates = &self.circuit.gates;
        let before: Vec<&InjectedError> =
            errors.iter().filter(|e| e.timestep == ts && e.position == Position::Before).collect();
        let after: Vec<&InjectedError> =
            errors.iter().filter(|e| e.timestep == ts && e.position == Position::After).collect();
        let mut out = Vec::with_capacity(set.branches.len());
        for mut br in std::mem::take(&mut set.branches) {
            for e in &before {
                Arc::make_mut(&mut br.state).apply_error(&e.error)?;
            }
            let active = |i: usize, rec: &[Option<bool>]| {
                self.plan.conds[i].as_ref().map(|c| self.plan.eval(c, rec)).unwrap_or(true)
            };
            if layer.iter().any(|&i| gates[i].kind == GateKind::Reject && active(i, &br.record)) {
                set.rejected += br.prob;
                continue;
            }
            let mut z_mask = 0u128;
            let mut x_mask = 0u128;
            let mut writes: Vec<(u128, usize)> = Vec::new();
            for &i in layer {
                let g = &gates[i];
                if !active(i, &br.record) {
                    continue;
                }
                match g.kind {
                    GateKind::Reject | GateKind::Barrier => {}
                    GateKind::MeasureZ | GateKind::Reset => z_mask |= g.operands[0].bit(),
                    GateKind::MeasureX => x_mask |= g.operands[0].bit(),
                    _ => Arc::make_mut(&mut br.state).apply_gate(g)?,
                }
                if let Some(v) = self.plan.outs[i] {
                    writes.push((g.operands[0].bit(), v));
                }
            }
            if z_mask | x_mask == 0 {
                for e in &after {
                    Arc::make_mut(&mut br.state).apply_error(&e.error)?;
                }
                out.push(br);
                continue;
            }
            let state = Arc::try_unwrap(br.state).unwrap_or_else(|a| (*a).clone());
            for class in state.measure_joint(z_mask, x_mask)? {
                let prob = br.prob * class.prob;
                if prob < MIN_PROB {
                    continue;
                }
                let shared = Arc::new(class.state);
                for pat in class.patterns {
                    let mut record = br.record.clone();
                    let mut ok = true;
                    for &(b, v) in &writes {
                        let bit = pat & b != 0;
                        if self.plan.forced[v].is_some_and(|f| f != bit) {
                            ok = false;
                        }
                        record[v] = Some(bit);
                    }
                    if !ok {
                        continue;
                    }
                    let mut state = Arc::clone(&shared);
                    for e in &after {
                        Arc::make_mut(&mut state).apply_error(&e.error)?;
                    }
                    out.push(Branch { prob, record, state });
                }
                if out.len() > self.config.branch_cap {
                    return Err(SimError::BranchOverflow { count: out.len(), cap: self.config.branch_cap });
                }
            }
        }
        for br in &mut out {
            self.eval_lets(ts + 1, &mut br.record);
            for &v in &self.plan.drop_after[ts] {
                br.record[v] = None;
            }
        }
        set.branches = if self.config.merge_branches { merge(out) } else { out };
        set.next_ts += 1;
        if set.branches.is_empty() && set.rejected == 0.0 {
            return Err(SimError::NoBranches);
        }
        Ok(())
    }

    /// Runs until `stop` (exclusive) or the end.
    pub fn advance(&self, set: &mut BranchSet, stop: usize, errors: &[InjectedError]) -> Result<(), SimError> {
        while set.next_ts < stop.min(self.plan.layers.len()) {
            self.step(set, errors)?;
        }
        Ok(())
    }

    /// Traces out everything but the output registers and collects the
    /// reported names.
    pub fn finish(&self, set: BranchSet) -> Result<SimResult, SimError> {
        let layout = &self.circuit.layout;
        let mut keep = 0u128;
        for o in &self.circuit.outputs {
            keep |= layout.register(o).map_err(|e| SimError::BadInput(e.to_string()))?.mask();
        }
        let mut out = Vec::new();
        for br in set.branches {
            let mut st = Arc::try_unwrap(br.state).unwrap_or_else(|a| (*a).clone());
            st.try_flush(st.frame & keep)?;
            let active = (st.factors.iter().fold(0, |m, f| m | f.mask) | st.frame) & !keep;
            if active == 0 {
                out.push(Branch { prob: br.prob, record: br.record, state: Arc::new(st) });
                continue;
            }
            for class in st.measure_joint(active, 0)? {
                let shared = Arc::new(class.state);
                let prob = br.prob * class.prob * class.patterns.len() as f64;
                out.push(Branch { prob, record: br.record.clone(), state: shared });
            }
        }
        let merged = if self.config.merge_branches { merge(out) } else { out };
        let branches = merged
            .into_iter()
            .map(|b| FinalBranch {
                prob: b.prob,
                record: self
                    .plan
                    .report
                    .iter()
                    .map(|&v| (self.plan.names[v].clone(), b.record[v].unwrap_or(false)))
                    .collect(),
                state: Arc::try_unwrap(b.state).unwrap_or_else(|a| (*a).clone()),
            })
            .collect();
        Ok(SimResult { branches, rejected: set.rejected })
    }

    pub fn run(&self, input: Option<&SparseState>, errors: &[InjectedError]) -> Result<SimResult, SimError> {
        let mut set = self.start(input)?;
        self.advance(&mut set, usize::MAX, errors)?;
        self.finish(set)
    }

    /// Branches just before timestep `stop` (errors at `stop` not applied).
    pub fn run_until(&self, input: Option<&SparseState>, stop: usize, errors: &[InjectedError]) -> Result<BranchSet, SimError> {
        let mut set = self.start(input)?;
        self.advance(&mut set, stop, errors)?;
        Ok(set)
    }

    pub fn var_names(&self) -> &[String] {
        &self.plan.names
    }

    /// Value of a classical name in a branch record (`None` if unset or
    /// no longer tracked).
    pub fn value(&self, branch: &Branch, name: &str) -> Option<bool> {
        self.plan.names.iter().position(|n| n == name).and_then(|v| branch.record[v])
    }
}

/// Merges branches with equal records and equal states up to phase.
fn merge(branches: Vec<Branch>) -> Vec<Branch> {
    if branches.len() < 2 {
        return branches;
    }
    let mut out: Vec<Branch> = Vec::with_capacity(branches.len());
    let mut groups: FxHashMap<Vec<Option<bool>>, Vec<usize>> = FxHashMap::default();
    for mut b in branches {
        let g = groups.entry(b.record.clone()).or_default();
        if let Some(&i) = g.iter().find(|&&i| Arc::ptr_eq(&out[i].state, &b.state)) {
            out[i].prob += b.prob;
            continue;
        }
        if !g.is_empty() {
            Arc::make_mut(&mut b.state).canonicalize();
            let fp = b.state.fingerprint();
            let mut hit = None;
            for &i in g.iter() {
                Arc::make_mut(&mut out[i].state).canonicalize();
                if out[i].state.fingerprint() == fp && out[i].state.same_ray(&b.state) {
                    hit = Some(i);
                    break;
                }
            }
            if let Some(i) = hit {
                out[i].prob += b.prob;
                continue;
            }
        }
        g.push(out.len());
        out.push(b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_cat_prep, build_shor_prep};

    fn c(re: f64) -> Amp {
        Amp::new(re, 0.0)
    }

    #[test]
    fn basic_gates() {
        let mut s = SparseState::new(1);
        s.apply_unitary(&Unitary::H(Qubit(0))).unwrap();
        assert_eq!(s.dump().unwrap(), "0 0.707106781187 0\n1 0.707106781187 0\n");
        let mut s = SparseState::basis(3, 0b011);
        s.apply_unitary(&Unitary::CCX(Qubit(0), Qubit(1), Qubit(2))).unwrap();
        assert_eq!(s.entries().unwrap(), vec![(0b111, c(1.0))]);
        let mut s = SparseState::new(2);
        s.apply_unitary(&Unitary::H(Qubit(0))).unwrap();
        s.apply_unitary(&Unitary::H(Qubit(0))).unwrap();
        assert_eq!(s.support_size(), 1);
    }

    #[test]
    fn frame_matches_direct() {
        let gates = [
            Unitary::H(Qubit(0)),
            Unitary::H(Qubit(1)),
            Unitary::CX(Qubit(2), Qubit(1)),
            Unitary::CCX(Qubit(2), Qubit(3), Qubit(0)),
            Unitary::X(Qubit(1)),
            Unitary::CZ(Qubit(0), Qubit(3)),
            Unitary::CCZ(Qubit(0), Qubit(1), Qubit(2)),
            Unitary::Z(Qubit(0)),
            Unitary::CX(Qubit(0), Qubit(3)),
        ];
        let start = SparseState::from_entries(4, vec![(0b0100, c(0.6)), (0b1100, c(0.8))]);
        let mut a = start.clone();
        let mut b = start.with_hadamard_frame(true);
        for g in &gates {
            a.apply_unitary(g).unwrap();
            b.apply_unitary(g).unwrap();
        }
        assert!(b.frame() != 0);
        assert!((a.fidelity(&b).unwrap() - 1.0).abs() < 1e-12);
        assert!((a.overlap(&b).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn measurement() {
        let s = SparseState::new(1);
        let (_, bit, p) = s.measure(Qubit(0), Basis::Z, None).unwrap();
        assert!(!bit && (p - 1.0).abs() < 1e-15);
        assert!(matches!(s.measure(Qubit(0), Basis::Z, Some(true)), Err(SimError::ImpossibleOutcome { .. })));
        let mut s = SparseState::new(1);
        s.apply_unitary(&Unitary::H(Qubit(0))).unwrap();
        let all = s.measure_all(Qubit(0), Basis::Z).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|o| (o.1 - 0.5).abs() < 1e-12));
        let (_, bit, p) = s.measure(Qubit(0), Basis::X, None).unwrap();
        assert!(!bit && (p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cat_prep_is_cat() {
        let circ = build_cat_prep(7).unwrap();
        let code = CssCode::trivial();
        let sim = Simulator::new(&circ, &code, SimConfig::default()).unwrap();
        let r = sim.run(None, &[]).unwrap();
        assert_eq!(r.branches.len(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cat = SparseState::from_entries(9, vec![(0, c(h)), (0x7f, c(h))]);
        assert!((r.branches[0].state.fidelity(&cat).unwrap() - 1.0).abs() < 1e-12);
        assert!(r.rejected.abs() < 1e-15);
    }

    #[test]
    fn noiseless_shor_prep_gives_ancilla() {
        let code = CssCode::steane();
        let circ = build_shor_prep(&code, 3).unwrap();
        for frame in [false, true] {
            let cfg = SimConfig { hadamard_frame: frame, ..SimConfig::default() };
            let sim = Simulator::new(&circ, &code, cfg).unwrap();
            let r = sim.run(None, &[]).unwrap();
            assert!((r.total_probability() - 1.0).abs() < 1e-9);
            let h = 0.5;
            let want = encode(&code, &circ.layout, &["T1", "T2", "T3"], &[
                c(h), c(h), c(h), c(0.0), c(0.0), c(0.0), c(0.0), c(h),
            ])
            .unwrap();
            for b in &r.branches {
                assert!((b.state.fidelity(&want).unwrap() - 1.0).abs() < 1e-10);
            }
            assert_eq!(r.branches.len(), 2, "one merged branch per vote");
        }
    }
}
