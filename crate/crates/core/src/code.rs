//! CSS codes with one logical qubit: check matrices, logical operators,
//! lookup decoding and the even-checks / odd-logicals family condition.
//!
//! Bit vectors over a block are `u64` with qubit `i` at bit `i`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::PauliOperator;

/// Blocks larger than this are rejected (brute-force distance search).
pub const MAX_BLOCK: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("syndrome {0:?} is not in the decode table")]
    UnknownSyndrome(Syndrome),
    #[error("operator anticommutes with a stabilizer")]
    NotInNormalizer,
    #[error("X and Z checks do not commute")]
    NotCss,
    #[error("code encodes {0} logical qubits; exactly one is supported")]
    UnsupportedK(isize),
    #[error("logical operators do not anticommute")]
    BadLogicals,
    #[error("block size {0} unsupported (1..={MAX_BLOCK})")]
    BadBlockSize(usize),
    #[error("code file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Syndrome of one block. `x_bits` come from the Z-type checks and flag bit
/// flips, `z_bits` come from the X-type checks and flag phase flips. Bit `r`
/// is check row `r`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Syndrome {
    pub x_bits: u64,
    pub z_bits: u64,
}

impl Syndrome {
    pub fn is_zero(&self) -> bool {
        self.x_bits == 0 && self.z_bits == 0
    }
}

/// Logical class of a normalizer element modulo the stabilizer group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalClass {
    I,
    X,
    Z,
    Y,
}

impl LogicalClass {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => LogicalClass::I,
            (true, false) => LogicalClass::X,
            (false, true) => LogicalClass::Z,
            (true, true) => LogicalClass::Y,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            LogicalClass::I => (false, false),
            LogicalClass::X => (true, false),
            LogicalClass::Z => (false, true),
            LogicalClass::Y => (true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogicalClass::I => "I",
            LogicalClass::X => "X",
            LogicalClass::Z => "Z",
            LogicalClass::Y => "Y",
        }
    }
}

/// Row-reduced GF(2) basis.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Gf2Basis {
    rows: Vec<u64>,
}

impl Gf2Basis {
    pub fn new(vectors: &[u64]) -> Self {
        let mut b = Gf2Basis::default();
        for &v in vectors {
            b.insert(v);
        }
        b
    }

    pub fn reduce(&self, mut v: u64) -> u64 {
        for &r in &self.rows {
            let pivot = 63 - r.leading_zeros();
            if v >> pivot & 1 == 1 {
                v ^= r;
            }
        }
        v
    }

    pub fn insert(&mut self, v: u64) -> bool {
        let v = self.reduce(v);
        if v == 0 {
            return false;
        }
        // Keep rows sorted by decreasing pivot so reduce() is a single pass.
        let pivot = 63 - v.leading_zeros();
        let pos = self.rows.iter().position(|r| 63 - r.leading_zeros() < pivot).unwrap_or(self.rows.len());
        self.rows.insert(pos, v);
        true
    }

    pub fn contains(&self, v: u64) -> bool {
        self.reduce(v) == 0
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }
}

fn parity(v: u64) -> bool {
    v.count_ones() % 2 == 1
}

fn apply_checks(rows: &[u64], v: u64) -> u64 {
    rows.iter().enumerate().fold(0, |s, (r, &row)| s | (parity(row & v) as u64) << r)
}

/// All `n`-bit vectors of weight `w` in lexicographic order of index lists.
fn combinations(n: usize, w: usize) -> Vec<u64> {
    fn rec(start: usize, n: usize, left: usize, acc: u64, out: &mut Vec<u64>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..n {
            if n - i < left {
                break;
            }
            rec(i + 1, n, left - 1, acc | 1 << i, out);
        }
    }
    let mut out = Vec::new();
    rec(0, n, w, 0, &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CssCode {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub t: usize,
    /// X-type stabilizer generators.
    pub h_x: Vec<u64>,
    /// Z-type stabilizer generators.
    pub h_z: Vec<u64>,
    pub logical_x: u64,
    pub logical_z: u64,
    /// Z-check syndrome -> X correction.
    x_table: HashMap<u64, u64>,
    /// X-check syndrome -> Z correction.
    z_table: HashMap<u64, u64>,
}

impl CssCode {
    /// The [[7,1,3]] code with the Hamming(7,4) checks for both types.
    /// Column `j` of the check matrix is the binary expansion of `j + 1`.
    pub fn steane() -> Self {
        let rows: Vec<u64> = (0..3)
            .map(|c| (0..7).filter(|j| (j + 1) >> c & 1 == 1).fold(0, |m, j| m | 1 << j))
            .collect();
        Self::from_checks("steane", 7, rows.clone(), rows).expect("steane is valid")
    }

    /// The unencoded single qubit.
    pub fn trivial() -> Self {
        Self::from_checks("trivial", 1, vec![], vec![]).expect("trivial is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "steane" => Some(Self::steane()),
            "trivial" => Some(Self::trivial()),
            _ => None,
        }
    }

    /// Builds a code from its check matrices, choosing the lexicographically
    /// smallest minimum-weight logical representatives.
    pub fn from_checks(name: &str, n: usize, h_x: Vec<u64>, h_z: Vec<u64>) -> Result<Self, CodeError> {
        if n == 0 || n > MAX_BLOCK {
            return Err(CodeError::BadBlockSize(n));
        }
        let mask = (1u64 << n) - 1;
        if h_x.iter().chain(&h_z).any(|r| r & !mask != 0) {
            return Err(CodeError::BadBlockSize(n));
        }
        if h_x.iter().any(|&a| h_z.iter().any(|&b| parity(a & b))) {
            return Err(CodeError::NotCss);
        }
        let bx = Gf2Basis::new(&h_x);
        let bz = Gf2Basis::new(&h_z);
        let k = n as isize - bx.rank() as isize - bz.rank() as isize;
        if k != 1 {
            return Err(CodeError::UnsupportedK(k));
        }
        // Minimum-weight nontrivial logical: in ker(checks of other type),
        // outside the stabilizer rowspace.
        let find = |checks: &[u64], stab: &Gf2Basis| -> Option<u64> {
            (1..=n).find_map(|w| {
                combinations(n, w).into_iter().find(|&v| apply_checks(checks, v) == 0 && !stab.contains(v))
            })
        };
        let logical_x = find(&h_z, &bx).ok_or(CodeError::BadLogicals)?;
        let logical_z = find(&h_x, &bz).ok_or(CodeError::BadLogicals)?;
        if !parity(logical_x & logical_z) {
            return Err(CodeError::BadLogicals);
        }
        let d = logical_x.count_ones().min(logical_z.count_ones()) as usize;
        let t = (d - 1) / 2;
        let mut code = CssCode {
            name: name.to_string(),
            n,
            k: 1,
            d,
            t,
            h_x,
            h_z,
            logical_x,
            logical_z,
            x_table: HashMap::new(),
            z_table: HashMap::new(),
        };
        code.x_table = code.build_table(&code.h_z);
        code.z_table = code.build_table(&code.h_x);
        Ok(code)
    }

    fn build_table(&self, checks: &[u64]) -> HashMap<u64, u64> {
        let mut table = HashMap::new();
        for w in 0..=self.t {
            for e in combinations(self.n, w) {
                table.entry(apply_checks(checks, e)).or_insert(e);
            }
        }
        table
    }

    /// Plain-text code file. Sections start with a line `hx`, `hz`, `lx` or
    /// `lz`; each following line is a row of 0/1 characters. `hz` defaults to
    /// `hx`. Given logicals replace the computed ones after being checked.
    /// `#` starts a comment; `name <word>` sets the name.
    pub fn parse(text: &str) -> Result<Self, CodeError> {
        let mut name = "custom".to_string();
        let mut sections: HashMap<&str, Vec<u64>> = HashMap::new();
        let mut current: Option<&str> = None;
        let mut n: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            let err = |reason: &str| CodeError::Parse { line: i + 1, reason: reason.to_string() };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("name ") {
                name = rest.trim().to_string();
                continue;
            }
            let header = line.trim_start_matches('[').trim_end_matches(']');
            if matches!(header, "hx" | "hz" | "lx" | "lz") {
                current = Some(match header {
                    "hx" => "hx",
                    "hz" => "hz",
                    "lx" => "lx",
                    _ => "lz",
                });
                sections.entry(current.unwrap()).or_default();
                continue;
            }
            let sec = current.ok_or_else(|| err("row before any section header"))?;
            if !line.chars().all(|c| c == '0' || c == '1') {
                return Err(err("rows must contain only 0 and 1"));
            }
            match n {
                None => n = Some(line.len()),
                Some(m) if m != line.len() => return Err(err("row length differs from earlier rows")),
                _ => {}
            }
            let v = line.chars().enumerate().fold(0u64, |m, (j, c)| m | ((c == '1') as u64) << j);
            sections.get_mut(sec).unwrap().push(v);
        }
        let n = n.ok_or(CodeError::Parse { line: 0, reason: "no rows".into() })?;
        if n > MAX_BLOCK {
            return Err(CodeError::BadBlockSize(n));
        }
        let h_x = sections.get("hx").cloned().unwrap_or_default();
        let h_z = sections.get("hz").cloned().unwrap_or_else(|| h_x.clone());
        let mut code = Self::from_checks(&name, n, h_x, h_z)?;
        if let Some(lx) = sections.get("lx").and_then(|v| v.first()) {
            code.set_logical_x(*lx)?;
        }
        if let Some(lz) = sections.get("lz").and_then(|v| v.first()) {
            code.set_logical_z(*lz)?;
        }
        Ok(code)
    }

    pub fn set_logical_x(&mut self, lx: u64) -> Result<(), CodeError> {
        if apply_checks(&self.h_z, lx) != 0 || Gf2Basis::new(&self.h_x).contains(lx) || !parity(lx & self.logical_z) {
            return Err(CodeError::BadLogicals);
        }
        self.logical_x = lx;
        Ok(())
    }

    pub fn set_logical_z(&mut self, lz: u64) -> Result<(), CodeError> {
        if apply_checks(&self.h_x, lz) != 0 || Gf2Basis::new(&self.h_z).contains(lz) || !parity(lz & self.logical_x) {
            return Err(CodeError::BadLogicals);
        }
        self.logical_z = lz;
        Ok(())
    }

    pub fn mask(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    pub fn x_syndrome(&self, x: u64) -> u64 {
        apply_checks(&self.h_z, x)
    }

    pub fn z_syndrome(&self, z: u64) -> u64 {
        apply_checks(&self.h_x, z)
    }

    pub fn syndrome(&self, err: &PauliOperator) -> Syndrome {
        Syndrome { x_bits: self.x_syndrome(err.x as u64), z_bits: self.z_syndrome(err.z as u64) }
    }

    /// X correction for a Z-check syndrome.
    pub fn x_correction(&self, s: u64) -> Option<u64> {
        self.x_table.get(&s).copied()
    }

    /// Z correction for an X-check syndrome.
    pub fn z_correction(&self, s: u64) -> Option<u64> {
        self.z_table.get(&s).copied()
    }

    /// Nonzero Z-check syndromes with their X corrections, sorted.
    pub fn x_table(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<_> = self.x_table.iter().filter(|(s, _)| **s != 0).map(|(s, c)| (*s, *c)).collect();
        v.sort();
        v
    }

    /// Nonzero X-check syndromes with their Z corrections, sorted.
    pub fn z_table(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<_> = self.z_table.iter().filter(|(s, _)| **s != 0).map(|(s, c)| (*s, *c)).collect();
        v.sort();
        v
    }

    pub fn decode(&self, s: &Syndrome) -> Result<PauliOperator, CodeError> {
        let x = self.x_correction(s.x_bits).ok_or(CodeError::UnknownSyndrome(*s))?;
        let z = self.z_correction(s.z_bits).ok_or(CodeError::UnknownSyndrome(*s))?;
        Ok(PauliOperator::new(self.n, x as u128, z as u128))
    }

    pub fn logical_effect(&self, residual: &PauliOperator) -> Result<LogicalClass, CodeError> {
        let x = residual.x as u64;
        let z = residual.z as u64;
        if self.x_syndrome(x) != 0 || self.z_syndrome(z) != 0 {
            return Err(CodeError::NotInNormalizer);
        }
        let bx = Gf2Basis::new(&self.h_x);
        let bz = Gf2Basis::new(&self.h_z);
        Ok(LogicalClass::from_bits(!bx.contains(x), !bz.contains(z)))
    }

    /// Codewords of logical `|0>` (`value = false`) or `|1>`, sorted. These
    /// are the X-stabilizer rowspace, shifted by `logical_x` for `|1>`.
    pub fn codewords(&self, value: bool) -> Vec<u64> {
        let basis: Vec<u64> = {
            let mut b = Gf2Basis::default();
            self.h_x.iter().filter(|&&r| b.insert(r)).copied().collect()
        };
        let shift = if value { self.logical_x } else { 0 };
        let mut out: Vec<u64> = (0..1u64 << basis.len())
            .map(|m| basis.iter().enumerate().fold(shift, |v, (i, r)| if m >> i & 1 == 1 { v ^ r } else { v }))
            .collect();
        out.sort();
        out
    }

    /// Logical value of a word that is a codeword, `None` otherwise.
    pub fn logical_value(&self, word: u64) -> Option<bool> {
        let bx = Gf2Basis::new(&self.h_x);
        if bx.contains(word) {
            Some(false)
        } else if bx.contains(word ^ self.logical_x) {
            Some(true)
        } else {
            None
        }
    }
}

/// True iff every check row has even weight and both logical
/// representatives have odd weight.
pub fn validate_family(code: &CssCode) -> bool {
    code.h_x.iter().chain(&code.h_z).all(|r| r.count_ones() % 2 == 0)
        && code.logical_x.count_ones() % 2 == 1
        && code.logical_z.count_ones() % 2 == 1
}

/// Full structural check: CSS condition, logicals, family condition.
pub fn validate(code: &CssCode) -> Result<bool, CodeError> {
    if code.h_x.iter().any(|&a| code.h_z.iter().any(|&b| parity(a & b))) {
        return Err(CodeError::NotCss);
    }
    if apply_checks(&code.h_z, code.logical_x) != 0
        || apply_checks(&code.h_x, code.logical_z) != 0
        || !parity(code.logical_x & code.logical_z)
    {
        return Err(CodeError::BadLogicals);
    }
    Ok(validate_family(code))
}

pub fn syndrome(code: &CssCode, err: &PauliOperator) -> Syndrome {
    code.syndrome(err)
}

pub fn decode(code: &CssCode, s: &Syndrome) -> Result<PauliOperator, CodeError> {
    code.decode(s)
}

pub fn logical_effect(code: &CssCode, residual: &PauliOperator) -> Result<LogicalClass, CodeError> {
    code.logical_effect(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliLetter;

    #[test]
    fn steane_parameters() {
        let c = CssCode::steane();
        assert_eq!((c.n, c.k, c.d, c.t), (7, 1, 3, 1));
        assert_eq!(c.h_x, vec![0b1010101, 0b1100110, 0b1111000]);
        assert!(c.h_x.iter().all(|r| r.count_ones() == 4));
        assert_eq!(c.logical_x, 0b111);
        assert_eq!(c.logical_z, 0b111);
        assert!(validate_family(&c));
        assert_eq!(validate(&c), Ok(true));
    }

    #[test]
    fn single_qubit_syndrome_is_its_column() {
        let c = CssCode::steane();
        for i in 0..7 {
            let e = PauliOperator::single(7, i, PauliLetter::X);
            assert_eq!(c.syndrome(&e).x_bits, (i + 1) as u64);
            assert_eq!(c.decode(&c.syndrome(&e)).unwrap().x, 1 << i);
        }
    }

    #[test]
    fn weight_two_decodes_to_logical() {
        let c = CssCode::steane();
        let e = PauliOperator::new(7, 0b0000011, 0);
        let corr = c.decode(&c.syndrome(&e)).unwrap();
        assert_eq!(corr.weight(), 1);
        assert_eq!(c.logical_effect(&e.compose(&corr)), Ok(LogicalClass::X));
    }

    #[test]
    fn logical_effect_classes() {
        let c = CssCode::steane();
        let s = PauliOperator::new(7, c.h_x[0] as u128, 0);
        assert_eq!(c.logical_effect(&s), Ok(LogicalClass::I));
        let lx = PauliOperator::new(7, (c.logical_x ^ c.h_x[1]) as u128, 0);
        assert_eq!(c.logical_effect(&lx), Ok(LogicalClass::X));
        let y = PauliOperator::new(7, c.logical_x as u128, c.logical_z as u128);
        assert_eq!(c.logical_effect(&y), Ok(LogicalClass::Y));
        let bad = PauliOperator::single(7, 0, PauliLetter::X);
        assert_eq!(c.logical_effect(&bad), Err(CodeError::NotInNormalizer));
    }

    #[test]
    fn codewords_split_by_logical_value() {
        let c = CssCode::steane();
        let zero = c.codewords(false);
        let one = c.codewords(true);
        assert_eq!(zero.len(), 8);
        assert!(zero.iter().all(|w| w.count_ones() % 2 == 0));
        assert!(one.iter().all(|w| w.count_ones() % 2 == 1));
        assert!(zero.iter().all(|&w| c.logical_value(w) == Some(false)));
        assert!(one.iter().all(|&w| c.logical_value(w) == Some(true)));
        assert_eq!(c.logical_value(1), None);
    }

    #[test]
    fn trivial_code() {
        let c = CssCode::trivial();
        assert_eq!((c.n, c.d, c.t), (1, 1, 0));
        assert_eq!(c.codewords(false), vec![0]);
        assert_eq!(c.codewords(true), vec![1]);
        assert!(validate_family(&c));
    }

    #[test]
    fn parse_code_file() {
        let text = "# steane\nname s7\nhx\n1010101\n0110011\n0001111\n";
        let c = CssCode::parse(text).unwrap();
        assert_eq!(c.n, 7);
        assert_eq!(c.d, 3);
        assert_eq!(c.name, "s7");
        assert!(validate_family(&c));
        assert!(CssCode::parse("hx\n101\n11\n").is_err());
        assert!(matches!(CssCode::parse("hx\n1100\nhz\n1010\n"), Err(_)));
    }

    #[test]
    fn weight_three_row_breaks_family() {
        let mut c = CssCode::steane();
        c.h_x[0] ^= 1 << 1;
        assert!(!validate_family(&c));
    }
}
