//! Named qubit registers and the mapping to global qubit indices.
//!
//! Every qubit in a circuit has a global index (a bit position in the
//! simulator's basis keys) and a human name `REG.index`, e.g. `T1.3`.
//! Indices within a register are zero-based.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard limit imposed by the `u128` basis keys of the simulator.
pub const MAX_QUBITS: usize = 128;

/// Global qubit index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Qubit(pub u16);

impl Qubit {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn bit(self) -> u128 {
        1u128 << self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegisterRole {
    /// An encoded code block (Toffoli ancilla or data).
    Block,
    /// Auxiliary cat / parity register.
    Aux,
    /// Cat-state verification qubits.
    Verify,
    /// Syndrome-extraction cat qubits.
    Syndrome,
    /// Anything else (user circuits).
    Generic,
}

impl RegisterRole {
    pub fn as_str(self) -> &'static str {
        match self {
            RegisterRole::Block => "block",
            RegisterRole::Aux => "aux",
            RegisterRole::Verify => "verify",
            RegisterRole::Syndrome => "syndrome",
            RegisterRole::Generic => "qubits",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "block" => RegisterRole::Block,
            "aux" => RegisterRole::Aux,
            "verify" => RegisterRole::Verify,
            "syndrome" => RegisterRole::Syndrome,
            "qubits" => RegisterRole::Generic,
            _ => return None,
        })
    }
}

/// Initial state of a register at timestep 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Init {
    /// Every qubit in |0>.
    Zero,
    /// The encoded |+> of the circuit's code (blocks only).
    Plus,
    /// Supplied by the caller as a logical input state (blocks only).
    Input,
}

impl Init {
    pub fn as_str(self) -> &'static str {
        match self {
            Init::Zero => "zero",
            Init::Plus => "plus",
            Init::Input => "input",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zero" => Init::Zero,
            "plus" => Init::Plus,
            "input" => Init::Input,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub size: usize,
    pub offset: usize,
    pub role: RegisterRole,
    pub init: Init,
}

impl Register {
    pub fn qubit(&self, index: usize) -> Qubit {
        assert!(index < self.size, "index {index} out of range for register {}", self.name);
        Qubit((self.offset + index) as u16)
    }

    pub fn qubits(&self) -> Vec<Qubit> {
        (0..self.size).map(|i| self.qubit(i)).collect()
    }

    /// Bit mask of the register's qubits in global key space.
    pub fn mask(&self) -> u128 {
        self.qubits().iter().fold(0, |m, q| m | q.bit())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("duplicate register `{0}`")]
    DuplicateRegister(String),
    #[error("layout exceeds {MAX_QUBITS} qubits")]
    TooManyQubits,
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("qubit index {index} out of range for register `{register}` of size {size}")]
    IndexOutOfRange { register: String, index: usize, size: usize },
    #[error("malformed qubit name `{0}` (expected REG.index)")]
    MalformedQubit(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    registers: Vec<Register>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: &str,
        size: usize,
        role: RegisterRole,
        init: Init,
    ) -> Result<&Register, LayoutError> {
        if self.registers.iter().any(|r| r.name == name) {
            return Err(LayoutError::DuplicateRegister(name.to_string()));
        }
        let offset = self.num_qubits();
        if offset + size > MAX_QUBITS {
            return Err(LayoutError::TooManyQubits);
        }
        self.registers.push(Register { name: name.to_string(), size, offset, role, init });
        Ok(self.registers.last().unwrap())
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.size).sum()
    }

    pub fn register(&self, name: &str) -> Result<&Register, LayoutError> {
        self.registers
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| LayoutError::UnknownRegister(name.to_string()))
    }

    pub fn qubit(&self, register: &str, index: usize) -> Result<Qubit, LayoutError> {
        let reg = self.register(register)?;
        if index >= reg.size {
            return Err(LayoutError::IndexOutOfRange {
                register: register.to_string(),
                index,
                size: reg.size,
            });
        }
        Ok(reg.qubit(index))
    }

    pub fn register_of(&self, q: Qubit) -> Option<(&Register, usize)> {
        let i = q.index();
        self.registers
            .iter()
            .find(|r| i >= r.offset && i < r.offset + r.size)
            .map(|r| (r, i - r.offset))
    }

    pub fn name_of(&self, q: Qubit) -> String {
        match self.register_of(q) {
            Some((r, i)) => format!("{}.{}", r.name, i),
            None => format!("?{}", q.0),
        }
    }

    pub fn parse_qubit(&self, s: &str) -> Result<Qubit, LayoutError> {
        let s = s.trim();
        let (reg, idx) = s.rsplit_once('.').ok_or_else(|| LayoutError::MalformedQubit(s.into()))?;
        let idx: usize = idx.parse().map_err(|_| LayoutError::MalformedQubit(s.into()))?;
        self.qubit(reg, idx)
    }

    /// Mask over all qubits of the named registers.
    pub fn mask_of(&self, names: &[String]) -> Result<u128, LayoutError> {
        names.iter().try_fold(0u128, |m, n| Ok(m | self.register(n)?.mask()))
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let mut l = Layout::new();
        l.add("T1", 7, RegisterRole::Block, Init::Plus).unwrap();
        l.add("A1", 7, RegisterRole::Aux, Init::Zero).unwrap();
        let q = l.qubit("A1", 3).unwrap();
        assert_eq!(q, Qubit(10));
        assert_eq!(l.name_of(q), "A1.3");
        assert_eq!(l.parse_qubit("A1.3").unwrap(), q);
        assert!(matches!(l.parse_qubit("A1.7"), Err(LayoutError::IndexOutOfRange { .. })));
        assert!(matches!(l.parse_qubit("B.0"), Err(LayoutError::UnknownRegister(_))));
        assert!(l.add("T1", 1, RegisterRole::Generic, Init::Zero).is_err());
    }

    #[test]
    fn capacity_is_enforced() {
        let mut l = Layout::new();
        l.add("Q", 128, RegisterRole::Generic, Init::Zero).unwrap();
        assert_eq!(l.add("R", 1, RegisterRole::Generic, Init::Zero), Err(LayoutError::TooManyQubits));
    }
}
