//! Closed-form erroneous states of the unverified ancilla preparation,
//! built term by term for comparison with simulated mid-circuit states.
//!
//! The states live on the layout of the deferred-readout preparation
//! (`T1 T2 T3 A1..AR V1..VR`) just before its final readout. Verification
//! qubits are back in |0>.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::builders::{build_prep, PrepOptions};
use crate::circuit::{Circuit, CircuitError, FaultLocation, GateKind, Position};
use crate::code::CssCode;
use crate::layout::{Layout, Qubit};
use crate::sim::{encode, Amp, SimError, SparseState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalyticKind {
    /// `X[T1.i] CX[T2.i -> A1.i] (|A>|even> + |B>|odd>)`, one round.
    OneRound,
    /// `X[T1.i]` before the Toffoli of round `k + 1`.
    Repeated { k: usize },
    /// The same state as `OneRound`, written with `Z[T2.i]` instead of projectors.
    OneRoundPauli,
    /// `X[T3.i]` before the CNOT of round `k + 1`.
    T3Flip { k: usize },
}

/// The deferred-readout preparation the analytic states refer to.
pub fn oracle_circuit(code: &CssCode, rounds: usize) -> Result<Circuit, CircuitError> {
    let mut o = PrepOptions::shor(rounds);
    o.deferred_readout = true;
    build_prep(code, &o)
}

/// First timestep of the final readout; the analytic states describe the
/// circuit just before it.
pub fn readout_timestep(circuit: &Circuit) -> Option<usize> {
    let a1 = circuit.layout.register("A1").ok()?.mask();
    circuit.gates.iter().find(|g| g.kind == GateKind::MeasureZ && g.operands[0].bit() & a1 != 0).map(|g| g.timestep)
}

/// Where the fault of `kind` on qubit `i` goes in `oracle_circuit`.
pub fn oracle_fault(circuit: &Circuit, kind: AnalyticKind, i: usize) -> Option<FaultLocation> {
    let (reg, round, gate) = match kind {
        AnalyticKind::OneRound | AnalyticKind::OneRoundPauli => ("T1", 0, GateKind::CCX),
        AnalyticKind::Repeated { k } => ("T1", k, GateKind::CCX),
        AnalyticKind::T3Flip { k } => ("T3", k, GateKind::CX),
    };
    let q = circuit.layout.qubit(reg, i).ok()?;
    let a = circuit.layout.qubit(&format!("A{}", round + 1), i).ok()?;
    let g = circuit.gates.iter().find(|g| g.kind == gate && g.operands.contains(&q) && g.operands.contains(&a))?;
    Some(FaultLocation { timestep: g.timestep, position: Position::Before, qubit: q })
}

/// Logical amplitudes of |A> (`bit j` = block `T{j+1}`), optionally with
/// the third block flipped (|B>).
fn ancilla_amps(flip: bool) -> Vec<Amp> {
    let mut v = vec![Amp::new(0.0, 0.0); 8];
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let c = (a & b) ^ flip as usize;
        v[a | b << 1 | c << 2] = Amp::new(0.5, 0.0);
    }
    v
}

/// Parity state on an auxiliary register: `even`/`odd` as written, or the
/// cat states `|0..0> ± |1..1>` they become under the Hadamard frame.
fn parity_entries(offset: usize, n: usize, odd: bool, framed: bool) -> Vec<(u128, Amp)> {
    if framed {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ones = ((1u128 << n) - 1) << offset;
        return vec![(0, Amp::new(s, 0.0)), (ones, Amp::new(if odd { -s } else { s }, 0.0))];
    }
    let norm = (2f64).powi(n as i32 - 1).sqrt();
    (0..1u128 << n)
        .filter(|w| (w.count_ones() % 2 == 1) == odd)
        .map(|w| (w << offset, Amp::new(1.0 / norm, 0.0)))
        .collect()
}

/// Sum of `coeff * T-part ⊗ parities` terms. The T-part is |A> or |B>
/// after an optional operator on the T qubits.
struct Builder<'a> {
    code: &'a CssCode,
    layout: &'a Layout,
    framed: bool,
    n: usize,
    acc: BTreeMap<u128, Amp>,
}

impl Builder<'_> {
    fn t_part(&self, flip: bool) -> Result<Vec<(u128, Amp)>, SimError> {
        encode(self.code, self.layout, &["T1", "T2", "T3"], &ancilla_amps(flip))?.entries()
    }

    fn term(&mut self, coeff: f64, t: &[(u128, Amp)], parities: &[bool]) -> Result<(), SimError> {
        let mut aux = vec![(0u128, Amp::new(coeff, 0.0))];
        for (r, &odd) in parities.iter().enumerate() {
            let reg = self.layout.register(&format!("A{}", r + 1)).map_err(|e| SimError::BadInput(e.to_string()))?;
            let p = parity_entries(reg.offset, self.n, odd, self.framed);
            aux = aux.iter().flat_map(|(k, a)| p.iter().map(move |(k2, a2)| (k | k2, a * a2))).collect();
        }
        for (kt, at) in t {
            for (ka, aa) in &aux {
                *self.acc.entry(kt | ka).or_default() += at * aa;
            }
        }
        Ok(())
    }
}

fn project(t: &[(u128, Amp)], q: Qubit, value: bool) -> Vec<(u128, Amp)> {
    t.iter().filter(|(k, _)| (k & q.bit() != 0) == value).copied().collect()
}

fn phase_z(t: &[(u128, Amp)], q: Qubit) -> Vec<(u128, Amp)> {
    t.iter().map(|&(k, a)| (k, if k & q.bit() != 0 { -a } else { a })).collect()
}

/// The erroneous state of `kind` on qubit `i`, normalized, on the layout of
/// `oracle_circuit(code, rounds)`. With `framed` the auxiliaries are stored
/// as the simulator's Hadamard frame keeps them.
pub fn analytic_state(
    code: &CssCode,
    layout: &Layout,
    kind: AnalyticKind,
    i: usize,
    framed: bool,
) -> Result<SparseState, SimError> {
    let n = code.n;
    let rounds = (1..).take_while(|r| layout.register(&format!("A{r}")).is_ok()).count();
    let bad = |m: &str| SimError::BadInput(m.to_string());
    if i >= n {
        return Err(bad("qubit index out of range"));
    }
    let q = |reg: &str| layout.qubit(reg, i).map_err(|e| SimError::BadInput(e.to_string()));
    let (t1, t2, t3) = (q("T1")?, q("T2")?, q("T3")?);
    let mut b = Builder { code, layout, framed, n, acc: BTreeMap::new() };
    let a = b.t_part(false)?;
    let bb = b.t_part(true)?;
    let split = |k: usize, first: bool| -> Vec<bool> { (0..rounds).map(|r| if r < k { first } else { !first }).collect() };
    let flip_all = |t3_or_t1: Qubit| move |v: Vec<(u128, Amp)>| -> Vec<(u128, Amp)> { v.into_iter().map(|(k, a)| (k ^ t3_or_t1.bit(), a)).collect() };
    match kind {
        AnalyticKind::OneRound => {
            if rounds != 1 {
                return Err(bad("this state has one auxiliary"));
            }
            let x = flip_all(t1);
            b.term(1.0, &x(project(&a, t2, false)), &[false])?;
            b.term(1.0, &x(project(&bb, t2, true)), &[false])?;
            b.term(1.0, &x(project(&a, t2, true)), &[true])?;
            b.term(1.0, &x(project(&bb, t2, false)), &[true])?;
        }
        AnalyticKind::OneRoundPauli => {
            if rounds != 1 {
                return Err(bad("this state has one auxiliary"));
            }
            let x = flip_all(t1);
            let za = x(phase_z(&a, t2));
            let zb = x(phase_z(&bb, t2));
            let (a, bb) = (x(a), x(bb));
            b.term(1.0, &a, &[false])?;
            b.term(1.0, &a, &[true])?;
            b.term(1.0, &bb, &[false])?;
            b.term(1.0, &bb, &[true])?;
            b.term(1.0, &za, &[false])?;
            b.term(-1.0, &za, &[true])?;
            b.term(-1.0, &zb, &[false])?;
            b.term(1.0, &zb, &[true])?;
        }
        AnalyticKind::Repeated { k } => {
            if k >= rounds {
                return Err(bad("k must be below the number of rounds"));
            }
            let x = flip_all(t1);
            b.term(1.0, &x(project(&a, t2, false)), &vec![false; rounds])?;
            b.term(1.0, &x(project(&bb, t2, false)), &vec![true; rounds])?;
            b.term(1.0, &x(project(&a, t2, true)), &split(k, false))?;
            b.term(1.0, &x(project(&bb, t2, true)), &split(k, true))?;
        }
        AnalyticKind::T3Flip { k } => {
            if k >= rounds {
                return Err(bad("k must be below the number of rounds"));
            }
            let x = flip_all(t3);
            b.term(1.0, &x(a), &split(k, false))?;
            b.term(1.0, &x(bb), &split(k, true))?;
        }
    }
    let entries: Vec<(u128, Amp)> = b.acc.into_iter().collect();
    let mut s = SparseState::from_entries(layout.num_qubits(), entries);
    s.normalize();
    if framed {
        let mut mask = 0;
        for r in 1..=rounds {
            mask |= layout.register(&format!("A{r}")).map_err(|e| SimError::BadInput(e.to_string()))?.mask();
        }
        s = s.with_frame(mask);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{GeneralizedError, PauliLetter};
    use crate::sim::{InjectedError, SimConfig, Simulator};

    fn simulated(c: &Circuit, code: &CssCode, kind: AnalyticKind, i: usize, framed: bool) -> Vec<SparseState> {
        let loc = oracle_fault(c, kind, i).unwrap();
        let letter = PauliLetter::X;
        let err = InjectedError { timestep: loc.timestep, position: loc.position, error: GeneralizedError::single(letter, loc.qubit) };
        let cfg = SimConfig { hadamard_frame: framed, ..SimConfig::default() };
        let sim = Simulator::new(c, code, cfg).unwrap();
        let set = sim.run_until(None, readout_timestep(c).unwrap(), &[err]).unwrap();
        set.branches.iter().map(|b| (*b.state).clone()).collect()
    }

    #[test]
    fn one_round_matches_simulation_in_both_modes() {
        let code = CssCode::steane();
        let c = oracle_circuit(&code, 1).unwrap();
        for framed in [true, false] {
            let want = analytic_state(&code, &c.layout, AnalyticKind::OneRound, 3, framed).unwrap();
            let got = simulated(&c, &code, AnalyticKind::OneRound, 3, framed);
            assert_eq!(got.len(), 1);
            assert!(got[0].fidelity(&want).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn three_round_states_match_simulation() {
        let code = CssCode::steane();
        let c = oracle_circuit(&code, 3).unwrap();
        for k in 0..3 {
            for kind in [AnalyticKind::Repeated { k }, AnalyticKind::T3Flip { k }] {
                let want = analytic_state(&code, &c.layout, kind, 5, true).unwrap();
                let got = simulated(&c, &code, kind, 5, true);
                assert_eq!(got.len(), 1, "{kind:?}");
                assert!(got[0].fidelity(&want).unwrap() > 1.0 - 1e-10, "{kind:?}");
            }
        }
    }

    #[test]
    fn pauli_form_equals_projector_form() {
        let code = CssCode::steane();
        let c = oracle_circuit(&code, 1).unwrap();
        let proj = analytic_state(&code, &c.layout, AnalyticKind::OneRound, 0, false).unwrap().entries().unwrap();
        let pauli_form = analytic_state(&code, &c.layout, AnalyticKind::OneRoundPauli, 0, false).unwrap().entries().unwrap();
        assert_eq!(proj.len(), pauli_form.len());
        for (x, y) in proj.iter().zip(&pauli_form) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).norm() < 1e-12);
        }
    }

    #[test]
    fn bad_arguments() {
        let code = CssCode::steane();
        let c = oracle_circuit(&code, 3).unwrap();
        assert!(analytic_state(&code, &c.layout, AnalyticKind::OneRound, 0, true).is_err());
        assert!(analytic_state(&code, &c.layout, AnalyticKind::Repeated { k: 3 }, 0, true).is_err());
        assert!(analytic_state(&code, &c.layout, AnalyticKind::Repeated { k: 0 }, 7, true).is_err());
    }
}
