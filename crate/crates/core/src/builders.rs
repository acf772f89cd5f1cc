//! Builders for the preparation circuits, cat states, error correction and
//! the logical Toffoli gate.
//!
//! Register naming: `T1`–`T3` Toffoli ancilla blocks, `A{r}` the parity
//! register of round `r`, `V{r}` its cat verification qubits, `S`/`VS` the
//! shared syndrome-extraction cat and its verification qubit, `D1`–`D3` data
//! blocks. Measurements leave qubits in |0>, so registers are reused without
//! explicit resets.
//!
//! Schedule: gates are placed as early as their qubits and classical inputs
//! allow; `barrier()` separates stages. Each preparation round starts after
//! the previous one has finished, with its cat prepared and verified just before
//! use.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use crate::circuit::{Circuit, CircuitError, Gate, GateKind};
use crate::code::CssCode;
use crate::expr::Expr;
use crate::layout::{Init, Layout, Qubit, RegisterRole};

/// ASAP scheduler producing a validated `Circuit`.
pub struct CircuitBuilder {
    circuit: Circuit,
    busy: Vec<usize>,
    ready: HashMap<String, usize>,
    floor: usize,
}

impl CircuitBuilder {
    pub fn new(name: &str, code: &str, layout: Layout) -> Self {
        let n = layout.num_qubits();
        let mut circuit = Circuit::empty(name, code);
        circuit.layout = layout;
        CircuitBuilder { circuit, busy: vec![0; n], ready: HashMap::new(), floor: 0 }
    }

    pub fn layout(&self) -> &Layout {
        &self.circuit.layout
    }

    pub fn reg(&self, name: &str) -> Vec<Qubit> {
        self.circuit.layout.register(name).expect("register exists").qubits()
    }

    fn cond_ready(&self, cond: Option<&Expr>) -> usize {
        cond.map(|c| c.vars().iter().map(|v| self.ready.get(v).copied().unwrap_or(0)).max().unwrap_or(0))
            .unwrap_or(0)
    }

    fn place(&mut self, mut gate: Gate) -> usize {
        let ts = gate
            .operands
            .iter()
            .map(|q| self.busy[q.index()])
            .max()
            .unwrap_or(0)
            .max(self.floor)
            .max(self.cond_ready(gate.condition.as_ref()));
        gate.timestep = ts;
        for q in &gate.operands {
            self.busy[q.index()] = ts + 1;
        }
        if let Some(b) = &gate.output {
            self.ready.insert(b.clone(), ts + 1);
        }
        self.circuit.gates.push(gate);
        ts
    }

    pub fn gate(&mut self, kind: GateKind, ops: &[Qubit], cond: Option<&Expr>) -> usize {
        let mut g = Gate::new(kind, ops, 0);
        g.condition = cond.cloned();
        self.place(g)
    }

    pub fn measure(&mut self, kind: GateKind, q: Qubit, bit: &str, cond: Option<&Expr>) {
        let mut g = Gate::new(kind, &[q], 0);
        g.condition = cond.cloned();
        g.output = Some(bit.to_string());
        self.place(g);
    }

    pub fn reject(&mut self, cond: Expr) {
        let mut g = Gate::new(GateKind::Reject, &[], 0);
        g.condition = Some(cond);
        self.place(g);
    }

    pub fn define(&mut self, name: &str, e: Expr) {
        let t = self.cond_ready(Some(&e));
        self.ready.insert(name.to_string(), t);
        self.circuit.lets.push((name.to_string(), e));
    }

    /// Later gates start after everything placed so far.
    pub fn barrier(&mut self) {
        self.floor = self.busy.iter().copied().max().unwrap_or(0).max(self.floor);
        let r = self.ready.values().copied().max().unwrap_or(0);
        self.floor = self.floor.max(r);
    }

    pub fn finish(mut self, outputs: &[&str], report: &[String], rounds: usize) -> Circuit {
        let mut used: Vec<usize> = self.circuit.gates.iter().map(|g| g.timestep).collect();
        used.sort();
        used.dedup();
        let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        for g in &mut self.circuit.gates {
            g.timestep = remap[&g.timestep];
        }
        self.circuit.gates.sort_by_key(|g| g.timestep);
        self.circuit.outputs = outputs.iter().map(|s| s.to_string()).collect();
        self.circuit.report = report.to_vec();
        self.circuit.rounds = rounds;
        self.circuit.validate().expect("builder produced an invalid circuit");
        self.circuit
    }
}

/// Verification pairs for the chain-prepared cat: each pair's parity is
/// measured onto one verification qubit.
fn verify_pairs(size: usize) -> Result<&'static [(usize, usize)], CircuitError> {
    match size {
        4 => Ok(&[(1, 3)]),
        7 => Ok(&[(1, 3), (3, 6)]),
        _ => Err(CircuitError::UnsupportedCatSize(size)),
    }
}

pub fn verify_qubits_for(size: usize) -> Result<usize, CircuitError> {
    verify_pairs(size).map(|p| p.len())
}

/// `|0...0> + |1...1>` on `cat` with post-selected verification.
fn append_cat(
    b: &mut CircuitBuilder,
    cat: &[Qubit],
    verify: &[Qubit],
    tag: &str,
    cond: Option<&Expr>,
) -> Result<(), CircuitError> {
    let pairs = verify_pairs(cat.len())?;
    b.gate(GateKind::H, &[cat[0]], cond);
    for w in cat.windows(2) {
        b.gate(GateKind::CX, &[w[0], w[1]], cond);
    }
    let mut bits = Vec::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        b.gate(GateKind::CX, &[cat[i], verify[k]], cond);
        b.gate(GateKind::CX, &[cat[j], verify[k]], cond);
        let bit = format!("{tag}_v{k}");
        b.measure(GateKind::MeasureZ, verify[k], &bit, cond);
        bits.push(Expr::name(bit));
    }
    b.reject(if bits.len() == 1 { bits.pop().unwrap() } else { Expr::Or(bits) });
    b.barrier();
    Ok(())
}

pub fn build_cat_prep(size: usize) -> Result<Circuit, CircuitError> {
    let nv = verify_qubits_for(size)?;
    let (cat, ver) = if size == 4 { ("S", "VS") } else { ("A1", "V1") };
    let mut l = Layout::new();
    l.add(cat, size, if size == 4 { RegisterRole::Syndrome } else { RegisterRole::Aux }, Init::Zero)?;
    l.add(ver, nv, RegisterRole::Verify, Init::Zero)?;
    let mut b = CircuitBuilder::new(&format!("cat{size}"), "trivial", l);
    let (c, v) = (b.reg(cat), b.reg(ver));
    append_cat(&mut b, &c, &v, "cat", None)?;
    Ok(b.finish(&[cat], &[], 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckType {
    /// Z-type checks, X corrections.
    BitFlip,
    /// X-type checks, Z corrections.
    PhaseFlip,
}

/// Shor-style extraction of one check type on `data` with the shared cat
/// pool, followed by the lookup correction. With `syndrome_rounds == 2` the
/// syndrome is measured twice and a third time only when the two disagree;
/// the third result is then used.
fn append_ec(
    b: &mut CircuitBuilder,
    code: &CssCode,
    data: &[Qubit],
    which: CheckType,
    tag: &str,
    syndrome_rounds: usize,
) -> Result<(), CircuitError> {
    if !(1..=2).contains(&syndrome_rounds) {
        return Err(CircuitError::InvalidSyndromeRounds(syndrome_rounds));
    }
    let (checks, table) = match which {
        CheckType::BitFlip => (&code.h_z, code.x_table()),
        CheckType::PhaseFlip => (&code.h_x, code.z_table()),
    };
    if checks.is_empty() {
        return Ok(());
    }
    let pool = b.reg("S");
    let pool_v = b.reg("VS");
    let extract = |b: &mut CircuitBuilder, rep: usize, cond: Option<&Expr>| -> Result<(), CircuitError> {
        for (c, &row) in checks.iter().enumerate() {
            let supp: Vec<Qubit> = (0..code.n).filter(|i| row >> i & 1 == 1).map(|i| data[i]).collect();
            if supp.len() != pool.len() {
                return Err(CircuitError::UnsupportedCatSize(supp.len()));
            }
            let name = format!("{tag}_r{rep}_c{c}");
            append_cat(b, &pool, &pool_v, &name, cond)?;
            let mut bits = Vec::new();
            match which {
                CheckType::BitFlip => {
                    for &s in &pool {
                        b.gate(GateKind::H, &[s], cond);
                    }
                    for (m, &q) in supp.iter().enumerate() {
                        b.gate(GateKind::CX, &[q, pool[m]], cond);
                    }
                    for (m, &s) in pool.iter().enumerate() {
                        let bit = format!("{name}_{m}");
                        b.measure(GateKind::MeasureZ, s, &bit, cond);
                        bits.push(bit);
                    }
                }
                CheckType::PhaseFlip => {
                    for (m, &q) in supp.iter().enumerate() {
                        b.gate(GateKind::CX, &[pool[m], q], cond);
                    }
                    for (m, &s) in pool.iter().enumerate() {
                        let bit = format!("{name}_{m}");
                        b.measure(GateKind::MeasureX, s, &bit, cond);
                        bits.push(bit);
                    }
                }
            }
            b.define(&name, Expr::par(bits));
        }
        Ok(())
    };
    let syn = |rep: usize, c: usize| Expr::name(format!("{tag}_r{rep}_c{c}"));
    extract(b, 1, None)?;
    let sel: Vec<Expr> = if syndrome_rounds == 2 {
        extract(b, 2, None)?;
        let dis = format!("{tag}_dis");
        b.define(&dis, Expr::Or((0..checks.len()).map(|c| Expr::Xor(vec![syn(1, c), syn(2, c)])).collect()));
        let dis_e = Expr::name(&dis);
        extract(b, 3, Some(&dis_e))?;
        (0..checks.len())
            .map(|c| {
                let n = format!("{tag}_c{c}");
                b.define(&n, Expr::Ite(Box::new(dis_e.clone()), Box::new(syn(3, c)), Box::new(syn(1, c))));
                Expr::name(n)
            })
            .collect()
    } else {
        (0..checks.len()).map(|c| syn(1, c)).collect()
    };
    let matches = |s: u64| -> Expr {
        Expr::And(
            sel.iter()
                .enumerate()
                .map(|(c, e)| if s >> c & 1 == 1 { e.clone() } else { Expr::Not(Box::new(e.clone())) })
                .collect(),
        )
    };
    let mut per_qubit: BTreeMap<usize, Vec<Expr>> = BTreeMap::new();
    for (s, e) in table {
        for q in 0..code.n {
            if e >> q & 1 == 1 {
                per_qubit.entry(q).or_default().push(matches(s));
            }
        }
    }
    let kind = match which {
        CheckType::BitFlip => GateKind::X,
        CheckType::PhaseFlip => GateKind::Z,
    };
    for (q, mut conds) in per_qubit {
        let cond = if conds.len() == 1 { conds.pop().unwrap() } else { Expr::Or(conds) };
        b.gate(kind, &[data[q]], Some(&cond));
    }
    Ok(())
}

fn pool_size(code: &CssCode) -> usize {
    code.h_x.iter().chain(&code.h_z).map(|r| r.count_ones() as usize).max().unwrap_or(0)
}

fn add_pool(l: &mut Layout, code: &CssCode) -> Result<(), CircuitError> {
    let w = pool_size(code);
    if w > 0 {
        l.add("S", w, RegisterRole::Syndrome, Init::Zero)?;
        l.add("VS", verify_qubits_for(w)?, RegisterRole::Verify, Init::Zero)?;
    }
    Ok(())
}

/// Standalone bit-flip correction of one block (`Init::Input`).
pub fn build_bfec(code: &CssCode, target_block: &str, syndrome_rounds: usize) -> Result<Circuit, CircuitError> {
    let mut l = Layout::new();
    l.add(target_block, code.n, RegisterRole::Block, Init::Input)?;
    add_pool(&mut l, code)?;
    let mut b = CircuitBuilder::new("bfec", &code.name, l);
    let data = b.reg(target_block);
    append_ec(&mut b, code, &data, CheckType::BitFlip, "bf", syndrome_rounds)?;
    Ok(b.finish(&[target_block], &[], 0))
}

/// Standalone bit- and phase-flip correction of one block.
pub fn build_ec(code: &CssCode, target_block: &str, syndrome_rounds: usize) -> Result<Circuit, CircuitError> {
    let mut l = Layout::new();
    l.add(target_block, code.n, RegisterRole::Block, Init::Input)?;
    add_pool(&mut l, code)?;
    let mut b = CircuitBuilder::new("ec", &code.name, l);
    let data = b.reg(target_block);
    append_ec(&mut b, code, &data, CheckType::BitFlip, "bf", syndrome_rounds)?;
    b.barrier();
    append_ec(&mut b, code, &data, CheckType::PhaseFlip, "pf", syndrome_rounds)?;
    Ok(b.finish(&[target_block], &[], 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrepOptions {
    pub rounds: usize,
    /// Bit-flip correction of T1–T3 between rounds.
    pub bfec: bool,
    /// Also phase-flip correction between rounds (requires `bfec`).
    pub pfec: bool,
    /// Measure every parity register at the very end and apply no vote or
    /// correction. Any round count is allowed.
    pub deferred_readout: bool,
    pub syndrome_rounds: usize,
}

impl PrepOptions {
    pub fn shor(rounds: usize) -> Self {
        PrepOptions { rounds, bfec: false, pfec: false, deferred_readout: false, syndrome_rounds: 2 }
    }

    pub fn modified(rounds: usize, insert_pfec: bool) -> Self {
        PrepOptions { bfec: true, pfec: insert_pfec, ..Self::shor(rounds) }
    }
}

fn prep_layout(code: &CssCode, opts: &PrepOptions, l: &mut Layout) -> Result<(), CircuitError> {
    for t in ["T1", "T2", "T3"] {
        l.add(t, code.n, RegisterRole::Block, Init::Plus)?;
    }
    for r in 1..=opts.rounds {
        l.add(&format!("A{r}"), code.n, RegisterRole::Aux, Init::Zero)?;
    }
    if code.n > 1 {
        let nv = verify_qubits_for(code.n)?;
        for r in 1..=opts.rounds {
            l.add(&format!("V{r}"), nv, RegisterRole::Verify, Init::Zero)?;
        }
    }
    Ok(())
}

fn logical_support(blk: &[Qubit], mask: u64) -> Vec<Qubit> {
    blk.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, q)| *q).collect()
}

/// Appends the preparation rounds; returns the report names.
fn append_prep(b: &mut CircuitBuilder, code: &CssCode, opts: &PrepOptions) -> Result<Vec<String>, CircuitError> {
    let n = code.n;
    let (t1, t2, t3) = (b.reg("T1"), b.reg("T2"), b.reg("T3"));
    let mut parities = Vec::new();
    for r in 1..=opts.rounds {
        b.barrier();
        let a = b.reg(&format!("A{r}"));
        if n > 1 {
            let v = b.reg(&format!("V{r}"));
            append_cat(b, &a, &v, &format!("cat{r}"), None)?;
            for &q in &a {
                b.gate(GateKind::H, &[q], None);
            }
        }
        for i in 0..n {
            b.gate(GateKind::CX, &[t3[i], a[i]], None);
        }
        for i in 0..n {
            b.gate(GateKind::CCX, &[t1[i], t2[i], a[i]], None);
        }
        let p = format!("p{r}");
        if !opts.deferred_readout {
            let bits: Vec<String> = (0..n).map(|i| format!("a{r}_{i}")).collect();
            for i in 0..n {
                b.measure(GateKind::MeasureZ, a[i], &bits[i], None);
            }
            b.define(&p, Expr::par(bits));
        }
        parities.push(p);
        if opts.bfec && r < opts.rounds {
            b.barrier();
            for (k, blk) in [&t1, &t2, &t3].into_iter().enumerate() {
                append_ec(b, code, blk, CheckType::BitFlip, &format!("bf{r}t{}", k + 1), opts.syndrome_rounds)?;
                if opts.pfec {
                    append_ec(b, code, blk, CheckType::PhaseFlip, &format!("pf{r}t{}", k + 1), opts.syndrome_rounds)?;
                }
            }
        }
    }
    if opts.deferred_readout {
        b.barrier();
        for r in 1..=opts.rounds {
            let a = b.reg(&format!("A{r}"));
            let bits: Vec<String> = (0..n).map(|i| format!("a{r}_{i}")).collect();
            for i in 0..n {
                b.measure(GateKind::MeasureZ, a[i], &bits[i], None);
            }
            b.define(&format!("p{r}"), Expr::par(bits));
        }
        return Ok(parities);
    }
    let vote = Expr::Maj(parities.iter().map(Expr::name).collect());
    b.define("vote", vote);
    let v = Expr::name("vote");
    for q in logical_support(&t3, code.logical_x) {
        b.gate(GateKind::X, &[q], Some(&v));
    }
    let mut report = parities;
    report.push("vote".into());
    Ok(report)
}

pub fn build_prep(code: &CssCode, opts: &PrepOptions) -> Result<Circuit, CircuitError> {
    if opts.rounds < 1 {
        return Err(CircuitError::InvalidRounds(opts.rounds));
    }
    if !opts.deferred_readout && opts.rounds % 2 == 0 {
        return Err(CircuitError::EvenRounds(opts.rounds));
    }
    if !(1..=2).contains(&opts.syndrome_rounds) {
        return Err(CircuitError::InvalidSyndromeRounds(opts.syndrome_rounds));
    }
    let mut l = Layout::new();
    prep_layout(code, opts, &mut l)?;
    if opts.bfec && opts.rounds > 1 {
        add_pool(&mut l, code)?;
    }
    let name = match (opts.bfec, opts.deferred_readout) {
        (_, true) => "shor_prep_deferred",
        (false, false) => "shor_prep",
        (true, false) => "modified_prep",
    };
    let mut b = CircuitBuilder::new(name, &code.name, l);
    let report = append_prep(&mut b, code, opts)?;
    Ok(b.finish(&["T1", "T2", "T3"], &report, opts.rounds))
}

pub fn build_shor_prep(code: &CssCode, rounds: usize) -> Result<Circuit, CircuitError> {
    build_prep(code, &PrepOptions::shor(rounds))
}

pub fn build_modified_prep(code: &CssCode, rounds: usize, insert_pfec: bool) -> Result<Circuit, CircuitError> {
    build_prep(code, &PrepOptions::modified(rounds, insert_pfec))
}

/// Logical value of a measured block as an expression: the parity of the
/// logical support after the lookup correction of the measured word.
fn decoded_measurement(b: &mut CircuitBuilder, code: &CssCode, reg: &str, which: CheckType, bits: &[String]) -> Expr {
    let (checks, table, logical) = match which {
        CheckType::BitFlip => (&code.h_z, code.x_table(), code.logical_z),
        CheckType::PhaseFlip => (&code.h_x, code.z_table(), code.logical_x),
    };
    let syn: Vec<Expr> = checks
        .iter()
        .enumerate()
        .map(|(c, &row)| {
            let n = format!("{}_s{c}", reg.to_lowercase());
            b.define(&n, Expr::par((0..code.n).filter(|i| row >> i & 1 == 1).map(|i| bits[i].clone())));
            Expr::name(n)
        })
        .collect();
    let matches = |s: u64| {
        Expr::And(
            syn.iter()
                .enumerate()
                .map(|(c, e)| if s >> c & 1 == 1 { e.clone() } else { Expr::Not(Box::new(e.clone())) })
                .collect(),
        )
    };
    let mut terms = Vec::new();
    for q in 0..code.n {
        if logical >> q & 1 == 1 {
            terms.push(Expr::name(&bits[q]));
            let flips: Vec<Expr> = table.iter().filter(|(_, e)| e >> q & 1 == 1).map(|(s, _)| matches(*s)).collect();
            if !flips.is_empty() {
                terms.push(Expr::Or(flips));
            }
        }
    }
    Expr::Xor(terms)
}

/// The logical Toffoli gate by teleportation through the prepared ancilla:
/// modified preparation, error correction, coupling to the data blocks,
/// data measurements and conditional Clifford corrections, final error
/// correction. Data enters on `D1`–`D3`, the result leaves on `T1`–`T3`.
pub fn build_full_toffoli(code: &CssCode) -> Result<Circuit, CircuitError> {
    let opts = PrepOptions::modified(2 * code.t + 1, false);
    let mut l = Layout::new();
    prep_layout(code, &opts, &mut l)?;
    add_pool(&mut l, code)?;
    for d in ["D1", "D2", "D3"] {
        l.add(d, code.n, RegisterRole::Block, Init::Input)?;
    }
    let mut b = CircuitBuilder::new("full_toffoli", &code.name, l);
    let mut report = append_prep(&mut b, code, &opts)?;
    let (t1, t2, t3) = (b.reg("T1"), b.reg("T2"), b.reg("T3"));
    let (d1, d2, d3) = (b.reg("D1"), b.reg("D2"), b.reg("D3"));
    let ec = |b: &mut CircuitBuilder, blocks: &[(&Vec<Qubit>, &str)], tag: &str| -> Result<(), CircuitError> {
        b.barrier();
        for (blk, name) in blocks {
            append_ec(b, code, blk, CheckType::BitFlip, &format!("{tag}b{name}"), 2)?;
            append_ec(b, code, blk, CheckType::PhaseFlip, &format!("{tag}p{name}"), 2)?;
        }
        Ok(())
    };
    ec(&mut b, &[(&t1, "t1"), (&t2, "t2"), (&t3, "t3")], "e")?;
    ec(&mut b, &[(&d1, "d1"), (&d2, "d2"), (&d3, "d3")], "e")?;
    b.barrier();
    for i in 0..code.n {
        b.gate(GateKind::CX, &[t1[i], d1[i]], None);
        b.gate(GateKind::CX, &[t2[i], d2[i]], None);
        b.gate(GateKind::CX, &[d3[i], t3[i]], None);
    }
    let names = |r: &str| -> Vec<String> { (0..code.n).map(|i| format!("{}_{i}", r.to_lowercase())).collect() };
    let (b1, b2, b3) = (names("D1"), names("D2"), names("D3"));
    for i in 0..code.n {
        b.measure(GateKind::MeasureZ, d1[i], &b1[i], None);
        b.measure(GateKind::MeasureZ, d2[i], &b2[i], None);
    }
    b.barrier();
    for i in 0..code.n {
        b.measure(GateKind::MeasureX, d3[i], &b3[i], None);
    }
    let m1 = decoded_measurement(&mut b, code, "D1", CheckType::BitFlip, &b1);
    b.define("m1", m1);
    let m2 = decoded_measurement(&mut b, code, "D2", CheckType::BitFlip, &b2);
    b.define("m2", m2);
    let m3 = decoded_measurement(&mut b, code, "D3", CheckType::PhaseFlip, &b3);
    b.define("m3", m3);
    let (e1, e2, e3) = (Expr::name("m1"), Expr::name("m2"), Expr::name("m3"));
    let e12 = Expr::And(vec![e1.clone(), e2.clone()]);
    b.barrier();
    for q in logical_support(&t1, code.logical_x) {
        b.gate(GateKind::X, &[q], Some(&e1));
    }
    for q in logical_support(&t2, code.logical_x) {
        b.gate(GateKind::X, &[q], Some(&e2));
    }
    for i in 0..code.n {
        b.gate(GateKind::CX, &[t2[i], t3[i]], Some(&e1));
    }
    for i in 0..code.n {
        b.gate(GateKind::CX, &[t1[i], t3[i]], Some(&e2));
    }
    for q in logical_support(&t3, code.logical_x) {
        b.gate(GateKind::X, &[q], Some(&e12));
    }
    for q in logical_support(&t3, code.logical_z) {
        b.gate(GateKind::Z, &[q], Some(&e3));
    }
    for i in 0..code.n {
        b.gate(GateKind::CZ, &[t1[i], t2[i]], Some(&e3));
    }
    ec(&mut b, &[(&t1, "t1"), (&t2, "t2"), (&t3, "t3")], "f")?;
    report.extend(["m1", "m2", "m3"].map(String::from));
    Ok(b.finish(&["T1", "T2", "T3"], &report, opts.rounds))
}

/// Two-qubit gates of the controlled-V decomposition of the Toffoli gate,
/// with `V = e^{-iπ/4} e^{iπ/4 X}` (so `V² = X`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoQubitGate {
    CV(usize, usize),
    CVdg(usize, usize),
    CX(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub gates: Vec<TwoQubitGate>,
}

pub fn v_matrix() -> [[Complex64; 2]; 2] {
    // e^{-iπ/4} (cos π/4 · I + i sin π/4 · X)
    let ph = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let s = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    [[ph * c, ph * s], [ph * s, ph * c]]
}

/// Controls on qubits 0 and 1, target 2.
pub fn build_toffoli_decomposition() -> Decomposition {
    use TwoQubitGate::*;
    Decomposition { gates: vec![CV(1, 2), CX(0, 1), CVdg(1, 2), CX(0, 1), CV(0, 2)] }
}

impl Decomposition {
    /// Dense 8×8 unitary; basis index bit `q` is qubit `q`.
    pub fn unitary(&self) -> [[Complex64; 8]; 8] {
        let mut u = [[Complex64::new(0.0, 0.0); 8]; 8];
        for (i, row) in u.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        let v = v_matrix();
        let vdg = [[v[0][0].conj(), v[1][0].conj()], [v[0][1].conj(), v[1][1].conj()]];
        for g in &self.gates {
            let mut m = [[Complex64::new(0.0, 0.0); 8]; 8];
            for col in 0..8usize {
                match *g {
                    TwoQubitGate::CX(c, t) => {
                        let out = if col >> c & 1 == 1 { col ^ 1 << t } else { col };
                        m[out][col] = Complex64::new(1.0, 0.0);
                    }
                    TwoQubitGate::CV(c, t) | TwoQubitGate::CVdg(c, t) => {
                        let mat = if matches!(g, TwoQubitGate::CV(..)) { v } else { vdg };
                        if col >> c & 1 == 0 {
                            m[col][col] = Complex64::new(1.0, 0.0);
                        } else {
                            let bit = col >> t & 1;
                            for out_bit in 0..2 {
                                let out = (col & !(1 << t)) | out_bit << t;
                                m[out][col] = mat[out_bit][bit];
                            }
                        }
                    }
                }
            }
            let mut next = [[Complex64::new(0.0, 0.0); 8]; 8];
            for i in 0..8 {
                for j in 0..8 {
                    next[i][j] = (0..8).map(|k| m[i][k] * u[k][j]).sum();
                }
            }
            u = next;
        }
        u
    }

    /// `decomposition` header, then one `CV a b` / `CVdg a b` / `CX a b`
    /// line per gate (control first).
    pub fn to_text(&self) -> String {
        let mut s = String::from("decomposition\n");
        for g in &self.gates {
            let (name, c, t) = match *g {
                TwoQubitGate::CV(c, t) => ("CV", c, t),
                TwoQubitGate::CVdg(c, t) => ("CVdg", c, t),
                TwoQubitGate::CX(c, t) => ("CX", c, t),
            };
            s.push_str(&format!("{name} {c} {t}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CircuitError> {
        let mut gates = Vec::new();
        let mut header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| CircuitError::Parse { line: i + 1, reason: reason.to_string() };
            if !header {
                if line != "decomposition" {
                    return Err(err("expected `decomposition`"));
                }
                header = true;
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err("expected `GATE CONTROL TARGET`"));
            }
            let q = |s: &str| s.parse::<usize>().ok().filter(|&q| q < 3).ok_or_else(|| err("qubits are 0, 1 or 2"));
            let (c, t) = (q(f[1])?, q(f[2])?);
            if c == t {
                return Err(err("control equals target"));
            }
            gates.push(match f[0] {
                "CV" => TwoQubitGate::CV(c, t),
                "CVdg" => TwoQubitGate::CVdg(c, t),
                "CX" => TwoQubitGate::CX(c, t),
                _ => return Err(err("unknown gate")),
            });
        }
        if !header {
            return Err(CircuitError::Parse { line: 1, reason: "empty decomposition".into() });
        }
        Ok(Decomposition { gates })
    }

    /// Output amplitudes for a basis input.
    pub fn apply_basis(&self, input: usize) -> [Complex64; 8] {
        let u = self.unitary();
        let mut out = [Complex64::new(0.0, 0.0); 8];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u[i][input];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unencoded_shor_prep_gate_counts() {
        let c = build_shor_prep(&CssCode::trivial(), 1).unwrap();
        assert_eq!(c.count(GateKind::CX), 1);
        assert_eq!(c.count(GateKind::CCX), 1);
        assert_eq!(c.count(GateKind::MeasureZ), 1);
        assert_eq!(c.count(GateKind::X), 1);
        assert_eq!(c.count(GateKind::H), 0);
        assert_eq!(c.num_timesteps(), 4);
    }

    #[test]
    fn round_checks() {
        let s = CssCode::steane();
        assert_eq!(build_shor_prep(&s, 0), Err(CircuitError::InvalidRounds(0)));
        assert_eq!(build_shor_prep(&s, 2), Err(CircuitError::EvenRounds(2)));
        let mut o = PrepOptions::shor(2);
        o.deferred_readout = true;
        assert!(build_prep(&s, &o).is_ok());
        assert!(build_cat_prep(5).is_err());
    }

    #[test]
    fn modified_prep_has_two_bfec_layers() {
        let s = CssCode::steane();
        let c = build_modified_prep(&s, 3, false).unwrap();
        let layers: std::collections::BTreeSet<String> = c
            .lets
            .iter()
            .filter_map(|(n, _)| n.strip_suffix("_dis").map(|p| p[..3].to_string()))
            .collect();
        assert_eq!(layers.into_iter().collect::<Vec<_>>(), vec!["bf1", "bf2"]);
        assert!(c.num_qubits() <= 128);
    }

    #[test]
    fn builders_are_deterministic_and_round_trip() {
        let s = CssCode::steane();
        for c in [
            build_shor_prep(&s, 3).unwrap(),
            build_modified_prep(&s, 3, true).unwrap(),
            build_full_toffoli(&s).unwrap(),
            build_cat_prep(7).unwrap(),
            build_bfec(&s, "D1", 2).unwrap(),
        ] {
            let text = c.to_text();
            let back = Circuit::from_text(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_text(), text);
        }
        assert_eq!(build_full_toffoli(&s).unwrap(), build_full_toffoli(&s).unwrap());
    }

    #[test]
    fn decomposition_text_round_trip() {
        let d = build_toffoli_decomposition();
        assert_eq!(Decomposition::from_text(&d.to_text()).unwrap(), d);
        assert!(Decomposition::from_text("decomposition\nCV 1 1\n").is_err());
    }

    #[test]
    fn decomposition_is_toffoli() {
        let u = build_toffoli_decomposition().unitary();
        let phase = u[0][0];
        for i in 0..8usize {
            for j in 0..8usize {
                let want = if i == j && i & 3 != 3 || i & 3 == 3 && j == i ^ 4 { phase } else { Complex64::new(0.0, 0.0) };
                assert!((u[i][j] - want).norm() < 1e-12, "{i} {j}");
            }
        }
        let v = v_matrix();
        let vv = [
            [v[0][0] * v[0][0] + v[0][1] * v[1][0], v[0][0] * v[0][1] + v[0][1] * v[1][1]],
            [v[1][0] * v[0][0] + v[1][1] * v[1][0], v[1][0] * v[0][1] + v[1][1] * v[1][1]],
        ];
        assert!(vv[0][0].norm() < 1e-15 && (vv[0][1] - 1.0).norm() < 1e-15);
        let out = build_toffoli_decomposition().apply_basis(0b011);
        assert!((out[0b111].norm() - 1.0).abs() < 1e-12);
    }
}
