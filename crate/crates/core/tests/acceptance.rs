//! One pass/fail line per acceptance criterion; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;

use num_complex::Complex64;
use tofprep::analytic::{analytic_state, oracle_circuit, oracle_fault, readout_timestep, AnalyticKind};
use tofprep::builders::{build_full_toffoli, build_modified_prep, build_shor_prep, build_toffoli_decomposition, v_matrix};
use tofprep::circuit::{Circuit, GateKind, Position};
use tofprep::code::{validate_family, CssCode, LogicalClass};
use tofprep::fault::{analyze, decode_outputs, AnalysisReport, AnalyzeOptions};
use tofprep::pauli::{GeneralizedError, PauliLetter, PauliOperator};
use tofprep::rates::{base_toffoli_rates, rate_table, round_sig, threshold, NoiseParams, TABLE_REFERENCE_RATE};
use tofprep::sim::{encode, Amp, InjectedError, SimConfig, Simulator};

type Check = Result<String, String>;

const EXPECTED_TABLE: [[f64; 6]; 6] = [
    [6.5, 9.1, 20.0, 18.0, 13.0, 10.0],
    [5.9, 6.1, 8.3, 8.4, 7.8, 6.8],
    [5.8, 5.8, 7.2, 7.4, 7.3, 6.8],
    [5.8, 5.8, 7.1, 7.3, 7.3, 6.8],
    [5.8, 5.8, 7.1, 7.2, 7.3, 6.8],
    [5.8, 5.8, 7.1, 7.2, 7.3, 6.8],
];

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn rate_table_matches() -> Check {
    let start = std::time::Instant::now();
    let t = rate_table(5);
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for (j, (got, want)) in t.rounded().iter().zip(EXPECTED_TABLE).enumerate() {
        for c in 0..6 {
            if (got[c] - want[c]).abs() > 1e-9 {
                return Err(format!("level {j} column {c}: {} vs {}", got[c], want[c]));
            }
            worst = worst.max((t.rows[j][c] - want[c]).abs());
        }
    }
    if elapsed.as_secs_f64() >= 1.0 {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("36/36 entries after rounding, largest unrounded deviation {worst:.3}, {elapsed:?}"))
}

fn threshold_matches() -> Check {
    let p = threshold();
    if (p * 75873.0 - 1.0).abs() > 1e-12 {
        return Err(format!("p_th = {p:e}"));
    }
    if round_sig(p, 2) != 1.3e-5 {
        return Err(format!("p_th = {p:e} rounds to {:e}", round_sig(p, 2)));
    }
    Ok(format!("p_th = 1/75873 = {p:.4e}"))
}

fn level_zero_rates() -> Check {
    let r = base_toffoli_rates(&NoiseParams::uniform(TABLE_REFERENCE_RATE));
    let got = r.columns().map(|v| round_sig(v / 1e-5, 2));
    if got != EXPECTED_TABLE[0] {
        return Err(format!("{got:?}"));
    }
    Ok(format!("{got:?}"))
}

/// Number of CCX gates on `q` that come before the fault location.
fn rounds_before(c: &Circuit, q: tofprep::layout::Qubit, ts: usize, pos: Position) -> usize {
    c.gates
        .iter()
        .filter(|g| g.kind == GateKind::CCX && g.operands.contains(&q))
        .filter(|g| g.timestep < ts || (g.timestep == ts && pos == Position::After))
        .count()
}

fn counterexample(code: &CssCode) -> Check {
    let c = build_shor_prep(code, 3).map_err(|e| e.to_string())?;
    let opts = AnalyzeOptions { workers: workers(), ..AnalyzeOptions::default() };
    let r: AnalysisReport = analyze(&c, code, &opts).map_err(|e| e.to_string())?;
    if r.fault_tolerant {
        return Err("no logical-error scenario found".into());
    }
    for i in 0..code.n {
        let t3 = format!("X[T3.{i}]");
        if !r.offending.iter().any(|o| o.faults[0].error == t3 && (o.logical_probability - 1.0).abs() < 1e-9) {
            return Err(format!("no {t3} scenario with logical probability 1"));
        }
        for block in ["T1", "T2"] {
            let name = format!("X[{block}.{i}]");
            let q = c.layout.qubit(block, i).unwrap();
            let half = r.offending.iter().any(|o| {
                let f = &o.faults[0];
                f.error == name
                    && rounds_before(&c, q, f.timestep, f.position) >= 1
                    && (o.logical_probability - 0.5).abs() < 1e-9
            });
            if !half {
                return Err(format!("no {name} scenario with k >= 1 and logical probability 0.5"));
            }
        }
    }
    Ok(format!(
        "{} scenarios, {} logical, max logical probability {}",
        r.scenarios, r.totals.logical, r.max_logical_probability
    ))
}

fn certificate(code: &CssCode) -> Check {
    let c = build_modified_prep(code, 3, false).map_err(|e| e.to_string())?;
    let opts = AnalyzeOptions { workers: workers(), ..AnalyzeOptions::default() };
    let r = analyze(&c, code, &opts).map_err(|e| e.to_string())?;
    if r.totals.failed > 0 {
        return Err(format!("{} scenarios failed: {}", r.totals.failed, r.failures[0].error));
    }
    if r.totals.logical > 0 || r.max_logical_probability > 0.0 {
        return Err(format!("{} logical scenarios, first {}", r.totals.logical, r.offending[0].label));
    }
    Ok(format!("{} scenarios ({} simulated), 0 logical", r.scenarios, r.simulations))
}

fn oracle_states(code: &CssCode) -> Check {
    let mut worst: f64 = 1.0;
    let mut count = 0;
    for (rounds, kinds) in [
        (1, vec![AnalyticKind::OneRound, AnalyticKind::OneRoundPauli]),
        (3, vec![AnalyticKind::Repeated { k: 0 }, AnalyticKind::Repeated { k: 1 }]),
    ] {
        let c = oracle_circuit(code, rounds).map_err(|e| e.to_string())?;
        let sim = Simulator::new(&c, code, SimConfig { hadamard_frame: true, ..SimConfig::default() })
            .map_err(|e| e.to_string())?;
        let stop = readout_timestep(&c).ok_or("no readout")?;
        for kind in kinds {
            for i in 0..code.n {
                let loc = oracle_fault(&c, kind, i).ok_or("no fault location")?;
                let err = InjectedError {
                    timestep: loc.timestep,
                    position: loc.position,
                    error: GeneralizedError::single(PauliLetter::X, loc.qubit),
                };
                let set = sim.run_until(None, stop, &[err]).map_err(|e| e.to_string())?;
                let want = analytic_state(code, &c.layout, kind, i, true).map_err(|e| e.to_string())?;
                if set.branches.len() != 1 {
                    return Err(format!("{kind:?}: {} branches", set.branches.len()));
                }
                let f = set.branches[0].state.fidelity(&want).map_err(|e| e.to_string())?;
                worst = worst.min(f);
                count += 1;
                if f <= 1.0 - 1e-10 {
                    return Err(format!("{kind:?} on qubit {i}: fidelity {f}"));
                }
            }
        }
        if rounds == 1 {
            for i in 0..code.n {
                let a = analytic_state(code, &c.layout, AnalyticKind::OneRound, i, false).map_err(|e| e.to_string())?;
                let b = analytic_state(code, &c.layout, AnalyticKind::OneRoundPauli, i, false).map_err(|e| e.to_string())?;
                let (a, b) = (a.entries().map_err(|e| e.to_string())?, b.entries().map_err(|e| e.to_string())?);
                if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0 || (x.1 - y.1).norm() > 1e-12) {
                    return Err(format!("rewritten form differs on qubit {i}"));
                }
            }
        }
    }
    Ok(format!("{count} states, worst fidelity 1 - {:.1e}; rewritten form identical", 1.0 - worst))
}

fn decomposition_identity() -> Check {
    let u = build_toffoli_decomposition().unitary();
    let mut target = [[Complex64::new(0.0, 0.0); 8]; 8];
    for (i, row) in target.iter_mut().enumerate() {
        let j = if i & 3 == 3 { i ^ 4 } else { i };
        row[j] = Complex64::new(1.0, 0.0);
    }
    let phase = |a: &[[Complex64; 8]; 8], b: &[[Complex64; 8]; 8]| -> f64 {
        let (i, j) = (0..64).map(|k| (k / 8, k % 8)).find(|&(i, j)| b[i][j].norm() > 0.5).unwrap();
        let ph = a[i][j] / b[i][j];
        let mut dev: f64 = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                dev = dev.max((a[i][j] - ph * b[i][j]).norm());
            }
        }
        dev
    };
    let dev = phase(&u, &target);
    let v = v_matrix();
    let v2 = [
        [v[0][0] * v[0][0] + v[0][1] * v[1][0], v[0][0] * v[0][1] + v[0][1] * v[1][1]],
        [v[1][0] * v[0][0] + v[1][1] * v[1][0], v[1][0] * v[0][1] + v[1][1] * v[1][1]],
    ];
    let ph = v2[0][1];
    let vdev = [(v2[0][0]).norm(), (v2[1][1]).norm(), (v2[1][0] - ph).norm(), (ph.norm() - 1.0).abs()]
        .into_iter()
        .fold(0.0, f64::max);
    if dev >= 1e-12 || vdev >= 1e-12 {
        return Err(format!("deviation {dev:e}, V^2 deviation {vdev:e}"));
    }
    Ok(format!("max deviation {dev:.1e}, V^2 = X up to phase ({vdev:.1e})"))
}

fn toffoli_index(v: usize) -> usize {
    let (a, b, c) = (v & 1, v >> 1 & 1, v >> 2 & 1);
    a | b << 1 | (c ^ (a & b)) << 2
}

/// Output per `(m1, m2, m3)` record for an encoded data input, with the
/// lets in `flip` inverted.
fn toffoli_outputs(
    c: &Circuit,
    code: &CssCode,
    amps: &[Amp],
    flip: Option<&str>,
) -> Result<BTreeMap<(bool, bool, bool), Vec<Amp>>, String> {
    let mut cfg = SimConfig { hadamard_frame: true, ..SimConfig::default() };
    if let Some(f) = flip {
        cfg.flip_lets.insert(f.to_string());
    }
    let sim = Simulator::new(c, code, cfg).map_err(|e| e.to_string())?;
    let input = encode(code, &c.layout, &["D1", "D2", "D3"], amps).map_err(|e| e.to_string())?;
    let res = sim.run(Some(&input), &[]).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for (rec, _, v) in decode_outputs(c, code, &res).map_err(|e| e.to_string())? {
        out.entry((rec["m1"], rec["m2"], rec["m3"])).or_insert(v);
    }
    Ok(out)
}

fn inner(a: &[Amp], b: &[Amp]) -> Amp {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Blocks carrying X and Z components of the residual operators
/// `R_m = out_m · Toffoli⁻¹`, over all records `m`.
fn residual_support(c: &Circuit, code: &CssCode, flip: Option<&str>) -> Result<(BTreeSet<usize>, BTreeSet<usize>), String> {
    let basis = |v: usize| -> Vec<Amp> {
        let mut a = vec![Amp::new(0.0, 0.0); 8];
        a[v] = Amp::new(1.0, 0.0);
        a
    };
    let cols: Vec<_> = (0..8).map(|v| toffoli_outputs(c, code, &basis(v), flip)).collect::<Result<_, _>>()?;
    let mut phases: Vec<BTreeMap<(bool, bool, bool), Amp>> = vec![BTreeMap::new(); 8];
    for v in 1..8 {
        let mut a = vec![Amp::new(0.0, 0.0); 8];
        a[0] = Amp::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        a[v] = a[0];
        for (m, out) in toffoli_outputs(c, code, &a, flip)? {
            let x = inner(&cols[0][&m], &out);
            let y = inner(&cols[v][&m], &out);
            if (x.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() > 1e-9 || (y.norm() - x.norm()).abs() > 1e-9 {
                return Err(format!("record {m:?} is not a linear image of the input"));
            }
            phases[v].insert(m, y / x / (y / x).norm());
        }
    }
    let (mut xs, mut zs) = (BTreeSet::new(), BTreeSet::new());
    for m in cols[0].keys() {
        // R[:, toffoli(v)] = col_v with the phase fixed relative to col_0.
        let mut r = [[Amp::new(0.0, 0.0); 8]; 8];
        for v in 0..8 {
            let ph = if v == 0 { Amp::new(1.0, 0.0) } else { phases[v][m] };
            for (row, a) in cols[v][m].iter().enumerate() {
                r[row][toffoli_index(v)] = a * ph;
            }
        }
        for px in 0..8usize {
            for pz in 0..8usize {
                // tr(P† R) / 8 with P = X^px Z^pz.
                let mut t = Amp::new(0.0, 0.0);
                for col in 0..8usize {
                    let sign = if (col & pz).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                    t += r[col ^ px][col] * sign;
                }
                if t.norm() / 8.0 > 1e-9 {
                    xs.extend((0..3).filter(|j| px >> j & 1 == 1).map(|j| j + 1));
                    zs.extend((0..3).filter(|j| pz >> j & 1 == 1).map(|j| j + 1));
                }
            }
        }
    }
    Ok((xs, zs))
}

fn logical_toffoli(code: &CssCode) -> Check {
    let c = build_full_toffoli(code).map_err(|e| e.to_string())?;
    let mut worst: f64 = 1.0;
    for v in 0..8 {
        let mut a = vec![Amp::new(0.0, 0.0); 8];
        a[v] = Amp::new(1.0, 0.0);
        for (_, out) in toffoli_outputs(&c, code, &a, None)? {
            let f = out[toffoli_index(v)].norm_sqr();
            worst = worst.min(f);
            if f <= 1.0 - 1e-9 {
                return Err(format!("input {v:03b}: fidelity {f}"));
            }
        }
    }
    let (xs, zs) = residual_support(&c, code, None)?;
    if !xs.is_empty() || !zs.is_empty() {
        return Err(format!("noiseless residual has support {xs:?} {zs:?}"));
    }
    let expected = [
        ("m1", vec![1, 3], vec![2]),
        ("m2", vec![2, 3], vec![1]),
        ("m3", vec![], vec![1, 2, 3]),
    ];
    let mut found = Vec::new();
    for (bit, x, z) in expected {
        let (xs, zs) = residual_support(&c, code, Some(bit))?;
        if xs.into_iter().collect::<Vec<_>>() != x || zs.into_iter().collect::<Vec<_>>() != z {
            return Err(format!("flipping {bit}: bit flips {x:?} and phase flips {z:?} expected"));
        }
        found.push(format!("{bit}: bit {x:?} ph {z:?}"));
    }
    Ok(format!("8/8 inputs, worst fidelity 1 - {:.1e}; {}", 1.0 - worst, found.join("; ")))
}

fn code_invariants(code: &CssCode) -> Check {
    if !validate_family(code) {
        return Err("validate_family failed".into());
    }
    let mut checked = 0;
    for q in 0..code.n {
        for l in PauliLetter::ALL {
            let e = PauliOperator::single(code.n, q, l);
            let fix = code.decode(&code.syndrome(&e)).map_err(|e| e.to_string())?;
            let residual = fix.compose(&e);
            let class = code.logical_effect(&residual).map_err(|e| e.to_string())?;
            if class != LogicalClass::I {
                return Err(format!("{l:?} on qubit {q} leaves {class:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked}/21 single-qubit errors corrected"))
}

fn main() -> ExitCode {
    let code = CssCode::steane();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("normalized Toffoli rate table, levels 0-5", Box::new(rate_table_matches)),
        ("threshold", Box::new(threshold_matches)),
        ("level-0 Toffoli rates", Box::new(level_zero_rates)),
        ("unverified preparation is not fault-tolerant", Box::new(|| counterexample(&CssCode::steane()))),
        ("modified preparation is fault-tolerant", Box::new(|| certificate(&CssCode::steane()))),
        ("analytic erroneous states", Box::new(|| oracle_states(&CssCode::steane()))),
        ("controlled-V decomposition", Box::new(decomposition_identity)),
        ("logical Toffoli truth table and readout flips", Box::new(|| logical_toffoli(&CssCode::steane()))),
        ("Steane code invariants", Box::new(move || code_invariants(&code))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let r = check();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
