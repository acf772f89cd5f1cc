use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tofprep::builders::{
    build_bfec, build_cat_prep, build_ec, build_full_toffoli, build_prep, build_toffoli_decomposition, Decomposition,
    PrepOptions,
};
use tofprep::circuit::{Circuit, Position};
use tofprep::code::CssCode;
use tofprep::fault::{analyze, AnalyzeOptions};
use tofprep::layout::Init;
use tofprep::pauli::parse_error;
use tofprep::rates::{format_sig, rate_table_with, threshold, NoiseParams, COLUMN_NAMES};
use tofprep::sim::{encode_basis, Amp, InjectedError, SimConfig, Simulator, SparseState, DEFAULT_BRANCH_CAP, DEFAULT_SUPPORT_CAP};

const EXIT_LOGICAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "tofprep", version, about = "Toffoli ancilla preparation: fault analysis and error-rate tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustive (or sampled) fault analysis of a preparation circuit.
    Analyze(AnalyzeArgs),
    /// Normalized Toffoli error-rate table by concatenation level.
    Rates(RatesArgs),
    /// Storage threshold of the concatenated code.
    Threshold(ThresholdArgs),
    /// Runs a circuit file, optionally with injected errors.
    Simulate(SimulateArgs),
    /// Prints a built circuit in the text format.
    DumpCircuit(DumpArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Construction {
    Shor,
    Modified,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value = "modified")]
    construction: Construction,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    /// Also correct phase flips between rounds (modified construction).
    #[arg(long)]
    pfec: bool,
    #[arg(long, default_value_t = 2)]
    syndrome_rounds: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    /// Number of sampled fault pairs for order 2.
    #[arg(long)]
    sample_budget: Option<usize>,
    /// Required when sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Run every fault pair for order 2.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "TOFPREP_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_CAP)]
    support_cap: usize,
    #[arg(long, default_value_t = DEFAULT_BRANCH_CAP)]
    branch_cap: usize,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RatesArgs {
    #[arg(long, default_value_t = 5)]
    levels: u32,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// `key = value` file overriding p_s, p_g, p_m, t_T, t_m.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Print full precision instead of two significant figures.
    #[arg(long)]
    unrounded: bool,
}

#[derive(clap::Args)]
struct ThresholdArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Circuit file, or a controlled-V decomposition file.
    file: PathBuf,
    /// Input for a register initialized as `input`: `REG=BITS`. Code
    /// blocks take one logical bit, other registers one bit per qubit. For a
    /// decomposition file, three bits for qubits 0, 1, 2.
    #[arg(long)]
    input: Vec<String>,
    /// Injected error `ERROR@TIMESTEP` or `ERROR@TIMESTEP:after`, e.g. `X[T3.2]@14`.
    #[arg(long)]
    inject: Vec<String>,
    /// Stop before this timestep.
    #[arg(long)]
    until: Option<usize>,
    /// Keep Hadamards lazy (auxiliaries are then dumped in the rotated basis
    /// only after being resolved).
    #[arg(long)]
    frame: bool,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_CAP)]
    support_cap: usize,
    #[arg(long, default_value_t = DEFAULT_BRANCH_CAP)]
    branch_cap: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dumpable {
    Shor,
    Modified,
    Deferred,
    FullToffoli,
    Cat,
    Bfec,
    Ec,
    Decomposition,
}

#[derive(clap::Args)]
struct DumpArgs {
    #[arg(long, value_enum)]
    construction: Dumpable,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long)]
    pfec: bool,
    #[arg(long, default_value_t = 2)]
    syndrome_rounds: usize,
    #[arg(long, default_value_t = 7)]
    cat_size: usize,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type Outcome = Result<u8, Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::DumpCircuit(a) => cmd_dump(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    let code = CssCode::steane();
    let mut opts = match a.construction {
        Construction::Shor => PrepOptions::shor(a.rounds),
        Construction::Modified => PrepOptions::modified(a.rounds, a.pfec),
    };
    if a.pfec && matches!(a.construction, Construction::Shor) {
        return Err(usage("--pfec applies to the modified construction"));
    }
    opts.syndrome_rounds = a.syndrome_rounds;
    let circuit = build_prep(&code, &opts).map_err(usage)?;
    if a.order == 1 && (a.sample_budget.is_some() || a.exhaustive) {
        return Err(usage("--sample-budget and --exhaustive apply to --order 2"));
    }
    if a.order == 2 {
        match (a.sample_budget, a.exhaustive) {
            (Some(_), true) => return Err(usage("--sample-budget and --exhaustive are exclusive")),
            (None, false) => return Err(usage("--order 2 needs --sample-budget or --exhaustive")),
            (Some(_), false) if a.seed.is_none() => return Err(usage("sampling needs --seed")),
            (Some(0), false) => eprintln!("warning: sample budget is 0, no scenarios will run"),
            _ => {}
        }
    }
    let workers = a.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return Err(usage("--workers must be positive"));
    }
    let options = AnalyzeOptions {
        order: a.order as usize,
        sample_budget: a.sample_budget,
        seed: a.seed.unwrap_or(0),
        workers,
        sim: SimConfig {
            support_cap: a.support_cap,
            branch_cap: a.branch_cap,
            hadamard_frame: true,
            ..SimConfig::default()
        },
        timing: a.timing,
    };
    let mut report = analyze(&circuit, &code, &options).map_err(runtime)?;
    let mut config = BTreeMap::new();
    config.insert("construction".to_string(), format!("{:?}", a.construction).to_lowercase());
    config.insert("rounds".into(), a.rounds.to_string());
    config.insert("pfec".into(), a.pfec.to_string());
    config.insert("syndrome_rounds".into(), a.syndrome_rounds.to_string());
    config.insert("order".into(), a.order.to_string());
    config.insert("sample_budget".into(), a.sample_budget.map(|b| b.to_string()).unwrap_or_else(|| "none".into()));
    config.insert("seed".into(), a.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()));
    config.insert("exhaustive".into(), a.exhaustive.to_string());
    config.insert("support_cap".into(), a.support_cap.to_string());
    config.insert("branch_cap".into(), a.branch_cap.to_string());
    report.config = config;
    let text = match a.format {
        Format::Json => report.to_json() + "\n",
        Format::Table => report.to_table(),
        Format::Csv => {
            let mut s = String::from("scenario,class,logical_probability,rejected_probability\n");
            for o in &report.offending {
                let _ = writeln!(s, "\"{}\",{},{},{}", o.label, o.class.as_str(), o.logical_probability, o.rejected_probability);
            }
            s
        }
    };
    emit(&text, a.output.as_ref())?;
    if let Some(t) = report.wall_clock_seconds {
        eprintln!("analysis took {t:.2} s");
    }
    Ok(if report.fault_tolerant && report.totals.failed == 0 {
        0
    } else if report.totals.logical > 0 {
        EXIT_LOGICAL
    } else {
        EXIT_RUNTIME
    })
}

fn cmd_rates(a: RatesArgs) -> Outcome {
    let params = match &a.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            NoiseParams::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => NoiseParams::default(),
    };
    let table = rate_table_with(&params, a.levels);
    let cell = |v: f64| if a.unrounded { format!("{v}") } else { format_sig(v, 2) };
    let text = match a.format {
        Format::Json => {
            let rows: Vec<Vec<f64>> = if a.unrounded {
                table.rows.iter().map(|r| r.to_vec()).collect()
            } else {
                table.rounded().iter().map(|r| r.to_vec()).collect()
            };
            let v = serde_json::json!({
                "schema": "tofprep.rates/1",
                "tool_version": env!("CARGO_PKG_VERSION"),
                "columns": COLUMN_NAMES,
                "params": table.params,
                "rows": rows,
            });
            serde_json::to_string_pretty(&v).map_err(runtime)? + "\n"
        }
        Format::Csv => {
            let mut s = format!("level,{}\n", COLUMN_NAMES.map(|c| c.replace(',', "_")).join(","));
            for (j, r) in table.rows.iter().enumerate() {
                let _ = writeln!(s, "{j},{}", r.map(cell).join(","));
            }
            s
        }
        Format::Table => {
            let mut s = format!("{:>5}", "level");
            for c in COLUMN_NAMES {
                let _ = write!(s, " {c:>8}");
            }
            s.push('\n');
            for (j, r) in table.rows.iter().enumerate() {
                let _ = write!(s, "{j:>5}");
                for v in r {
                    let _ = write!(s, " {:>8}", cell(*v));
                }
                s.push('\n');
            }
            s
        }
    };
    emit(&text, None)?;
    Ok(0)
}

fn cmd_threshold(a: ThresholdArgs) -> Outcome {
    let p = threshold();
    let text = match a.format {
        Format::Json => format!("{{\"p_th\": {p:e}, \"inverse\": {}}}\n", (1.0 / p).round()),
        Format::Csv => format!("p_th,inverse\n{p:e},{}\n", (1.0 / p).round()),
        Format::Table => format!("p_th = 1/{} = {:.4e}\n", (1.0 / p).round(), p),
    };
    emit(&text, None)?;
    Ok(0)
}

fn parse_bits(s: &str) -> Result<Vec<bool>, Failure> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(usage(format!("bad bit `{c}` in `{s}`"))),
        })
        .collect()
}

fn fmt_amp(x: f64) -> String {
    if x.abs() < 5e-13 {
        "0".into()
    } else {
        format!("{x:.12}")
    }
}

fn simulate_decomposition(d: &Decomposition, a: &SimulateArgs) -> Outcome {
    let bits = match a.input.as_slice() {
        [] => vec![false; 3],
        [one] => parse_bits(one.split_once('=').map(|x| x.1).unwrap_or(one))?,
        _ => return Err(usage("a decomposition takes one --input")),
    };
    if bits.len() != 3 {
        return Err(usage("a decomposition input has three bits"));
    }
    let idx = bits.iter().enumerate().fold(0, |m, (i, &b)| m | (b as usize) << i);
    let mut s = String::new();
    for (k, amp) in d.apply_basis(idx).iter().enumerate() {
        if amp.norm() > 1e-12 {
            let label: String = (0..3).map(|q| if k >> q & 1 == 1 { '1' } else { '0' }).collect();
            let _ = writeln!(s, "{label} {} {}", fmt_amp(amp.re), fmt_amp(amp.im));
        }
    }
    emit(&s, None)?;
    Ok(0)
}

fn input_state(circuit: &Circuit, code: &CssCode, inputs: &[String]) -> Result<Option<SparseState>, Failure> {
    let needs: Vec<String> =
        circuit.layout.registers().iter().filter(|r| r.init == Init::Input).map(|r| r.name.clone()).collect();
    if needs.is_empty() {
        if !inputs.is_empty() {
            return Err(usage("the circuit has no input registers"));
        }
        return Ok(None);
    }
    let mut given = BTreeMap::new();
    for i in inputs {
        let (reg, bits) = i.split_once('=').ok_or_else(|| usage(format!("expected REG=BITS, got `{i}`")))?;
        given.insert(reg.trim().to_string(), parse_bits(bits.trim())?);
    }
    let n = circuit.num_qubits();
    let mut state = SparseState::new(n);
    for name in &needs {
        let bits = given.remove(name).ok_or_else(|| usage(format!("missing --input for register {name}")))?;
        let reg = circuit.layout.register(name).map_err(usage)?;
        let part = if reg.size == code.n && bits.len() == 1 && code.n > 1 {
            encode_basis(code, &circuit.layout, &[(name, bits[0])]).map_err(runtime)?
        } else if bits.len() == reg.size {
            let key = bits.iter().enumerate().fold(0u128, |k, (i, &b)| k | (b as u128) << (reg.offset + i));
            SparseState::from_entries(n, vec![(key, Amp::new(1.0, 0.0))])
        } else {
            return Err(usage(format!("register {name} needs {} bits", reg.size)));
        };
        state = state.tensor(part).map_err(runtime)?;
    }
    if let Some(extra) = given.keys().next() {
        return Err(usage(format!("register {extra} is not an input register")));
    }
    Ok(Some(state))
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.file).map_err(|e| usage(format!("{}: {e}", a.file.display())))?;
    let first = text.lines().map(|l| l.split('#').next().unwrap().trim()).find(|l| !l.is_empty());
    if first == Some("decomposition") {
        let d = Decomposition::from_text(&text).map_err(|e| usage(format!("{}: {e}", a.file.display())))?;
        return simulate_decomposition(&d, &a);
    }
    let circuit = Circuit::from_text(&text).map_err(|e| usage(format!("{}: {e}", a.file.display())))?;
    let code = CssCode::builtin(&circuit.code).ok_or_else(|| usage(format!("unknown code `{}`", circuit.code)))?;
    let mut errors = Vec::new();
    for spec in &a.inject {
        let (err, at) = spec.rsplit_once('@').ok_or_else(|| usage(format!("expected ERROR@TIMESTEP, got `{spec}`")))?;
        let (ts, pos) = match at.split_once(':') {
            Some((t, "after")) => (t, Position::After),
            Some((t, "before")) => (t, Position::Before),
            Some(_) => return Err(usage(format!("bad position in `{spec}`"))),
            None => (at, Position::Before),
        };
        let timestep: usize = ts.trim().parse().map_err(|_| usage(format!("bad timestep in `{spec}`")))?;
        if timestep >= circuit.num_timesteps() {
            return Err(usage(format!("timestep {timestep} is past the end of the circuit")));
        }
        let error = parse_error(err, &circuit.layout, Some(&code)).map_err(usage)?;
        errors.push(InjectedError { timestep, position: pos, error });
    }
    let input = input_state(&circuit, &code, &a.input)?;
    let config = SimConfig {
        support_cap: a.support_cap,
        branch_cap: a.branch_cap,
        hadamard_frame: a.frame,
        ..SimConfig::default()
    };
    let sim = Simulator::new(&circuit, &code, config).map_err(runtime)?;
    let set = sim.run_until(input.as_ref(), a.until.unwrap_or(usize::MAX), &errors).map_err(runtime)?;
    let mut s = String::new();
    let many = set.branches.len() > 1 || set.rejected > 0.0;
    if set.rejected > 0.0 {
        let _ = writeln!(s, "# rejected {}", fmt_amp(set.rejected));
    }
    for (i, b) in set.branches.iter().enumerate() {
        if many {
            let rec: Vec<String> = circuit
                .report
                .iter()
                .filter_map(|n| sim.value(b, n).map(|v| format!("{n}={}", v as u8)))
                .collect();
            let _ = writeln!(s, "# branch {i} p={} {}", fmt_amp(b.prob), rec.join(" "));
        }
        s.push_str(&b.state.dump().map_err(runtime)?);
    }
    emit(&s, None)?;
    Ok(0)
}

fn cmd_dump(a: DumpArgs) -> Outcome {
    let code = CssCode::steane();
    let circuit = match a.construction {
        Dumpable::Decomposition => {
            emit(&build_toffoli_decomposition().to_text(), None)?;
            return Ok(0);
        }
        Dumpable::Shor | Dumpable::Modified | Dumpable::Deferred => {
            let mut o = match a.construction {
                Dumpable::Modified => PrepOptions::modified(a.rounds, a.pfec),
                _ => PrepOptions::shor(a.rounds),
            };
            o.deferred_readout = matches!(a.construction, Dumpable::Deferred);
            o.syndrome_rounds = a.syndrome_rounds;
            build_prep(&code, &o)
        }
        Dumpable::FullToffoli => build_full_toffoli(&code),
        Dumpable::Cat => build_cat_prep(a.cat_size),
        Dumpable::Bfec => build_bfec(&code, "D", a.syndrome_rounds),
        Dumpable::Ec => build_ec(&code, "D", a.syndrome_rounds),
    }
    .map_err(usage)?;
    emit(&circuit.to_text(), None)?;
    Ok(0)
}
