//! The `azul` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asm::assemble;
use crate::kernels::{Accelerator, KernelResult, LoadAudit, PcgOptions, Preconditioner};
use crate::machine::{Machine, MachineConfig, SimError, Stats};
use crate::noc::{Coord, Message};
use crate::oracle::{self, compare, compare_f32, ComparisonReport, OracleMode};
use crate::script::{parse_load_script, program_messages};
use crate::sparse::{coo_to_csr, generate, parse_matrix_market, CsrMatrix, PartitionSummary};

pub const SCHEMA_VERSION: u32 = 1;
/// Relative infinity-norm bar for f64 comparisons.
pub const F64_TOL: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(
    name = "azul",
    version,
    about = "Cycle-level simulator of the Azul sparse-solver accelerator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run y = A x on the device and check it against an oracle.
    RunSpmv(KernelArgs),
    /// Solve L x = b on the device and check it against an oracle.
    RunSptrsv(KernelArgs),
    /// Host-driven PCG with device SpMV.
    RunPcg(PcgArgs),
    /// Assemble per-tile programs, load, trigger and run to quiescence.
    RunProgram(ProgramArgs),
    /// Summarize the statistics in a JSON report.
    Stats { report: PathBuf },
}

#[derive(Args, Debug, Clone)]
struct MachineArgs {
    /// Grid shape as ROWSxCOLS.
    #[arg(long, default_value = "16x16", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 16)]
    fifo_depth: usize,
    #[arg(long, default_value_t = 50_000_000)]
    max_cycles: u64,
    /// Host messages per cycle during loading (unlimited if absent).
    #[arg(long)]
    host_rate: Option<usize>,
}

impl MachineArgs {
    fn config(&self) -> MachineConfig {
        MachineConfig {
            grid_rows: self.grid.0,
            grid_cols: self.grid.1,
            fifo_depth: self.fifo_depth,
            max_cycles: self.max_cycles,
            host_injection_rate: self.host_rate,
            count_load_phase: false,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleArg {
    SameOrder,
    F64,
}

impl From<OracleArg> for OracleMode {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::SameOrder => OracleMode::SameOrder,
            OracleArg::F64 => OracleMode::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecondArg {
    None,
    Jacobi,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    machine: MachineArgs,
    /// Matrix Market file.
    #[arg(long)]
    matrix: PathBuf,
    /// ones, random:SEED, or a file of whitespace-separated values.
    #[arg(long, default_value = "ones")]
    vector: String,
    #[arg(long, value_enum, default_value = "same-order")]
    oracle: OracleArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PcgArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Defaults to twice the matrix order.
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum, default_value = "jacobi")]
    preconditioner: PrecondArg,
}

#[derive(Args, Debug)]
struct ProgramArgs {
    #[command(flatten)]
    machine: MachineArgs,
    /// ROW,COL:PATH assembly for one tile; labels task0..task15 fill its lookup table.
    #[arg(long = "program")]
    programs: Vec<String>,
    /// Extra load script in `ROW COL TYPE ADDR DATA` hex lines.
    #[arg(long)]
    script: Option<PathBuf>,
    /// ROW,COL[:INDEX] tasks to start; defaults to task 0 on every programmed tile.
    #[arg(long = "trigger")]
    triggers: Vec<String>,
    /// ROW,COL:OFFSET:WORDS data memory range to include in the report.
    #[arg(long = "dump")]
    dumps: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid `{s}` is not ROWSxCOLS"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad grid dimension `{v}`"))
    };
    Ok((num(r)?, num(c)?))
}

fn parse_coord(s: &str) -> Result<Coord, String> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| format!("coordinate `{s}` is not ROW,COL"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad coordinate `{s}`"))
    };
    Ok(Coord::new(num(r)?, num(c)?))
}

fn parse_int(s: &str) -> Result<u32, String> {
    let s = s.trim();
    let r = match s.strip_prefix("0x") {
        Some(h) => u32::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|_| format!("bad number `{s}`"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub schema_version: u32,
    pub command: String,
    pub matrix: String,
    pub oracle: OracleMode,
    pub passed: bool,
    pub result: Vec<f32>,
    pub comparison: ComparisonReport,
    pub load: LoadAudit,
    pub data_messages: u64,
    pub partition: PartitionSummary,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcgReport {
    pub schema_version: u32,
    pub command: String,
    pub matrix: String,
    pub passed: bool,
    pub converged: bool,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub true_relative_residual: f64,
    /// Against a direct solve, or reference PCG above 512 unknowns.
    pub comparison: ComparisonReport,
    pub matrix_loads: usize,
    pub stats: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MailboxEntry {
    pub row: u8,
    pub col: u8,
    pub task_type: u8,
    pub addr: u16,
    pub data: u32,
}

impl From<&Message> for MailboxEntry {
    fn from(m: &Message) -> Self {
        let meta = m.meta();
        MailboxEntry {
            row: meta.row,
            col: meta.col,
            task_type: meta.task_type.code(),
            addr: meta.addr,
            data: m.data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmemDump {
    pub row: usize,
    pub col: usize,
    pub offset: u32,
    pub words: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub schema_version: u32,
    pub command: String,
    pub passed: bool,
    pub error: Option<String>,
    pub load_cycles: u64,
    pub mailbox: Vec<MailboxEntry>,
    pub dumps: Vec<DmemDump>,
    pub stats: Stats,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

pub fn load_matrix(path: &Path) -> Result<CsrMatrix, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let coo = parse_matrix_market(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(coo_to_csr(&coo))
}

/// Resolves `ones`, `random:SEED` or a path to a vector of length `n`.
pub fn load_vector(spec: &str, n: usize) -> Result<Vec<f32>, String> {
    if spec == "ones" {
        return Ok(vec![1.0; n]);
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed = seed
            .parse::<u64>()
            .map_err(|_| format!("bad seed `{seed}`"))?;
        return Ok(generate::random_vector(n, seed));
    }
    let text = fs::read_to_string(spec).map_err(|e| format!("{spec}: {e}"))?;
    let v: Vec<f32> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with(['#', '%']))
        .flat_map(str::split_whitespace)
        .map(|w| {
            w.parse::<f32>()
                .map_err(|_| format!("{spec}: bad value `{w}`"))
        })
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "{spec}: vector has {} entries, expected {n}",
            v.len()
        ));
    }
    Ok(v)
}

fn emit<T: Serialize>(report: &T, out: &Option<PathBuf>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report)? + "\n";
    match out {
        Some(p) => fs::write(p, json).map_err(|e| Failure(format!("{}: {e}", p.display()))),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn kernel_report(
    command: &str,
    args: &KernelArgs,
    run: KernelResult,
    reference: Vec<f32>,
    partition: PartitionSummary,
) -> Result<KernelReport, Failure> {
    let mode: OracleMode = args.oracle.into();
    let comparison = compare_f32(&run.output, &reference, F64_TOL)?;
    let passed = match mode {
        OracleMode::SameOrder => comparison.bitwise_equal,
        OracleMode::F64 => comparison.within_tol,
    };
    Ok(KernelReport {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        matrix: args.matrix.display().to_string(),
        oracle: mode,
        passed,
        result: run.output,
        comparison,
        load: run.load,
        data_messages: run.data_messages,
        partition,
        stats: run.stats,
    })
}

fn run_spmv(args: &KernelArgs) -> Result<bool, Failure> {
    let a = load_matrix(&args.matrix).map_err(Failure)?;
    let x = load_vector(&args.vector, a.n_cols).map_err(Failure)?;
    let mut acc = Accelerator::new(args.machine.config())?;
    let run = acc.run_spmv(&a, &x)?;
    let reference = oracle::spmv_ref(&a, &x, args.oracle.into())?;
    let summary = acc.spmv_partition().expect("resident partition").summary();
    let report = kernel_report("run-spmv", args, run, reference, summary)?;
    emit(&report, &args.out)?;
    Ok(report.passed)
}

fn run_sptrsv(args: &KernelArgs) -> Result<bool, Failure> {
    let l = load_matrix(&args.matrix).map_err(Failure)?;
    let b = load_vector(&args.vector, l.n_rows).map_err(Failure)?;
    let mut acc = Accelerator::new(args.machine.config())?;
    let run = acc.run_sptrsv(&l, &b)?;
    let reference = oracle::sptrsv_ref(&l, &b, args.oracle.into())?;
    let summary = acc
        .sptrsv_partition()
        .expect("resident partition")
        .summary();
    let report = kernel_report("run-sptrsv", args, run, reference, summary)?;
    emit(&report, &args.out)?;
    Ok(report.passed)
}

fn run_pcg(args: &PcgArgs) -> Result<bool, Failure> {
    let k = &args.kernel;
    let a = load_matrix(&k.matrix).map_err(Failure)?;
    let b: Vec<f64> = load_vector(&k.vector, a.n_rows)
        .map_err(Failure)?
        .into_iter()
        .map(f64::from)
        .collect();
    let pre = match args.preconditioner {
        PrecondArg::None => Preconditioner::None,
        PrecondArg::Jacobi => Preconditioner::Jacobi,
    };
    let opts = PcgOptions {
        tol: args.tol,
        max_iters: args.max_iters.unwrap_or(2 * a.n_rows),
        preconditioner: pre,
    };
    let mut acc = Accelerator::new(k.machine.config())?;
    let res = acc.run_pcg(&a, &b, &opts)?;
    let reference = if a.n_rows <= 512 {
        oracle::direct_solve_ref(&oracle::dense_f64(&a), &b)?
    } else {
        oracle::pcg_ref(&a, &b, args.tol * 1e-3, 10 * a.n_rows, pre).0
    };
    let comparison = compare(&res.x, &reference, F64_TOL)?;
    let report = PcgReport {
        schema_version: SCHEMA_VERSION,
        command: "run-pcg".into(),
        matrix: k.matrix.display().to_string(),
        passed: res.converged && comparison.within_tol,
        converged: res.converged,
        iterations: res.iterations,
        matrix_loads: res.loads.iter().filter(|l| l.matrix_data > 0).count(),
        x: res.x,
        residual_history: res.residual_history,
        true_relative_residual: res.true_relative_residual,
        comparison,
        stats: res.stats,
    };
    emit(&report, &k.out)?;
    Ok(report.passed)
}

fn run_program(args: &ProgramArgs) -> Result<bool, Failure> {
    let mut machine = Machine::new(args.machine.config())?;
    let mut script = Vec::new();
    let mut programmed = Vec::new();
    for spec in &args.programs {
        let (coord, path) = spec
            .split_once(':')
            .ok_or_else(|| Failure(format!("`{spec}` is not ROW,COL:PATH")))?;
        let coord = parse_coord(coord).map_err(Failure)?;
        let program =
            assemble(&read(Path::new(path))?).map_err(|e| Failure(format!("{path}: {e}")))?;
        script.extend(program_messages(coord, &program));
        programmed.push(coord);
    }
    if let Some(p) = &args.script {
        script.extend(
            parse_load_script(&read(p)?).map_err(|e| Failure(format!("{}: {e}", p.display())))?,
        );
    }
    let triggers: Vec<(Coord, usize)> = if args.triggers.is_empty() {
        programmed.iter().map(|&c| (c, 0)).collect()
    } else {
        args.triggers
            .iter()
            .map(|t| {
                let (c, i) = t.split_once(':').unwrap_or((t, "0"));
                Ok((parse_coord(c)?, parse_int(i)? as usize))
            })
            .collect::<Result<_, String>>()
            .map_err(Failure)?
    };
    let dumps: Vec<(Coord, u32, usize)> = args
        .dumps
        .iter()
        .map(|d| {
            let parts: Vec<&str> = d.split(':').collect();
            match parts[..] {
                [c, off, n] => Ok((parse_coord(c)?, parse_int(off)?, parse_int(n)? as usize)),
                _ => Err(format!("`{d}` is not ROW,COL:OFFSET:WORDS")),
            }
        })
        .collect::<Result<_, String>>()
        .map_err(Failure)?;

    machine.reset_stats();
    let load_cycles = machine.load_phase(&script)?;
    machine.start_tasks(&triggers)?;
    let error = match machine.run_until_quiescent() {
        Ok(_) => None,
        Err(e @ (SimError::DeadlockSuspected { .. } | SimError::TileHalted(_))) => {
            Some(e.to_string())
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let mut out_dumps = Vec::new();
    for (c, off, n) in dumps {
        if !machine.in_grid(c) {
            return Err(Failure(format!("dump coordinate {c} outside the grid")));
        }
        let tile = machine.tile(c);
        out_dumps.push(DmemDump {
            row: c.row,
            col: c.col,
            offset: off,
            words: (0..n).map(|k| tile.dmem_word(off + 4 * k as u32)).collect(),
        });
    }
    let report = ProgramReport {
        schema_version: SCHEMA_VERSION,
        command: "run-program".into(),
        passed: error.is_none(),
        error,
        load_cycles,
        mailbox: machine
            .read_host_mailbox()
            .iter()
            .map(MailboxEntry::from)
            .collect(),
        dumps: out_dumps,
        stats: machine.stats(),
    };
    emit(&report, &args.out)?;
    Ok(report.passed)
}

/// Human-readable cycle breakdown of a report's `stats` field.
pub fn summarize_stats(stats: &Stats) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "grid {}x{}, fifo depth {}",
        stats.grid_rows, stats.grid_cols, stats.fifo_depth
    );
    let _ = writeln!(
        s,
        "load cycles {}, exec cycles {}, total {}",
        stats.phases.load_cycles,
        stats.phases.exec_cycles,
        stats.total_cycles()
    );
    let _ = writeln!(
        s,
        "{:>4} {:>4} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "row", "col", "busy", "stall_send", "stall_recv", "idle", "ratio"
    );
    let mut agg = [0u64; 4];
    let mut identity_ok = true;
    for t in &stats.per_tile {
        if t.instructions == 0 {
            continue;
        }
        let active = t.busy + t.stall_send + t.stall_recv;
        let _ = writeln!(
            s,
            "{:>4} {:>4} {:>10} {:>10} {:>10} {:>10} {:>8.4}",
            t.row,
            t.col,
            t.busy,
            t.stall_send,
            t.stall_recv,
            t.idle,
            t.busy as f64 / active as f64
        );
        for (a, v) in agg
            .iter_mut()
            .zip([t.busy, t.stall_send, t.stall_recv, t.idle])
        {
            *a += v;
        }
    }
    for t in &stats.per_tile {
        identity_ok &= t.total() == stats.phases.exec_cycles || t.total() == stats.total_cycles();
    }
    let active = stats.per_tile.iter().filter(|t| t.instructions > 0).count();
    let _ = writeln!(s, "active tiles {active} of {}", stats.per_tile.len());
    let _ = writeln!(
        s,
        "aggregate busy {} stall_send {} stall_recv {} idle {}",
        agg[0], agg[1], agg[2], agg[3]
    );
    match stats.derived.compute_bound_ratio {
        Some(r) => {
            let _ = writeln!(s, "compute-bound ratio {r:.4}");
        }
        None => {
            let _ = writeln!(
                s,
                "compute-bound ratio n/a (no tile executed an instruction)"
            );
        }
    }
    let n = &stats.network;
    let _ = writeln!(
        s,
        "messages injected {} delivered {} to host {} hops {} max link utilization {:.4}",
        n.messages_injected,
        n.messages_delivered,
        n.messages_to_host,
        n.total_hops,
        n.max_link_utilization
    );
    let _ = writeln!(
        s,
        "cycle accounting {}",
        if identity_ok {
            "consistent"
        } else {
            "INCONSISTENT"
        }
    );
    s
}

fn run_stats(path: &Path) -> Result<bool, Failure> {
    let value: serde_json::Value = serde_json::from_str(&read(path)?)?;
    let stats = value
        .get("stats")
        .filter(|v| !v.is_null())
        .ok_or_else(|| Failure(format!("{}: no stats field", path.display())))?;
    let stats: Stats = serde_json::from_value(stats.clone())?;
    print!("{}", summarize_stats(&stats));
    Ok(true)
}

/// Runs the CLI and returns the process exit code: 0 when every check
/// passed, 1 when a check failed, 2 on errors.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::RunSpmv(a) => run_spmv(a),
        Command::RunSptrsv(a) => run_sptrsv(a),
        Command::RunPcg(a) => run_pcg(a),
        Command::RunProgram(a) => run_program(a),
        Command::Stats { report } => run_stats(report),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
