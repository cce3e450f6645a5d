//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use azul_sim::asm::assemble;
use azul_sim::kernels::{Accelerator, PcgOptions, Preconditioner};
use azul_sim::machine::{Machine, MachineConfig, SimError};
use azul_sim::noc::{
    neighbor, pack_metadata, route_next_hop, unpack_metadata, Coord, Direction, Message, TaskType,
};
use azul_sim::oracle::{
    compare, compare_f32, dense_f64, direct_solve_ref, spmv_ref, sptrsv_ref, OracleMode,
};
use azul_sim::script::program_messages;
use azul_sim::sparse::generate::{self, Case};
use azul_sim::sparse::{CsrMatrix, SptrsvPartition};
use azul_sim::tile::{Mode, TileState, LUT_ENTRIES, NUM_REGS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const GRIDS: [(usize, usize); 3] = [(1, 1), (2, 2), (4, 4)];

struct Outcome {
    pass: bool,
    detail: String,
    report: Value,
}

fn outcome(pass: bool, detail: impl Into<String>, report: Value) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
        report,
    }
}

fn architecture() -> Outcome {
    let cfg = MachineConfig::default();
    let m = Machine::new(cfg.clone()).unwrap();
    let tiles = m.tiles();
    let n_tiles = tiles.len();
    let mems = tiles
        .iter()
        .all(|t| t.imem_bytes() == 64 * 1024 && t.dmem_bytes() == 64 * 1024);
    let luts = tiles.iter().all(|t| t.lut().len() == 16);
    let mut probe = TileState::new(Coord::new(0, 0), 1);
    probe.set_reg(31, 0xdead_beef);
    let regs = NUM_REGS == 32 && probe.reg(31) == 0xdead_beef && LUT_ENTRIES == 16;
    // torus wrap: the west neighbour of column 0 is column 15, one hop away
    let west = route_next_hop(Coord::new(0, 0), Coord::new(0, 15), 16, 16);
    let wraps =
        west == Direction::West && neighbor(Coord::new(0, 0), west, 16, 16) == Coord::new(0, 15);
    let mut m = m;
    let meta = pack_metadata(0, 15, 4, 0).unwrap();
    let src = format!(
        "task0:\n    lui x1, {:#x}\n    send x1, x0\n    ret\n",
        meta >> 12
    );
    m.load_phase(&program_messages(
        Coord::new(0, 0),
        &assemble(&src).unwrap(),
    ))
    .unwrap();
    m.reset_stats();
    m.start_tasks(&[(Coord::new(0, 0), 0)]).unwrap();
    let hops = m.run_until_quiescent().unwrap().network.total_hops;
    let pass = cfg.grid_rows == 16
        && cfg.grid_cols == 16
        && n_tiles == 256
        && mems
        && luts
        && regs
        && wraps
        && hops == 1;
    outcome(
        pass,
        format!("{}x{} grid, {} tiles, 64 KB + 64 KB each, 32 regs, 16-entry LUT, wrap hop count {hops}", cfg.grid_rows, cfg.grid_cols, n_tiles),
        json!({"tiles": n_tiles, "mems": mems, "luts": luts, "regs": regs, "wraps": wraps, "wrap_hops": hops}),
    )
}

fn metadata() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut words: Vec<u32> = (0..1_000_000).map(|_| rng.gen()).collect();
    for row in [0u32, 1, 62, 63] {
        for col in [0u32, 1, 62, 63] {
            for ty in [0u32, 1, 14, 15] {
                for addr in [0u32, 1, 0x7fff, 0x8000, 0xfffe, 0xffff] {
                    words.push(row << 26 | col << 20 | ty << 16 | addr);
                }
            }
        }
    }
    let roundtrip = words.iter().filter(|&&w| {
        let m = unpack_metadata(w);
        pack_metadata(
            m.row as u32,
            m.col as u32,
            m.task_type.code() as u32,
            m.addr as u32,
        ) == Ok(w)
    });
    let ok = roundtrip.count();
    // field widths 6/6/4/16, most significant first
    let widths = pack_metadata(1, 0, 0, 0) == Ok(1 << 26)
        && pack_metadata(0, 1, 0, 0) == Ok(1 << 20)
        && pack_metadata(0, 0, 1, 0) == Ok(1 << 16)
        && pack_metadata(0, 0, 0, 1) == Ok(1)
        && pack_metadata(63, 63, 15, 0xffff) == Ok(u32::MAX)
        && pack_metadata(64, 0, 0, 0).is_err()
        && pack_metadata(0, 64, 0, 0).is_err()
        && pack_metadata(0, 0, 16, 0).is_err()
        && pack_metadata(0, 0, 0, 0x1_0000).is_err();
    outcome(
        ok == words.len() && widths,
        format!(
            "{ok}/{} words round-trip, field widths 6/6/4/16: {widths}",
            words.len()
        ),
        json!({"words": words.len(), "roundtrip": ok, "widths": widths}),
    )
}

fn algorithm_trace() -> Outcome {
    let c = Coord::new(0, 0);
    let mut t = TileState::new(c, 16);
    let prog = [
        (4, assemble("addi x1, x0, 5").unwrap().segments[0].words[0]),
        (8, assemble("lw x2, 0(x3)").unwrap().segments[0].words[0]),
        (12, assemble("ret").unwrap().segments[0].words[0]),
    ];
    let mut inbox: Vec<Message> = prog
        .iter()
        .map(|&(a, w)| Message::new(c, TaskType::WRITE_INSTR, a, w).unwrap())
        .collect();
    inbox.push(Message::new(c, TaskType::WRITE_DATA, 0, 0x1234).unwrap());
    inbox.push(Message::new(c, TaskType::WRITE_LUT, 1, 4).unwrap());
    inbox.push(Message::new(c, TaskType::START_TASK, 1, 0).unwrap());
    for m in inbox {
        t.inq.push(m).unwrap();
    }
    t.set_reg(3, 0x1_0000);
    let mut trace = Vec::new();
    for _ in 0..10 {
        t.step();
        trace.push((t.mode(), t.pc));
    }
    use Mode::*;
    let expected = vec![
        (Idle, 0),
        (Idle, 0),
        (Idle, 0),
        (Idle, 0),
        (Idle, 0),
        (Running, 4),
        (Running, 8),
        (Running, 12),
        (Idle, 0),
        (Idle, 0),
    ];
    let state = t.imem_word(4) == prog[0].1
        && t.dmem_word(0) == 0x1234
        && t.lut()[1] == 4
        && t.reg(1) == 5
        && t.reg(2) == 0x1234;
    let pass = trace == expected && state;
    outcome(
        pass,
        format!(
            "{} steps, trace matches: {}, memory/register state: {state}",
            trace.len(),
            trace == expected
        ),
        json!({"trace": trace.iter().map(|(m, pc)| format!("{m:?}@{pc}")).collect::<Vec<_>>()}),
    )
}

fn spmv_equivalence() -> Outcome {
    let corpus = generate::spmv_corpus();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for Case { name, matrix } in &corpus {
        let x = generate::random_vector(matrix.n_cols, 11);
        let same = spmv_ref(matrix, &x, OracleMode::SameOrder).unwrap();
        let wide = spmv_ref(matrix, &x, OracleMode::F64).unwrap();
        for (r, c) in GRIDS {
            let mut acc = Accelerator::new(MachineConfig::grid(r, c)).unwrap();
            match acc.run_spmv(matrix, &x) {
                Ok(run) => {
                    let bit = compare_f32(&run.output, &same, 1e-5).unwrap();
                    let f64c = compare_f32(&run.output, &wide, 1e-5).unwrap();
                    if !bit.bitwise_equal || !f64c.within_tol {
                        failures.push(format!("{name}@{r}x{c}"));
                    }
                    rows.push(json!({"matrix": name, "grid": [r, c], "bitwise": bit.bitwise_equal,
                        "f64_rel_inf": f64c.rel_inf_norm, "exec_cycles": run.stats.phases.exec_cycles}));
                }
                Err(e) => failures.push(format!("{name}@{r}x{c}: {e}")),
            }
        }
    }
    outcome(
        failures.is_empty() && corpus.len() >= 20,
        format!(
            "{} matrices x {} grids, failures: {:?}",
            corpus.len(),
            GRIDS.len(),
            failures
        ),
        Value::Array(rows),
    )
}

/// Distinct (consumer tile, column) pairs: the messages a block-row
/// partition needs.
fn cross_tile_pairs(l: &CsrMatrix, part: &SptrsvPartition) -> (usize, usize) {
    let owner = &part.row_owner;
    let mut pairs = BTreeSet::new();
    let mut nonzeros = 0;
    for i in 0..l.n_rows {
        for (j, _) in l.row(i) {
            if j != i && owner[i] != owner[j] {
                pairs.insert((owner[i], j));
                nonzeros += 1;
            }
        }
    }
    (pairs.len(), nonzeros)
}

fn sptrsv_equivalence() -> Outcome {
    let corpus = generate::sptrsv_corpus();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut deadlocks = 0;
    for Case { name, matrix } in &corpus {
        let b = generate::random_vector(matrix.n_rows, 13);
        let same = sptrsv_ref(matrix, &b, OracleMode::SameOrder).unwrap();
        for (r, c) in GRIDS {
            let mut acc = Accelerator::new(MachineConfig::grid(r, c)).unwrap();
            match acc.run_sptrsv(matrix, &b) {
                Ok(run) => {
                    let (pairs, nonzeros) =
                        cross_tile_pairs(matrix, acc.sptrsv_partition().unwrap());
                    let bit = compare_f32(&run.output, &same, 1e-5).unwrap();
                    if !bit.bitwise_equal || run.data_messages != pairs as u64 {
                        failures.push(format!("{name}@{r}x{c}"));
                    }
                    rows.push(json!({"matrix": name, "grid": [r, c], "bitwise": bit.bitwise_equal,
                        "messages": run.data_messages, "oracle_messages": pairs, "cross_tile_nonzeros": nonzeros,
                        "exec_cycles": run.stats.phases.exec_cycles}));
                }
                Err(e) => {
                    if matches!(
                        e,
                        azul_sim::kernels::KernelError::Sim(SimError::DeadlockSuspected { .. })
                    ) {
                        deadlocks += 1;
                    }
                    failures.push(format!("{name}@{r}x{c}: {e}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && deadlocks == 0,
        format!(
            "{} matrices x {} grids, deadlocks {deadlocks}, failures: {:?}",
            corpus.len(),
            GRIDS.len(),
            failures
        ),
        Value::Array(rows),
    )
}

fn pcg_convergence() -> Outcome {
    let cases = [
        ("tridiagonal64", generate::tridiagonal(64, 4.0, -1.0)),
        ("random_spd32", generate::random_spd(32, 0.2, 21)),
    ];
    let mut rows = Vec::new();
    let mut pass = true;
    for (name, a) in &cases {
        let n = a.n_rows;
        let b: Vec<f64> = generate::random_vector(n, 5)
            .into_iter()
            .map(f64::from)
            .collect();
        let mut acc = Accelerator::new(MachineConfig::grid(2, 2)).unwrap();
        let opts = PcgOptions {
            tol: 1e-6,
            max_iters: 2 * n,
            preconditioner: Preconditioner::Jacobi,
        };
        let res = acc.run_pcg(a, &b, &opts).unwrap();
        let direct = direct_solve_ref(&dense_f64(a), &b).unwrap();
        let cmp = compare(&res.x, &direct, 1e-5).unwrap();
        let final_res = res.residual_history.last().copied().unwrap_or(0.0);
        let ok = res.converged && final_res <= 1e-6 && res.iterations <= 2 * n && cmp.within_tol;
        pass &= ok;
        rows.push(json!({"matrix": name, "iterations": res.iterations, "relative_residual": final_res,
            "true_relative_residual": res.true_relative_residual, "x_rel_inf": cmp.rel_inf_norm, "ok": ok}));
    }
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "{} iters {} res {:.2e} x err {:.2e}",
                r["matrix"],
                r["iterations"],
                r["relative_residual"].as_f64().unwrap(),
                r["x_rel_inf"].as_f64().unwrap()
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail, Value::Array(rows))
}

fn reuse_audit() -> Outcome {
    let a = generate::random(64, 64, 0.1, 31);
    let mut acc = Accelerator::new(MachineConfig::grid(2, 2)).unwrap();
    let mut rows = Vec::new();
    let mut pass = true;
    for call in 1..=10 {
        let x = generate::random_vector(64, call);
        let run = acc.run_spmv(&a, &x).unwrap();
        let bitwise = run.output == spmv_ref(&a, &x, OracleMode::SameOrder).unwrap();
        if call > 1 {
            pass &=
                run.load.write_instr == 0 && run.load.matrix_data == 0 && run.load.write_lut == 0;
        } else {
            pass &= run.load.write_instr > 0 && run.load.matrix_data > 0;
        }
        pass &= bitwise;
        rows.push(json!({"call": call, "load": run.load, "bitwise": bitwise}));
    }
    let later: usize = rows[1..]
        .iter()
        .map(|r| {
            r["load"]["write_instr"].as_u64().unwrap() as usize
                + r["load"]["matrix_data"].as_u64().unwrap() as usize
        })
        .sum();
    outcome(
        pass,
        format!(
            "call 1 loads {} messages; calls 2..10 carry {later} WRITE_INSTR + matrix WRITE_DATA",
            rows[0]["load"]
        ),
        Value::Array(rows),
    )
}

fn compute_bound() -> Outcome {
    let mut busy = 0u64;
    let mut active = 0u64;
    let mut rows = Vec::new();
    for (k, n) in [4usize, 8, 12, 16].into_iter().enumerate() {
        let a = generate::dense(n, n, 40 + k as u64);
        let mut acc = Accelerator::new(MachineConfig::grid(2, 2)).unwrap();
        let run = acc.run_spmv(&a, &generate::random_vector(n, 3)).unwrap();
        for t in run.stats.per_tile.iter().filter(|t| t.instructions > 0) {
            busy += t.busy;
            active += t.busy + t.stall_send + t.stall_recv;
        }
        rows.push(json!({"n": n, "compute_bound_ratio": run.stats.derived.compute_bound_ratio}));
    }
    let ratio = busy as f64 / active as f64;
    outcome(
        ratio >= 0.5,
        format!("aggregate computeBoundRatio {ratio:.4} (floor 0.5)"),
        json!({"aggregate": ratio, "runs": rows}),
    )
}

fn watchdog() -> Outcome {
    let cfg = MachineConfig {
        max_cycles: 10_000,
        ..MachineConfig::grid(1, 2)
    };
    let mut m = Machine::new(cfg).unwrap();
    let prog = assemble("task0:\n    recv x2\n    send x2, x3\n    ret\n").unwrap();
    let mut script = program_messages(Coord::new(0, 0), &prog);
    script.extend(program_messages(Coord::new(0, 1), &prog));
    m.load_phase(&script).unwrap();
    m.start_tasks(&[(Coord::new(0, 0), 0), (Coord::new(0, 1), 0)])
        .unwrap();
    match m.run_until_quiescent() {
        Err(SimError::DeadlockSuspected {
            cycles,
            diagnostics,
        }) => {
            let modes: Vec<String> = diagnostics
                .tiles
                .iter()
                .map(|t| format!("{}:{:?}", t.coord, t.mode))
                .collect();
            let pass = diagnostics.tiles.len() == 2
                && diagnostics.tiles.iter().all(|t| t.mode == Mode::StallRecv);
            outcome(
                pass,
                format!("DeadlockSuspected after {cycles} cycles: {modes:?}"),
                json!({"cycles": cycles, "tiles": modes}),
            )
        }
        other => outcome(
            false,
            format!("expected DeadlockSuspected, got {other:?}"),
            Value::Null,
        ),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        (
            1,
            "architecture conformance",
            architecture,
            Duration::from_secs(1),
        ),
        (2, "metadata encoding", metadata, Duration::from_secs(5)),
        (
            3,
            "task loop trace",
            algorithm_trace,
            Duration::from_secs(1),
        ),
        (
            4,
            "SpMV bitwise equivalence",
            spmv_equivalence,
            Duration::from_secs(120),
        ),
        (
            5,
            "SpTRSV equivalence and liveness",
            sptrsv_equivalence,
            Duration::from_secs(120),
        ),
        (
            6,
            "PCG convergence",
            pcg_convergence,
            Duration::from_secs(60),
        ),
        (
            7,
            "inter-iteration reuse audit",
            reuse_audit,
            Duration::from_secs(60),
        ),
        (
            8,
            "compute-bound ratio",
            compute_bound,
            Duration::from_secs(60),
        ),
        (10, "deadlock watchdog", watchdog, Duration::from_secs(5)),
    ];
    let mut all = true;
    let mut reports = Vec::new();
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        all &= pass;
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.2}s, budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        reports.push((id, serde_json::to_string(&o.report).unwrap()));
    }

    // Determinism: two more runs of every criterion, byte-compared JSON.
    let mut mismatched = Vec::new();
    for _ in 0..2 {
        for (k, (id, _, f, _)) in criteria.iter().enumerate() {
            if serde_json::to_string(&f().report).unwrap() != reports[k].1 {
                mismatched.push(*id);
            }
        }
    }
    let det = mismatched.is_empty();
    all &= det;
    let bytes: usize = reports.iter().map(|r| r.1.len()).sum();
    println!(
        "criterion  9 [{}] determinism: 3 runs of criteria 1-8 and 10, {bytes} JSON bytes each, mismatches {:?}",
        if det { "PASS" } else { "FAIL" },
        mismatched
    );
    if !all {
        std::process::exit(1);
    }
}
