//! Kernel generation and host orchestration: SpMV, SpTRSV and PCG.
//!
//! Both kernels run one generic program per tile; everything
//! tile-specific (tables, CSR records, slot addresses, message metadata)
//! lives in the tile's data memory, starting with a small header.
//!
//! SpMV runs in send phases followed by one compute task. In each phase
//! the sending tiles and the receiving tiles are disjoint, and the host
//! waits for quiescence in between, so every incoming x value lands in an
//! idle tile and is written straight to the slot named by the message
//! address. No tile ever blocks on a busy receiver. The compute task
//! multiplies the owned rows and reports DONE.
//!
//! SpTRSV runs as a single counter-driven task. Messages only travel from
//! lower to higher tile index, and each tile first wakes the next lower
//! row-owning tile, so consumers are always running before their
//! producers send. A tile holds its results back until every message it
//! expects has arrived, then streams them. A tile blocked on a send thus
//! never has traffic still heading for it, so a full input queue cannot
//! close a cycle through the network.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{assemble, AsmProgram};
use crate::machine::{Machine, MachineConfig, SimError, Stats};
use crate::noc::{pack_metadata, Coord, Message, TaskType, HOST};
use crate::sparse::{
    partition_spmv, partition_sptrsv, CapacityError, CsrMatrix, PartitionOptions, SparseError,
    SpmvPartition, SptrsvPartition, SPMV_HEADER_WORDS, SPMV_MAX_PHASES, SPTRSV_HEADER_WORDS,
};
use crate::tile::DATA_BASE;

pub const SPMV_COMPUTE: usize = 0;
/// LUT entry of send phase `p` is `SPMV_SEND_PHASE0 + p`.
pub const SPMV_SEND_PHASE0: usize = 1;
pub const SPTRSV_SOLVE: usize = 0;

const SPMV_BODY: &str = "\
send_phase:
    lui x10, 0x10
    add x9, x9, x10
    lw x11, 20(x9)      # sends in this phase
    lw x12, 24(x9)      # first (slot address, metadata) pair
send_loop:
    beq x11, x0, send_end
    lw x13, 0(x12)
    lw x14, 4(x12)
    lw x15, 0(x13)
    send x14, x15
    addi x12, x12, 8
    addi x11, x11, -1
    jal x0, send_loop
send_end:
    ret
compute:
    lui x10, 0x10
    lw x11, 0(x10)
    lw x12, 4(x10)
    lw x13, 8(x10)
row_loop:
    beq x11, x0, rows_end
    lw x14, 0(x12)
    lw x15, 4(x12)
    addi x16, x0, 0
nz_loop:
    beq x14, x15, nz_end
    lw x17, 0(x14)      # value
    lw x18, 4(x14)      # address of x[col]
    lw x19, 0(x18)
    fmul x20, x17, x19
    fadd x16, x16, x20
    addi x14, x14, 8
    jal x0, nz_loop
nz_end:
    sw x16, 0(x13)
    addi x13, x13, 4
    addi x12, x12, 4
    addi x11, x11, -1
    jal x0, row_loop
rows_end:
    lw x21, 12(x10)
    lw x22, 16(x10)
    beq x22, x0, done
    send x21, x22
done:
    ret
";

/// SpMV program source: one two-instruction stub per send phase, each
/// selecting its header pair and entering the shared send loop.
pub fn spmv_source() -> String {
    let mut src = String::from(
        "# header: n_rows rowptr_ptr y_ptr done_meta done_rows (n_sends table_ptr)*\n",
    );
    for p in 0..SPMV_MAX_PHASES {
        src += &format!(
            "phase{p}:\n    addi x9, x0, {}\n    jal x0, send_phase\n",
            8 * p
        );
    }
    src + SPMV_BODY
}

pub const SPTRSV_PROGRAM: &str = "\
# header: wake_meta has_wake n_rows first_record done_meta done_rows n_recv
# row record: counter init b inv_diag x_addr n_off n_sends (value addr)* meta*
# receive record: x n_deps counter_addr*
solve:
    lui x10, 0x10
    lw x11, 0(x10)
    lw x12, 4(x10)
    beq x12, x0, woken
    send x11, x0        # wake the next lower tile
woken:
    lw x13, 8(x10)
    lw x14, 12(x10)
    lw x28, 24(x10)     # messages still to receive
    addi x29, x14, 0    # first row whose results are unsent
row_loop:
    beq x13, x0, rows_end
wait:
    lw x16, 0(x14)
    beq x16, x0, ready
    recv x20
    addi x28, x28, -1
    slli x22, x20, 16
    srli x22, x22, 16
    add x22, x22, x10
    sw x21, 0(x22)
    lw x23, 4(x22)
    addi x24, x22, 8
dep_loop:
    beq x23, x0, wait
    lw x25, 0(x24)
    lw x26, 0(x25)
    addi x26, x26, -1
    sw x26, 0(x25)
    addi x24, x24, 4
    addi x23, x23, -1
    jal x0, dep_loop
ready:
    lw x16, 4(x14)
    sw x16, 0(x14)      # rearm the counter for the next solve
    addi x16, x0, 0
    lw x17, 20(x14)
    addi x18, x14, 28
nz_loop:
    beq x17, x0, nz_end
    lw x19, 0(x18)
    lw x25, 4(x18)
    lw x26, 0(x25)
    fmul x27, x19, x26
    fadd x16, x16, x27
    addi x18, x18, 8
    addi x17, x17, -1
    jal x0, nz_loop
nz_end:
    lw x19, 8(x14)
    fsub x19, x19, x16
    lw x25, 12(x14)
    fmul x19, x19, x25
    lw x26, 16(x14)
    sw x19, 0(x26)
    lw x17, 24(x14)
    slli x17, x17, 2
    add x14, x18, x17   # next record
    addi x13, x13, -1
    bne x28, x0, row_loop   # hold results while messages are still due
    jal x1, flush
    jal x0, row_loop
rows_end:
    jal x1, flush
    lw x21, 16(x10)
    lw x22, 20(x10)
    send x21, x22
    ret
# Sends the results of every row from x29 up to x14.
flush:
    beq x29, x14, flush_end
    lw x17, 20(x29)
    lw x19, 16(x29)
    lw x19, 0(x19)
    lw x24, 24(x29)
    slli x17, x17, 3
    add x18, x29, x17
    addi x18, x18, 28
flush_send:
    beq x24, x0, flush_next
    lw x27, 0(x18)
    send x27, x19
    addi x18, x18, 4
    addi x24, x24, -1
    jal x0, flush_send
flush_next:
    addi x29, x18, 0
    jal x0, flush
flush_end:
    jalr x0, 0(x1)
";

fn program(src: &'static str, cell: &'static OnceLock<AsmProgram>) -> &'static AsmProgram {
    cell.get_or_init(|| assemble(src).expect("kernel program assembles"))
}

pub fn spmv_program() -> &'static AsmProgram {
    static P: OnceLock<AsmProgram> = OnceLock::new();
    P.get_or_init(|| assemble(&spmv_source()).expect("kernel program assembles"))
}

pub fn sptrsv_program() -> &'static AsmProgram {
    static P: OnceLock<AsmProgram> = OnceLock::new();
    program(SPTRSV_PROGRAM, &P)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Spmv,
    Sptrsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileImage {
    pub coord: Coord,
    /// Instruction words from address 0.
    pub imem: Vec<u32>,
    pub lut: Vec<(usize, u16)>,
    /// Data words from offset 0, with input slots left zero.
    pub data: Vec<u32>,
    /// (byte offset, vector index) of every input entry this tile holds.
    pub inputs: Vec<(u32, usize)>,
    /// (byte offset, vector index) of every output entry.
    pub outputs: Vec<(u32, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelImage {
    pub kind: KernelKind,
    pub tiles: Vec<TileImage>,
    /// Host triggers, one list per task round.
    pub rounds: Vec<Vec<(Coord, usize)>>,
    pub expected_done: usize,
    pub input_len: usize,
    pub output_len: usize,
}

/// Classification of the messages in one load script.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadAudit {
    pub write_instr: usize,
    pub write_lut: usize,
    pub matrix_data: usize,
    pub vector_data: usize,
}

impl LoadAudit {
    pub fn total(&self) -> usize {
        self.write_instr + self.write_lut + self.matrix_data + self.vector_data
    }
}

fn msg(dest: Coord, ty: TaskType, addr: u32, data: u32) -> Message {
    Message::new(dest, ty, addr as u16, data).expect("image addresses fit the metadata")
}

impl KernelImage {
    /// Everything: program, lookup table, matrix data and the input vector.
    pub fn full_load_script(&self, input: &[f32]) -> (Vec<Message>, LoadAudit) {
        let mut script = Vec::new();
        let mut audit = LoadAudit::default();
        for t in &self.tiles {
            for (k, &w) in t.imem.iter().enumerate() {
                script.push(msg(t.coord, TaskType::WRITE_INSTR, 4 * k as u32, w));
                audit.write_instr += 1;
            }
            for &(i, pc) in &t.lut {
                script.push(msg(t.coord, TaskType::WRITE_LUT, i as u32, pc as u32));
                audit.write_lut += 1;
            }
            for (k, &w) in t.data.iter().enumerate() {
                let off = 4 * k as u32;
                if t.inputs.binary_search_by_key(&off, |&(o, _)| o).is_err() {
                    script.push(msg(t.coord, TaskType::WRITE_DATA, off, w));
                    audit.matrix_data += 1;
                }
            }
        }
        let (vec, v_audit) = self.vector_load_script(input);
        script.extend(vec);
        audit.vector_data = v_audit.vector_data;
        (script, audit)
    }

    /// Only the input vector entries.
    pub fn vector_load_script(&self, input: &[f32]) -> (Vec<Message>, LoadAudit) {
        let mut script = Vec::new();
        for t in &self.tiles {
            for &(off, i) in &t.inputs {
                script.push(msg(t.coord, TaskType::WRITE_DATA, off, input[i].to_bits()));
            }
        }
        let audit = LoadAudit {
            vector_data: script.len(),
            ..LoadAudit::default()
        };
        (script, audit)
    }

    /// Reads the output vector out of tile data memories.
    pub fn gather(&self, machine: &Machine) -> Vec<f32> {
        let mut out = vec![0.0f32; self.output_len];
        for t in &self.tiles {
            let tile = machine.tile(t.coord);
            for &(off, i) in &t.outputs {
                out[i] = f32::from_bits(tile.dmem_word(off));
            }
        }
        out
    }
}

fn check_program(
    p: &AsmProgram,
    opts: &PartitionOptions,
    coord: Coord,
) -> Result<Vec<u32>, CapacityError> {
    let words: Vec<u32> = p
        .segments
        .iter()
        .flat_map(|s| s.words.iter().copied())
        .collect();
    opts.check_imem(coord, 4 * words.len())?;
    Ok(words)
}

fn done_meta() -> u32 {
    pack_metadata(
        HOST.row as u32,
        HOST.col as u32,
        TaskType::DONE.code() as u32,
        0,
    )
    .expect("host metadata")
}

pub fn gen_spmv(part: &SpmvPartition, m: &CsrMatrix) -> Result<KernelImage, CapacityError> {
    let prog = spmv_program();
    let entry = |name: &str| prog.symbol(name).expect("entry label") as u16;
    let mut lut = vec![(SPMV_COMPUTE, entry("compute"))];
    for p in 0..SPMV_MAX_PHASES {
        lut.push((SPMV_SEND_PHASE0 + p, entry(&format!("phase{p}"))));
    }
    let mut tiles = Vec::with_capacity(part.tiles.len());
    let mut rounds = vec![Vec::new(); SPMV_MAX_PHASES + 1];
    for t in &part.tiles {
        let active = !t.rows.is_empty() || !t.sends.is_empty();
        if !active {
            continue;
        }
        let imem = check_program(prog, &part.options, t.coord)?;
        let l = &t.layout;
        let abs = |off: u32| DATA_BASE + off;
        let mut data = vec![
            t.rows.len() as u32,
            abs(l.row_ptr),
            abs(l.y_slots),
            done_meta(),
            t.rows.len() as u32,
        ];
        for p in 0..SPMV_MAX_PHASES {
            let first = t.sends.partition_point(|s| s.phase < p);
            data.extend([
                t.phase_sends(p).len() as u32,
                abs(l.send_table + 8 * first as u32),
            ]);
        }
        debug_assert_eq!(data.len() as u32, SPMV_HEADER_WORDS);
        for s in &t.sends {
            data.extend([abs(s.src_slot), s.metadata]);
        }
        for (c, v) in t.local.col_idx.iter().zip(&t.local.values) {
            data.extend([
                v.to_bits(),
                abs(t.x_slot(*c).expect("slot for every column")),
            ]);
        }
        data.extend(
            t.local
                .row_ptr
                .iter()
                .map(|&p| abs(l.records + 8 * p as u32)),
        );
        debug_assert_eq!(4 * data.len() as u32, l.x_slots);
        let inputs: Vec<(u32, usize)> = t
            .x_range
            .clone()
            .map(|c| (t.x_slot(c).unwrap(), c))
            .collect();
        data.extend(std::iter::repeat_n(0, inputs.len()));
        let outputs = t
            .rows
            .clone()
            .enumerate()
            .map(|(k, r)| (l.y_slots + 4 * k as u32, r))
            .collect();
        for p in 0..SPMV_MAX_PHASES {
            if !t.phase_sends(p).is_empty() {
                rounds[p].push((t.coord, SPMV_SEND_PHASE0 + p));
            }
        }
        if !t.rows.is_empty() {
            rounds[SPMV_MAX_PHASES].push((t.coord, SPMV_COMPUTE));
        }
        tiles.push(TileImage {
            coord: t.coord,
            imem,
            lut: lut.clone(),
            data,
            inputs,
            outputs,
        });
    }
    let expected_done = rounds[SPMV_MAX_PHASES].len();
    rounds.retain(|r| !r.is_empty());
    Ok(KernelImage {
        kind: KernelKind::Spmv,
        expected_done,
        tiles,
        rounds,
        input_len: m.n_cols,
        output_len: m.n_rows,
    })
}

pub fn gen_sptrsv(part: &SptrsvPartition) -> Result<KernelImage, CapacityError> {
    let prog = sptrsv_program();
    let lut = vec![(
        SPTRSV_SOLVE,
        prog.symbol("solve").expect("entry label") as u16,
    )];
    let wake = part.wake_order();
    let mut tiles = Vec::new();
    for t in part.tiles.iter().filter(|t| !t.rows.is_empty()) {
        let imem = check_program(prog, &part.options, t.coord)?;
        let pos = wake
            .iter()
            .position(|&i| i == t.index)
            .expect("row owner is in the wake order");
        let (wake_meta, has_wake) = match wake.get(pos + 1) {
            Some(&lower) => {
                let c = part.tiles[lower].coord;
                let m = pack_metadata(
                    c.row as u32,
                    c.col as u32,
                    TaskType::START_TASK.code() as u32,
                    SPTRSV_SOLVE as u32,
                )
                .expect("wake metadata");
                (m, 1)
            }
            None => (0, 0),
        };
        let first = t.order.first().map_or(0, |r| DATA_BASE + r.record);
        let mut data = vec![
            wake_meta,
            has_wake,
            t.order.len() as u32,
            first,
            done_meta(),
            t.rows.len() as u32,
            t.expected_recv_count() as u32,
        ];
        debug_assert_eq!(data.len() as u32, SPTRSV_HEADER_WORDS);
        data.extend(std::iter::repeat_n(0, t.rows.len()));
        let mut inputs = Vec::with_capacity(t.order.len());
        for r in &t.order {
            debug_assert_eq!(4 * data.len() as u32, r.record);
            inputs.push((r.record + 8, r.row));
            data.extend([
                r.counter,
                r.counter,
                0,
                r.inv_diag.to_bits(),
                DATA_BASE + t.x_slot(r.row),
                r.off_diag.len() as u32,
                r.consumers.len() as u32,
            ]);
            for &(j, v) in &r.off_diag {
                data.extend([v.to_bits(), t.x_addr(j)]);
            }
            for &c in &r.consumers {
                let dest = &part.tiles[c];
                let off = dest
                    .recv_offset(r.row)
                    .expect("consumer has a receive record");
                data.push(
                    pack_metadata(
                        dest.coord.row as u32,
                        dest.coord.col as u32,
                        TaskType::DATA_SOLVED.code() as u32,
                        off,
                    )
                    .expect("send metadata"),
                );
            }
        }
        for rec in &t.recv {
            debug_assert_eq!(4 * data.len() as u32, rec.offset);
            data.extend([0, rec.dependents.len() as u32]);
            data.extend(
                rec.dependents
                    .iter()
                    .map(|&p| DATA_BASE + t.order[p].record),
            );
        }
        debug_assert_eq!(4 * data.len() as u32, t.end);
        inputs.sort_unstable();
        let outputs = t.rows.clone().map(|r| (t.x_slot(r), r)).collect();
        tiles.push(TileImage {
            coord: t.coord,
            imem,
            lut: lut.clone(),
            data,
            inputs,
            outputs,
        });
    }
    let rounds = vec![wake
        .first()
        .map(|&i| vec![(part.tiles[i].coord, SPTRSV_SOLVE)])
        .unwrap_or_default()];
    Ok(KernelImage {
        kind: KernelKind::Sptrsv,
        expected_done: wake.len(),
        tiles,
        rounds,
        input_len: part.n,
        output_len: part.n,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("vector has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("row {row} has a zero diagonal, Jacobi is undefined")]
    ZeroDiagonal { row: usize },
    #[error("received {found} DONE messages, expected {expected}")]
    DoneCount { expected: usize, found: usize },
}

impl From<CapacityError> for KernelError {
    fn from(e: CapacityError) -> Self {
        KernelError::Sparse(SparseError::Capacity(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult {
    pub kernel: KernelKind,
    pub output: Vec<f32>,
    pub stats: Stats,
    pub load: LoadAudit,
    /// Whether the resident matrix image was reused.
    pub reused: bool,
    pub done_messages: usize,
    /// Tile-to-tile data messages during execution.
    pub data_messages: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions {
            tol: 1e-6,
            max_iters: 1000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcgResult {
    pub x: Vec<f64>,
    /// Relative residual norm after each iteration.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||b - A x|| / ||b||` recomputed on the host in f64.
    pub true_relative_residual: f64,
    /// Statistics summed over every device SpMV.
    pub stats: Option<Stats>,
    pub loads: Vec<LoadAudit>,
}

#[derive(Debug, Clone)]
enum Resident {
    Spmv {
        matrix: CsrMatrix,
        partition: Box<SpmvPartition>,
        image: KernelImage,
    },
    Sptrsv {
        matrix: CsrMatrix,
        partition: Box<SptrsvPartition>,
        image: KernelImage,
    },
}

/// A machine plus the kernel image currently resident in it.
#[derive(Debug)]
pub struct Accelerator {
    machine: Machine,
    options: PartitionOptions,
    resident: Option<Resident>,
}

impl Accelerator {
    pub fn new(config: MachineConfig) -> Result<Accelerator, KernelError> {
        let options = PartitionOptions::grid(config.grid_rows, config.grid_cols);
        Ok(Accelerator {
            machine: Machine::new(config)?,
            options,
            resident: None,
        })
    }

    /// Overrides the per-tile memory budgets used when partitioning.
    pub fn with_budget(mut self, dmem: usize, imem: usize) -> Accelerator {
        self.options.dmem_budget = dmem;
        self.options.imem_budget = imem;
        self
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.machine
    }

    pub fn options(&self) -> &PartitionOptions {
        &self.options
    }

    pub fn spmv_partition(&self) -> Option<&SpmvPartition> {
        match &self.resident {
            Some(Resident::Spmv { partition, .. }) => Some(partition),
            _ => None,
        }
    }

    pub fn sptrsv_partition(&self) -> Option<&SptrsvPartition> {
        match &self.resident {
            Some(Resident::Sptrsv { partition, .. }) => Some(partition),
            _ => None,
        }
    }

    /// Drops the resident image so the next run reloads everything.
    pub fn evict(&mut self) {
        self.resident = None;
    }

    pub fn run_spmv(&mut self, a: &CsrMatrix, x: &[f32]) -> Result<KernelResult, KernelError> {
        if x.len() != a.n_cols {
            return Err(KernelError::Dimension {
                expected: a.n_cols,
                found: x.len(),
            });
        }
        let reused = matches!(&self.resident, Some(Resident::Spmv { matrix, .. }) if matrix == a);
        if !reused {
            let partition = partition_spmv(a, &self.options)?;
            let image = gen_spmv(&partition, a)?;
            self.resident = Some(Resident::Spmv {
                matrix: a.clone(),
                partition: Box::new(partition),
                image,
            });
        }
        self.execute(reused, x)
    }

    pub fn run_sptrsv(&mut self, l: &CsrMatrix, b: &[f32]) -> Result<KernelResult, KernelError> {
        if b.len() != l.n_rows {
            return Err(KernelError::Dimension {
                expected: l.n_rows,
                found: b.len(),
            });
        }
        let reused = matches!(&self.resident, Some(Resident::Sptrsv { matrix, .. }) if matrix == l);
        if !reused {
            let partition = partition_sptrsv(l, &self.options)?;
            let image = gen_sptrsv(&partition)?;
            self.resident = Some(Resident::Sptrsv {
                matrix: l.clone(),
                partition: Box::new(partition),
                image,
            });
        }
        self.execute(reused, b)
    }

    fn execute(&mut self, reused: bool, input: &[f32]) -> Result<KernelResult, KernelError> {
        let image = match self.resident.as_ref().expect("image resident") {
            Resident::Spmv { image, .. } | Resident::Sptrsv { image, .. } => image,
        };
        let (script, load) = if reused {
            image.vector_load_script(input)
        } else {
            image.full_load_script(input)
        };
        let m = &mut self.machine;
        m.reset_stats();
        m.read_host_mailbox();
        m.load_phase(&script)?;
        for round in &image.rounds {
            m.start_tasks(round)?;
            m.run_until_quiescent()?;
        }
        let done = m
            .read_host_mailbox()
            .iter()
            .filter(|msg| msg.meta().task_type == TaskType::DONE)
            .count();
        if done != image.expected_done {
            return Err(KernelError::DoneCount {
                expected: image.expected_done,
                found: done,
            });
        }
        let stats = m.stats();
        Ok(KernelResult {
            kernel: image.kind,
            output: image.gather(m),
            data_messages: stats.network.data_messages(),
            stats,
            load,
            reused,
            done_messages: done,
        })
    }

    /// Host-driven preconditioned conjugate gradient with every `A p`
    /// product computed on the device. Vectors and reductions stay in f64
    /// on the host; `p` is rounded to binary32 for the device.
    pub fn run_pcg(
        &mut self,
        a: &CsrMatrix,
        b: &[f64],
        opts: &PcgOptions,
    ) -> Result<PcgResult, KernelError> {
        if !a.is_square() || b.len() != a.n_rows {
            return Err(KernelError::Dimension {
                expected: a.n_rows,
                found: b.len(),
            });
        }
        if !a.is_symmetric(1e-6) {
            return Err(KernelError::NotSymmetric);
        }
        let n = a.n_rows;
        let inv_diag: Vec<f64> = match opts.preconditioner {
            Preconditioner::None => vec![1.0; n],
            Preconditioner::Jacobi => (0..n)
                .map(|i| match a.get(i, i) {
                    Some(d) if d != 0.0 => Ok(1.0 / d as f64),
                    _ => Err(KernelError::ZeroDiagonal { row: i }),
                })
                .collect::<Result<_, _>>()?,
        };
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let b_norm = dot(b, b).sqrt();
        let mut x = vec![0.0f64; n];
        let mut result = PcgResult {
            x: x.clone(),
            residual_history: Vec::new(),
            iterations: 0,
            converged: true,
            true_relative_residual: 0.0,
            stats: None,
            loads: Vec::new(),
        };
        if b_norm == 0.0 {
            return Ok(result);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut best = (f64::INFINITY, x.clone());
        result.converged = false;
        for _ in 0..opts.max_iters {
            let p32: Vec<f32> = p.iter().map(|&v| v as f32).collect();
            let run = self.run_spmv(a, &p32)?;
            result.loads.push(run.load);
            match &mut result.stats {
                None => result.stats = Some(run.stats),
                Some(s) => s.merge(&run.stats),
            }
            let q: Vec<f64> = run.output.iter().map(|&v| v as f64).collect();
            let pq = dot(&p, &q);
            if pq == 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            result.iterations += 1;
            let rel = dot(&r, &r).sqrt() / b_norm;
            result.residual_history.push(rel);
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= opts.tol {
                result.converged = true;
                break;
            }
            z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        result.x = if result.converged { x } else { best.1 };
        let mut res2 = 0.0;
        for i in 0..n {
            let ax: f64 = a.row(i).map(|(j, v)| v as f64 * result.x[j]).sum();
            res2 += (b[i] - ax).powi(2);
        }
        result.true_relative_residual = res2.sqrt() / b_norm;
        Ok(result)
    }
}
