//! One tile: the PE interpreter, its scratchpad memories, the task lookup
//! table and the network queues.
//!
//! An idle tile pops one message per cycle and interprets it (memory
//! writes, lookup-table writes, task start). A running tile executes one
//! instruction per cycle until the task returns with `jalr x0, 0(x0)`.
//! Blocking `send`/`recv` leave the pc in place and retry every cycle.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{decode, Instruction, InstructionWord};
use crate::noc::{Coord, Fifo, Message, TaskType};

pub const IMEM_BYTES: usize = 64 * 1024;
pub const DMEM_BYTES: usize = 64 * 1024;
/// Load/store address of data-memory offset 0.
pub const DATA_BASE: u32 = 0x1_0000;
pub const NUM_REGS: usize = 32;
pub const LUT_ENTRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Idle,
    Running,
    StallRecv,
    StallSend,
    HaltedError,
}

/// How a tile spent one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleClass {
    Busy,
    StallSend,
    StallRecv,
    Idle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounters {
    pub busy: u64,
    pub stall_send: u64,
    pub stall_recv: u64,
    pub idle: u64,
    pub instructions: u64,
}

impl CycleCounters {
    pub fn total(&self) -> u64 {
        self.busy + self.stall_send + self.stall_recv + self.idle
    }

    pub fn record(&mut self, class: CycleClass) {
        match class {
            CycleClass::Busy => {
                self.busy += 1;
                self.instructions += 1;
            }
            CycleClass::StallSend => self.stall_send += 1,
            CycleClass::StallRecv => self.stall_recv += 1,
            CycleClass::Idle => self.idle += 1,
        }
    }

    pub fn add(&mut self, other: &CycleCounters) {
        self.busy += other.busy;
        self.stall_send += other.stall_send;
        self.stall_recv += other.stall_recv;
        self.idle += other.idle;
        self.instructions += other.instructions;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultCause {
    #[error("invalid instruction word {0:#010x}")]
    InvalidInstruction(u32),
    #[error("misaligned access at {0:#x}")]
    Misaligned(u32),
    #[error("load/store outside the data region at {0:#x}")]
    OutOfRegion(u32),
    #[error("fetch outside instruction memory at {0:#x}")]
    FetchOutOfRegion(u32),
    #[error("recv into x31 has no register for the data word")]
    RecvPair,
    #[error("message address {0:#x} is not word aligned")]
    MessageAddr(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tile {coord} halted at pc {pc:#06x}: {cause}")]
pub struct TileFault {
    pub coord: Coord,
    pub pc: u32,
    pub cause: FaultCause,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TileEffect {
    None,
    /// A message was placed on the output queue.
    Sent(Message),
    TaskStarted {
        pc: u32,
    },
    TaskEnded,
    Error(TileFault),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub effect: TileEffect,
    pub class: CycleClass,
}

#[derive(Clone)]
pub struct TileState {
    pub coord: Coord,
    pub pc: u32,
    regs: [u32; NUM_REGS],
    imem: Box<[u32]>,
    dmem: Box<[u32]>,
    lut: [u16; LUT_ENTRIES],
    pub inq: Fifo,
    pub outq: Fifo,
    mode: Mode,
    pub counters: CycleCounters,
    fault: Option<TileFault>,
}

impl fmt::Debug for TileState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TileState")
            .field("coord", &self.coord)
            .field("pc", &self.pc)
            .field("mode", &self.mode)
            .field("inq", &self.inq.len())
            .field("outq", &self.outq.len())
            .finish_non_exhaustive()
    }
}

impl TileState {
    pub fn new(coord: Coord, fifo_depth: usize) -> TileState {
        TileState {
            coord,
            pc: 0,
            regs: [0; NUM_REGS],
            imem: vec![0; IMEM_BYTES / 4].into_boxed_slice(),
            dmem: vec![0; DMEM_BYTES / 4].into_boxed_slice(),
            lut: [0; LUT_ENTRIES],
            inq: Fifo::new(fifo_depth),
            outq: Fifo::new(fifo_depth),
            mode: Mode::Idle,
            counters: CycleCounters::default(),
            fault: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn fault(&self) -> Option<&TileFault> {
        self.fault.as_ref()
    }

    pub fn reg(&self, index: usize) -> u32 {
        self.regs[index]
    }

    pub fn set_reg(&mut self, index: usize, value: u32) {
        if index != 0 {
            self.regs[index] = value;
        }
    }

    pub fn lut(&self) -> &[u16; LUT_ENTRIES] {
        &self.lut
    }

    pub fn imem_bytes(&self) -> usize {
        self.imem.len() * 4
    }

    pub fn dmem_bytes(&self) -> usize {
        self.dmem.len() * 4
    }

    /// Instruction word at byte address `addr`.
    pub fn imem_word(&self, addr: u32) -> u32 {
        self.imem[(addr / 4) as usize]
    }

    /// Data word at byte offset `offset` within the data region.
    pub fn dmem_word(&self, offset: u32) -> u32 {
        self.dmem[(offset / 4) as usize]
    }

    pub fn dmem_words(&self, offset: u32, count: usize) -> &[u32] {
        let start = (offset / 4) as usize;
        &self.dmem[start..start + count]
    }

    pub fn is_quiet(&self) -> bool {
        self.mode == Mode::Idle && self.inq.is_empty() && self.outq.is_empty()
    }

    fn halt(&mut self, cause: FaultCause) -> Step {
        let fault = TileFault {
            coord: self.coord,
            pc: self.pc,
            cause,
        };
        self.mode = Mode::HaltedError;
        self.fault = Some(fault.clone());
        Step {
            effect: TileEffect::Error(fault),
            class: CycleClass::Idle,
        }
    }

    /// Advances one cycle.
    pub fn step(&mut self) -> Step {
        let step = match self.mode {
            Mode::HaltedError => {
                return Step {
                    effect: TileEffect::None,
                    class: CycleClass::Idle,
                };
            }
            Mode::Idle => match self.inq.pop() {
                None => Step {
                    effect: TileEffect::None,
                    class: CycleClass::Idle,
                },
                Some(msg) => match self.handle_idle_message(msg) {
                    Ok(effect) => Step {
                        effect,
                        class: CycleClass::Idle,
                    },
                    Err(cause) => self.halt(cause),
                },
            },
            Mode::Running | Mode::StallRecv | Mode::StallSend => self.execute(),
        };
        self.counters.record(step.class);
        step
    }

    /// Interprets a message popped while idle.
    pub fn handle_idle_message(&mut self, msg: Message) -> Result<TileEffect, FaultCause> {
        debug_assert_eq!(self.mode, Mode::Idle);
        let meta = msg.meta();
        let addr = meta.addr;
        let word_index = || {
            if addr % 4 == 0 {
                Ok((addr / 4) as usize)
            } else {
                Err(FaultCause::MessageAddr(addr))
            }
        };
        match meta.task_type {
            TaskType::WRITE_INSTR => self.imem[word_index()?] = msg.data,
            TaskType::WRITE_LUT => self.lut[addr as usize % LUT_ENTRIES] = msg.data as u16,
            TaskType::START_TASK => {
                let pc = self.lut[addr as usize % LUT_ENTRIES] as u32;
                if pc % 4 != 0 {
                    return Err(FaultCause::Misaligned(pc));
                }
                self.pc = pc;
                self.mode = Mode::Running;
                return Ok(TileEffect::TaskStarted { pc });
            }
            // WRITE_DATA and every application type land in data memory.
            _ => self.dmem[word_index()?] = msg.data,
        }
        Ok(TileEffect::None)
    }

    fn data_index(&self, addr: u32) -> Result<usize, FaultCause> {
        if addr % 4 != 0 {
            return Err(FaultCause::Misaligned(addr));
        }
        if !(DATA_BASE..DATA_BASE + DMEM_BYTES as u32).contains(&addr) {
            return Err(FaultCause::OutOfRegion(addr));
        }
        Ok(((addr - DATA_BASE) / 4) as usize)
    }

    fn jump(&mut self, target: u32) -> Result<(), FaultCause> {
        if target % 4 != 0 {
            return Err(FaultCause::Misaligned(target));
        }
        self.pc = target;
        Ok(())
    }

    fn execute(&mut self) -> Step {
        if self.pc as usize >= IMEM_BYTES {
            return self.halt(FaultCause::FetchOutOfRegion(self.pc));
        }
        let word = self.imem[(self.pc / 4) as usize];
        let instr = match decode(InstructionWord(word)) {
            Ok(i) => i,
            Err(_) => return self.halt(FaultCause::InvalidInstruction(word)),
        };
        match self.execute_instruction(instr) {
            Ok(step) => step,
            Err(cause) => self.halt(cause),
        }
    }

    fn execute_instruction(&mut self, instr: Instruction) -> Result<Step, FaultCause> {
        let busy = |effect| {
            Ok(Step {
                effect,
                class: CycleClass::Busy,
            })
        };
        let r = |s: &Self, reg: crate::isa::Reg| s.regs[reg.index()];
        let next = self.pc.wrapping_add(4);
        match instr {
            Instruction::Lui { rd, imm } => {
                self.set_reg(rd.index(), imm as u32);
                self.pc = next;
            }
            Instruction::Auipc { rd, imm } => {
                self.set_reg(rd.index(), self.pc.wrapping_add(imm as u32));
                self.pc = next;
            }
            Instruction::Jal { rd, imm } => {
                self.jump(self.pc.wrapping_add(imm as u32))?;
                self.set_reg(rd.index(), next);
            }
            Instruction::Jalr { rd, rs1, imm } => {
                let target = r(self, rs1).wrapping_add(imm as u32) & !1;
                if rd.index() == 0 && target == 0 {
                    self.pc = 0;
                    self.mode = Mode::Idle;
                    return busy(TileEffect::TaskEnded);
                }
                self.jump(target)?;
                self.set_reg(rd.index(), next);
            }
            Instruction::Branch { op, rs1, rs2, imm } => {
                if op.taken(r(self, rs1), r(self, rs2)) {
                    self.jump(self.pc.wrapping_add(imm as u32))?;
                } else {
                    self.pc = next;
                }
            }
            Instruction::Lw { rd, rs1, imm } => {
                let i = self.data_index(r(self, rs1).wrapping_add(imm as u32))?;
                self.set_reg(rd.index(), self.dmem[i]);
                self.pc = next;
            }
            Instruction::Sw { rs1, rs2, imm } => {
                let i = self.data_index(r(self, rs1).wrapping_add(imm as u32))?;
                self.dmem[i] = r(self, rs2);
                self.pc = next;
            }
            Instruction::OpImm { op, rd, rs1, imm } => {
                self.set_reg(rd.index(), op.apply(r(self, rs1), imm));
                self.pc = next;
            }
            Instruction::Op { op, rd, rs1, rs2 } => {
                self.set_reg(rd.index(), op.apply(r(self, rs1), r(self, rs2)));
                self.pc = next;
            }
            Instruction::Float { op, rd, rs1, rs2 } => {
                self.set_reg(rd.index(), op.apply(r(self, rs1), r(self, rs2)));
                self.pc = next;
            }
            Instruction::Send { rs1, rs2 } => return Ok(self.exec_send(r(self, rs1), r(self, rs2))),
            Instruction::Recv { rd } => return self.exec_recv(rd.index()),
        }
        self.mode = Mode::Running;
        busy(TileEffect::None)
    }

    fn exec_send(&mut self, metadata: u32, data: u32) -> Step {
        let msg = Message { metadata, data };
        match self.outq.push(msg) {
            Ok(()) => {
                self.pc = self.pc.wrapping_add(4);
                self.mode = Mode::Running;
                Step {
                    effect: TileEffect::Sent(msg),
                    class: CycleClass::Busy,
                }
            }
            Err(_) => {
                self.mode = Mode::StallSend;
                Step {
                    effect: TileEffect::None,
                    class: CycleClass::StallSend,
                }
            }
        }
    }

    fn exec_recv(&mut self, rd: usize) -> Result<Step, FaultCause> {
        if rd >= NUM_REGS - 1 {
            return Err(FaultCause::RecvPair);
        }
        match self.inq.pop() {
            Some(msg) => {
                self.set_reg(rd, msg.metadata);
                self.set_reg(rd + 1, msg.data);
                self.pc = self.pc.wrapping_add(4);
                self.mode = Mode::Running;
                Ok(Step {
                    effect: TileEffect::None,
                    class: CycleClass::Busy,
                })
            }
            None => {
                self.mode = Mode::StallRecv;
                Ok(Step {
                    effect: TileEffect::None,
                    class: CycleClass::StallRecv,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn tile() -> TileState {
        TileState::new(Coord::new(0, 0), 4)
    }

    fn msg(ty: TaskType, addr: u16, data: u32) -> Message {
        Message::new(Coord::new(0, 0), ty, addr, data).unwrap()
    }

    fn load(t: &mut TileState, src: &str) {
        for seg in assemble(src).unwrap().segments {
            for (k, w) in seg.words.iter().enumerate() {
                t.imem[(seg.addr / 4) as usize + k] = *w;
            }
        }
    }

    #[test]
    fn start_task_dispatches_through_lut() {
        let mut t = tile();
        t.lut[2] = 0x40;
        t.inq.push(msg(TaskType::START_TASK, 2, 0)).unwrap();
        let s = t.step();
        assert_eq!(s.effect, TileEffect::TaskStarted { pc: 0x40 });
        assert_eq!(t.mode(), Mode::Running);
        assert_eq!(t.pc, 0x40);
    }

    #[test]
    fn idle_cycles_are_counted() {
        let mut t = tile();
        for _ in 0..5 {
            t.step();
        }
        assert_eq!(t.counters.idle, 5);
        assert_eq!(t.counters.total(), 5);
        assert_eq!(t.pc, 0);
    }

    #[test]
    fn idle_writes() {
        let mut t = tile();
        t.inq
            .push(msg(TaskType::WRITE_INSTR, 0x100, 0x0050_0093))
            .unwrap();
        t.inq.push(msg(TaskType::WRITE_LUT, 7, 0x40)).unwrap();
        t.inq
            .push(msg(TaskType::new(5).unwrap(), 0x20, 1.5f32.to_bits()))
            .unwrap();
        for _ in 0..3 {
            t.step();
        }
        assert_eq!(t.imem_word(0x100), 0x0050_0093);
        assert_eq!(t.lut()[7], 0x40);
        assert_eq!(t.dmem_word(0x20), 0x3FC0_0000);
    }

    #[test]
    fn misaligned_message_address_halts() {
        let mut t = tile();
        t.inq.push(msg(TaskType::WRITE_DATA, 2, 1)).unwrap();
        let s = t.step();
        assert!(matches!(
            s.effect,
            TileEffect::Error(TileFault {
                cause: FaultCause::MessageAddr(2),
                ..
            })
        ));
        assert_eq!(t.mode(), Mode::HaltedError);
    }

    #[test]
    fn recv_stalls_then_fills_register_pair() {
        let mut t = tile();
        load(&mut t, "recv x4\nret\n");
        t.mode = Mode::Running;
        for _ in 0..3 {
            assert_eq!(t.step().class, CycleClass::StallRecv);
            assert_eq!(t.pc, 0);
        }
        t.inq
            .push(Message {
                metadata: 0x0C53_0004,
                data: 42,
            })
            .unwrap();
        assert_eq!(t.step().class, CycleClass::Busy);
        assert_eq!((t.reg(4), t.reg(5)), (0x0C53_0004, 42));
        assert_eq!(t.counters.stall_recv, 3);
        assert_eq!(t.step().effect, TileEffect::TaskEnded);
        assert_eq!(t.mode(), Mode::Idle);
        assert_eq!(t.pc, 0);
    }

    #[test]
    fn recv_preserves_fifo_order() {
        let mut t = tile();
        load(&mut t, "recv x2\nrecv x4\nret\n");
        t.mode = Mode::Running;
        t.inq
            .push(Message {
                metadata: 1,
                data: 10,
            })
            .unwrap();
        t.inq
            .push(Message {
                metadata: 2,
                data: 20,
            })
            .unwrap();
        t.step();
        t.step();
        assert_eq!((t.reg(3), t.reg(5)), (10, 20));
    }

    #[test]
    fn send_stalls_on_full_queue() {
        let mut t = TileState::new(Coord::new(0, 0), 1);
        load(&mut t, "send x2, x3\nsend x2, x3\nret\n");
        t.set_reg(2, 0x0C53_0004);
        t.set_reg(3, 42);
        t.mode = Mode::Running;
        assert_eq!(
            t.step().effect,
            TileEffect::Sent(Message {
                metadata: 0x0C53_0004,
                data: 42
            })
        );
        for _ in 0..2 {
            assert_eq!(t.step().class, CycleClass::StallSend);
            assert_eq!(t.pc, 4);
        }
        t.outq.pop();
        assert_eq!(t.step().class, CycleClass::Busy);
        assert_eq!(t.counters.stall_send, 2);
        let m = t.outq.pop().unwrap();
        assert_eq!(m.dest(), Coord::new(3, 5));
        assert_eq!(m.meta().addr, 4);
    }

    #[test]
    fn register_zero_stays_zero() {
        let mut t = tile();
        load(&mut t, "addi x0, x0, 5\nlui x0, 0x12\nret\n");
        t.mode = Mode::Running;
        for _ in 0..3 {
            t.step();
            assert_eq!(t.reg(0), 0);
        }
    }

    #[test]
    fn memory_faults() {
        for (src, cause) in [
            ("lw x1, 0(x0)\n", FaultCause::OutOfRegion(0)),
            (
                "lui x1, 0x10\nlw x2, 2(x1)\n",
                FaultCause::Misaligned(0x10002),
            ),
            (
                "lui x1, 0x20\nsw x2, 0(x1)\n",
                FaultCause::OutOfRegion(0x20000),
            ),
            (
                ".word 0xffffffff\n",
                FaultCause::InvalidInstruction(0xffff_ffff),
            ),
            ("addi x31, x0, 1\n.word 0x00001f8b\n", FaultCause::RecvPair),
        ] {
            let mut t = tile();
            load(&mut t, src);
            t.mode = Mode::Running;
            let mut last = None;
            for _ in 0..3 {
                if let TileEffect::Error(f) = t.step().effect {
                    last = Some(f.cause);
                    break;
                }
            }
            assert_eq!(last, Some(cause), "{src}");
            assert_eq!(t.mode(), Mode::HaltedError);
        }
    }

    #[test]
    fn float_task() {
        let mut t = tile();
        load(
            &mut t,
            "lui x1, 0x40000\nlui x2, 0x40400\nfmul x3, x1, x2\nfadd x4, x3, x0\nfsub x5, x1, x1\nret\n",
        );
        t.mode = Mode::Running;
        while t.mode() != Mode::Idle {
            t.step();
        }
        assert_eq!(t.reg(3), 0x40C0_0000);
        assert_eq!(t.reg(4), 0x40C0_0000);
        assert_eq!(t.reg(5), 0);
        assert_eq!(t.counters.busy, 6);
    }

    #[test]
    fn loads_and_stores_use_data_base() {
        let mut t = tile();
        load(
            &mut t,
            "lui x1, 0x10\naddi x2, x0, 77\nsw x2, 8(x1)\nlw x3, 8(x1)\nret\n",
        );
        t.mode = Mode::Running;
        while t.mode() != Mode::Idle {
            t.step();
        }
        assert_eq!(t.dmem_word(8), 77);
        assert_eq!(t.reg(3), 77);
    }
}
