//! Instruction set: an RV32I integer subset plus the custom-0 extension
//! (`send`, `recv`, `fmul`, `fadd`, `fsub`).
//!
//! Decoding is strict: any field that the encoder would have written as
//! zero must be zero in the word, so every word that decodes re-encodes to
//! itself.

use std::fmt;

use thiserror::Error;

const OP_LUI: u32 = 0b0110111;
const OP_AUIPC: u32 = 0b0010111;
const OP_JAL: u32 = 0b1101111;
const OP_JALR: u32 = 0b1100111;
const OP_BRANCH: u32 = 0b1100011;
const OP_LOAD: u32 = 0b0000011;
const OP_STORE: u32 = 0b0100011;
const OP_IMM: u32 = 0b0010011;
const OP_REG: u32 = 0b0110011;
/// RISC-V custom-0 major opcode, home of the network and float extension.
pub const OP_CUSTOM0: u32 = 0b0001011;

const FUNCT3_SEND: u32 = 0b000;
const FUNCT3_RECV: u32 = 0b001;
const FUNCT3_FMUL: u32 = 0b010;
const FUNCT3_FADD: u32 = 0b011;
const FUNCT3_FSUB: u32 = 0b100;

/// A register index in `0..32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    /// Builds a register from the low five bits of `bits`.
    fn from_field(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn field(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchOp {
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
}

impl BranchOp {
    pub const ALL: [BranchOp; 6] = [
        BranchOp::Beq,
        BranchOp::Bne,
        BranchOp::Blt,
        BranchOp::Bge,
        BranchOp::Bltu,
        BranchOp::Bgeu,
    ];

    fn funct3(self) -> u32 {
        match self {
            BranchOp::Beq => 0b000,
            BranchOp::Bne => 0b001,
            BranchOp::Blt => 0b100,
            BranchOp::Bge => 0b101,
            BranchOp::Bltu => 0b110,
            BranchOp::Bgeu => 0b111,
        }
    }

    fn from_funct3(funct3: u32) -> Option<BranchOp> {
        BranchOp::ALL.into_iter().find(|op| op.funct3() == funct3)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BranchOp::Beq => "beq",
            BranchOp::Bne => "bne",
            BranchOp::Blt => "blt",
            BranchOp::Bge => "bge",
            BranchOp::Bltu => "bltu",
            BranchOp::Bgeu => "bgeu",
        }
    }

    pub fn taken(self, a: u32, b: u32) -> bool {
        match self {
            BranchOp::Beq => a == b,
            BranchOp::Bne => a != b,
            BranchOp::Blt => (a as i32) < (b as i32),
            BranchOp::Bge => (a as i32) >= (b as i32),
            BranchOp::Bltu => a < b,
            BranchOp::Bgeu => a >= b,
        }
    }
}

/// Register-immediate ALU operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImmOp {
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
}

impl ImmOp {
    pub const ALL: [ImmOp; 9] = [
        ImmOp::Addi,
        ImmOp::Slti,
        ImmOp::Sltiu,
        ImmOp::Xori,
        ImmOp::Ori,
        ImmOp::Andi,
        ImmOp::Slli,
        ImmOp::Srli,
        ImmOp::Srai,
    ];

    fn funct3(self) -> u32 {
        match self {
            ImmOp::Addi => 0b000,
            ImmOp::Slti => 0b010,
            ImmOp::Sltiu => 0b011,
            ImmOp::Xori => 0b100,
            ImmOp::Ori => 0b110,
            ImmOp::Andi => 0b111,
            ImmOp::Slli => 0b001,
            ImmOp::Srli | ImmOp::Srai => 0b101,
        }
    }

    pub fn is_shift(self) -> bool {
        matches!(self, ImmOp::Slli | ImmOp::Srli | ImmOp::Srai)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            ImmOp::Addi => "addi",
            ImmOp::Slti => "slti",
            ImmOp::Sltiu => "sltiu",
            ImmOp::Xori => "xori",
            ImmOp::Ori => "ori",
            ImmOp::Andi => "andi",
            ImmOp::Slli => "slli",
            ImmOp::Srli => "srli",
            ImmOp::Srai => "srai",
        }
    }

    pub fn apply(self, a: u32, imm: i32) -> u32 {
        let b = imm as u32;
        match self {
            ImmOp::Addi => a.wrapping_add(b),
            ImmOp::Slti => ((a as i32) < imm) as u32,
            ImmOp::Sltiu => (a < b) as u32,
            ImmOp::Xori => a ^ b,
            ImmOp::Ori => a | b,
            ImmOp::Andi => a & b,
            ImmOp::Slli => a << (b & 31),
            ImmOp::Srli => a >> (b & 31),
            ImmOp::Srai => ((a as i32) >> (b & 31)) as u32,
        }
    }
}

/// Register-register ALU operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
}

impl RegOp {
    pub const ALL: [RegOp; 10] = [
        RegOp::Add,
        RegOp::Sub,
        RegOp::Sll,
        RegOp::Slt,
        RegOp::Sltu,
        RegOp::Xor,
        RegOp::Srl,
        RegOp::Sra,
        RegOp::Or,
        RegOp::And,
    ];

    fn funct3_funct7(self) -> (u32, u32) {
        match self {
            RegOp::Add => (0b000, 0),
            RegOp::Sub => (0b000, 0x20),
            RegOp::Sll => (0b001, 0),
            RegOp::Slt => (0b010, 0),
            RegOp::Sltu => (0b011, 0),
            RegOp::Xor => (0b100, 0),
            RegOp::Srl => (0b101, 0),
            RegOp::Sra => (0b101, 0x20),
            RegOp::Or => (0b110, 0),
            RegOp::And => (0b111, 0),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            RegOp::Add => "add",
            RegOp::Sub => "sub",
            RegOp::Sll => "sll",
            RegOp::Slt => "slt",
            RegOp::Sltu => "sltu",
            RegOp::Xor => "xor",
            RegOp::Srl => "srl",
            RegOp::Sra => "sra",
            RegOp::Or => "or",
            RegOp::And => "and",
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            RegOp::Add => a.wrapping_add(b),
            RegOp::Sub => a.wrapping_sub(b),
            RegOp::Sll => a << (b & 31),
            RegOp::Slt => ((a as i32) < (b as i32)) as u32,
            RegOp::Sltu => (a < b) as u32,
            RegOp::Xor => a ^ b,
            RegOp::Srl => a >> (b & 31),
            RegOp::Sra => ((a as i32) >> (b & 31)) as u32,
            RegOp::Or => a | b,
            RegOp::And => a & b,
        }
    }
}

/// Binary32 operations executed by the attached float unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FloatOp {
    Fmul,
    Fadd,
    Fsub,
}

impl FloatOp {
    pub const ALL: [FloatOp; 3] = [FloatOp::Fmul, FloatOp::Fadd, FloatOp::Fsub];

    fn funct3(self) -> u32 {
        match self {
            FloatOp::Fmul => FUNCT3_FMUL,
            FloatOp::Fadd => FUNCT3_FADD,
            FloatOp::Fsub => FUNCT3_FSUB,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            FloatOp::Fmul => "fmul",
            FloatOp::Fadd => "fadd",
            FloatOp::Fsub => "fsub",
        }
    }

    /// Applies the operation to two binary32 bit patterns.
    pub fn apply(self, a: u32, b: u32) -> u32 {
        let (a, b) = (f32::from_bits(a), f32::from_bits(b));
        let r = match self {
            FloatOp::Fmul => a * b,
            FloatOp::Fadd => a + b,
            FloatOp::Fsub => a - b,
        };
        r.to_bits()
    }
}

/// A decoded instruction.
///
/// Immediates are stored sign-extended, in the units the instruction uses
/// at execution time: byte offsets for branches and jumps, and the full
/// upper value (`imm20 << 12`) for `lui`/`auipc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Lui {
        rd: Reg,
        imm: i32,
    },
    Auipc {
        rd: Reg,
        imm: i32,
    },
    Jal {
        rd: Reg,
        imm: i32,
    },
    Jalr {
        rd: Reg,
        rs1: Reg,
        imm: i32,
    },
    Branch {
        op: BranchOp,
        rs1: Reg,
        rs2: Reg,
        imm: i32,
    },
    Lw {
        rd: Reg,
        rs1: Reg,
        imm: i32,
    },
    Sw {
        rs1: Reg,
        rs2: Reg,
        imm: i32,
    },
    OpImm {
        op: ImmOp,
        rd: Reg,
        rs1: Reg,
        imm: i32,
    },
    Op {
        op: RegOp,
        rd: Reg,
        rs1: Reg,
        rs2: Reg,
    },
    /// Enqueue `{metadata: rs1, data: rs2}` on the output queue.
    Send {
        rs1: Reg,
        rs2: Reg,
    },
    /// Pop the input queue into the pair `rd` (metadata), `rd + 1` (data).
    Recv {
        rd: Reg,
    },
    Float {
        op: FloatOp,
        rd: Reg,
        rs1: Reg,
        rs2: Reg,
    },
}

impl Instruction {
    pub const NOP: Instruction = Instruction::OpImm {
        op: ImmOp::Addi,
        rd: Reg::ZERO,
        rs1: Reg::ZERO,
        imm: 0,
    };

    /// `jalr x0, 0(x0)`: the task-return convention.
    pub const RET: Instruction = Instruction::Jalr {
        rd: Reg::ZERO,
        rs1: Reg::ZERO,
        imm: 0,
    };
}

/// A raw 32-bit instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstructionWord(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid instruction word {0:#010x}")]
pub struct InvalidInstruction(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{what} immediate {value} out of range for `{mnemonic}`")]
pub struct EncodingRangeError {
    pub mnemonic: &'static str,
    pub what: &'static str,
    pub value: i64,
}

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn rd(w: u32) -> Reg {
    Reg::from_field(w >> 7)
}
fn rs1(w: u32) -> Reg {
    Reg::from_field(w >> 15)
}
fn rs2(w: u32) -> Reg {
    Reg::from_field(w >> 20)
}
fn funct3(w: u32) -> u32 {
    (w >> 12) & 0x7
}
fn funct7(w: u32) -> u32 {
    w >> 25
}

fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}
fn imm_s(w: u32) -> i32 {
    sign_extend(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12)
}
fn imm_b(w: u32) -> i32 {
    let v = ((w >> 31) & 1) << 12
        | ((w >> 7) & 1) << 11
        | ((w >> 25) & 0x3f) << 5
        | ((w >> 8) & 0xf) << 1;
    sign_extend(v, 13)
}
fn imm_j(w: u32) -> i32 {
    let v = ((w >> 31) & 1) << 20
        | ((w >> 12) & 0xff) << 12
        | ((w >> 20) & 1) << 11
        | ((w >> 21) & 0x3ff) << 1;
    sign_extend(v, 21)
}

pub fn decode(word: InstructionWord) -> Result<Instruction, InvalidInstruction> {
    let w = word.0;
    let bad = InvalidInstruction(w);
    let opcode = w & 0x7f;
    let instr = match opcode {
        OP_LUI => Instruction::Lui {
            rd: rd(w),
            imm: (w & 0xffff_f000) as i32,
        },
        OP_AUIPC => Instruction::Auipc {
            rd: rd(w),
            imm: (w & 0xffff_f000) as i32,
        },
        OP_JAL => Instruction::Jal {
            rd: rd(w),
            imm: imm_j(w),
        },
        OP_JALR => {
            if funct3(w) != 0 {
                return Err(bad);
            }
            Instruction::Jalr {
                rd: rd(w),
                rs1: rs1(w),
                imm: imm_i(w),
            }
        }
        OP_BRANCH => {
            let op = BranchOp::from_funct3(funct3(w)).ok_or(bad)?;
            Instruction::Branch {
                op,
                rs1: rs1(w),
                rs2: rs2(w),
                imm: imm_b(w),
            }
        }
        OP_LOAD => {
            if funct3(w) != 0b010 {
                return Err(bad);
            }
            Instruction::Lw {
                rd: rd(w),
                rs1: rs1(w),
                imm: imm_i(w),
            }
        }
        OP_STORE => {
            if funct3(w) != 0b010 {
                return Err(bad);
            }
            Instruction::Sw {
                rs1: rs1(w),
                rs2: rs2(w),
                imm: imm_s(w),
            }
        }
        OP_IMM => {
            let f3 = funct3(w);
            let op = match f3 {
                0b001 | 0b101 => {
                    let shamt = ((w >> 20) & 0x1f) as i32;
                    let op = match (f3, funct7(w)) {
                        (0b001, 0) => ImmOp::Slli,
                        (0b101, 0) => ImmOp::Srli,
                        (0b101, 0x20) => ImmOp::Srai,
                        _ => return Err(bad),
                    };
                    return Ok(Instruction::OpImm {
                        op,
                        rd: rd(w),
                        rs1: rs1(w),
                        imm: shamt,
                    });
                }
                _ => ImmOp::ALL
                    .into_iter()
                    .find(|op| !op.is_shift() && op.funct3() == f3)
                    .ok_or(bad)?,
            };
            Instruction::OpImm {
                op,
                rd: rd(w),
                rs1: rs1(w),
                imm: imm_i(w),
            }
        }
        OP_REG => {
            let key = (funct3(w), funct7(w));
            let op = RegOp::ALL
                .into_iter()
                .find(|op| op.funct3_funct7() == key)
                .ok_or(bad)?;
            Instruction::Op {
                op,
                rd: rd(w),
                rs1: rs1(w),
                rs2: rs2(w),
            }
        }
        OP_CUSTOM0 => {
            if funct7(w) != 0 {
                return Err(bad);
            }
            match funct3(w) {
                FUNCT3_SEND if rd(w) == Reg::ZERO => Instruction::Send {
                    rs1: rs1(w),
                    rs2: rs2(w),
                },
                FUNCT3_RECV if rs1(w) == Reg::ZERO && rs2(w) == Reg::ZERO => {
                    Instruction::Recv { rd: rd(w) }
                }
                f3 => {
                    let op = FloatOp::ALL
                        .into_iter()
                        .find(|op| op.funct3() == f3)
                        .ok_or(bad)?;
                    Instruction::Float {
                        op,
                        rd: rd(w),
                        rs1: rs1(w),
                        rs2: rs2(w),
                    }
                }
            }
        }
        _ => return Err(bad),
    };
    Ok(instr)
}

fn r_type(opcode: u32, rd: Reg, f3: u32, rs1: Reg, rs2: Reg, f7: u32) -> u32 {
    f7 << 25 | rs2.field() << 20 | rs1.field() << 15 | f3 << 12 | rd.field() << 7 | opcode
}

fn i_type(opcode: u32, rd: Reg, f3: u32, rs1: Reg, imm: i32) -> u32 {
    ((imm as u32) & 0xfff) << 20 | rs1.field() << 15 | f3 << 12 | rd.field() << 7 | opcode
}

fn check_range(
    mnemonic: &'static str,
    value: i32,
    bits: u32,
    align: i32,
) -> Result<(), EncodingRangeError> {
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    let v = value as i64;
    if v < lo || v > hi {
        return Err(EncodingRangeError {
            mnemonic,
            what: "signed",
            value: v,
        });
    }
    if value % align != 0 {
        return Err(EncodingRangeError {
            mnemonic,
            what: "misaligned",
            value: v,
        });
    }
    Ok(())
}

fn mnemonic(instr: &Instruction) -> &'static str {
    match instr {
        Instruction::Lui { .. } => "lui",
        Instruction::Auipc { .. } => "auipc",
        Instruction::Jal { .. } => "jal",
        Instruction::Jalr { .. } => "jalr",
        Instruction::Branch { op, .. } => op.mnemonic(),
        Instruction::Lw { .. } => "lw",
        Instruction::Sw { .. } => "sw",
        Instruction::OpImm { op, .. } => op.mnemonic(),
        Instruction::Op { op, .. } => op.mnemonic(),
        Instruction::Send { .. } => "send",
        Instruction::Recv { .. } => "recv",
        Instruction::Float { op, .. } => op.mnemonic(),
    }
}

pub fn encode(instr: &Instruction) -> Result<InstructionWord, EncodingRangeError> {
    let name = mnemonic(instr);
    let w = match *instr {
        Instruction::Lui { rd, imm } | Instruction::Auipc { rd, imm } => {
            if imm & 0xfff != 0 {
                return Err(EncodingRangeError {
                    mnemonic: name,
                    what: "low-bits",
                    value: imm as i64,
                });
            }
            let opcode = if matches!(instr, Instruction::Lui { .. }) {
                OP_LUI
            } else {
                OP_AUIPC
            };
            (imm as u32) | rd.field() << 7 | opcode
        }
        Instruction::Jal { rd, imm } => {
            check_range(name, imm, 21, 2)?;
            let v = imm as u32;
            ((v >> 20) & 1) << 31
                | ((v >> 1) & 0x3ff) << 21
                | ((v >> 11) & 1) << 20
                | ((v >> 12) & 0xff) << 12
                | rd.field() << 7
                | OP_JAL
        }
        Instruction::Jalr { rd, rs1, imm } => {
            check_range(name, imm, 12, 1)?;
            i_type(OP_JALR, rd, 0, rs1, imm)
        }
        Instruction::Branch { op, rs1, rs2, imm } => {
            check_range(name, imm, 13, 2)?;
            let v = imm as u32;
            ((v >> 12) & 1) << 31
                | ((v >> 5) & 0x3f) << 25
                | rs2.field() << 20
                | rs1.field() << 15
                | op.funct3() << 12
                | ((v >> 1) & 0xf) << 8
                | ((v >> 11) & 1) << 7
                | OP_BRANCH
        }
        Instruction::Lw { rd, rs1, imm } => {
            check_range(name, imm, 12, 1)?;
            i_type(OP_LOAD, rd, 0b010, rs1, imm)
        }
        Instruction::Sw { rs1, rs2, imm } => {
            check_range(name, imm, 12, 1)?;
            let v = imm as u32;
            ((v >> 5) & 0x7f) << 25
                | rs2.field() << 20
                | rs1.field() << 15
                | 0b010 << 12
                | (v & 0x1f) << 7
                | OP_STORE
        }
        Instruction::OpImm { op, rd, rs1, imm } => {
            if op.is_shift() {
                if !(0..32).contains(&imm) {
                    return Err(EncodingRangeError {
                        mnemonic: name,
                        what: "shift",
                        value: imm as i64,
                    });
                }
                let f7 = if op == ImmOp::Srai { 0x20 } else { 0 };
                i_type(OP_IMM, rd, op.funct3(), rs1, imm | (f7 << 5))
            } else {
                check_range(name, imm, 12, 1)?;
                i_type(OP_IMM, rd, op.funct3(), rs1, imm)
            }
        }
        Instruction::Op { op, rd, rs1, rs2 } => {
            let (f3, f7) = op.funct3_funct7();
            r_type(OP_REG, rd, f3, rs1, rs2, f7)
        }
        Instruction::Send { rs1, rs2 } => r_type(OP_CUSTOM0, Reg::ZERO, FUNCT3_SEND, rs1, rs2, 0),
        Instruction::Recv { rd } => r_type(OP_CUSTOM0, rd, FUNCT3_RECV, Reg::ZERO, Reg::ZERO, 0),
        Instruction::Float { op, rd, rs1, rs2 } => r_type(OP_CUSTOM0, rd, op.funct3(), rs1, rs2, 0),
    };
    Ok(InstructionWord(w))
}

impl fmt::Display for Instruction {
    /// Prints the assembler syntax accepted by [`crate::asm`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = mnemonic(self);
        match *self {
            Instruction::Lui { rd, imm } | Instruction::Auipc { rd, imm } => {
                write!(f, "{name} {rd}, {:#x}", (imm as u32) >> 12)
            }
            Instruction::Jal { rd, imm } => write!(f, "{name} {rd}, {imm}"),
            Instruction::Jalr { rd, rs1, imm } => write!(f, "{name} {rd}, {imm}({rs1})"),
            Instruction::Branch { rs1, rs2, imm, .. } => write!(f, "{name} {rs1}, {rs2}, {imm}"),
            Instruction::Lw { rd, rs1, imm } => write!(f, "{name} {rd}, {imm}({rs1})"),
            Instruction::Sw { rs1, rs2, imm } => write!(f, "{name} {rs2}, {imm}({rs1})"),
            Instruction::OpImm { rd, rs1, imm, .. } => write!(f, "{name} {rd}, {rs1}, {imm}"),
            Instruction::Op { rd, rs1, rs2, .. } | Instruction::Float { rd, rs1, rs2, .. } => {
                write!(f, "{name} {rd}, {rs1}, {rs2}")
            }
            Instruction::Send { rs1, rs2 } => write!(f, "{name} {rs1}, {rs2}"),
            Instruction::Recv { rd } => write!(f, "{name} {rd}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: u8) -> Reg {
        Reg::new(i).unwrap()
    }

    #[test]
    fn decodes_addi_and_nop() {
        assert_eq!(
            decode(InstructionWord(0x00500093)).unwrap(),
            Instruction::OpImm {
                op: ImmOp::Addi,
                rd: r(1),
                rs1: r(0),
                imm: 5
            }
        );
        assert_eq!(
            decode(InstructionWord(0x00000013)).unwrap(),
            Instruction::NOP
        );
    }

    #[test]
    fn encodes_addi() {
        let i = Instruction::OpImm {
            op: ImmOp::Addi,
            rd: r(1),
            rs1: r(0),
            imm: 5,
        };
        assert_eq!(encode(&i).unwrap(), InstructionWord(0x00500093));
    }

    #[test]
    fn send_layout() {
        let w = encode(&Instruction::Send {
            rs1: r(2),
            rs2: r(3),
        })
        .unwrap()
        .0;
        assert_eq!(w & 0x7f, 0b0001011);
        assert_eq!((w >> 12) & 7, 0);
        assert_eq!((w >> 15) & 0x1f, 2);
        assert_eq!((w >> 20) & 0x1f, 3);
        assert_eq!((w >> 7) & 0x1f, 0);
        assert_eq!(w >> 25, 0);
    }

    #[test]
    fn jal_out_of_range() {
        let err = encode(&Instruction::Jal {
            rd: r(1),
            imm: 1 << 20,
        })
        .unwrap_err();
        assert_eq!(err.mnemonic, "jal");
        assert!(encode(&Instruction::Jal {
            rd: r(1),
            imm: -(1 << 20)
        })
        .is_ok());
        assert!(encode(&Instruction::Jal {
            rd: r(1),
            imm: -(1 << 20) - 2
        })
        .is_err());
    }

    #[test]
    fn rejects_unknown_opcodes_and_stray_fields() {
        assert!(decode(InstructionWord(0xffff_ffff)).is_err());
        assert!(decode(InstructionWord(0)).is_err());
        // send with a nonzero rd field
        let send = encode(&Instruction::Send {
            rs1: r(1),
            rs2: r(2),
        })
        .unwrap()
        .0;
        assert!(decode(InstructionWord(send | 1 << 7)).is_err());
        // custom-0 funct3 values past fsub
        for f3 in 5..8u32 {
            assert!(decode(InstructionWord(OP_CUSTOM0 | f3 << 12)).is_err());
        }
        // lb / sb are not part of the subset
        assert!(decode(InstructionWord(0x00010083)).is_err());
    }

    #[test]
    fn float_ops_round_to_nearest() {
        assert_eq!(
            FloatOp::Fmul.apply(2.0f32.to_bits(), 3.0f32.to_bits()),
            0x40C0_0000
        );
        assert_eq!(FloatOp::Fsub.apply(1.0f32.to_bits(), 1.0f32.to_bits()), 0);
        let x = 1.25f32.to_bits();
        assert_eq!(FloatOp::Fadd.apply(x, 0), x);
    }
}
