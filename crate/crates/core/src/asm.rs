//! Two-pass assembler and disassembler for tile programs.
//!
//! One instruction or directive per line, `#` starts a comment, labels are
//! `name:` and may share a line with an instruction. Directives: `.org ADDR`
//! starts a new segment, `.word VALUE|LABEL` emits a raw word. The only
//! pseudo-instructions are `nop` and `ret` (`jalr x0, 0(x0)`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::isa::{
    decode, encode, BranchOp, FloatOp, ImmOp, Instruction, InstructionWord, Reg, RegOp,
};
use crate::tile::IMEM_BYTES;

/// A contiguous run of words starting at a byte address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub addr: u32,
    pub words: Vec<u32>,
}

impl Segment {
    pub fn end(&self) -> u32 {
        self.addr + 4 * self.words.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmProgram {
    pub symbols: BTreeMap<String, u32>,
    pub segments: Vec<Segment>,
}

impl AsmProgram {
    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    pub fn size_bytes(&self) -> usize {
        self.segments.iter().map(|s| s.words.len() * 4).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("{0}")]
    Range(String),
    #[error("{0}")]
    Syntax(String),
    #[error("recv needs rd <= x30 (data goes to rd+1)")]
    RecvX31,
    #[error("segment at {0:#x} overlaps a previous segment")]
    Overlap(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

/// An operand that may need the symbol table.
#[derive(Debug, Clone)]
enum Target {
    Value(i64),
    Label(String),
}

#[derive(Debug, Clone)]
enum Item {
    Instr(Instruction),
    /// Branch or jal whose offset depends on a label.
    Relative {
        mnemonic: String,
        rd: Reg,
        rs1: Reg,
        rs2: Reg,
        target: Target,
    },
    Word(Target),
}

struct Placed {
    line: usize,
    addr: u32,
    item: Item,
}

fn syntax(msg: impl Into<String>) -> AsmErrorKind {
    AsmErrorKind::Syntax(msg.into())
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok.strip_prefix('+').unwrap_or(tok)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_reg(tok: &str) -> Result<Reg, AsmErrorKind> {
    tok.strip_prefix('x')
        .and_then(|n| n.parse::<u8>().ok())
        .and_then(Reg::new)
        .ok_or_else(|| syntax(format!("expected register x0..x31, found `{tok}`")))
}

fn is_label(tok: &str) -> bool {
    let mut chars = tok.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_target(tok: &str) -> Result<Target, AsmErrorKind> {
    if let Some(v) = parse_int(tok) {
        Ok(Target::Value(v))
    } else if is_label(tok) {
        Ok(Target::Label(tok.to_string()))
    } else {
        Err(syntax(format!("expected number or label, found `{tok}`")))
    }
}

fn imm_in(tok: &str, lo: i64, hi: i64) -> Result<i32, AsmErrorKind> {
    let v = parse_int(tok).ok_or_else(|| syntax(format!("expected immediate, found `{tok}`")))?;
    if v < lo || v > hi {
        return Err(AsmErrorKind::Range(format!(
            "immediate {tok} outside [{lo}, {hi}]"
        )));
    }
    Ok(v as i32)
}

/// Parses `imm(reg)`.
fn parse_mem(tok: &str) -> Result<(i32, Reg), AsmErrorKind> {
    let open = tok
        .find('(')
        .ok_or_else(|| syntax(format!("expected imm(reg), found `{tok}`")))?;
    let close = tok
        .strip_suffix(')')
        .ok_or_else(|| syntax(format!("expected imm(reg), found `{tok}`")))?;
    let imm_tok = tok[..open].trim();
    let imm = if imm_tok.is_empty() {
        0
    } else {
        imm_in(imm_tok, -2048, 2047)?
    };
    Ok((imm, parse_reg(close[open + 1..].trim())?))
}

fn expect_args<'a>(
    args: &'a [&'a str],
    n: usize,
    mnemonic: &str,
) -> Result<&'a [&'a str], AsmErrorKind> {
    if args.len() != n {
        return Err(syntax(format!(
            "`{mnemonic}` takes {n} operand(s), found {}",
            args.len()
        )));
    }
    Ok(args)
}

fn parse_instruction(mnemonic: &str, args: &[&str]) -> Result<Item, AsmErrorKind> {
    let lower = mnemonic.to_ascii_lowercase();
    let m = lower.as_str();
    let item = |i| Ok(Item::Instr(i));

    if let Some(op) = ImmOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        let a = expect_args(args, 3, m)?;
        let imm = if op.is_shift() {
            imm_in(a[2], 0, 31)?
        } else {
            imm_in(a[2], -2048, 2047)?
        };
        return item(Instruction::OpImm {
            op,
            rd: parse_reg(a[0])?,
            rs1: parse_reg(a[1])?,
            imm,
        });
    }
    if let Some(op) = RegOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        let a = expect_args(args, 3, m)?;
        return item(Instruction::Op {
            op,
            rd: parse_reg(a[0])?,
            rs1: parse_reg(a[1])?,
            rs2: parse_reg(a[2])?,
        });
    }
    if let Some(op) = FloatOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        let a = expect_args(args, 3, m)?;
        return item(Instruction::Float {
            op,
            rd: parse_reg(a[0])?,
            rs1: parse_reg(a[1])?,
            rs2: parse_reg(a[2])?,
        });
    }
    if BranchOp::ALL.into_iter().any(|o| o.mnemonic() == m) {
        let a = expect_args(args, 3, m)?;
        return Ok(Item::Relative {
            mnemonic: m.to_string(),
            rd: Reg::ZERO,
            rs1: parse_reg(a[0])?,
            rs2: parse_reg(a[1])?,
            target: parse_target(a[2])?,
        });
    }
    match m {
        "nop" => {
            expect_args(args, 0, m)?;
            item(Instruction::NOP)
        }
        "ret" => {
            expect_args(args, 0, m)?;
            item(Instruction::RET)
        }
        "lui" | "auipc" => {
            let a = expect_args(args, 2, m)?;
            let rd = parse_reg(a[0])?;
            let upper = imm_in(a[1], -(1 << 19), (1 << 20) - 1)?;
            let imm = ((upper as u32) << 12) as i32;
            item(if m == "lui" {
                Instruction::Lui { rd, imm }
            } else {
                Instruction::Auipc { rd, imm }
            })
        }
        "jal" => {
            let a = expect_args(args, 2, m)?;
            Ok(Item::Relative {
                mnemonic: m.to_string(),
                rd: parse_reg(a[0])?,
                rs1: Reg::ZERO,
                rs2: Reg::ZERO,
                target: parse_target(a[1])?,
            })
        }
        "jalr" => {
            let a = expect_args(args, 2, m)?;
            let (imm, rs1) = parse_mem(a[1])?;
            item(Instruction::Jalr {
                rd: parse_reg(a[0])?,
                rs1,
                imm,
            })
        }
        "lw" => {
            let a = expect_args(args, 2, m)?;
            let (imm, rs1) = parse_mem(a[1])?;
            item(Instruction::Lw {
                rd: parse_reg(a[0])?,
                rs1,
                imm,
            })
        }
        "sw" => {
            let a = expect_args(args, 2, m)?;
            let (imm, rs1) = parse_mem(a[1])?;
            item(Instruction::Sw {
                rs1,
                rs2: parse_reg(a[0])?,
                imm,
            })
        }
        "send" => {
            let a = expect_args(args, 2, m)?;
            item(Instruction::Send {
                rs1: parse_reg(a[0])?,
                rs2: parse_reg(a[1])?,
            })
        }
        "recv" => {
            let a = expect_args(args, 1, m)?;
            let rd = parse_reg(a[0])?;
            if rd.index() == 31 {
                return Err(AsmErrorKind::RecvX31);
            }
            item(Instruction::Recv { rd })
        }
        _ => Err(AsmErrorKind::UnknownMnemonic(mnemonic.to_string())),
    }
}

fn resolve(target: &Target, symbols: &BTreeMap<String, u32>) -> Result<i64, AsmErrorKind> {
    match target {
        Target::Value(v) => Ok(*v),
        Target::Label(l) => symbols
            .get(l)
            .map(|&a| a as i64)
            .ok_or_else(|| AsmErrorKind::UnresolvedLabel(l.clone())),
    }
}

/// Assembles `source` into instruction-memory segments.
pub fn assemble(source: &str) -> Result<AsmProgram, AsmError> {
    let mut symbols = BTreeMap::new();
    let mut placed = Vec::new();
    let mut seg_starts = vec![(0usize, 0u32)];
    let mut addr: u32 = 0;

    // Pass 1: addresses and labels.
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| AsmError { line, kind };
        let mut text = raw.split('#').next().unwrap_or("").trim();
        while let Some(colon) = text.find(':') {
            let label = text[..colon].trim();
            if !is_label(label) {
                return Err(err(syntax(format!("bad label `{label}`"))));
            }
            if symbols.insert(label.to_string(), addr).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(label.to_string())));
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = match text.find(char::is_whitespace) {
            Some(i) => (&text[..i], text[i..].trim()),
            None => (text, ""),
        };
        let args: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        let item = match head {
            ".org" => {
                let a = expect_args(&args, 1, ".org").map_err(err)?;
                let v =
                    parse_int(a[0]).ok_or_else(|| err(syntax("expected address after .org")))?;
                if v < 0 || v % 4 != 0 || v >= IMEM_BYTES as i64 {
                    return Err(err(AsmErrorKind::Range(format!(
                        ".org {} must be word aligned and inside instruction memory",
                        a[0]
                    ))));
                }
                addr = v as u32;
                seg_starts.push((placed.len(), addr));
                continue;
            }
            ".word" => Item::Word(
                parse_target(expect_args(&args, 1, ".word").map_err(err)?[0]).map_err(err)?,
            ),
            _ => parse_instruction(head, &args).map_err(err)?,
        };
        if addr as usize >= IMEM_BYTES {
            return Err(err(AsmErrorKind::Range(
                "program runs past the end of instruction memory".into(),
            )));
        }
        placed.push(Placed { line, addr, item });
        addr += 4;
    }

    // Pass 2: resolve and encode.
    let mut words = Vec::with_capacity(placed.len());
    for p in &placed {
        let err = |kind| AsmError { line: p.line, kind };
        let instr = match &p.item {
            Item::Instr(i) => *i,
            Item::Word(t) => {
                let v = resolve(t, &symbols).map_err(err)?;
                if !(-(1i64 << 31)..(1i64 << 32)).contains(&v) {
                    return Err(err(AsmErrorKind::Range(format!(
                        ".word {v} does not fit 32 bits"
                    ))));
                }
                words.push(v as u32);
                continue;
            }
            Item::Relative {
                mnemonic,
                rd,
                rs1,
                rs2,
                target,
            } => {
                let offset = match target {
                    Target::Value(v) => *v,
                    Target::Label(_) => resolve(target, &symbols).map_err(err)? - p.addr as i64,
                };
                let imm = i32::try_from(offset)
                    .map_err(|_| err(AsmErrorKind::Range(format!("offset {offset}"))))?;
                if mnemonic == "jal" {
                    Instruction::Jal { rd: *rd, imm }
                } else {
                    let op = BranchOp::ALL
                        .into_iter()
                        .find(|o| o.mnemonic() == mnemonic)
                        .expect("parsed branch");
                    Instruction::Branch {
                        op,
                        rs1: *rs1,
                        rs2: *rs2,
                        imm,
                    }
                }
            }
        };
        let w = encode(&instr).map_err(|e| err(AsmErrorKind::Range(e.to_string())))?;
        words.push(w.0);
    }

    // Group words into segments.
    let mut segments: Vec<Segment> = Vec::new();
    for (k, &(start, seg_addr)) in seg_starts.iter().enumerate() {
        let end = seg_starts.get(k + 1).map_or(placed.len(), |s| s.0);
        if end > start {
            segments.push(Segment {
                addr: seg_addr,
                words: words[start..end].to_vec(),
            });
        }
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&i| segments[i].addr);
    for pair in order.windows(2) {
        let (a, b) = (&segments[pair[0]], &segments[pair[1]]);
        if a.end() > b.addr {
            let line = placed
                .iter()
                .find(|p| p.addr == b.addr)
                .map_or(0, |p| p.line);
            return Err(AsmError {
                line,
                kind: AsmErrorKind::Overlap(b.addr),
            });
        }
    }
    Ok(AsmProgram { symbols, segments })
}

/// Renders segments as source text that [`assemble`] turns back into the
/// same words. Undecodable words become `.word` directives.
pub fn disassemble(segments: &[Segment]) -> String {
    let mut out = String::new();
    for seg in segments {
        let _ = writeln!(out, ".org {:#x}", seg.addr);
        for &w in &seg.words {
            match decode(InstructionWord(w)) {
                Ok(i) => {
                    let _ = writeln!(out, "{i}");
                }
                Err(_) => {
                    let _ = writeln!(out, ".word {w:#010x}");
                }
            }
        }
    }
    out
}
