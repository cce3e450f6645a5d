//! Load scripts as text: one message per line, `ROW COL TYPE ADDR DATA`
//! in hex, `#` starts a comment.

use std::fmt::Write as _;

use thiserror::Error;

use crate::asm::AsmProgram;
use crate::noc::{pack_metadata, Coord, Message, TaskType};
use crate::tile::LUT_ENTRIES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn hex(field: &str) -> Option<u32> {
    let digits = field
        .strip_prefix("0x")
        .or_else(|| field.strip_prefix("0X"))
        .unwrap_or(field);
    u32::from_str_radix(digits, 16).ok()
}

pub fn parse_load_script(text: &str) -> Result<Vec<Message>, ScriptError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(ScriptError {
                line,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let mut v = [0u32; 5];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = hex(f).ok_or_else(|| ScriptError {
                line,
                message: format!("bad hex value `{f}`"),
            })?;
        }
        let meta = pack_metadata(v[0], v[1], v[2], v[3]).map_err(|e| ScriptError {
            line,
            message: e.to_string(),
        })?;
        out.push(Message {
            metadata: meta,
            data: v[4],
        });
    }
    Ok(out)
}

pub fn format_load_script(msgs: &[Message]) -> String {
    let mut s = String::new();
    for m in msgs {
        let meta = m.meta();
        let _ = writeln!(
            s,
            "{:02x} {:02x} {:x} {:04x} {:08x}",
            meta.row,
            meta.col,
            meta.task_type.code(),
            meta.addr,
            m.data
        );
    }
    s
}

/// WRITE_INSTR messages for every program word, plus WRITE_LUT entries
/// for labels named `task0` to `task15`.
pub fn program_messages(coord: Coord, program: &AsmProgram) -> Vec<Message> {
    let mut out = Vec::new();
    for seg in &program.segments {
        for (k, &w) in seg.words.iter().enumerate() {
            let addr = seg.addr + 4 * k as u32;
            out.push(
                Message::new(coord, TaskType::WRITE_INSTR, addr as u16, w)
                    .expect("program fits the grid"),
            );
        }
    }
    for i in 0..LUT_ENTRIES {
        if let Some(pc) = program.symbol(&format!("task{i}")) {
            out.push(
                Message::new(coord, TaskType::WRITE_LUT, i as u16, pc)
                    .expect("program fits the grid"),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let text = "# header\n00 01 1 0010 3f800000\n3f 3f f 0 7 # done\n\n";
        let msgs = parse_load_script(text).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].dest(), Coord::new(0, 1));
        assert_eq!(msgs[0].data, 0x3f80_0000);
        assert_eq!(msgs[1].meta().task_type, TaskType::DONE);
        assert_eq!(parse_load_script(&format_load_script(&msgs)).unwrap(), msgs);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_load_script("0 0 1 0\n").unwrap_err().line, 1);
        assert_eq!(parse_load_script("\n0 0 1 0 zz\n").unwrap_err().line, 2);
        assert!(parse_load_script("40 0 1 0 0\n")
            .unwrap_err()
            .message
            .contains("row"));
    }

    #[test]
    fn task_labels_fill_the_lut() {
        let p = crate::asm::assemble("task0:\n    nop\ntask3:\n    ret\n").unwrap();
        let msgs = program_messages(Coord::new(1, 1), &p);
        let luts: Vec<(u16, u32)> = msgs
            .iter()
            .filter(|m| m.meta().task_type == TaskType::WRITE_LUT)
            .map(|m| (m.meta().addr, m.data))
            .collect();
        assert_eq!(luts, vec![(0, 0), (3, 4)]);
    }
}
