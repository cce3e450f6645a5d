//! Assemble a few instructions, decode the words back and print both forms.

use azul_sim::asm::assemble;
use azul_sim::isa::{decode, InstructionWord};

fn main() {
    let src = "\
        addi x1, x0, 5
        lw x2, 8(x1)
        fmul x3, x2, x2
        send x4, x3
        recv x10
        ret
    ";
    let program = assemble(src).expect("assemble");
    for seg in &program.segments {
        for (k, &w) in seg.words.iter().enumerate() {
            let insn = decode(InstructionWord(w)).expect("decode");
            println!("{:#06x}  {w:#010x}  {insn}", seg.addr + 4 * k as u32);
        }
    }
}
