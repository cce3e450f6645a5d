//! Two tiles play ping-pong: (0,0) sends 7, (0,1) adds one and replies.

use azul_sim::asm::assemble;
use azul_sim::machine::{Machine, MachineConfig};
use azul_sim::noc::Coord;
use azul_sim::script::program_messages;

const PING: &str = include_str!("../data/ping.s");
const PONG: &str = include_str!("../data/pong.s");

fn main() {
    let mut m = Machine::new(MachineConfig::grid(1, 2)).expect("config");
    let (a, b) = (Coord::new(0, 0), Coord::new(0, 1));
    let mut script = program_messages(a, &assemble(PING).expect("ping"));
    script.extend(program_messages(b, &assemble(PONG).expect("pong")));

    let load = m.load_phase(&script).expect("load");
    m.start_tasks(&[(a, 0), (b, 0)]).expect("start");
    let stats = m.run_until_quiescent().expect("run");

    println!(
        "loaded in {load} cycles, ran in {} cycles",
        stats.phases.exec_cycles
    );
    println!("reply stored at (0,0): {}", m.tile(a).dmem_word(0));
    for t in &stats.per_tile {
        println!(
            "tile ({},{}) busy {} stall_send {} stall_recv {} idle {}",
            t.row, t.col, t.busy, t.stall_send, t.stall_recv, t.idle
        );
    }
}
