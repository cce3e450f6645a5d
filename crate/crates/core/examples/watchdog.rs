//! Two tiles each wait for the other; the watchdog reports who is stuck.

use azul_sim::asm::assemble;
use azul_sim::machine::{Machine, MachineConfig, SimError};
use azul_sim::noc::Coord;
use azul_sim::script::program_messages;

fn main() {
    let config = MachineConfig {
        max_cycles: 1000,
        ..MachineConfig::grid(1, 2)
    };
    let mut m = Machine::new(config).expect("config");
    let wait = assemble(include_str!("../data/wait.s")).expect("assemble");
    let tiles = [Coord::new(0, 0), Coord::new(0, 1)];
    let script: Vec<_> = tiles
        .iter()
        .flat_map(|&c| program_messages(c, &wait))
        .collect();
    m.load_phase(&script).expect("load");
    m.start_tasks(&tiles.map(|c| (c, 0))).expect("start");

    match m.run_until_quiescent() {
        Err(SimError::DeadlockSuspected {
            cycles,
            diagnostics,
        }) => {
            println!("no progress after {cycles} cycles");
            for t in &diagnostics.tiles {
                println!("  tile {} {:?} at pc {:#x}", t.coord, t.mode, t.pc);
            }
        }
        other => println!("unexpected outcome: {other:?}"),
    }
}
