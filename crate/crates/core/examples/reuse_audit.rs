//! Repeated solves with one matrix: only the vector is reloaded.

use azul_sim::kernels::Accelerator;
use azul_sim::machine::MachineConfig;
use azul_sim::sparse::generate;

fn main() {
    let l = generate::random_lower(200, 0.02, 9);
    let mut acc = Accelerator::new(MachineConfig::grid(4, 4)).expect("config");
    for k in 0..4 {
        let b = generate::random_vector(200, k);
        let run = acc.run_sptrsv(&l, &b).expect("sptrsv");
        let l = &run.load;
        println!(
            "solve {k}: reused {:<5} instr {:>5} lut {:>3} matrix {:>5} vector {:>4}",
            run.reused, l.write_instr, l.write_lut, l.matrix_data, l.vector_data
        );
    }
}
