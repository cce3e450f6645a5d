//! Solve L x = b with level scheduling and compare FIFO depths.

use azul_sim::kernels::Accelerator;
use azul_sim::machine::MachineConfig;
use azul_sim::oracle::{sptrsv_ref, OracleMode};
use azul_sim::sparse::{compute_levels, generate};

fn main() {
    let l = generate::random_lower(400, 0.01, 5);
    let b = generate::random_vector(400, 6);
    let levels = compute_levels(&l).expect("lower triangular");
    println!("{} rows in {} levels", l.n_rows, levels.histogram.len());

    let want = sptrsv_ref(&l, &b, OracleMode::SameOrder).expect("oracle");
    for depth in [1, 2, 16] {
        let config = MachineConfig {
            fifo_depth: depth,
            ..MachineConfig::grid(4, 4)
        };
        let mut acc = Accelerator::new(config).expect("config");
        let run = acc.run_sptrsv(&l, &b).expect("sptrsv");
        let same = run
            .output
            .iter()
            .zip(&want)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        println!(
            "fifo depth {depth:>2}: exec cycles {:>6}, messages {:>4}, bitwise equal {same}",
            run.stats.phases.exec_cycles, run.data_messages
        );
    }
}
