//! y = A x on a 4x4 grid, checked against both oracles.

use azul_sim::kernels::Accelerator;
use azul_sim::machine::MachineConfig;
use azul_sim::oracle::{compare_f32, spmv_ref, OracleMode};
use azul_sim::sparse::generate;

fn main() {
    let a = generate::random(300, 300, 0.03, 42);
    let x = generate::random_vector(300, 43);
    let mut acc = Accelerator::new(MachineConfig::grid(4, 4)).expect("config");
    let run = acc.run_spmv(&a, &x).expect("spmv");

    let same = spmv_ref(&a, &x, OracleMode::SameOrder).expect("oracle");
    let exact = spmv_ref(&a, &x, OracleMode::F64).expect("oracle");
    let bitwise = compare_f32(&run.output, &same, 0.0)
        .expect("compare")
        .bitwise_equal;
    let rel = compare_f32(&run.output, &exact, 1e-5)
        .expect("compare")
        .rel_inf_norm;

    println!(
        "nnz {}, exec cycles {}",
        a.nnz(),
        run.stats.phases.exec_cycles
    );
    println!("tile-to-tile messages {}", run.data_messages);
    println!("bitwise equal to same-order oracle: {bitwise}");
    println!("relative inf-norm error against f64: {rel:.2e}");
}
