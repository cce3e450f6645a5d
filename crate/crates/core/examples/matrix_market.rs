//! Read a Matrix Market file (default: the bundled tridiagonal) and run SpMV.

use azul_sim::cli::load_matrix;
use azul_sim::kernels::Accelerator;
use azul_sim::machine::MachineConfig;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/tridiag16.mtx").into());
    let a = load_matrix(path.as_ref()).unwrap_or_else(|e| panic!("{e}"));
    println!("{path}: {}x{}, {} nonzeros", a.n_rows, a.n_cols, a.nnz());

    let x = vec![1.0f32; a.n_cols];
    let mut acc = Accelerator::new(MachineConfig::grid(2, 2)).expect("config");
    let run = acc.run_spmv(&a, &x).expect("spmv");
    println!("row sums: {:?}", run.output);
}
