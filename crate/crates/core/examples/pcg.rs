//! Jacobi-preconditioned CG on the host, with every A p on the device.

use azul_sim::kernels::{Accelerator, PcgOptions, Preconditioner};
use azul_sim::machine::MachineConfig;
use azul_sim::sparse::generate;

fn main() {
    let a = generate::tridiagonal(128, 4.0, -1.0);
    let b = vec![1.0f64; 128];
    let opts = PcgOptions {
        tol: 1e-6,
        max_iters: 256,
        preconditioner: Preconditioner::Jacobi,
    };
    let mut acc = Accelerator::new(MachineConfig::grid(4, 4)).expect("config");
    let res = acc.run_pcg(&a, &b, &opts).expect("pcg");

    for (k, r) in res.residual_history.iter().enumerate() {
        println!("iter {:>3}  residual {r:.3e}", k + 1);
    }
    println!(
        "converged {} after {} iterations",
        res.converged, res.iterations
    );
    println!("true relative residual {:.3e}", res.true_relative_residual);
    if let Some(s) = &res.stats {
        println!("device cycles over all products {}", s.total_cycles());
    }
}
