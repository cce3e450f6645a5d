//! Device kernels against the host oracles, plus machine-level
//! determinism, conservation and FIFO-depth independence.

use azul_sim::kernels::{Accelerator, KernelError, PcgOptions, Preconditioner};
use azul_sim::machine::{Machine, MachineConfig};
use azul_sim::oracle::{compare_f32, spmv_ref, sptrsv_ref, OracleMode};
use azul_sim::sparse::{generate, CsrMatrix};
use proptest::prelude::*;

fn config(rows: usize, cols: usize, depth: usize) -> MachineConfig {
    MachineConfig {
        fifo_depth: depth,
        max_cycles: 2_000_000,
        ..MachineConfig::grid(rows, cols)
    }
}

/// pc, registers and data memory of one tile.
type TileSnapshot = (u32, Vec<u32>, Vec<u32>);

/// Every tile's architectural state, for bitwise comparisons.
fn snapshot(m: &Machine) -> Vec<TileSnapshot> {
    m.tiles()
        .iter()
        .map(|t| {
            let regs = (0..32).map(|r| t.reg(r)).collect();
            let dmem = t.dmem_words(0, t.dmem_bytes() / 4).to_vec();
            (t.pc, regs, dmem)
        })
        .collect()
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn check_machine_invariants(m: &Machine) {
    let stats = m.stats();
    for t in &stats.per_tile {
        assert_eq!(
            t.total(),
            stats.phases.exec_cycles,
            "tile ({},{})",
            t.row,
            t.col
        );
    }
    let c = m.network_counters();
    assert!(m.is_quiescent());
    assert_eq!(c.injected, c.delivered + c.to_host);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spmv_matches_same_order_oracle(
        rows in 1usize..70, cols in 1usize..70, density in 0.0f64..0.4, seed in any::<u64>(),
        gr in 1usize..5, gc in 1usize..5, depth in 1usize..5,
    ) {
        let a = generate::random(rows, cols, density, seed);
        let x = generate::random_vector(cols, seed ^ 1);
        let mut acc = Accelerator::new(config(gr, gc, depth)).unwrap();
        let run = acc.run_spmv(&a, &x).unwrap();
        let want = spmv_ref(&a, &x, OracleMode::SameOrder).unwrap();
        prop_assert_eq!(bits(&run.output), bits(&want));
        let f64_ref = spmv_ref(&a, &x, OracleMode::F64).unwrap();
        prop_assert!(compare_f32(&run.output, &f64_ref, 1e-5).unwrap().within_tol);
        prop_assert_eq!(run.data_messages as usize, acc.spmv_partition().unwrap().total_messages());
        check_machine_invariants(acc.machine());
    }

    #[test]
    fn sptrsv_matches_same_order_oracle(
        n in 1usize..70, density in 0.0f64..0.3, seed in any::<u64>(),
        gr in 1usize..5, gc in 1usize..5, depth in 1usize..5,
    ) {
        let l = generate::random_lower(n, density, seed);
        let b = generate::random_vector(n, seed ^ 2);
        let mut acc = Accelerator::new(config(gr, gc, depth)).unwrap();
        let run = acc.run_sptrsv(&l, &b).unwrap();
        let want = sptrsv_ref(&l, &b, OracleMode::SameOrder).unwrap();
        prop_assert_eq!(bits(&run.output), bits(&want));
        prop_assert_eq!(run.data_messages as usize, acc.sptrsv_partition().unwrap().total_messages());
        check_machine_invariants(acc.machine());
    }

    #[test]
    fn pcg_reports_honestly(n in 2usize..40, seed in any::<u64>(), max_iters in 1usize..30) {
        let a = generate::random_spd(n, 0.2, seed);
        let b: Vec<f64> = generate::random_vector(n, seed ^ 3).into_iter().map(f64::from).collect();
        let opts = PcgOptions { tol: 1e-6, max_iters, preconditioner: Preconditioner::Jacobi };
        let mut acc = Accelerator::new(config(2, 2, 4)).unwrap();
        let res = acc.run_pcg(&a, &b, &opts).unwrap();
        prop_assert!(res.residual_history.len() <= max_iters);
        prop_assert_eq!(res.iterations, res.residual_history.len());
        if res.converged {
            prop_assert!(*res.residual_history.last().unwrap_or(&0.0) <= opts.tol);
        }
    }
}

#[test]
fn sptrsv_on_random_lower_60_uses_one_message_per_consumer_column() {
    let l = generate::random_lower(60, 0.1, 11);
    let b = generate::random_vector(60, 12);
    let mut acc = Accelerator::new(config(2, 2, 16)).unwrap();
    let run = acc.run_sptrsv(&l, &b).unwrap();
    let part = acc.sptrsv_partition().unwrap();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..60 {
        for (j, _) in l.row(i) {
            if j < i && part.row_owner[i] != part.row_owner[j] {
                pairs.insert((part.row_owner[i], j));
            }
        }
    }
    assert!(!pairs.is_empty());
    assert_eq!(run.data_messages as usize, pairs.len());
    assert_eq!(
        bits(&run.output),
        bits(&sptrsv_ref(&l, &b, OracleMode::SameOrder).unwrap())
    );
}

fn solve_all(depth: usize) -> Vec<Vec<TileSnapshot>> {
    let mut out = Vec::new();
    for case in generate::spmv_corpus() {
        let x = generate::random_vector(case.matrix.n_cols, 5);
        let mut acc = Accelerator::new(config(3, 3, depth)).unwrap();
        acc.run_spmv(&case.matrix, &x).unwrap();
        out.push(snapshot(acc.machine()));
    }
    for case in generate::sptrsv_corpus() {
        let b = generate::random_vector(case.matrix.n_rows, 6);
        let mut acc = Accelerator::new(config(3, 3, depth)).unwrap();
        acc.run_sptrsv(&case.matrix, &b).unwrap();
        out.push(snapshot(acc.machine()));
    }
    out
}

#[test]
fn data_memories_do_not_depend_on_fifo_depth() {
    let reference = solve_all(16);
    for depth in [1, 2, 5] {
        let got = solve_all(depth);
        for (k, (a, b)) in reference.iter().zip(&got).enumerate() {
            let dmem = |s: &Vec<TileSnapshot>| s.iter().map(|t| t.2.clone()).collect::<Vec<_>>();
            assert!(dmem(a) == dmem(b), "case {k} differs at depth {depth}");
        }
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let a = generate::random(80, 80, 0.08, 21);
    let x = generate::random_vector(80, 22);
    let run = || {
        let mut acc = Accelerator::new(config(4, 4, 2)).unwrap();
        let r = acc.run_spmv(&a, &x).unwrap();
        (
            serde_json::to_string(&r.stats).unwrap(),
            bits(&r.output),
            snapshot(acc.machine()),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn quiescent_machine_stays_put() {
    let l = generate::random_lower(50, 0.1, 8);
    let b = generate::random_vector(50, 9);
    let mut acc = Accelerator::new(config(2, 3, 4)).unwrap();
    acc.run_sptrsv(&l, &b).unwrap();
    let before = snapshot(acc.machine());
    acc.machine_mut().run_cycles(1).unwrap();
    assert!(acc.machine().is_quiescent());
    assert_eq!(before, snapshot(acc.machine()));
}

#[test]
fn repeated_solves_reuse_the_image() {
    let l = generate::random_lower(40, 0.15, 4);
    let mut acc = Accelerator::new(config(2, 2, 16)).unwrap();
    for k in 0..5 {
        let b = generate::random_vector(40, 100 + k);
        let run = acc.run_sptrsv(&l, &b).unwrap();
        assert_eq!(run.reused, k > 0);
        if k > 0 {
            assert_eq!(
                run.load.write_instr + run.load.write_lut + run.load.matrix_data,
                0
            );
        }
        assert_eq!(
            bits(&run.output),
            bits(&sptrsv_ref(&l, &b, OracleMode::SameOrder).unwrap())
        );
    }
}

#[test]
fn singular_and_malformed_inputs_are_rejected() {
    let mut acc = Accelerator::new(config(2, 2, 4)).unwrap();
    let upper = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
    assert!(acc.run_sptrsv(&upper, &[1.0, 1.0]).is_err());
    let zero_diag = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
    assert!(acc.run_sptrsv(&zero_diag, &[1.0, 1.0]).is_err());
    let a = CsrMatrix::identity(3);
    assert!(matches!(
        acc.run_spmv(&a, &[1.0, 2.0]),
        Err(KernelError::Dimension { .. })
    ));
    let unsym = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
    assert!(matches!(
        acc.run_pcg(&unsym, &[1.0, 1.0], &PcgOptions::default()),
        Err(KernelError::NotSymmetric)
    ));
}

#[test]
fn full_grid_spmv_with_single_slot_queues() {
    let a = generate::random(400, 400, 0.05, 77);
    let x = generate::random_vector(400, 78);
    let mut acc = Accelerator::new(config(16, 16, 1)).unwrap();
    let run = acc.run_spmv(&a, &x).unwrap();
    assert_eq!(
        bits(&run.output),
        bits(&spmv_ref(&a, &x, OracleMode::SameOrder).unwrap())
    );
    check_machine_invariants(acc.machine());
}
