//! Sparse formats, level scheduling and partitions against brute-force
//! oracles.

use std::collections::{BTreeMap, BTreeSet};

use azul_sim::sparse::generate;
use azul_sim::sparse::{
    compute_levels, coo_to_csr, parse_matrix_market, partition_spmv, partition_sptrsv, phase_codes,
    send_phase, write_matrix_market, CooMatrix, CsrMatrix, PartitionOptions, SPMV_MAX_PHASES,
};
use proptest::prelude::*;

fn check_csr_shape(m: &CsrMatrix) {
    assert_eq!(m.row_ptr.len(), m.n_rows + 1);
    assert_eq!(m.row_ptr[0], 0);
    assert_eq!(*m.row_ptr.last().unwrap(), m.col_idx.len());
    assert_eq!(m.col_idx.len(), m.values.len());
    for i in 0..m.n_rows {
        let cols = &m.col_idx[m.row_ptr[i]..m.row_ptr[i + 1]];
        assert!(
            cols.windows(2).all(|w| w[0] < w[1]),
            "row {i} columns not strictly ascending"
        );
        assert!(cols.iter().all(|&c| c < m.n_cols));
    }
}

/// Longest dependency chain ending at each row, by repeated relaxation.
fn brute_force_levels(l: &CsrMatrix) -> Vec<usize> {
    let n = l.n_rows;
    let mut level = vec![0usize; n];
    for _ in 0..n {
        let mut changed = false;
        for i in 0..n {
            for (j, _) in l.row(i) {
                if j < i && level[j] + 1 > level[i] {
                    level[i] = level[j] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    level
}

fn grid() -> impl Strategy<Value = (usize, usize)> {
    (1usize..5, 1usize..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coo_to_csr_matches_dense_accumulation(
        rows in 1usize..12, cols in 1usize..12,
        entries in proptest::collection::vec((0usize..12, 0usize..12, -8i32..8), 0..80),
    ) {
        let mut coo = CooMatrix::new(rows, cols);
        let mut dense = vec![vec![0f32; cols]; rows];
        for &(r, c, v) in &entries {
            let (r, c, v) = (r % rows, c % cols, v as f32 * 0.25);
            coo.push(r, c, v);
            dense[r][c] += v;
        }
        let csr = coo_to_csr(&coo);
        check_csr_shape(&csr);
        prop_assert_eq!(csr.to_dense(), dense);
    }

    #[test]
    fn levels_match_longest_path(n in 1usize..80, density in 0.0f64..0.3, seed in any::<u64>()) {
        let l = generate::random_lower(n, density, seed);
        let levels = compute_levels(&l).unwrap();
        prop_assert_eq!(&levels.level, &brute_force_levels(&l));
        for i in 0..n {
            for (j, _) in l.row(i) {
                if j < i {
                    prop_assert!(levels.level[j] < levels.level[i]);
                }
            }
        }
        let mut hist = BTreeMap::new();
        for &lv in &levels.level {
            *hist.entry(lv).or_insert(0) += 1;
        }
        prop_assert_eq!(levels.histogram, hist);
    }

    #[test]
    fn matrix_market_roundtrip(rows in 1usize..30, cols in 1usize..30, density in 0.0f64..0.5, seed in any::<u64>()) {
        let m = generate::random(rows, cols, density, seed);
        let text = write_matrix_market(&m);
        let back = coo_to_csr(&parse_matrix_market(&text).unwrap());
        prop_assert_eq!(back, m);
    }

    #[test]
    fn spmv_partition_is_complete_and_sound(
        rows in 1usize..90, cols in 1usize..90, density in 0.0f64..0.4, seed in any::<u64>(), (gr, gc) in grid(),
    ) {
        let m = generate::random(rows, cols, density, seed);
        let opts = PartitionOptions::grid(gr, gc);
        let part = partition_spmv(&m, &opts).unwrap();

        // Rows: contiguous, disjoint, covering.
        let mut next = 0;
        for t in &part.tiles {
            prop_assert_eq!(t.rows.start, next);
            next = t.rows.end;
            for i in t.rows.clone() {
                prop_assert_eq!(part.row_owner[i], t.index);
            }
            prop_assert_eq!(t.local.n_rows, t.rows.len());
        }
        prop_assert_eq!(next, rows);

        // Balance: no tile exceeds its fair share by more than one row.
        let fair = m.nnz().div_ceil(part.tiles.len());
        for t in &part.tiles {
            prop_assert!(t.local.nnz() <= fair + m.max_row_nnz());
        }

        // Every off-tile operand arrives exactly once per consumer tile.
        let mut needed = BTreeSet::new();
        for i in 0..rows {
            for (j, _) in m.row(i) {
                let (consumer, producer) = (part.row_owner[i], part.col_owner[j]);
                if consumer != producer {
                    needed.insert((producer, consumer, j));
                }
            }
        }
        let mut sent = Vec::new();
        for t in &part.tiles {
            for s in &t.sends {
                sent.push((t.index, s.dest_index, s.col));
                prop_assert_eq!(part.tiles[s.dest_index].coord, s.dest);
                prop_assert_eq!(Some(s.dest_slot), part.tiles[s.dest_index].x_slot(s.col));
                prop_assert_eq!(Some(s.src_slot), t.x_slot(s.col));
            }
        }
        let sent_set: BTreeSet<_> = sent.iter().copied().collect();
        prop_assert_eq!(sent.len(), sent_set.len(), "duplicate sends");
        prop_assert_eq!(sent_set, needed.clone());
        prop_assert_eq!(part.total_messages(), needed.len());
        for t in &part.tiles {
            let want: Vec<usize> = needed.iter().filter(|n| n.1 == t.index).map(|n| n.2).collect::<BTreeSet<_>>().into_iter().collect();
            prop_assert_eq!(&t.recv_cols, &want);
        }

        // Within a phase no sender is also a receiver.
        for phase in 0..SPMV_MAX_PHASES {
            let senders: BTreeSet<usize> = part.tiles.iter().filter(|t| !t.phase_sends(phase).is_empty()).map(|t| t.index).collect();
            for t in &part.tiles {
                for s in t.phase_sends(phase) {
                    prop_assert_eq!(s.phase, phase);
                    prop_assert!(!senders.contains(&s.dest_index), "tile {} receives while sending in phase {}", s.dest_index, phase);
                }
            }
        }

        // Layout regions in order and inside data memory.
        for t in &part.tiles {
            let l = &t.layout;
            let marks = [l.header, l.send_table, l.records, l.row_ptr, l.x_slots, l.y_slots, l.end];
            prop_assert!(marks.windows(2).all(|w| w[0] <= w[1]), "{:?}", l);
            prop_assert!(l.end as usize <= 64 * 1024);
        }
    }

    #[test]
    fn sptrsv_partition_is_complete_and_sound(
        n in 1usize..90, density in 0.0f64..0.3, seed in any::<u64>(), (gr, gc) in grid(),
    ) {
        let l = generate::random_lower(n, density, seed);
        let part = partition_sptrsv(&l, &PartitionOptions::grid(gr, gc)).unwrap();

        let mut owned = vec![0usize; n];
        for t in &part.tiles {
            for i in t.rows.clone() {
                owned[i] += 1;
                prop_assert_eq!(part.row_owner[i], t.index);
            }
            // Processing order: every owned row once, ascending level.
            let rows: BTreeSet<usize> = t.order.iter().map(|r| r.row).collect();
            prop_assert_eq!(rows, t.rows.clone().collect::<BTreeSet<_>>());
            prop_assert!(t.order.windows(2).all(|w| (w[0].level, w[0].row) < (w[1].level, w[1].row)));
            prop_assert!(t.footprint() <= 64 * 1024);
        }
        prop_assert!(owned.iter().all(|&c| c == 1));

        // Off-tile dependencies: one message per (consumer tile, column).
        let mut needed = BTreeSet::new();
        for i in 0..n {
            for (j, _) in l.row(i) {
                if j < i && part.row_owner[j] != part.row_owner[i] {
                    needed.insert((part.row_owner[i], j));
                }
            }
        }
        prop_assert_eq!(part.total_messages(), needed.len());
        for t in &part.tiles {
            for r in &t.order {
                let consumers: BTreeSet<usize> = needed.iter().filter(|d| d.1 == r.row).map(|d| d.0).collect();
                prop_assert_eq!(&r.consumers, &consumers.into_iter().collect::<Vec<_>>());
                let off_tile: BTreeSet<usize> = r.off_diag.iter().map(|&(j, _)| j).filter(|&j| !t.rows.contains(&j)).collect();
                prop_assert_eq!(r.counter as usize, off_tile.len());
                prop_assert_eq!(r.inv_diag.to_bits(), (1.0f32 / r.diag).to_bits());
            }
            let recv: Vec<usize> = t.recv.iter().map(|r| r.col).collect();
            let want: Vec<usize> = needed.iter().filter(|d| d.0 == t.index).map(|d| d.1).collect::<BTreeSet<_>>().into_iter().collect();
            prop_assert_eq!(recv, want);
            for rec in &t.recv {
                for &pos in &rec.dependents {
                    prop_assert!(t.order[pos].off_diag.iter().any(|&(j, _)| j == rec.col));
                }
            }
        }
    }
}

#[test]
fn corpus_meets_balance_bound_on_every_grid() {
    for case in generate::spmv_corpus() {
        for (gr, gc) in [(1, 1), (2, 2), (4, 4), (16, 16), (3, 5)] {
            let part = partition_spmv(&case.matrix, &PartitionOptions::grid(gr, gc)).unwrap();
            let fair = case.matrix.nnz().div_ceil(part.tiles.len());
            for t in &part.tiles {
                assert!(
                    t.local.nnz() <= fair + case.matrix.max_row_nnz(),
                    "{} on {gr}x{gc}",
                    case.name
                );
            }
        }
    }
}

#[test]
fn matrix_market_symmetric_and_pattern() {
    let text =
        "%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 3\n1 1 2.0\n2 1 -1.0\n3 3 4\n";
    let m = coo_to_csr(&parse_matrix_market(text).unwrap());
    assert_eq!(
        m.to_dense(),
        vec![
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 0.0, 4.0]
        ]
    );
    let text = "%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n";
    let m = coo_to_csr(&parse_matrix_market(text).unwrap());
    assert_eq!(m.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    let err =
        parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
            .unwrap_err();
    assert_eq!(err.line, 3);
}

#[test]
fn phase_codes_separate_every_ordered_pair() {
    for tiles in (1..=300).chain([3969]) {
        let codes = phase_codes(tiles);
        assert_eq!(codes.len(), tiles);
        let k = 32 - codes.iter().fold(0, |a, &c| a | c).leading_zeros() as usize;
        assert!(k <= SPMV_MAX_PHASES, "{tiles} tiles need {k} phases");
        if tiles > 300 {
            continue;
        }
        for (a, &ca) in codes.iter().enumerate() {
            for (b, &cb) in codes.iter().enumerate() {
                if a != b {
                    let p = send_phase(ca, cb);
                    assert!(ca >> p & 1 == 1 && cb >> p & 1 == 0);
                }
            }
        }
    }
}
