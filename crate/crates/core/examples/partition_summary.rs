//! How a matrix is split over the grid and how much traffic it implies.

use azul_sim::sparse::{generate, partition_spmv, partition_sptrsv, PartitionOptions};

fn main() {
    let opts = PartitionOptions::grid(2, 3);
    let a = generate::random(120, 120, 0.05, 3);
    let s = partition_spmv(&a, &opts).expect("fits").summary();
    println!("spmv: {} nnz, {} messages", s.nnz, s.total_messages);
    for t in &s.tiles {
        println!(
            "  ({},{}) rows {:>3}..{:<3} nnz {:>4} sends {:>3} receives {:>3} dmem {:>5} B",
            t.row,
            t.col,
            t.rows.start,
            t.rows.end,
            t.nnz,
            t.sends,
            t.expected_recv_count,
            t.dmem_bytes
        );
    }

    let l = generate::random_lower(120, 0.05, 4);
    let s = partition_sptrsv(&l, &opts).expect("fits").summary();
    println!("sptrsv: {} nnz, {} messages", s.nnz, s.total_messages);
    if let Some(h) = &s.level_histogram {
        println!("  rows per level {:?}", h.values().collect::<Vec<_>>());
    }
}
