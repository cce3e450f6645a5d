//! Uniform random traffic on the bare torus with single-slot queues.

use azul_sim::noc::{hop_distance, Coord, Fifo, Message, Network, TaskType};
use rand::{Rng, SeedableRng};

fn main() {
    let (rows, cols, depth) = (8, 8, 1);
    let n = rows * cols;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new(rows, cols, depth);
    let mut outqs: Vec<Fifo> = (0..n).map(|_| Fifo::new(64)).collect();
    let mut inqs: Vec<Fifo> = (0..n).map(|_| Fifo::new(depth)).collect();

    let mut hops = 0;
    for k in 0..n * 32 {
        let (s, d) = (k % n, rng.gen_range(0..n));
        let dest = Coord::new(d / cols, d % cols);
        hops += hop_distance(Coord::new(s / cols, s % cols), dest, rows, cols);
        let msg = Message::new(dest, TaskType::DATA_X, 0, k as u32).expect("message");
        outqs[s].push(msg).expect("room");
    }

    let total = n * 32;
    let (mut arrived, mut cycles) = (0, 0);
    while arrived < total {
        net.step(&mut outqs, &mut inqs).expect("step");
        for q in &mut inqs {
            arrived += q.pop().is_some() as usize;
        }
        cycles += 1;
    }
    println!("{total} messages, {hops} hops in total, drained in {cycles} cycles");
    println!("busiest link carried {} messages", net.max_link_use());
}
