//! Network-on-chip: packed message metadata, 2D-torus routing and the
//! store-and-forward router model.
//!
//! Timing model: a message moves one hop per cycle. The final hop writes
//! straight into the destination tile's input queue, so a one-hop message
//! is visible to its receiver one network cycle after leaving the sender's
//! output queue, and a message to self takes one cycle through the local
//! port. Messages addressed to [`HOST`] leave the grid through the nearest
//! edge and reach the host mailbox after `hops_to_edge + 1` cycles; host
//! injections reach a tile along the same edge path.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved grid coordinate of the global controller (host).
pub const HOST: Coord = Coord { row: 63, col: 63 };

/// Largest grid dimension addressable by the 6-bit row/column fields.
pub const MAX_GRID_DIM: usize = 64;

/// The 4-bit task-type field of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskType(u8);

impl TaskType {
    pub const WRITE_INSTR: TaskType = TaskType(0);
    pub const WRITE_DATA: TaskType = TaskType(1);
    pub const WRITE_LUT: TaskType = TaskType(2);
    pub const START_TASK: TaskType = TaskType(3);
    /// Vector entry exchanged by the SpMV kernel.
    pub const DATA_X: TaskType = TaskType(4);
    /// Solved unknown forwarded by the SpTRSV kernel.
    pub const DATA_SOLVED: TaskType = TaskType(5);
    pub const DONE: TaskType = TaskType(15);

    pub fn new(code: u8) -> Result<TaskType, FieldRangeError> {
        if code < 16 {
            Ok(TaskType(code))
        } else {
            Err(FieldRangeError {
                field: "task_type",
                value: code as u64,
                max: 15,
            })
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Codes 0..=3 are interpreted by an idle tile; the rest are data.
    pub fn is_system(self) -> bool {
        self.0 <= 3
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field `{field}` value {value} exceeds maximum {max}")]
pub struct FieldRangeError {
    pub field: &'static str,
    pub value: u64,
    pub max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Coord {
        Coord { row, col }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Unpacked message metadata: bits `[31:26]` row, `[25:20]` column,
/// `[19:16]` task type, `[15:0]` address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Metadata {
    pub row: u8,
    pub col: u8,
    pub task_type: TaskType,
    pub addr: u16,
}

impl Metadata {
    pub fn dest(&self) -> Coord {
        Coord::new(self.row as usize, self.col as usize)
    }

    pub fn pack(&self) -> u32 {
        (self.row as u32) << 26
            | (self.col as u32) << 20
            | (self.task_type.0 as u32) << 16
            | self.addr as u32
    }
}

pub fn pack_metadata(
    row: u32,
    col: u32,
    task_type: u32,
    addr: u32,
) -> Result<u32, FieldRangeError> {
    let check = |field, value: u32, max: u32| {
        if value > max {
            Err(FieldRangeError {
                field,
                value: value as u64,
                max: max as u64,
            })
        } else {
            Ok(())
        }
    };
    check("row", row, 63)?;
    check("col", col, 63)?;
    check("task_type", task_type, 15)?;
    check("addr", addr, 0xffff)?;
    Ok(row << 26 | col << 20 | task_type << 16 | addr)
}

pub fn unpack_metadata(word: u32) -> Metadata {
    Metadata {
        row: (word >> 26) as u8,
        col: ((word >> 20) & 0x3f) as u8,
        task_type: TaskType(((word >> 16) & 0xf) as u8),
        addr: (word & 0xffff) as u16,
    }
}

/// A 64-bit network packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message {
    pub metadata: u32,
    pub data: u32,
}

impl Message {
    pub fn new(
        dest: Coord,
        task_type: TaskType,
        addr: u16,
        data: u32,
    ) -> Result<Message, FieldRangeError> {
        let metadata = pack_metadata(
            dest.row as u32,
            dest.col as u32,
            task_type.0 as u32,
            addr as u32,
        )?;
        Ok(Message { metadata, data })
    }

    pub fn meta(&self) -> Metadata {
        unpack_metadata(self.metadata)
    }

    pub fn dest(&self) -> Coord {
        self.meta().dest()
    }

    pub fn to_bits(self) -> u64 {
        (self.metadata as u64) << 32 | self.data as u64
    }
}

/// Bounded FIFO of messages.
#[derive(Debug, Clone, Default)]
pub struct Fifo {
    entries: VecDeque<Message>,
    capacity: usize,
}

impl Fifo {
    pub fn new(capacity: usize) -> Fifo {
        Fifo {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Returns the message back if the queue is full.
    pub fn push(&mut self, msg: Message) -> Result<(), Message> {
        if self.is_full() {
            Err(msg)
        } else {
            self.entries.push_back(msg);
            Ok(())
        }
    }

    pub fn pop(&mut self) -> Option<Message> {
        self.entries.pop_front()
    }

    pub fn front(&self) -> Option<&Message> {
        self.entries.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Message> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    East,
    West,
    North,
    South,
    Local,
}

impl Direction {
    pub const LINKS: [Direction; 4] = [
        Direction::East,
        Direction::West,
        Direction::North,
        Direction::South,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::East | Direction::West)
    }
}

/// Steps along one ring of size `n` from `from` towards `to`: `Some(true)`
/// for the increasing direction, `None` when already there.
fn ring_step(from: usize, to: usize, n: usize) -> Option<bool> {
    if from == to {
        return None;
    }
    let forward = (to + n - from) % n;
    let backward = n - forward;
    Some(forward <= backward)
}

/// Dimension-ordered next hop on a `rows x cols` torus: columns first,
/// then rows, each along the shorter way around the ring. Ties go to the
/// increasing index. North decreases the row, South increases it.
pub fn route_next_hop(current: Coord, dest: Coord, rows: usize, cols: usize) -> Direction {
    if let Some(forward) = ring_step(current.col, dest.col, cols) {
        return if forward {
            Direction::East
        } else {
            Direction::West
        };
    }
    match ring_step(current.row, dest.row, rows) {
        Some(true) => Direction::South,
        Some(false) => Direction::North,
        None => Direction::Local,
    }
}

/// Coordinate reached by one hop in `dir` on a `rows x cols` torus.
pub fn neighbor(c: Coord, dir: Direction, rows: usize, cols: usize) -> Coord {
    match dir {
        Direction::East => Coord::new(c.row, (c.col + 1) % cols),
        Direction::West => Coord::new(c.row, (c.col + cols - 1) % cols),
        Direction::South => Coord::new((c.row + 1) % rows, c.col),
        Direction::North => Coord::new((c.row + rows - 1) % rows, c.col),
        Direction::Local => c,
    }
}

/// Minimal hop count between two tiles under [`route_next_hop`].
pub fn hop_distance(a: Coord, b: Coord, rows: usize, cols: usize) -> usize {
    let ring = |x: usize, y: usize, n: usize| {
        let f = (y + n - x) % n;
        f.min(n - f)
    };
    ring(a.col, b.col, cols) + ring(a.row, b.row, rows)
}

/// Hops from a tile to the nearest grid edge.
pub fn hops_to_edge(c: Coord, rows: usize, cols: usize) -> usize {
    c.row.min(rows - 1 - c.row).min(c.col).min(cols - 1 - c.col)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("tile {sender} sent to off-grid coordinate {dest}")]
    BadDestination { sender: Coord, dest: Coord },
}

/// Router input ports: the four incoming links, then the tile's own
/// output queue.
const PORT_FROM_EAST: usize = 0;
const PORT_FROM_WEST: usize = 1;
const PORT_FROM_NORTH: usize = 2;
const PORT_FROM_SOUTH: usize = 3;
const PORT_INJECT: usize = 4;
const NUM_PORTS: usize = 5;
const NUM_OUTPUTS: usize = 5;

/// Port a message arrives on after travelling in `dir`.
fn arrival_port(dir: Direction) -> usize {
    match dir {
        Direction::East => PORT_FROM_WEST,
        Direction::West => PORT_FROM_EAST,
        Direction::South => PORT_FROM_NORTH,
        Direction::North => PORT_FROM_SOUTH,
        Direction::Local => unreachable!("local traffic never enters a link buffer"),
    }
}

#[derive(Debug, Clone)]
struct Router {
    /// Buffers for messages arriving over the four links.
    inputs: [Fifo; 4],
    /// Last granted input port per output, for round-robin arbitration.
    last_grant: [usize; NUM_OUTPUTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Timed {
    due: u64,
    msg: Message,
}

/// Delivery produced by one network cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Tile { dest: Coord, msg: Message },
    Host(Message),
}

/// Network audit counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetCounters {
    pub injected: u64,
    pub delivered: u64,
    pub to_host: u64,
    pub total_hops: u64,
}

/// All routers, link buffers and host paths of one torus.
///
/// Tile input/output queues are owned by the tiles and passed in to
/// [`Network::step`], which reads output-queue heads and appends to input
/// queues.
#[derive(Debug, Clone)]
pub struct Network {
    rows: usize,
    cols: usize,
    routers: Vec<Router>,
    /// Per-tile FIFO of host-injected messages waiting to reach the tile.
    host_in: Vec<VecDeque<Timed>>,
    /// Tile-to-host messages in transit, in arrival order.
    host_out: VecDeque<Timed>,
    /// Messages crossing each (router, output link) since the last reset.
    link_use: Vec<[u64; 4]>,
    in_flight: u64,
    pub counters: NetCounters,
    cycle: u64,
}

impl Network {
    pub fn new(rows: usize, cols: usize, fifo_depth: usize) -> Network {
        let router = Router {
            // Two slots at least, so the bubble rule can admit new traffic.
            inputs: std::array::from_fn(|_| Fifo::new(fifo_depth.max(2))),
            last_grant: [NUM_PORTS - 1; NUM_OUTPUTS],
        };
        Network {
            rows,
            cols,
            routers: vec![router; rows * cols],
            host_in: vec![VecDeque::new(); rows * cols],
            host_out: VecDeque::new(),
            link_use: vec![[0; 4]; rows * cols],
            in_flight: 0,
            counters: NetCounters::default(),
            cycle: 0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn index(&self, c: Coord) -> usize {
        c.row * self.cols + c.col
    }

    fn coord(&self, i: usize) -> Coord {
        Coord::new(i / self.cols, i % self.cols)
    }

    pub fn in_grid(&self, c: Coord) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    /// Messages inside the network proper: link buffers and host paths.
    /// Output-queue contents are counted by the tiles.
    pub fn in_flight(&self) -> u64 {
        self.in_flight
    }

    pub fn is_empty(&self) -> bool {
        self.in_flight == 0
    }

    /// Queues a host message for `dest`; it becomes deliverable after
    /// `hops_to_edge + 1` cycles.
    pub fn inject_from_host(&mut self, msg: Message) -> Result<(), NetworkError> {
        let dest = msg.dest();
        if !self.in_grid(dest) {
            return Err(NetworkError::BadDestination { sender: HOST, dest });
        }
        let latency = hops_to_edge(dest, self.rows, self.cols) as u64 + 1;
        let i = self.index(dest);
        self.host_in[i].push_back(Timed {
            due: self.cycle + latency,
            msg,
        });
        self.in_flight += 1;
        self.counters.injected += 1;
        Ok(())
    }

    pub fn reset_link_use(&mut self) {
        self.link_use.iter_mut().for_each(|l| *l = [0; 4]);
    }

    pub fn max_link_use(&self) -> u64 {
        self.link_use
            .iter()
            .flat_map(|l| l.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Buffered link messages per router, for diagnostics.
    pub fn buffer_occupancy(&self) -> Vec<(Coord, usize)> {
        self.routers
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    self.coord(i),
                    r.inputs.iter().map(Fifo::len).sum::<usize>() + self.host_in[i].len(),
                )
            })
            .filter(|&(_, n)| n > 0)
            .collect()
    }

    /// Advances one cycle. `outqs` and `inqs` are the tiles' queues in
    /// row-major order. All moves are decided against the queue occupancy
    /// at the start of the cycle, so no message travels more than one hop.
    pub fn step(
        &mut self,
        outqs: &mut [Fifo],
        inqs: &mut [Fifo],
    ) -> Result<Vec<Delivery>, NetworkError> {
        let n = self.routers.len();
        debug_assert_eq!(outqs.len(), n);
        debug_assert_eq!(inqs.len(), n);
        self.cycle += 1;
        let now = self.cycle;
        let mut deliveries = Vec::new();

        // Host-bound traffic arriving this cycle.
        while let Some(t) = self.host_out.front() {
            if t.due > now {
                break;
            }
            let t = self.host_out.pop_front().unwrap();
            self.in_flight -= 1;
            self.counters.to_host += 1;
            deliveries.push(Delivery::Host(t.msg));
        }

        // Free slots per tile input queue, reserved as moves are granted.
        let mut inq_room: Vec<usize> = inqs.iter().map(|q| q.capacity() - q.len()).collect();
        // Link buffers are checked against start-of-cycle occupancy.
        let link_room: Vec<[usize; 4]> = self
            .routers
            .iter()
            .map(|r| std::array::from_fn(|p| r.inputs[p].capacity() - r.inputs[p].len()))
            .collect();

        // Host injections first: they model a separate edge path.
        for i in 0..n {
            if let Some(t) = self.host_in[i].front() {
                if t.due <= now && inq_room[i] > 0 {
                    let t = self.host_in[i].pop_front().unwrap();
                    inq_room[i] -= 1;
                    self.in_flight -= 1;
                    self.counters.delivered += 1;
                    inqs[i].push(t.msg).expect("room reserved");
                    deliveries.push(Delivery::Tile {
                        dest: self.coord(i),
                        msg: t.msg,
                    });
                }
            }
        }

        // (router, port) -> move
        enum Move {
            Link {
                to: usize,
                port: usize,
                dir: Direction,
            },
            Eject {
                to: usize,
                dir: Direction,
            },
            Host,
        }
        let mut moves: Vec<(usize, usize, Move)> = Vec::new();

        for i in 0..n {
            let here = self.coord(i);
            // Heads of each input port and the output each one wants.
            let mut wants: [Option<Direction>; NUM_PORTS] = [None; NUM_PORTS];
            let mut host_head = false;
            for (p, want) in wants.iter_mut().enumerate() {
                let head = if p == PORT_INJECT {
                    outqs[i].front()
                } else {
                    self.routers[i].inputs[p].front()
                };
                if let Some(m) = head {
                    let dest = m.dest();
                    if dest == HOST && !self.in_grid(dest) {
                        if p == PORT_INJECT {
                            host_head = true;
                        }
                        continue;
                    }
                    if !self.in_grid(dest) {
                        return Err(NetworkError::BadDestination { sender: here, dest });
                    }
                    *want = Some(route_next_hop(here, dest, self.rows, self.cols));
                }
            }
            if host_head {
                moves.push((i, PORT_INJECT, Move::Host));
            }
            for out in [
                Direction::East,
                Direction::West,
                Direction::North,
                Direction::South,
                Direction::Local,
            ] {
                // First input in round-robin order that can actually move;
                // a blocked head must not shadow a movable one.
                let last = self.routers[i].last_grant[out.index()];
                let granted = (1..=NUM_PORTS)
                    .map(|k| (last + k) % NUM_PORTS)
                    .filter(|&p| wants[p] == Some(out))
                    .find_map(|p| {
                        if out == Direction::Local {
                            return (inq_room[i] > 0)
                                .then_some((p, Move::Eject { to: i, dir: out }));
                        }
                        let next = neighbor(here, out, self.rows, self.cols);
                        let j = self.index(next);
                        let head = if p == PORT_INJECT {
                            outqs[i].front()
                        } else {
                            self.routers[i].inputs[p].front()
                        };
                        if head.map(Message::dest) == Some(next) {
                            return (inq_room[j] > 0)
                                .then_some((p, Move::Eject { to: j, dir: out }));
                        }
                        let port = arrival_port(out);
                        // Bubble rule: entering a ring, by injection or by a
                        // dimension turn, must leave one slot free behind it.
                        let need = if port == p { 1 } else { 2 };
                        (link_room[j][port] >= need).then_some((
                            p,
                            Move::Link {
                                to: j,
                                port,
                                dir: out,
                            },
                        ))
                    });
                let Some((p, mv)) = granted else { continue };
                if let Move::Eject { to, .. } = mv {
                    inq_room[to] -= 1;
                }
                self.routers[i].last_grant[out.index()] = p;
                moves.push((i, p, mv));
            }
        }

        for (i, p, mv) in moves {
            let msg = if p == PORT_INJECT {
                let m = outqs[i].pop().expect("granted head");
                if !matches!(mv, Move::Host) {
                    self.counters.injected += 1;
                    self.in_flight += 1;
                }
                m
            } else {
                self.routers[i].inputs[p].pop().expect("granted head")
            };
            match mv {
                Move::Host => {
                    let here = self.coord(i);
                    let latency = hops_to_edge(here, self.rows, self.cols) as u64 + 1;
                    self.counters.injected += 1;
                    self.in_flight += 1;
                    let due = now + latency - 1;
                    // Keep the path sorted by arrival time; ties keep send order.
                    let at = self.host_out.partition_point(|t| t.due <= due);
                    self.host_out.insert(at, Timed { due, msg });
                }
                Move::Link { to, port, dir } => {
                    self.counters.total_hops += 1;
                    self.link_use[i][dir.index()] += 1;
                    self.routers[to].inputs[port]
                        .push(msg)
                        .expect("room checked at cycle start");
                }
                Move::Eject { to, dir } => {
                    if dir != Direction::Local {
                        self.counters.total_hops += 1;
                        self.link_use[i][dir.index()] += 1;
                    }
                    self.in_flight -= 1;
                    self.counters.delivered += 1;
                    inqs[to].push(msg).expect("room reserved");
                    deliveries.push(Delivery::Tile {
                        dest: self.coord(to),
                        msg,
                    });
                }
            }
        }
        // Host-bound messages with a one-cycle path arrive now.
        while let Some(t) = self.host_out.front() {
            if t.due > now {
                break;
            }
            let t = self.host_out.pop_front().unwrap();
            self.in_flight -= 1;
            self.counters.to_host += 1;
            deliveries.push(Delivery::Host(t.msg));
        }
        Ok(deliveries)
    }
}
