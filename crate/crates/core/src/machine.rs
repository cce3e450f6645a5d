//! The full accelerator: a torus of tiles, the host mailbox, the global
//! clock and statistics.
//!
//! Each cycle runs in a fixed order: host injections enter their edge
//! paths, every tile steps (sends land in the tile's own output queue),
//! then the network advances and its deliveries are applied. Nothing a
//! tile does in cycle `t` is visible to another tile before cycle `t + 1`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noc::{
    Coord, Delivery, FieldRangeError, Message, NetCounters, Network, NetworkError, TaskType, HOST,
};
use crate::tile::{CycleCounters, Mode, TileEffect, TileFault, TileState, LUT_ENTRIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub fifo_depth: usize,
    /// Watchdog: cycles allowed per load or execution call.
    pub max_cycles: u64,
    /// Host messages injected per cycle; `None` is unlimited.
    pub host_injection_rate: Option<usize>,
    /// Whether load-phase tile cycles are folded into the per-tile counts.
    pub count_load_phase: bool,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            grid_rows: 16,
            grid_cols: 16,
            fifo_depth: 16,
            max_cycles: 50_000_000,
            host_injection_rate: None,
            count_load_phase: false,
        }
    }
}

impl MachineConfig {
    pub fn grid(rows: usize, cols: usize) -> MachineConfig {
        MachineConfig {
            grid_rows: rows,
            grid_cols: cols,
            ..MachineConfig::default()
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        // Row/column 63 is the host's address.
        for (name, v) in [("grid_rows", self.grid_rows), ("grid_cols", self.grid_cols)] {
            if v == 0 || v > HOST.row {
                return bad(format!("{name} = {v} must be in 1..=63"));
            }
        }
        if self.fifo_depth == 0 {
            return bad("fifo_depth must be at least 1".into());
        }
        if self.max_cycles == 0 {
            return bad("max_cycles must be at least 1".into());
        }
        if self.host_injection_rate == Some(0) {
            return bad("host_injection_rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileStats {
    pub row: usize,
    pub col: usize,
    pub busy: u64,
    pub stall_send: u64,
    pub stall_recv: u64,
    pub idle: u64,
    pub instructions: u64,
}

impl TileStats {
    pub fn total(&self) -> u64 {
        self.busy + self.stall_send + self.stall_recv + self.idle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub messages_injected: u64,
    pub messages_delivered: u64,
    pub messages_to_host: u64,
    pub total_hops: u64,
    /// Messages sent by tiles, indexed by task type.
    pub tile_sends_by_type: Vec<u64>,
    /// Busiest link's messages per cycle over the reporting window.
    pub max_link_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub load_cycles: u64,
    pub exec_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedStats {
    /// `busy / (busy + stall_send + stall_recv)` over tiles that executed at
    /// least one instruction; `None` when no tile did.
    pub compute_bound_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub fifo_depth: usize,
    pub host_injection_rate: Option<usize>,
    pub per_tile: Vec<TileStats>,
    pub network: NetworkStats,
    pub phases: PhaseStats,
    pub derived: DerivedStats,
}

impl NetworkStats {
    /// Tile-to-tile application messages (types 4 to 14).
    pub fn data_messages(&self) -> u64 {
        self.tile_sends_by_type[4..15].iter().sum()
    }
}

impl Stats {
    pub fn total_cycles(&self) -> u64 {
        self.phases.load_cycles + self.phases.exec_cycles
    }

    /// Aggregate compute-bound ratio over tiles with at least one
    /// instruction.
    pub fn compute_bound_ratio(per_tile: &[TileStats]) -> Option<f64> {
        let (busy, active) = per_tile
            .iter()
            .filter(|t| t.instructions > 0)
            .fold((0u64, 0u64), |(b, a), t| {
                (b + t.busy, a + t.busy + t.stall_send + t.stall_recv)
            });
        (active > 0).then(|| busy as f64 / active as f64)
    }

    /// Sums two reports over the same grid, e.g. the rounds of one kernel.
    pub fn merge(&mut self, other: &Stats) {
        for (a, b) in self.per_tile.iter_mut().zip(&other.per_tile) {
            a.busy += b.busy;
            a.stall_send += b.stall_send;
            a.stall_recv += b.stall_recv;
            a.idle += b.idle;
            a.instructions += b.instructions;
        }
        let cycles_a = self.total_cycles() as f64;
        let cycles_b = other.total_cycles() as f64;
        let n = &mut self.network;
        n.messages_injected += other.network.messages_injected;
        n.messages_delivered += other.network.messages_delivered;
        n.messages_to_host += other.network.messages_to_host;
        n.total_hops += other.network.total_hops;
        for (a, b) in n
            .tile_sends_by_type
            .iter_mut()
            .zip(&other.network.tile_sends_by_type)
        {
            *a += b;
        }
        // Peak per-window utilization, weighted back to messages.
        let peak =
            (n.max_link_utilization * cycles_a).max(other.network.max_link_utilization * cycles_b);
        self.phases.load_cycles += other.phases.load_cycles;
        self.phases.exec_cycles += other.phases.exec_cycles;
        let total = self.total_cycles() as f64;
        self.network.max_link_utilization = if total > 0.0 { peak / total } else { 0.0 };
        self.derived.compute_bound_ratio = Stats::compute_bound_ratio(&self.per_tile);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileDiag {
    pub coord: Coord,
    pub mode: Mode,
    pub pc: u32,
    pub inq: usize,
    pub outq: usize,
}

/// Machine snapshot attached to watchdog errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cycle: u64,
    /// Tiles that are not idle or hold queued messages.
    pub tiles: Vec<TileDiag>,
    /// Routers with buffered messages.
    pub buffers: Vec<(Coord, usize)>,
    pub host_pending: usize,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at cycle {}:", self.cycle)?;
        for t in &self.tiles {
            write!(
                f,
                " tile{} {:?} pc={:#x} inq={} outq={};",
                t.coord, t.mode, t.pc, t.inq, t.outq
            )?;
        }
        for (c, n) in &self.buffers {
            write!(f, " router{c} buffered={n};")?;
        }
        if self.host_pending > 0 {
            write!(f, " host pending={}", self.host_pending)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid machine config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldRangeError),
    #[error("load script entry {index}: {reason}")]
    BadScript { index: usize, reason: String },
    #[error("machine is not quiescent")]
    NotQuiescent,
    #[error("load phase did not finish within {cycles} cycles; {diagnostics}")]
    LoadTimeout {
        cycles: u64,
        diagnostics: Diagnostics,
    },
    #[error("no quiescence after {cycles} cycles, deadlock suspected; {diagnostics}")]
    DeadlockSuspected {
        cycles: u64,
        diagnostics: Diagnostics,
    },
    #[error(transparent)]
    TileHalted(#[from] TileFault),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Load,
    Exec,
}

#[derive(Debug, Clone)]
struct Window {
    load_cycles: u64,
    exec_cycles: u64,
    load: Vec<CycleCounters>,
    exec: Vec<CycleCounters>,
    net_base: NetCounters,
    sends_by_type: [u64; 16],
}

pub struct Machine {
    config: MachineConfig,
    tiles: Vec<TileState>,
    net: Network,
    host_pending: VecDeque<Message>,
    mailbox: Vec<Message>,
    cycle: u64,
    window: Window,
    /// Scratch queues swapped in and out of the tiles around a network step.
    outqs: Vec<crate::noc::Fifo>,
    inqs: Vec<crate::noc::Fifo>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("config", &self.config)
            .field("cycle", &self.cycle)
            .finish_non_exhaustive()
    }
}

impl Machine {
    pub fn new(config: MachineConfig) -> Result<Machine, SimError> {
        config.validate()?;
        let (rows, cols) = (config.grid_rows, config.grid_cols);
        let tiles: Vec<TileState> = (0..rows * cols)
            .map(|i| TileState::new(Coord::new(i / cols, i % cols), config.fifo_depth))
            .collect();
        let n = tiles.len();
        Ok(Machine {
            net: Network::new(rows, cols, config.fifo_depth),
            tiles,
            host_pending: VecDeque::new(),
            mailbox: Vec::new(),
            cycle: 0,
            window: Window {
                load_cycles: 0,
                exec_cycles: 0,
                load: vec![CycleCounters::default(); n],
                exec: vec![CycleCounters::default(); n],
                net_base: NetCounters::default(),
                sends_by_type: [0; 16],
            },
            outqs: Vec::new(),
            inqs: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn tiles(&self) -> &[TileState] {
        &self.tiles
    }

    pub fn tile(&self, c: Coord) -> &TileState {
        &self.tiles[self.index(c)]
    }

    pub fn tile_mut(&mut self, c: Coord) -> &mut TileState {
        let i = self.index(c);
        &mut self.tiles[i]
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.tiles.iter().map(|t| t.coord)
    }

    fn index(&self, c: Coord) -> usize {
        assert!(self.in_grid(c), "coordinate {c} outside the grid");
        c.row * self.config.grid_cols + c.col
    }

    pub fn in_grid(&self, c: Coord) -> bool {
        c.row < self.config.grid_rows && c.col < self.config.grid_cols
    }

    pub fn network_counters(&self) -> &NetCounters {
        &self.net.counters
    }

    /// Messages queued anywhere: host queue, tile queues, network.
    pub fn messages_in_flight(&self) -> u64 {
        let queued: usize = self.tiles.iter().map(|t| t.inq.len() + t.outq.len()).sum();
        self.net.in_flight() + self.host_pending.len() as u64 + queued as u64
    }

    pub fn is_quiescent(&self) -> bool {
        self.host_pending.is_empty()
            && self.net.is_empty()
            && self.tiles.iter().all(TileState::is_quiet)
    }

    /// Starts a new statistics window.
    pub fn reset_stats(&mut self) {
        let n = self.tiles.len();
        self.window = Window {
            load_cycles: 0,
            exec_cycles: 0,
            load: vec![CycleCounters::default(); n],
            exec: vec![CycleCounters::default(); n],
            net_base: self.net.counters.clone(),
            sends_by_type: [0; 16],
        };
        self.net.reset_link_use();
    }

    pub fn stats(&self) -> Stats {
        let per_tile: Vec<TileStats> = self
            .tiles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut c = self.window.exec[i];
                if self.config.count_load_phase {
                    c.add(&self.window.load[i]);
                }
                TileStats {
                    row: t.coord.row,
                    col: t.coord.col,
                    busy: c.busy,
                    stall_send: c.stall_send,
                    stall_recv: c.stall_recv,
                    idle: c.idle,
                    instructions: c.instructions,
                }
            })
            .collect();
        let base = &self.window.net_base;
        let now = &self.net.counters;
        let cycles = self.window.load_cycles + self.window.exec_cycles;
        let max_link_utilization = if cycles == 0 {
            0.0
        } else {
            self.net.max_link_use() as f64 / cycles as f64
        };
        Stats {
            grid_rows: self.config.grid_rows,
            grid_cols: self.config.grid_cols,
            fifo_depth: self.config.fifo_depth,
            host_injection_rate: self.config.host_injection_rate,
            derived: DerivedStats {
                compute_bound_ratio: Stats::compute_bound_ratio(&per_tile),
            },
            per_tile,
            network: NetworkStats {
                messages_injected: now.injected - base.injected,
                messages_delivered: now.delivered - base.delivered,
                messages_to_host: now.to_host - base.to_host,
                total_hops: now.total_hops - base.total_hops,
                tile_sends_by_type: self.window.sends_by_type.to_vec(),
                max_link_utilization,
            },
            phases: PhaseStats {
                load_cycles: self.window.load_cycles,
                exec_cycles: self.window.exec_cycles,
            },
        }
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            cycle: self.cycle,
            tiles: self
                .tiles
                .iter()
                .filter(|t| !t.is_quiet())
                .map(|t| TileDiag {
                    coord: t.coord,
                    mode: t.mode(),
                    pc: t.pc,
                    inq: t.inq.len(),
                    outq: t.outq.len(),
                })
                .collect(),
            buffers: self.net.buffer_occupancy(),
            host_pending: self.host_pending.len(),
        }
    }

    fn check_dest(&self, index: usize, msg: &Message) -> Result<(), SimError> {
        let dest = msg.dest();
        if !self.in_grid(dest) {
            return Err(SimError::BadScript {
                index,
                reason: format!("destination {dest} outside the grid"),
            });
        }
        Ok(())
    }

    /// Delivers a load script to idle tiles and runs the clock until every
    /// message has been consumed. Returns the cycles spent.
    pub fn load_phase(&mut self, script: &[Message]) -> Result<u64, SimError> {
        if !self.is_quiescent() {
            return Err(SimError::NotQuiescent);
        }
        for (index, msg) in script.iter().enumerate() {
            let ty = msg.meta().task_type;
            if ty == TaskType::START_TASK || ty == TaskType::DONE {
                return Err(SimError::BadScript {
                    index,
                    reason: format!("task type {} is not allowed in a load script", ty.code()),
                });
            }
            self.check_dest(index, msg)?;
        }
        self.host_pending.extend(script.iter().copied());
        let start = self.cycle;
        while !self.is_quiescent() {
            if self.cycle - start >= self.config.max_cycles {
                return Err(SimError::LoadTimeout {
                    cycles: self.cycle - start,
                    diagnostics: self.diagnostics(),
                });
            }
            self.step_cycle(Phase::Load)?;
        }
        Ok(self.cycle - start)
    }

    /// Queues START_TASK messages from the host.
    pub fn start_tasks(&mut self, triggers: &[(Coord, usize)]) -> Result<(), SimError> {
        let mut msgs = Vec::with_capacity(triggers.len());
        for (index, &(coord, lut_index)) in triggers.iter().enumerate() {
            if lut_index >= LUT_ENTRIES {
                return Err(FieldRangeError {
                    field: "lut_index",
                    value: lut_index as u64,
                    max: 15,
                }
                .into());
            }
            let msg = Message::new(coord, TaskType::START_TASK, lut_index as u16, 0)?;
            self.check_dest(index, &msg)?;
            msgs.push(msg);
        }
        self.host_pending.extend(msgs);
        Ok(())
    }

    /// Queues arbitrary host messages (any task type).
    pub fn inject(&mut self, msgs: &[Message]) -> Result<(), SimError> {
        for (index, msg) in msgs.iter().enumerate() {
            self.check_dest(index, msg)?;
        }
        self.host_pending.extend(msgs.iter().copied());
        Ok(())
    }

    /// Runs until every tile is idle and nothing is queued or in flight.
    pub fn run_until_quiescent(&mut self) -> Result<Stats, SimError> {
        let start = self.cycle;
        while !self.is_quiescent() {
            if self.cycle - start >= self.config.max_cycles {
                return Err(SimError::DeadlockSuspected {
                    cycles: self.cycle - start,
                    diagnostics: self.diagnostics(),
                });
            }
            self.step_cycle(Phase::Exec)?;
        }
        Ok(self.stats())
    }

    /// Runs exactly `cycles` execution cycles.
    pub fn run_cycles(&mut self, cycles: u64) -> Result<(), SimError> {
        for _ in 0..cycles {
            self.step_cycle(Phase::Exec)?;
        }
        Ok(())
    }

    /// Drains the host mailbox in arrival order.
    pub fn read_host_mailbox(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.mailbox)
    }

    pub fn mailbox_len(&self) -> usize {
        self.mailbox.len()
    }

    fn step_cycle(&mut self, phase: Phase) -> Result<(), SimError> {
        let burst = self
            .config
            .host_injection_rate
            .unwrap_or(usize::MAX)
            .min(self.host_pending.len());
        for msg in self.host_pending.drain(..burst) {
            self.net.inject_from_host(msg)?;
        }

        let mut fault = None;
        let counters = match phase {
            Phase::Load => &mut self.window.load,
            Phase::Exec => &mut self.window.exec,
        };
        for (i, tile) in self.tiles.iter_mut().enumerate() {
            let step = tile.step();
            counters[i].record(step.class);
            match step.effect {
                TileEffect::Error(f) => {
                    fault.get_or_insert(f);
                }
                TileEffect::Sent(m) => {
                    self.window.sends_by_type[m.meta().task_type.code() as usize] += 1
                }
                _ => {}
            }
        }

        // The network borrows every tile's queues for the step.
        self.outqs.clear();
        self.inqs.clear();
        for t in &mut self.tiles {
            self.outqs.push(std::mem::take(&mut t.outq));
            self.inqs.push(std::mem::take(&mut t.inq));
        }
        let result = self.net.step(&mut self.outqs, &mut self.inqs);
        for (t, (o, i)) in self
            .tiles
            .iter_mut()
            .zip(self.outqs.drain(..).zip(self.inqs.drain(..)))
        {
            t.outq = o;
            t.inq = i;
        }
        for d in result? {
            if let Delivery::Host(m) = d {
                self.mailbox.push(m);
            }
        }

        self.cycle += 1;
        match phase {
            Phase::Load => self.window.load_cycles += 1,
            Phase::Exec => self.window.exec_cycles += 1,
        }
        match fault {
            Some(f) => Err(SimError::TileHalted(f)),
            None => Ok(()),
        }
    }
}
