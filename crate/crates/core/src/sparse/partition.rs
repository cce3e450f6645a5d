use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{compute_levels, CapacityError, CsrMatrix, Levels, MemoryRegion, SparseError};
use crate::noc::{pack_metadata, Coord, TaskType};
use crate::tile::{DATA_BASE, DMEM_BYTES, IMEM_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub dmem_budget: usize,
    pub imem_budget: usize,
}

impl PartitionOptions {
    pub fn grid(grid_rows: usize, grid_cols: usize) -> PartitionOptions {
        PartitionOptions {
            grid_rows,
            grid_cols,
            dmem_budget: DMEM_BYTES,
            imem_budget: IMEM_BYTES,
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new(index / self.grid_cols, index % self.grid_cols)
    }

    pub fn check_dmem(&self, coord: Coord, footprint: usize) -> Result<(), CapacityError> {
        if footprint > self.dmem_budget {
            return Err(CapacityError {
                coord,
                region: MemoryRegion::Data,
                footprint,
                budget: self.dmem_budget,
            });
        }
        Ok(())
    }

    pub fn check_imem(&self, coord: Coord, footprint: usize) -> Result<(), CapacityError> {
        if footprint > self.imem_budget {
            return Err(CapacityError {
                coord,
                region: MemoryRegion::Instruction,
                footprint,
                budget: self.imem_budget,
            });
        }
        Ok(())
    }
}

/// Contiguous row blocks in row-major tile order. Boundary `t` is placed at
/// the row whose nonzero prefix count is closest to `(t + 1) * nnz / tiles`
/// (latest on ties), so no tile exceeds `ceil(nnz / tiles)` by more than
/// one row's worth of nonzeros.
pub fn block_rows(m: &CsrMatrix, tiles: usize) -> Vec<Range<usize>> {
    let dist = |r: usize, t: usize| (m.row_ptr[r] * tiles).abs_diff((t + 1) * m.nnz());
    let mut out = Vec::with_capacity(tiles);
    let mut next = 0;
    for t in 0..tiles {
        let start = next;
        if t + 1 == tiles {
            next = m.n_rows;
        } else {
            while next < m.n_rows && dist(next + 1, t) <= dist(next, t) {
                next += 1;
            }
        }
        out.push(start..next);
    }
    out
}

/// Even column blocks for matrices whose x is not aligned with the rows.
fn block_even(n: usize, tiles: usize) -> Vec<Range<usize>> {
    (0..tiles)
        .map(|t| (n * t / tiles)..(n * (t + 1) / tiles))
        .collect()
}

fn owners(blocks: &[Range<usize>], n: usize) -> Vec<usize> {
    let mut own = vec![0; n];
    for (t, b) in blocks.iter().enumerate() {
        for i in b.clone() {
            own[i] = t;
        }
    }
    own
}

fn local_rows(m: &CsrMatrix, rows: Range<usize>) -> CsrMatrix {
    let (a, b) = (m.row_ptr[rows.start], m.row_ptr[rows.end]);
    CsrMatrix {
        n_rows: rows.len(),
        n_cols: m.n_cols,
        row_ptr: m.row_ptr[rows.clone()]
            .iter()
            .chain(std::iter::once(&b))
            .map(|p| p - a)
            .collect(),
        col_idx: m.col_idx[a..b].to_vec(),
        values: m.values[a..b].to_vec(),
    }
}

/// Byte offsets of one tile's SpMV data region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpmvLayout {
    pub header: u32,
    pub send_table: u32,
    pub records: u32,
    pub row_ptr: u32,
    pub x_slots: u32,
    pub y_slots: u32,
    pub end: u32,
}

/// Most send phases any grid needs: C(15, 7) covers 63 x 63 tiles.
pub const SPMV_MAX_PHASES: usize = 15;
/// Words in the SpMV header: five fixed words, then a (count, table)
/// pair per send phase.
pub const SPMV_HEADER_WORDS: u32 = 5 + 2 * SPMV_MAX_PHASES as u32;

/// Phase sets for `tiles` tiles: distinct `k`-bit masks of weight
/// `k / 2`, for the smallest `k` with enough of them. No mask contains
/// another, so for any two tiles some phase has the first sending and
/// the second not.
pub fn phase_codes(tiles: usize) -> Vec<u32> {
    let mut k = 0u32;
    let enough = |k: u32| (0u32..1 << k).filter(|m| m.count_ones() == k / 2).count() >= tiles;
    while !enough(k) {
        k += 1;
    }
    (0u32..1 << k)
        .filter(|m| m.count_ones() == k / 2)
        .take(tiles)
        .collect()
}

/// Phase in which a tile with code `src` sends to one with code `dst`:
/// the lowest phase the sender is in and the receiver is not, so every
/// receiver is idle while it is being sent to.
pub fn send_phase(src: u32, dst: u32) -> usize {
    let only_src = src & !dst;
    debug_assert!(only_src != 0, "phase codes form an antichain");
    only_src.trailing_zeros() as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendEntry {
    pub phase: usize,
    /// Global x index.
    pub col: usize,
    /// Sender's slot offset for x[col].
    pub src_slot: u32,
    pub dest: Coord,
    pub dest_index: usize,
    /// Receiver's slot offset for x[col].
    pub dest_slot: u32,
    pub metadata: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpmvTile {
    pub coord: Coord,
    pub index: usize,
    pub rows: Range<usize>,
    pub x_range: Range<usize>,
    /// Owned rows renumbered from 0, global column indices.
    pub local: CsrMatrix,
    /// Non-owned x entries this tile needs, ascending.
    pub recv_cols: Vec<usize>,
    /// Outgoing x entries ordered by phase, then receiver, then column.
    pub sends: Vec<SendEntry>,
    pub layout: SpmvLayout,
}

impl SpmvTile {
    pub fn expected_recv_count(&self) -> usize {
        self.recv_cols.len()
    }

    /// Slot offset holding x[col] on this tile.
    pub fn x_slot(&self, col: usize) -> Option<u32> {
        if self.x_range.contains(&col) {
            return Some(self.layout.x_slots + 4 * (col - self.x_range.start) as u32);
        }
        let k = self.recv_cols.binary_search(&col).ok()?;
        Some(self.layout.x_slots + 4 * (self.x_range.len() + k) as u32)
    }

    /// Sends belonging to one phase.
    pub fn phase_sends(&self, phase: usize) -> &[SendEntry] {
        let a = self.sends.partition_point(|s| s.phase < phase);
        let b = self.sends.partition_point(|s| s.phase <= phase);
        &self.sends[a..b]
    }

    pub fn footprint(&self) -> usize {
        self.layout.end as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpmvPartition {
    pub options: PartitionOptions,
    pub n_rows: usize,
    pub n_cols: usize,
    pub nnz: usize,
    pub tiles: Vec<SpmvTile>,
    pub row_owner: Vec<usize>,
    pub col_owner: Vec<usize>,
}

impl SpmvPartition {
    pub fn total_messages(&self) -> usize {
        self.tiles.iter().map(|t| t.sends.len()).sum()
    }

    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary {
            kernel: "spmv".into(),
            grid_rows: self.options.grid_rows,
            grid_cols: self.options.grid_cols,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            nnz: self.nnz,
            total_messages: self.total_messages(),
            level_histogram: None,
            tiles: self
                .tiles
                .iter()
                .map(|t| TileSummary {
                    row: t.coord.row,
                    col: t.coord.col,
                    rows: t.rows.clone(),
                    nnz: t.local.nnz(),
                    sends: t.sends.len(),
                    expected_recv_count: t.expected_recv_count(),
                    dmem_bytes: t.footprint(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSummary {
    pub row: usize,
    pub col: usize,
    pub rows: Range<usize>,
    pub nnz: usize,
    pub sends: usize,
    pub expected_recv_count: usize,
    pub dmem_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub kernel: String,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub nnz: usize,
    pub total_messages: usize,
    pub level_histogram: Option<BTreeMap<usize, usize>>,
    pub tiles: Vec<TileSummary>,
}

fn check_offset(coord: Coord, off: usize, opts: &PartitionOptions) -> Result<(), CapacityError> {
    // message addresses carry 16 bits
    opts.check_dmem(coord, off)?;
    if off > DMEM_BYTES {
        return Err(CapacityError {
            coord,
            region: MemoryRegion::Data,
            footprint: off,
            budget: DMEM_BYTES,
        });
    }
    Ok(())
}

pub fn partition_spmv(
    m: &CsrMatrix,
    opts: &PartitionOptions,
) -> Result<SpmvPartition, SparseError> {
    if m.n_rows == 0 {
        return Err(SparseError::Empty);
    }
    let tiles = opts.num_tiles();
    let row_blocks = block_rows(m, tiles);
    let x_blocks = if m.is_square() {
        row_blocks.clone()
    } else {
        block_even(m.n_cols, tiles)
    };
    let row_owner = owners(&row_blocks, m.n_rows);
    let col_owner = owners(&x_blocks, m.n_cols);

    let mut plan: Vec<SpmvTile> = (0..tiles)
        .map(|t| {
            let local = local_rows(m, row_blocks[t].clone());
            let recv: BTreeSet<usize> = local
                .col_idx
                .iter()
                .copied()
                .filter(|c| !x_blocks[t].contains(c))
                .collect();
            SpmvTile {
                coord: opts.coord(t),
                index: t,
                rows: row_blocks[t].clone(),
                x_range: x_blocks[t].clone(),
                local,
                recv_cols: recv.into_iter().collect(),
                sends: Vec::new(),
                layout: SpmvLayout {
                    header: 0,
                    send_table: 0,
                    records: 0,
                    row_ptr: 0,
                    x_slots: 0,
                    y_slots: 0,
                    end: 0,
                },
            }
        })
        .collect();

    // Layout, then sends (which need the receivers' slot addresses).
    let mut needs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tiles]; // per owner: (dest, col)
    for (t, p) in plan.iter().enumerate() {
        for &c in &p.recv_cols {
            needs[col_owner[c]].push((t, c));
        }
    }
    for (t, p) in plan.iter_mut().enumerate() {
        let n_sends = needs[t].len() as u32;
        let l = &mut p.layout;
        l.send_table = 4 * SPMV_HEADER_WORDS;
        l.records = l.send_table + 8 * n_sends;
        l.row_ptr = l.records + 8 * p.local.nnz() as u32;
        l.x_slots = l.row_ptr + 4 * (p.rows.len() as u32 + 1);
        l.y_slots = l.x_slots + 4 * (p.x_range.len() + p.recv_cols.len()) as u32;
        let end = l.y_slots as usize + 4 * p.rows.len();
        check_offset(p.coord, end, opts)?;
        l.end = end as u32;
    }
    let codes = phase_codes(tiles);
    for t in 0..tiles {
        let mut list = std::mem::take(&mut needs[t]);
        list.sort_unstable_by_key(|&(d, c)| (send_phase(codes[t], codes[d]), d, c));
        for (d, c) in list {
            let dest = &plan[d];
            let dest_slot = dest.x_slot(c).expect("receiver has a slot");
            let entry = SendEntry {
                phase: send_phase(codes[t], codes[d]),
                col: c,
                src_slot: plan[t].x_slot(c).expect("owner has a slot"),
                dest: dest.coord,
                dest_index: d,
                dest_slot,
                metadata: pack_metadata(
                    dest.coord.row as u32,
                    dest.coord.col as u32,
                    TaskType::DATA_X.code() as u32,
                    dest_slot,
                )
                .expect("grid and layout fit the metadata fields"),
            };
            plan[t].sends.push(entry);
        }
    }
    Ok(SpmvPartition {
        options: *opts,
        n_rows: m.n_rows,
        n_cols: m.n_cols,
        nnz: m.nnz(),
        tiles: plan,
        row_owner,
        col_owner,
    })
}

/// Words in the SpTRSV header.
pub const SPTRSV_HEADER_WORDS: u32 = 7;
/// Fixed words at the start of each row record.
pub const ROW_RECORD_WORDS: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptrsvRow {
    pub row: usize,
    pub level: usize,
    /// Off-tile dependencies still outstanding at the start of a solve.
    pub counter: u32,
    pub diag: f32,
    pub inv_diag: f32,
    /// Off-diagonal (column, value) pairs in CSR order.
    pub off_diag: Vec<(usize, f32)>,
    /// Tiles that consume x[row], ascending index.
    pub consumers: Vec<usize>,
    /// Byte offset of this row's record.
    pub record: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecvRecord {
    pub col: usize,
    /// Byte offset; the first word holds the received x value.
    pub offset: u32,
    /// Rows on this tile (positions in `order`) waiting on this column.
    pub dependents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptrsvTile {
    pub coord: Coord,
    pub index: usize,
    pub rows: Range<usize>,
    /// Owned rows in processing order: ascending level, then row index.
    pub order: Vec<SptrsvRow>,
    pub recv: Vec<RecvRecord>,
    /// Offset of the owned x slots, indexed by `row - rows.start`.
    pub x_slots: u32,
    pub end: u32,
}

impl SptrsvTile {
    pub fn x_slot(&self, row: usize) -> u32 {
        self.x_slots + 4 * (row - self.rows.start) as u32
    }

    pub fn recv_offset(&self, col: usize) -> Option<u32> {
        self.recv
            .binary_search_by_key(&col, |r| r.col)
            .ok()
            .map(|k| self.recv[k].offset)
    }

    /// Absolute address a tile reads x[col] from.
    pub fn x_addr(&self, col: usize) -> u32 {
        let off = if self.rows.contains(&col) {
            self.x_slot(col)
        } else {
            self.recv_offset(col)
                .expect("dependency has a receive record")
        };
        DATA_BASE + off
    }

    pub fn expected_recv_count(&self) -> usize {
        self.recv.len()
    }

    pub fn footprint(&self) -> usize {
        self.end as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptrsvPartition {
    pub options: PartitionOptions,
    pub n: usize,
    pub nnz: usize,
    pub levels: Levels,
    pub tiles: Vec<SptrsvTile>,
    pub row_owner: Vec<usize>,
}

impl SptrsvPartition {
    pub fn total_messages(&self) -> usize {
        self.tiles
            .iter()
            .flat_map(|t| &t.order)
            .map(|r| r.consumers.len())
            .sum()
    }

    /// Row-owning tiles, highest index first: the order tasks are woken.
    pub fn wake_order(&self) -> Vec<usize> {
        self.tiles
            .iter()
            .rev()
            .filter(|t| !t.rows.is_empty())
            .map(|t| t.index)
            .collect()
    }

    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary {
            kernel: "sptrsv".into(),
            grid_rows: self.options.grid_rows,
            grid_cols: self.options.grid_cols,
            n_rows: self.n,
            n_cols: self.n,
            nnz: self.nnz,
            total_messages: self.total_messages(),
            level_histogram: Some(self.levels.histogram.clone()),
            tiles: self
                .tiles
                .iter()
                .map(|t| TileSummary {
                    row: t.coord.row,
                    col: t.coord.col,
                    rows: t.rows.clone(),
                    nnz: t.order.iter().map(|r| r.off_diag.len() + 1).sum(),
                    sends: t.order.iter().map(|r| r.consumers.len()).sum(),
                    expected_recv_count: t.expected_recv_count(),
                    dmem_bytes: t.footprint(),
                })
                .collect(),
        }
    }
}

pub fn partition_sptrsv(
    l: &CsrMatrix,
    opts: &PartitionOptions,
) -> Result<SptrsvPartition, SparseError> {
    if l.n_rows == 0 {
        return Err(SparseError::Empty);
    }
    let levels = compute_levels(l)?;
    let tiles = opts.num_tiles();
    let blocks = block_rows(l, tiles);
    let owner = owners(&blocks, l.n_rows);

    // consumers[j]: tiles other than owner(j) with a row using x[j]
    let mut consumers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); l.n_rows];
    for i in 0..l.n_rows {
        for (j, _) in l.row(i).filter(|&(j, _)| j < i) {
            if owner[j] != owner[i] {
                consumers[j].insert(owner[i]);
            }
        }
    }

    let mut plan = Vec::with_capacity(tiles);
    for (t, rows) in blocks.iter().enumerate() {
        let coord = opts.coord(t);
        let mut ids: Vec<usize> = rows.clone().collect();
        ids.sort_by_key(|&i| (levels.level[i], i));
        let mut order: Vec<SptrsvRow> = ids
            .iter()
            .map(|&i| {
                let off_diag: Vec<(usize, f32)> = l.row(i).filter(|&(j, _)| j != i).collect();
                let diag = l.get(i, i).expect("checked nonzero diagonal");
                SptrsvRow {
                    row: i,
                    level: levels.level[i],
                    counter: off_diag.iter().filter(|&&(j, _)| owner[j] != t).count() as u32,
                    diag,
                    inv_diag: 1.0f32 / diag,
                    off_diag,
                    consumers: consumers[i].iter().copied().collect(),
                    record: 0,
                }
            })
            .collect();

        let mut deps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, r) in order.iter().enumerate() {
            for &(j, _) in r.off_diag.iter().filter(|&&(j, _)| owner[j] != t) {
                deps.entry(j).or_default().push(pos);
            }
        }

        let x_slots = 4 * SPTRSV_HEADER_WORDS;
        let mut off = x_slots as usize + 4 * rows.len();
        for r in &mut order {
            r.record = off as u32;
            off += 4 * (ROW_RECORD_WORDS as usize + 2 * r.off_diag.len() + r.consumers.len());
        }
        let mut recv = Vec::with_capacity(deps.len());
        for (col, dependents) in deps {
            recv.push(RecvRecord {
                col,
                offset: off as u32,
                dependents: dependents.clone(),
            });
            off += 4 * (2 + dependents.len());
        }
        check_offset(coord, off, opts)?;
        plan.push(SptrsvTile {
            coord,
            index: t,
            rows: rows.clone(),
            order,
            recv,
            x_slots,
            end: off as u32,
        });
    }
    Ok(SptrsvPartition {
        options: *opts,
        n: l.n_rows,
        nnz: l.nnz(),
        levels,
        tiles: plan,
        row_owner: owner,
    })
}
