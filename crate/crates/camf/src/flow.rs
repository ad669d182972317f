//! Flow routing: direction assignment, ancestor adjacency, topological order.
//!
//! Directions come in two flavors:
//!
//! * **D8** (single flow direction): each cell sends everything to its lowest
//!   neighbor, provided that neighbor is strictly lower. Ties go to the first
//!   lowest neighbor in the fixed E, SE, S, SW, W, NW, N, NE enumeration.
//! * **FD8** (multiple flow directions): outflow splits over *all* strictly
//!   lower neighbors, weighted by `tan(gradient) × contour_length` with
//!   contour lengths of `0.5 × cell_size` (cardinal) and `0.354 × cell_size`
//!   (diagonal).
//!
//! A [`FlowGraph`] adds what the transport sweep needs on top of the raw
//! directions: per-cell ancestor lists (the exact transpose of the successor
//! lists) and a deterministic Kahn topological order whose ready set is always
//! drained in ascending cell order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;

use crate::error::{Error, Result};
use crate::raster::{neighbor_distance, CellIndex, RasterGrid, NEIGHBOR_IS_DIAGONAL, NEIGHBOR_OFFSETS};

/// Contour-length coefficients for FD8 weights, as multiples of the cell size.
const CONTOUR_CARDINAL: f64 = 0.5;
const CONTOUR_DIAGONAL: f64 = 0.354;

/// Sentinel compact id for inactive cells.
const NO_CELL: u32 = u32::MAX;

/// One directed flow edge with the fraction of the source's outflow it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEdge {
    pub from: CellIndex,
    pub to: CellIndex,
    pub fraction: f64,
}

/// Per-cell successor lists over the active cells of a raster.
///
/// Cells are numbered compactly in ascending row-major order; successors are
/// stored in one CSR-style arena. This stage knows nothing about ordering —
/// see [`FlowGraph::build`] for adjacency and the topological sort.
#[derive(Debug, Clone)]
pub struct FlowDirections {
    rows: usize,
    cols: usize,
    cell_size: f64,
    cells: Vec<CellIndex>,
    compact: Vec<u32>,
    succ_offsets: Vec<u32>,
    succ_targets: Vec<u32>,
    succ_fractions: Vec<f64>,
}

impl FlowDirections {
    /// D8 directions: one edge per cell to its lowest strictly-lower active
    /// neighbor, fraction exactly 1. Cells with no lower neighbor (including
    /// every cell of a flat grid) become sinks, as do cells whose descent
    /// would leave the grid or enter nodata.
    pub fn d8(dem: &RasterGrid) -> Self {
        Self::from_dem(dem, |dem, cell, z, push| {
            let mut best: Option<(u32, f64)> = None;
            for (dr, dc) in NEIGHBOR_OFFSETS {
                let (nr, nc) = (cell.row as isize + dr, cell.col as isize + dc);
                if nr < 0 || nc < 0 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !dem.is_active(nr, nc) {
                    continue;
                }
                let nz = dem.get(nr, nc);
                // Strict `<` keeps the first (enumeration-order) minimum.
                if best.is_none_or(|(_, bz)| nz < bz) {
                    best = Some((dem.index(nr, nc) as u32, nz));
                }
            }
            if let Some((target, nz)) = best {
                if nz < z {
                    push(target, 1.0);
                }
            }
        })
    }

    /// FD8 directions: edges to every strictly lower active neighbor `i` of
    /// cell `j`, with fraction
    /// `w(j,i) / Σ w` where `w(j,i) = (z_j − z_i)/distance × L` and `L` is the
    /// contour length for that neighbor direction.
    pub fn fd8(dem: &RasterGrid) -> Self {
        let cs = dem.cell_size();
        Self::from_dem(dem, |dem, cell, z, push| {
            let mut targets = [(0u32, 0.0f64); 8];
            let mut count = 0;
            let mut total = 0.0;
            for (k, (dr, dc)) in NEIGHBOR_OFFSETS.iter().enumerate() {
                let (nr, nc) = (cell.row as isize + dr, cell.col as isize + dc);
                if nr < 0 || nc < 0 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !dem.is_active(nr, nc) {
                    continue;
                }
                let nz = dem.get(nr, nc);
                if nz >= z {
                    continue;
                }
                let gradient = (z - nz) / neighbor_distance(k, cs);
                let contour = if NEIGHBOR_IS_DIAGONAL[k] {
                    CONTOUR_DIAGONAL * cs
                } else {
                    CONTOUR_CARDINAL * cs
                };
                let w = gradient * contour;
                targets[count] = (dem.index(nr, nc) as u32, w);
                count += 1;
                total += w;
            }
            for &(target, w) in &targets[..count] {
                push(target, w / total);
            }
        })
    }

    /// Builds directions from an explicit edge list, e.g. an externally
    /// supplied direction matrix. Endpoints must be active cells and
    /// fractions must lie in `(0, 1]`; *no* downslope or acyclicity check is
    /// performed here — cycles are caught by [`FlowGraph::build`].
    pub fn from_edges(dem: &RasterGrid, edges: &[FlowEdge]) -> Result<Self> {
        let (cells, compact) = enumerate_active(dem);
        let n = cells.len();
        let mut counts = vec![0u32; n];
        for e in edges {
            for endpoint in [e.from, e.to] {
                if !dem.is_active_cell(endpoint) {
                    return Err(Error::InactiveCell { cell: endpoint });
                }
            }
            if !(e.fraction.is_finite() && e.fraction > 0.0 && e.fraction <= 1.0) {
                return Err(Error::InvalidGrid {
                    reason: format!(
                        "edge {} -> {} carries fraction {}, outside (0, 1]",
                        e.from, e.to, e.fraction
                    ),
                });
            }
            counts[compact[e.from.linear(dem.cols())] as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut targets = vec![0u32; edges.len()];
        let mut fractions = vec![0.0f64; edges.len()];
        let mut cursor = offsets[..n].to_vec();
        for e in edges {
            let from = compact[e.from.linear(dem.cols())] as usize;
            let slot = cursor[from] as usize;
            cursor[from] += 1;
            targets[slot] = compact[e.to.linear(dem.cols())];
            fractions[slot] = e.fraction;
        }
        Ok(FlowDirections {
            rows: dem.rows(),
            cols: dem.cols(),
            cell_size: dem.cell_size(),
            cells,
            compact,
            succ_offsets: offsets,
            succ_targets: targets,
            succ_fractions: fractions,
        })
    }

    fn from_dem(
        dem: &RasterGrid,
        mut assign: impl FnMut(&RasterGrid, CellIndex, f64, &mut dyn FnMut(u32, f64)),
    ) -> Self {
        let (cells, compact) = enumerate_active(dem);
        let mut offsets = Vec::with_capacity(cells.len() + 1);
        offsets.push(0u32);
        // Raw targets are raster linear indices during assembly; they are
        // remapped to compact ids in one pass below.
        let mut targets: Vec<u32> = Vec::new();
        let mut fractions: Vec<f64> = Vec::new();
        for &cell in &cells {
            let z = dem.get(cell.row, cell.col);
            assign(dem, cell, z, &mut |linear, fraction| {
                targets.push(linear);
                fractions.push(fraction);
            });
            offsets.push(targets.len() as u32);
        }
        for t in &mut targets {
            *t = compact[*t as usize];
            debug_assert_ne!(*t, NO_CELL, "edges never point at nodata cells");
        }
        FlowDirections {
            rows: dem.rows(),
            cols: dem.cols(),
            cell_size: dem.cell_size(),
            cells,
            compact,
            succ_offsets: offsets,
            succ_targets: targets,
            succ_fractions: fractions,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Number of active cells.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ_targets.len()
    }

    /// Compact id of an active cell, if any.
    pub fn compact_id(&self, cell: CellIndex) -> Option<u32> {
        if cell.row >= self.rows || cell.col >= self.cols {
            return None;
        }
        match self.compact[cell.linear(self.cols)] {
            NO_CELL => None,
            id => Some(id),
        }
    }

    pub fn cell_of(&self, id: u32) -> CellIndex {
        self.cells[id as usize]
    }

    /// Successor `(cell, fraction)` pairs of one cell.
    pub fn successors(&self, cell: CellIndex) -> Vec<(CellIndex, f64)> {
        let id = match self.compact_id(cell) {
            Some(id) => id,
            None => return Vec::new(),
        };
        let r = self.succ_offsets[id as usize] as usize..self.succ_offsets[id as usize + 1] as usize;
        r.map(|e| (self.cells[self.succ_targets[e] as usize], self.succ_fractions[e]))
            .collect()
    }

    /// All edges in source-major order.
    pub fn edges(&self) -> Vec<FlowEdge> {
        let mut out = Vec::with_capacity(self.succ_targets.len());
        for (id, &cell) in self.cells.iter().enumerate() {
            for e in self.succ_offsets[id] as usize..self.succ_offsets[id + 1] as usize {
                out.push(FlowEdge {
                    from: cell,
                    to: self.cells[self.succ_targets[e] as usize],
                    fraction: self.succ_fractions[e],
                });
            }
        }
        out
    }
}

fn enumerate_active(dem: &RasterGrid) -> (Vec<CellIndex>, Vec<u32>) {
    let mut cells = Vec::new();
    let mut compact = vec![NO_CELL; dem.rows() * dem.cols()];
    for cell in dem.active_cells() {
        compact[cell.linear(dem.cols())] = cells.len() as u32;
        cells.push(cell);
    }
    (cells, compact)
}

/// Flow directions augmented with ancestor adjacency and a topological order.
///
/// Both the per-cell ancestor lists and the per-cell successor lists are kept
/// sorted by ascending topological position, which fixes the (otherwise
/// arbitrary) order in which a cell's outflow is split among successors during
/// the transport sweep and lets the replay engine cut off early.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) cell_size: f64,
    pub(crate) cells: Vec<CellIndex>,
    pub(crate) compact: Vec<u32>,
    pub(crate) succ_offsets: Vec<u32>,
    pub(crate) succ_targets: Vec<u32>,
    pub(crate) succ_fractions: Vec<f64>,
    /// Successor edge slot → the same edge's slot in the ancestor arena.
    pub(crate) succ_to_anc: Vec<u32>,
    pub(crate) anc_offsets: Vec<u32>,
    pub(crate) anc_sources: Vec<u32>,
    pub(crate) anc_fractions: Vec<f64>,
    /// Compact ids in topological order.
    pub(crate) order: Vec<u32>,
    /// Inverse of `order`: topological position per compact id.
    pub(crate) position: Vec<u32>,
}

impl FlowGraph {
    /// Convenience: D8 directions plus graph construction.
    pub fn d8(dem: &RasterGrid) -> Result<Self> {
        Self::build(FlowDirections::d8(dem))
    }

    /// Convenience: FD8 directions plus graph construction.
    pub fn fd8(dem: &RasterGrid) -> Result<Self> {
        Self::build(FlowDirections::fd8(dem))
    }

    /// Builds the full graph: transposes the successor lists into ancestor
    /// lists (conserving the edge count), runs a Kahn topological sort whose
    /// ready set is popped in ascending cell order, and re-sorts all adjacency
    /// by topological position.
    ///
    /// Fails with [`Error::CycleDetected`] when the directions contain a
    /// cycle, listing the cells left unordered.
    pub fn build(dirs: FlowDirections) -> Result<Self> {
        let FlowDirections {
            rows,
            cols,
            cell_size,
            cells,
            compact,
            succ_offsets,
            mut succ_targets,
            mut succ_fractions,
        } = dirs;
        let n = cells.len();
        let edge_count = succ_targets.len();

        // Transpose successors into ancestors (counting sort by target).
        let mut in_degree = vec![0u32; n];
        for &t in &succ_targets {
            in_degree[t as usize] += 1;
        }
        let mut anc_offsets = vec![0u32; n + 1];
        for i in 0..n {
            anc_offsets[i + 1] = anc_offsets[i] + in_degree[i];
        }
        let mut anc_sources = vec![0u32; edge_count];
        let mut anc_fractions = vec![0.0f64; edge_count];
        let mut cursor: Vec<u32> = anc_offsets[..n].to_vec();
        for src in 0..n {
            for e in succ_offsets[src] as usize..succ_offsets[src + 1] as usize {
                let t = succ_targets[e] as usize;
                let slot = cursor[t] as usize;
                cursor[t] += 1;
                anc_sources[slot] = src as u32;
                anc_fractions[slot] = succ_fractions[e];
            }
        }
        debug_assert_eq!(anc_sources.len(), edge_count, "transpose conserves edges");

        // Kahn's algorithm over a working copy of the in-degrees. The ready
        // set is a min-heap keyed by compact id, i.e. ascending row-major
        // cell order, which makes the output order fully deterministic.
        let mut remaining = in_degree;
        let mut ready: BinaryHeap<Reverse<u32>> = (0..n as u32)
            .filter(|&i| remaining[i as usize] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            let lo = succ_offsets[i as usize] as usize;
            let hi = succ_offsets[i as usize + 1] as usize;
            for &target in &succ_targets[lo..hi] {
                let t = target as usize;
                remaining[t] -= 1;
                if remaining[t] == 0 {
                    ready.push(Reverse(target));
                }
            }
        }
        if order.len() != n {
            let first: Vec<CellIndex> = (0..n)
                .filter(|&i| remaining[i] > 0)
                .take(8)
                .map(|i| cells[i])
                .collect();
            return Err(Error::CycleDetected {
                residual: n - order.len(),
                first,
            });
        }
        let mut position = vec![0u32; n];
        for (pos, &id) in order.iter().enumerate() {
            position[id as usize] = pos as u32;
        }

        // Re-sort each adjacency list by ascending topological position so
        // sweep and replay traverse edges in one well-defined order.
        sort_csr_by_position(&succ_offsets, &mut succ_targets, &mut succ_fractions, &position);
        sort_csr_by_position(&anc_offsets, &mut anc_sources, &mut anc_fractions, &position);

        // Map each successor slot to the matching slot in the ancestor arena
        // so per-edge data (deliveries) can be read from either side.
        let mut succ_to_anc = vec![0u32; edge_count];
        for src in 0..n {
            for e in succ_offsets[src] as usize..succ_offsets[src + 1] as usize {
                let t = succ_targets[e] as usize;
                let slot = (anc_offsets[t] as usize..anc_offsets[t + 1] as usize)
                    .find(|&a| anc_sources[a] as usize == src)
                    .expect("every successor edge has a transpose slot");
                succ_to_anc[e] = slot as u32;
            }
        }

        Ok(FlowGraph {
            rows,
            cols,
            cell_size,
            cells,
            compact,
            succ_offsets,
            succ_targets,
            succ_fractions,
            succ_to_anc,
            anc_offsets,
            anc_sources,
            anc_fractions,
            order,
            position,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ_targets.len()
    }

    pub fn compact_id(&self, cell: CellIndex) -> Option<u32> {
        if cell.row >= self.rows || cell.col >= self.cols {
            return None;
        }
        match self.compact[cell.linear(self.cols)] {
            NO_CELL => None,
            id => Some(id),
        }
    }

    pub fn cell_of(&self, id: u32) -> CellIndex {
        self.cells[id as usize]
    }

    /// Active cells in ascending row-major order (compact id order).
    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    /// Compact ids in topological order: every ancestor precedes its
    /// successors, ties resolved by ascending cell order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn position_of(&self, id: u32) -> u32 {
        self.position[id as usize]
    }

    pub fn out_degree(&self, id: u32) -> usize {
        (self.succ_offsets[id as usize + 1] - self.succ_offsets[id as usize]) as usize
    }

    pub fn in_degree(&self, id: u32) -> usize {
        (self.anc_offsets[id as usize + 1] - self.anc_offsets[id as usize]) as usize
    }

    pub fn is_sink(&self, id: u32) -> bool {
        self.out_degree(id) == 0
    }

    /// Sinks in ascending cell order.
    pub fn sinks(&self) -> Vec<u32> {
        (0..self.cells.len() as u32).filter(|&i| self.is_sink(i)).collect()
    }

    /// `true` when every cell has at most one successor carrying fraction 1,
    /// i.e. the graph routes flow like a single-direction (D8) network.
    pub fn is_single_direction(&self) -> bool {
        (0..self.cells.len() as u32).all(|i| self.out_degree(i) <= 1)
            && self.succ_fractions.iter().all(|&f| f == 1.0)
    }

    /// Successor `(id, fraction)` pairs in ascending topological position.
    pub fn successors_of(&self, id: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        (self.succ_offsets[id as usize] as usize..self.succ_offsets[id as usize + 1] as usize)
            .map(move |e| (self.succ_targets[e], self.succ_fractions[e]))
    }

    /// Ancestor `(id, fraction)` pairs in ascending topological position.
    pub fn ancestors_of(&self, id: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        (self.anc_offsets[id as usize] as usize..self.anc_offsets[id as usize + 1] as usize)
            .map(move |e| (self.anc_sources[e], self.anc_fractions[e]))
    }

    /// All edges in source-major order.
    pub fn edges(&self) -> Vec<FlowEdge> {
        let mut out = Vec::with_capacity(self.succ_targets.len());
        for (id, &cell) in self.cells.iter().enumerate() {
            for e in self.succ_offsets[id] as usize..self.succ_offsets[id + 1] as usize {
                out.push(FlowEdge {
                    from: cell,
                    to: self.cells[self.succ_targets[e] as usize],
                    fraction: self.succ_fractions[e],
                });
            }
        }
        out
    }

    /// Fraction-weighted count of cells draining through each cell (each cell
    /// contributes 1, split along its outflow fractions), itself included.
    /// For a D8 graph this is the plain upslope cell count.
    pub fn accumulation(&self) -> Vec<f64> {
        let mut acc = vec![1.0f64; self.cells.len()];
        for &i in &self.order {
            let a = acc[i as usize];
            for e in self.succ_offsets[i as usize] as usize..self.succ_offsets[i as usize + 1] as usize
            {
                acc[self.succ_targets[e] as usize] += a * self.succ_fractions[e];
            }
        }
        acc
    }

    /// Dumps the edge list as CSV (`from_row,from_col,to_row,to_col,fraction`).
    pub fn write_edge_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "from_row,from_col,to_row,to_col,fraction")?;
        for e in self.edges() {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.from.row, e.from.col, e.to.row, e.to.col, e.fraction
            )?;
        }
        Ok(())
    }
}

/// Sorts every CSR adjacency list in place by ascending topological position
/// of the referenced cell, keeping the fraction array aligned.
fn sort_csr_by_position(
    offsets: &[u32],
    refs: &mut [u32],
    fractions: &mut [f64],
    position: &[u32],
) {
    let mut scratch: Vec<(u32, u32, f64)> = Vec::with_capacity(8);
    for i in 0..offsets.len() - 1 {
        let range = offsets[i] as usize..offsets[i + 1] as usize;
        if range.len() < 2 {
            continue;
        }
        scratch.clear();
        scratch.extend(
            range
                .clone()
                .map(|e| (position[refs[e] as usize], refs[e], fractions[e])),
        );
        scratch.sort_unstable_by_key(|&(pos, _, _)| pos);
        for (slot, &(_, r, f)) in range.zip(scratch.iter()) {
            refs[slot] = r;
            fractions[slot] = f;
        }
    }
}
