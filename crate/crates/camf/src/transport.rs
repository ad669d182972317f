//! Sediment transport: the outflow kernel, the full accumulation sweep, and
//! incremental replay of a single land-use flip.
//!
//! Every active cell starts a sweep holding its local sediment production
//! `alpha` and then, in topological order, pulls the due share from each
//! ancestor. The share is `outflow(sa_ancestor) × fraction`, where the
//! piecewise-linear outflow function retains everything up to `rho`, passes a
//! fraction `gamma` of the span between `rho` and `sigma`, and passes the
//! overflow beyond `sigma` entirely:
//!
//! ```text
//! D(sa) = 0                                sa ≤ rho
//!         gamma·(sa − rho)                 rho < sa ≤ sigma
//!         gamma·(sigma − rho) + sa − sigma sa > sigma
//! ```
//!
//! The ancestor's `sa` is decremented as each successor takes its share, and
//! the outflow is re-evaluated from the decremented value for the next
//! successor, so the order of drains matters; both adjacency directions are
//! kept sorted by topological position to pin that order down.
//!
//! Each cell carries two parameter sets — state 1 (current land use) and
//! state 2 (afforested) — and a sweep takes a per-cell state assignment. The
//! [`ReplayEngine`] re-evaluates the yield after flipping one cell to state 2
//! without re-running the whole sweep, reproducing the full sweep bit for
//! bit.

use std::io;

use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::raster::{CellIndex, RasterGrid};

/// Piecewise-linear outflow of a cell holding `sa` sediment.
///
/// `rho` is the retention floor, `sigma` the saturation ceiling, and `gamma`
/// the pass-through ratio between them; see the module docs for the three
/// branches. The result never exceeds `sa`, so repeated drains cannot drive a
/// cell negative.
#[inline]
pub fn outflow(sa: f64, rho: f64, sigma: f64, gamma: f64) -> f64 {
    debug_assert!(sa >= 0.0 && rho >= 0.0 && sigma >= rho && (0.0..=1.0).contains(&gamma));
    if sa <= rho {
        0.0
    } else if sa <= sigma {
        gamma * (sa - rho)
    } else {
        gamma * (sigma - rho) + (sa - sigma)
    }
}

/// One cell's transport parameters for a single land-use state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    /// Local sediment production per year (ton yr⁻¹ for this cell).
    pub alpha: f64,
    /// Retention floor: sediment up to this amount never leaves the cell.
    pub rho: f64,
    /// Saturation ceiling: sediment beyond this amount leaves in full.
    pub sigma: f64,
    /// Pass-through ratio on the span between `rho` and `sigma`.
    pub gamma: f64,
}

impl ParamSet {
    pub fn outflow(&self, sa: f64) -> f64 {
        outflow(sa, self.rho, self.sigma, self.gamma)
    }

    fn validate(&self, cell: CellIndex) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.rho.is_finite()
            && self.sigma.is_finite()
            && self.gamma.is_finite()
            && self.alpha >= 0.0
            && self.rho >= 0.0
            && self.sigma >= self.rho
            && (0.0..=1.0).contains(&self.gamma);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams {
                cell,
                reason: format!(
                    "need alpha ≥ 0, 0 ≤ rho ≤ sigma, 0 ≤ gamma ≤ 1; got alpha={}, rho={}, sigma={}, gamma={}",
                    self.alpha, self.rho, self.sigma, self.gamma
                ),
            })
        }
    }
}

/// Per-cell parameters for both land-use states, aligned with a graph's
/// compact cell ids.
#[derive(Debug, Clone)]
pub struct CellParams {
    initial: Vec<ParamSet>,
    afforested: Vec<ParamSet>,
}

impl CellParams {
    /// Validates and stores one parameter pair per active cell, in compact id
    /// order.
    pub fn new(graph: &FlowGraph, initial: Vec<ParamSet>, afforested: Vec<ParamSet>) -> Result<Self> {
        let n = graph.cell_count();
        if initial.len() != n || afforested.len() != n {
            return Err(Error::InvalidGrid {
                reason: format!(
                    "parameter vectors hold {} / {} entries for {} active cells",
                    initial.len(),
                    afforested.len(),
                    n
                ),
            });
        }
        for (id, p) in initial.iter().chain(afforested.iter()).enumerate() {
            p.validate(graph.cell_of((id % n.max(1)) as u32))?;
        }
        Ok(CellParams {
            initial,
            afforested,
        })
    }

    /// Same parameter pair for every cell.
    pub fn uniform(graph: &FlowGraph, initial: ParamSet, afforested: ParamSet) -> Result<Self> {
        let n = graph.cell_count();
        Self::new(graph, vec![initial; n], vec![afforested; n])
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    /// Parameters of `id` under the given state flag.
    #[inline]
    pub fn get(&self, id: u32, afforested: bool) -> &ParamSet {
        if afforested {
            &self.afforested[id as usize]
        } else {
            &self.initial[id as usize]
        }
    }

    pub fn initial(&self, id: u32) -> &ParamSet {
        &self.initial[id as usize]
    }

    pub fn afforested(&self, id: u32) -> &ParamSet {
        &self.afforested[id as usize]
    }

    /// Total production under a per-cell state assignment — the conserved
    /// quantity a sweep redistributes.
    pub fn total_alpha(&self, afforested: &[bool]) -> f64 {
        assert_eq!(afforested.len(), self.initial.len());
        afforested
            .iter()
            .enumerate()
            .map(|(i, &a)| if a { self.afforested[i].alpha } else { self.initial[i].alpha })
            .sum()
    }

    /// Checks that afforestation weakly reduces production and mobility:
    /// `alpha₂ ≤ alpha₁`, `gamma₂ ≤ gamma₁`, `rho₂ ≥ rho₁`, `sigma₂ ≥ sigma₁`.
    ///
    /// Derived parameter sets must satisfy this; hand-built experimental sets
    /// may legitimately skip it.
    pub fn validate_afforestation_ordering(&self, graph: &FlowGraph) -> Result<()> {
        for (i, (p1, p2)) in self.initial.iter().zip(&self.afforested).enumerate() {
            let ok = p2.alpha <= p1.alpha
                && p2.gamma <= p1.gamma
                && p2.rho >= p1.rho
                && p2.sigma >= p1.sigma;
            if !ok {
                return Err(Error::InvalidParams {
                    cell: graph.cell_of(i as u32),
                    reason: format!(
                        "afforested state must not increase production or mobility: state 1 {p1:?}, state 2 {p2:?}"
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Validated set of outlet cells (all sinks), in ascending cell order.
#[derive(Debug, Clone)]
pub struct Outlets {
    ids: Vec<u32>,
}

impl Outlets {
    /// Validates that every given cell is active and a sink. Duplicates are
    /// dropped; the set may be empty (yield is then always 0).
    pub fn new(graph: &FlowGraph, cells: &[CellIndex]) -> Result<Self> {
        let mut ids = Vec::with_capacity(cells.len());
        for &cell in cells {
            let id = graph
                .compact_id(cell)
                .ok_or(Error::InactiveCell { cell })?;
            if !graph.is_sink(id) {
                return Err(Error::OutletNotSink { cell });
            }
            ids.push(id);
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(Outlets { ids })
    }

    /// Picks the sink with the largest contributing (fraction-weighted)
    /// upslope cell count; ties go to the earlier cell in row-major order.
    pub fn auto(graph: &FlowGraph) -> Result<Self> {
        let acc = graph.accumulation();
        let best = graph
            .sinks()
            .into_iter()
            .max_by(|&a, &b| {
                acc[a as usize]
                    .partial_cmp(&acc[b as usize])
                    .expect("accumulation values are finite")
                    // `max_by` keeps the later of equal elements, so order
                    // equal accumulations by *descending* id to favor the
                    // earlier cell.
                    .then(b.cmp(&a))
            })
            .ok_or(Error::NoOutletCandidate)?;
        Ok(Outlets { ids: vec![best] })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn cells(&self, graph: &FlowGraph) -> Vec<CellIndex> {
        self.ids.iter().map(|&id| graph.cell_of(id)).collect()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}

/// Result of a full transport sweep.
#[derive(Debug, Clone)]
pub struct TransportState {
    /// Final per-cell sediment after all drains (compact id order).
    sa: Vec<f64>,
    /// Per-cell sediment right after the cell's own inflows completed,
    /// before any successor drained it. Replays rebuild mid-sweep values
    /// from this.
    sa_full: Vec<f64>,
    /// Delivered amount per edge, indexed like the graph's ancestor arena.
    deliveries: Vec<f64>,
    /// State assignment the sweep was run under.
    afforested: Vec<bool>,
    /// Total final sediment on the outlet cells (ton yr⁻¹).
    sy: f64,
    /// Edge-drain operations executed (always the graph's edge count).
    edges_processed: u64,
}

impl TransportState {
    pub fn sa(&self) -> &[f64] {
        &self.sa
    }

    pub fn sy(&self) -> f64 {
        self.sy
    }

    pub fn deliveries(&self) -> &[f64] {
        &self.deliveries
    }

    pub fn afforested(&self) -> &[bool] {
        &self.afforested
    }

    pub fn edges_processed(&self) -> u64 {
        self.edges_processed
    }

    /// Final sediment as a per-hectare raster on the template's georeference
    /// (values divided by the cell area in hectares; inactive cells nodata).
    pub fn to_sa_raster(&self, graph: &FlowGraph, template: &RasterGrid) -> Result<RasterGrid> {
        if template.rows() != graph.rows() || template.cols() != graph.cols() {
            return Err(Error::RasterMismatch {
                left: "flow graph".to_string(),
                right: "template raster".to_string(),
                reason: format!(
                    "{}x{} vs {}x{}",
                    graph.rows(),
                    graph.cols(),
                    template.rows(),
                    template.cols()
                ),
            });
        }
        let area_ha = template.cell_area_ha();
        let mut out = template.like_empty();
        for (id, &cell) in graph.cells().iter().enumerate() {
            out.set(cell.row, cell.col, self.sa[id] / area_ha);
        }
        Ok(out)
    }

    /// Dumps per-edge deliveries as CSV
    /// (`from_row,from_col,to_row,to_col,delivery`).
    pub fn write_delivery_csv<W: io::Write>(&self, graph: &FlowGraph, w: &mut W) -> io::Result<()> {
        writeln!(w, "from_row,from_col,to_row,to_col,delivery")?;
        for src in 0..graph.cell_count() {
            let from = graph.cell_of(src as u32);
            for e in graph.succ_offsets[src] as usize..graph.succ_offsets[src + 1] as usize {
                let to = graph.cell_of(graph.succ_targets[e]);
                let d = self.deliveries[graph.succ_to_anc[e] as usize];
                writeln!(w, "{},{},{},{},{}", from.row, from.col, to.row, to.col, d)?;
            }
        }
        Ok(())
    }
}

/// Runs the full accumulation sweep in topological order and extracts the
/// yield at the outlets.
///
/// `afforested` assigns each cell its land-use state (`true` = state 2) and
/// must hold one flag per active cell.
pub fn compute_base_flow(
    graph: &FlowGraph,
    params: &CellParams,
    afforested: &[bool],
    outlets: &Outlets,
) -> TransportState {
    let n = graph.cell_count();
    assert_eq!(afforested.len(), n, "one state flag per active cell");
    assert_eq!(params.len(), n, "one parameter pair per active cell");

    let mut sa = vec![0.0f64; n];
    let mut sa_full = vec![0.0f64; n];
    let mut deliveries = vec![0.0f64; graph.edge_count()];
    let mut edges: u64 = 0;

    for &i in &graph.order {
        let iu = i as usize;
        sa[iu] = params.get(i, afforested[iu]).alpha;
        // Indexed on purpose: `e` addresses three parallel arenas at once.
        #[allow(clippy::needless_range_loop)]
        for e in graph.anc_offsets[iu] as usize..graph.anc_offsets[iu + 1] as usize {
            let j = graph.anc_sources[e] as usize;
            let pj = params.get(j as u32, afforested[j]);
            let d = outflow(sa[j], pj.rho, pj.sigma, pj.gamma) * graph.anc_fractions[e];
            sa[j] -= d;
            sa[iu] += d;
            deliveries[e] = d;
            edges += 1;
        }
        sa_full[iu] = sa[iu];
    }

    let sy = outlets.ids.iter().map(|&o| sa[o as usize]).sum();
    TransportState {
        sa,
        sa_full,
        deliveries,
        afforested: afforested.to_vec(),
        sy,
        edges_processed: edges,
    }
}

/// Sum of final sediment over the given outlets (ton yr⁻¹). An empty outlet
/// set yields 0.
pub fn sediment_yield(state: &TransportState, outlets: &Outlets) -> f64 {
    outlets.ids.iter().map(|&o| state.sa[o as usize]).sum()
}

/// Which incremental strategy a replay uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Re-run the sweep over all cells at or after the flipped cell's
    /// topological position. Works on any graph.
    Suffix,
    /// Walk only the flipped cell's unique downstream path. Requires
    /// single-direction flow along that path.
    SinglePath,
}

/// Incremental re-evaluation of the outlet yield after flipping one cell to
/// the afforested state.
///
/// The engine borrows a base [`TransportState`] and reuses internal scratch
/// across calls; results are bit-identical to a full sweep with the flipped
/// state assignment. Several engines may replay candidates against the same
/// base concurrently — each holds its own scratch.
pub struct ReplayEngine<'a> {
    graph: &'a FlowGraph,
    params: &'a CellParams,
    base: &'a TransportState,
    outlets: &'a Outlets,
    sa: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    last_edges: u64,
}

impl<'a> ReplayEngine<'a> {
    pub fn new(
        graph: &'a FlowGraph,
        params: &'a CellParams,
        base: &'a TransportState,
        outlets: &'a Outlets,
    ) -> Self {
        let n = graph.cell_count();
        ReplayEngine {
            graph,
            params,
            base,
            outlets,
            sa: vec![0.0; n],
            stamp: vec![0; n],
            epoch: 0,
            last_edges: 0,
        }
    }

    pub fn base(&self) -> &TransportState {
        self.base
    }

    /// Edge-drain operations executed by the most recent replay.
    pub fn last_edges(&self) -> u64 {
        self.last_edges
    }

    /// Dispatches to [`ReplayEngine::replay_suffix`] or
    /// [`ReplayEngine::replay_path`].
    pub fn replay(&mut self, mode: ReplayMode, cell: CellIndex) -> Result<f64> {
        match mode {
            ReplayMode::Suffix => self.replay_suffix(cell),
            ReplayMode::SinglePath => self.replay_path(cell),
        }
    }

    /// Yield with `cell` flipped to the afforested state, re-running the
    /// sweep only from the cell's topological position onward.
    ///
    /// Prefix cells that feed the suffix are rebuilt to their exact mid-sweep
    /// value: the stored inflow-complete value minus the recorded deliveries
    /// they had already handed to pre-suffix successors, re-subtracted in the
    /// original order. All arithmetic therefore replays the full sweep's
    /// operation sequence verbatim, making the result bit-exact.
    pub fn replay_suffix(&mut self, cell: CellIndex) -> Result<f64> {
        let id = self.check_candidate(cell)?;
        self.begin();
        let graph = self.graph;
        let base = self.base;
        let p = graph.position_of(id) as usize;
        let suffix = &graph.order[p..];

        // Reset every suffix cell to its production under the replay states.
        for &s in suffix {
            let su = s as usize;
            let aff = s == id || base.afforested[su];
            self.sa[su] = self.params.get(s, aff).alpha;
            self.stamp[su] = self.epoch;
        }

        let mut edges: u64 = 0;
        for &s in suffix {
            let su = s as usize;
            for e in graph.anc_offsets[su] as usize..graph.anc_offsets[su + 1] as usize {
                let j = graph.anc_sources[e];
                let ju = j as usize;
                if self.stamp[ju] != self.epoch {
                    // Prefix ancestor, first touch: rebuild its value as of
                    // the moment the original sweep reached position `p`.
                    debug_assert!((graph.position_of(j) as usize) < p);
                    let mut v = base.sa_full[ju];
                    for se in graph.succ_offsets[ju] as usize..graph.succ_offsets[ju + 1] as usize {
                        if graph.position_of(graph.succ_targets[se]) as usize >= p {
                            break; // successor list is position-sorted
                        }
                        v -= base.deliveries[graph.succ_to_anc[se] as usize];
                    }
                    self.sa[ju] = v;
                    self.stamp[ju] = self.epoch;
                }
                let aff_j = j == id || base.afforested[ju];
                let pj = self.params.get(j, aff_j);
                let d = outflow(self.sa[ju], pj.rho, pj.sigma, pj.gamma) * graph.anc_fractions[e];
                self.sa[ju] -= d;
                self.sa[su] += d;
                edges += 1;
            }
        }
        self.last_edges = edges;
        Ok(self.yield_sum())
    }

    /// Yield with `cell` flipped, walking only its unique downstream path.
    ///
    /// Valid when every path cell has at most one successor (single-direction
    /// flow): nothing off the path can change, so each path cell's new value
    /// is its production plus its recorded incoming deliveries, with the
    /// delivery from the previous path cell replaced by the recomputed one.
    /// Bit-exact for the same reason as [`ReplayEngine::replay_suffix`].
    pub fn replay_path(&mut self, cell: CellIndex) -> Result<f64> {
        let id = self.check_candidate(cell)?;
        self.begin();
        let graph = self.graph;
        let base = self.base;
        let mut edges: u64 = 0;
        // Recomputed delivery out of the previous path cell, replacing the
        // recorded one on that edge.
        let mut updated: Option<(u32, f64)> = None;
        let mut cur = id;
        loop {
            let cu = cur as usize;
            let aff = cur == id || base.afforested[cu];
            let pc = self.params.get(cur, aff);
            let mut v = pc.alpha;
            for e in graph.anc_offsets[cu] as usize..graph.anc_offsets[cu + 1] as usize {
                let j = graph.anc_sources[e];
                v += match updated {
                    Some((pj, nd)) if pj == j => nd,
                    _ => base.deliveries[e],
                };
                edges += 1;
            }
            self.sa[cu] = v;
            self.stamp[cu] = self.epoch;
            match graph.out_degree(cur) {
                0 => break,
                1 => {
                    let e = graph.succ_offsets[cu] as usize;
                    let d = outflow(v, pc.rho, pc.sigma, pc.gamma) * graph.succ_fractions[e];
                    updated = Some((cur, d));
                    cur = graph.succ_targets[e];
                }
                degree => {
                    return Err(Error::NotSingleFlow {
                        cell: graph.cell_of(cur),
                        degree,
                    })
                }
            }
        }
        self.last_edges = edges;
        Ok(self.yield_sum())
    }

    /// Full per-cell sediment vector of the most recent replay (base values
    /// where the replay did not touch).
    pub fn last_sa(&self) -> Vec<f64> {
        (0..self.sa.len())
            .map(|i| {
                if self.stamp[i] == self.epoch && self.epoch > 0 {
                    self.sa[i]
                } else {
                    self.base.sa[i]
                }
            })
            .collect()
    }

    fn check_candidate(&self, cell: CellIndex) -> Result<u32> {
        let id = self
            .graph
            .compact_id(cell)
            .ok_or(Error::InactiveCell { cell })?;
        if self.base.afforested[id as usize] {
            return Err(Error::AlreadyAfforested { cell });
        }
        Ok(id)
    }

    fn begin(&mut self) {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
    }

    fn yield_sum(&self) -> f64 {
        self.outlets
            .ids
            .iter()
            .map(|&o| {
                let ou = o as usize;
                if self.stamp[ou] == self.epoch {
                    self.sa[ou]
                } else {
                    self.base.sa[ou]
                }
            })
            .sum()
    }
}
