//! Greedy afforestation site selection.
//!
//! Each iteration evaluates every remaining candidate cell with the replay
//! engine, computing its yield reduction (SYR = base SY − SY with that one
//! cell flipped), and commits the argmax. Candidates that tie for the best
//! reduction are all committed in the same iteration, truncated in ascending
//! row-major order when a cell-count budget would be exceeded. After each
//! commit the base state is refreshed with one full sweep and the loop
//! continues until the stop rule fires, the candidates run out, or no
//! candidate achieves a positive reduction.
//!
//! Candidate evaluations within an iteration are independent and run in
//! parallel; results are reduced in candidate order, so the selection is
//! identical for any worker count.

use std::io;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::raster::{CellIndex, RasterGrid};
use crate::transport::{compute_base_flow, CellParams, Outlets, ReplayEngine, ReplayMode};

/// Validated set of candidate cells, kept in ascending row-major order.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    ids: Vec<u32>,
}

impl CandidateSet {
    /// Validates that every candidate is an active cell.
    pub fn new(graph: &FlowGraph, cells: &[CellIndex]) -> Result<Self> {
        let mut ids = Vec::with_capacity(cells.len());
        for &cell in cells {
            ids.push(graph.compact_id(cell).ok_or(Error::InactiveCell { cell })?);
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(CandidateSet { ids })
    }

    /// Every active cell is a candidate.
    pub fn all(graph: &FlowGraph) -> Self {
        CandidateSet {
            ids: (0..graph.cell_count() as u32).collect(),
        }
    }

    /// Candidates from a mask raster: every active mask cell with a positive
    /// value marks a candidate. The mask must have the graph's shape, and
    /// marked cells must be active in the graph.
    pub fn from_mask(graph: &FlowGraph, mask: &RasterGrid) -> Result<Self> {
        if mask.rows() != graph.rows() || mask.cols() != graph.cols() {
            return Err(Error::RasterMismatch {
                left: "flow graph".to_string(),
                right: "candidate mask".to_string(),
                reason: format!(
                    "{}x{} vs {}x{}",
                    graph.rows(),
                    graph.cols(),
                    mask.rows(),
                    mask.cols()
                ),
            });
        }
        let mut cells = Vec::new();
        for cell in mask.active_cells() {
            if mask.get(cell.row, cell.col) > 0.0 {
                cells.push(cell);
            }
        }
        Self::new(graph, &cells)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cells(&self, graph: &FlowGraph) -> Vec<CellIndex> {
        self.ids.iter().map(|&id| graph.cell_of(id)).collect()
    }
}

/// When the greedy loop stops (besides running out of useful candidates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once this many cells have been selected.
    CellCount(usize),
    /// Stop once the cumulative yield reduction reaches this amount
    /// (ton yr⁻¹).
    TargetReduction(f64),
}

/// Knobs for [`select`].
#[derive(Debug, Clone, Copy)]
pub struct SelectOptions {
    pub stop: StopRule,
    pub mode: ReplayMode,
    /// Worker threads for candidate evaluation. `None` (or `Some(0)`) uses
    /// the default pool. The result never depends on this.
    pub threads: Option<usize>,
}

/// One committed greedy iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Cells committed this iteration with their (equal) marginal reduction.
    pub committed: Vec<(CellIndex, f64)>,
    /// Yield after the commit.
    pub sy_after: f64,
    /// Base yield minus `sy_after`.
    pub cumulative_syr: f64,
    /// Candidate evaluations performed this iteration.
    pub evaluations: u64,
    /// Edge-drain operations across all replays this iteration.
    pub edges_visited: u64,
}

/// Outcome of a [`select`] run.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Yield before any selection (ton yr⁻¹).
    pub sy_base: f64,
    /// Yield with all selected cells afforested.
    pub final_sy: f64,
    /// Selected cells in commit order.
    pub selected: Vec<CellIndex>,
    pub iterations: Vec<IterationRecord>,
    /// `true` when the loop ended because no remaining candidate had a
    /// positive reduction.
    pub stopped_zero_gain: bool,
}

impl SelectionResult {
    /// Total reduction achieved (ton yr⁻¹).
    pub fn total_syr(&self) -> f64 {
        self.sy_base - self.final_sy
    }

    /// Total reduction as a percentage of the base yield (0 when the base
    /// yield is 0).
    pub fn percent_syr(&self) -> f64 {
        if self.sy_base == 0.0 {
            0.0
        } else {
            100.0 * self.total_syr() / self.sy_base
        }
    }

    /// Writes one CSV row per committed cell:
    /// `iteration,cell_row,cell_col,marginal_SYR,cumulative_SYR,SY`.
    pub fn write_trajectory_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "iteration,cell_row,cell_col,marginal_SYR,cumulative_SYR,SY")?;
        for rec in &self.iterations {
            for &(cell, syr) in &rec.committed {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    rec.iteration, cell.row, cell.col, syr, rec.cumulative_syr, rec.sy_after
                )?;
            }
        }
        Ok(())
    }

    /// Selection as a raster: each selected cell carries the iteration number
    /// it was committed in; everything else is nodata.
    pub fn to_raster(&self, graph: &FlowGraph, template: &RasterGrid) -> Result<RasterGrid> {
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
        let mut out = template.like_empty();
        for rec in &self.iterations {
            for &(cell, _) in &rec.committed {
                out.set(cell.row, cell.col, rec.iteration as f64);
            }
        }
        Ok(out)
    }
}

/// Yield reduction achieved by flipping one candidate against the engine's
/// base state (positive = improvement).
pub fn evaluate_candidate(
    engine: &mut ReplayEngine<'_>,
    mode: ReplayMode,
    cell: CellIndex,
) -> Result<f64> {
    let sy = engine.replay(mode, cell)?;
    Ok(engine.base().sy() - sy)
}

/// Evaluates every candidate once against the all-initial base state and
/// returns `(cell, reduction)` sorted by descending reduction, ties in
/// ascending row-major order.
pub fn rank_candidates(
    graph: &FlowGraph,
    params: &CellParams,
    outlets: &Outlets,
    candidates: &CandidateSet,
    mode: ReplayMode,
) -> Result<Vec<(CellIndex, f64)>> {
    let afforested = vec![false; graph.cell_count()];
    let base = compute_base_flow(graph, params, &afforested, outlets);
    let mut engine = ReplayEngine::new(graph, params, &base, outlets);
    let mut out = Vec::with_capacity(candidates.len());
    for &id in candidates.ids() {
        let cell = graph.cell_of(id);
        out.push((cell, evaluate_candidate(&mut engine, mode, cell)?));
    }
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("reductions are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(out)
}

/// Runs the greedy selection loop. See the module docs for the exact
/// iteration semantics.
pub fn select(
    graph: &FlowGraph,
    params: &CellParams,
    outlets: &Outlets,
    candidates: &CandidateSet,
    options: &SelectOptions,
) -> Result<SelectionResult> {
    if let StopRule::TargetReduction(target) = options.stop {
        if !target.is_finite() || target < 0.0 {
            return Err(Error::InvalidStopRule {
                reason: format!("target reduction must be finite and ≥ 0, got {target}"),
            });
        }
    }
    match options.threads {
        Some(threads) if threads > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build evaluation thread pool")
            .install(|| select_inner(graph, params, outlets, candidates, options)),
        _ => select_inner(graph, params, outlets, candidates, options),
    }
}

fn select_inner(
    graph: &FlowGraph,
    params: &CellParams,
    outlets: &Outlets,
    candidates: &CandidateSet,
    options: &SelectOptions,
) -> Result<SelectionResult> {
    let n = graph.cell_count();
    let mut afforested = vec![false; n];
    let mut base = compute_base_flow(graph, params, &afforested, outlets);
    let sy_base = base.sy();
    let mut remaining: Vec<u32> = candidates.ids().to_vec();
    let mut selected: Vec<CellIndex> = Vec::new();
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut stopped_zero_gain = false;

    loop {
        // How many more cells the stop rule allows in this iteration.
        let quota = match options.stop {
            StopRule::CellCount(limit) => {
                if selected.len() >= limit {
                    break;
                }
                limit - selected.len()
            }
            StopRule::TargetReduction(target) => {
                if sy_base - base.sy() >= target {
                    break;
                }
                usize::MAX
            }
        };
        if remaining.is_empty() {
            break;
        }

        // Evaluate all remaining candidates against the current base. The
        // collect preserves candidate order, so the argmax scan below is
        // deterministic regardless of how the work was split.
        let evals: Vec<(u32, f64, u64)> = remaining
            .par_iter()
            .map_init(
                || ReplayEngine::new(graph, params, &base, outlets),
                |engine, &cand| {
                    let sy = engine.replay(options.mode, graph.cell_of(cand))?;
                    Ok((cand, base.sy() - sy, engine.last_edges()))
                },
            )
            .collect::<Result<Vec<_>>>()?;

        let evaluations = evals.len() as u64;
        let edges_visited = evals.iter().map(|&(_, _, e)| e).sum();
        let best = evals
            .iter()
            .map(|&(_, syr, _)| syr)
            .fold(f64::NEG_INFINITY, f64::max);
        // Negated on purpose: a NaN best gain must also stop the loop.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(best > 0.0) {
            stopped_zero_gain = true;
            break;
        }

        // Commit every candidate tied at the best reduction, in ascending
        // cell order, truncated to the remaining quota.
        let committed_ids: Vec<u32> = evals
            .iter()
            .filter(|&&(_, syr, _)| syr == best)
            .map(|&(cand, _, _)| cand)
            .take(quota)
            .collect();
        for &id in &committed_ids {
            afforested[id as usize] = true;
            selected.push(graph.cell_of(id));
        }
        base = compute_base_flow(graph, params, &afforested, outlets);
        remaining.retain(|&c| !afforested[c as usize]);
        iterations.push(IterationRecord {
            iteration: iterations.len() + 1,
            committed: committed_ids
                .iter()
                .map(|&id| (graph.cell_of(id), best))
                .collect(),
            sy_after: base.sy(),
            cumulative_syr: sy_base - base.sy(),
            evaluations,
            edges_visited,
        });
    }

    Ok(SelectionResult {
        sy_base,
        final_sy: base.sy(),
        selected,
        iterations,
        stopped_zero_gain,
    })
}
