//! Synthetic catchments and independent reference implementations.
//!
//! [`SyntheticCase::generate`] builds a fully reproducible test catchment
//! from a seed: a DEM shaped by a distance cone toward a single outlet plus
//! smooth wave noise, hydrologically conditioned by a priority flood so that
//! every cell has a strictly descending path to the outlet (the unique sink);
//! a production raster, a terrain-derived flow factor and a Bernoulli
//! candidate mask complete the case.
//!
//! The `oracle_*` functions re-derive transport results through a deliberately
//! different code path (a flat, explicitly sorted edge-event list instead of
//! the CSR sweep, and per-candidate full re-simulation instead of replay).
//! They execute the same arithmetic in the same order, so production results
//! must match them bit for bit — any divergence is a real defect, not noise.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::raster::{write_ascii_grid, CellIndex, RasterGrid, NEIGHBOR_OFFSETS};
use crate::rusle::{derive_params, gamma1_from_dem, ParamDerivation};
use crate::selection::CandidateSet;
use crate::transport::{CellParams, Outlets, ParamSet};

/// Cell size of generated cases (meters).
const CELL_SIZE: f64 = 30.0;
const NODATA: f64 = -9999.0;

/// A reproducible synthetic catchment.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub seed: u64,
    pub dem: RasterGrid,
    /// Local production, ton ha⁻¹ yr⁻¹, uniform in [1, 300).
    pub alpha1: RasterGrid,
    /// Flow factor in [0, 1]: min-max normalized slope.
    pub gamma1: RasterGrid,
    /// Candidate mask (1 = candidate).
    pub candidates: RasterGrid,
    /// The single outlet: the south-west corner, global elevation minimum.
    pub outlet: CellIndex,
    pub derivation: ParamDerivation,
}

impl SyntheticCase {
    /// Generates a case. `relief` is the total elevation range (0 produces a
    /// flat DEM where every cell is a sink); `candidate_fraction` is the
    /// per-cell probability of being a candidate.
    ///
    /// The random draw order (terrain waves, then production, then the
    /// candidate mask) is part of the format: the same seed always yields
    /// the same case.
    pub fn generate(
        seed: u64,
        rows: usize,
        cols: usize,
        relief: f64,
        candidate_fraction: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSynthRequest {
                reason: format!("grid must be non-empty, got {rows}x{cols}"),
            });
        }
        if !relief.is_finite() || relief < 0.0 {
            return Err(Error::InvalidSynthRequest {
                reason: format!("relief must be finite and ≥ 0, got {relief}"),
            });
        }
        if !(0.0..=1.0).contains(&candidate_fraction) {
            return Err(Error::InvalidSynthRequest {
                reason: format!("candidate fraction must lie in [0, 1], got {candidate_fraction}"),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outlet = CellIndex::new(rows - 1, 0);

        // Terrain: distance cone toward the outlet plus smooth wave noise.
        let waves: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                let sign = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let fr = rng.gen_range(0.02..0.15) * sign(&mut rng);
                let fc = rng.gen_range(0.02..0.15) * sign(&mut rng);
                let phase = rng.gen_range(0.0..TAU);
                let amplitude = rng.gen_range(0.5..1.0);
                (fr, fc, phase, amplitude)
            })
            .collect();
        let total_amplitude: f64 = waves.iter().map(|w| w.3).sum();
        let max_dist = [(0usize, 0usize), (0, cols - 1), (rows - 1, cols - 1)]
            .into_iter()
            .map(|(r, c)| distance(CellIndex::new(r, c), outlet))
            .fold(1.0f64, f64::max);
        let mut values = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let cell = CellIndex::new(row, col);
                let cone = distance(cell, outlet) / max_dist;
                let wave_sum: f64 = waves
                    .iter()
                    .map(|&(fr, fc, phase, amp)| {
                        amp * (TAU * (fr * row as f64 + fc * col as f64) + phase).cos()
                    })
                    .sum();
                let noise = (wave_sum + total_amplitude) / (2.0 * total_amplitude);
                values.push(relief * (0.65 * cone + 0.35 * noise));
            }
        }
        let mut dem = RasterGrid::new(rows, cols, CELL_SIZE, 0.0, 0.0, NODATA, values)?;
        if relief > 0.0 {
            condition_to_outlet(&mut dem, outlet, relief * 1e-6);
        }

        let alpha_values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(1.0..300.0)).collect();
        let alpha1 = RasterGrid::new(rows, cols, CELL_SIZE, 0.0, 0.0, NODATA, alpha_values)?;

        let mask_values: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if rng.gen_bool(candidate_fraction) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let candidates = RasterGrid::new(rows, cols, CELL_SIZE, 0.0, 0.0, NODATA, mask_values)?;

        let gamma1 = gamma1_from_dem(&dem);
        Ok(SyntheticCase {
            seed,
            dem,
            alpha1,
            gamma1,
            candidates,
            outlet,
            derivation: ParamDerivation::default(),
        })
    }

    /// Flow graph over the case DEM (`single` = one direction per cell).
    pub fn graph(&self, single: bool) -> Result<FlowGraph> {
        if single {
            FlowGraph::d8(&self.dem)
        } else {
            FlowGraph::fd8(&self.dem)
        }
    }

    pub fn params(&self, graph: &FlowGraph) -> Result<CellParams> {
        derive_params(graph, &self.alpha1, &self.gamma1, &self.derivation)
    }

    pub fn outlets(&self, graph: &FlowGraph) -> Result<Outlets> {
        Outlets::new(graph, &[self.outlet])
    }

    pub fn candidate_set(&self, graph: &FlowGraph) -> Result<CandidateSet> {
        CandidateSet::from_mask(graph, &self.candidates)
    }

    /// Writes the case as ready-to-run files: `dem.asc`, `alpha1.asc`,
    /// `gamma1.asc`, `candidates.asc`, `derivation.txt` and a `case.cfg`
    /// run configuration referencing them by relative path.
    pub fn write_fixtures(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_ascii_grid(&self.dem, dir.join("dem.asc"))?;
        write_ascii_grid(&self.alpha1, dir.join("alpha1.asc"))?;
        write_ascii_grid(&self.gamma1, dir.join("gamma1.asc"))?;
        write_ascii_grid(&self.candidates, dir.join("candidates.asc"))?;
        let derivation_path = dir.join("derivation.txt");
        fs::write(&derivation_path, self.derivation.to_config_string())
            .map_err(|e| Error::io(&derivation_path, e))?;
        let cfg = format!(
            "# synthetic case, seed {seed}\n\
             dem = dem.asc\n\
             alpha1 = alpha1.asc\n\
             gamma1 = gamma1.asc\n\
             candidates = candidates.asc\n\
             derivation = derivation.txt\n\
             outlet_row = {orow}\n\
             outlet_col = {ocol}\n",
            seed = self.seed,
            orow = self.outlet.row,
            ocol = self.outlet.col,
        );
        let cfg_path = dir.join("case.cfg");
        fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
        Ok(())
    }
}

fn distance(a: CellIndex, b: CellIndex) -> f64 {
    let dr = a.row as f64 - b.row as f64;
    let dc = a.col as f64 - b.col as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Flood-fill entry ordered by elevation, ties by cell id for determinism.
#[derive(PartialEq)]
struct FloodEntry {
    z: f64,
    linear: usize,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.z
            .partial_cmp(&other.z)
            .expect("flood elevations are finite")
            .then(self.linear.cmp(&other.linear))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority flood from the outlet with a small epsilon: raises every other
/// cell just enough that it keeps a strictly descending neighbor chain to
/// the outlet, which therefore becomes the unique sink and global minimum.
fn condition_to_outlet(dem: &mut RasterGrid, outlet: CellIndex, epsilon: f64) {
    let (rows, cols) = (dem.rows(), dem.cols());
    let mut visited = vec![false; rows * cols];
    let mut heap: BinaryHeap<Reverse<FloodEntry>> = BinaryHeap::new();
    visited[outlet.linear(cols)] = true;
    heap.push(Reverse(FloodEntry {
        z: dem.get(outlet.row, outlet.col),
        linear: outlet.linear(cols),
    }));
    while let Some(Reverse(entry)) = heap.pop() {
        let cell = CellIndex::from_linear(entry.linear, cols);
        for (dr, dc) in NEIGHBOR_OFFSETS {
            let (nr, nc) = (cell.row as isize + dr, cell.col as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            let linear = nr * cols + nc;
            if visited[linear] {
                continue;
            }
            visited[linear] = true;
            let lifted = dem.get(nr, nc).max(entry.z + epsilon);
            dem.set(nr, nc, lifted);
            heap.push(Reverse(FloodEntry { z: lifted, linear }));
        }
    }
}

/// Random DEM for corpus tests: uniform heights with a Bernoulli nodata mask.
pub fn random_dem(seed: u64, rows: usize, cols: usize, nodata_ratio: f64) -> RasterGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| {
            if nodata_ratio > 0.0 && rng.gen_bool(nodata_ratio) {
                NODATA
            } else {
                rng.gen_range(0.0..100.0)
            }
        })
        .collect();
    RasterGrid::new(rows, cols, 10.0, 0.0, 0.0, NODATA, values)
        .expect("randomly generated grids are valid")
}

/// Random valid parameter pairs for corpus tests (no afforestation-ordering
/// constraint; both states drawn independently).
pub fn random_params(seed: u64, graph: &FlowGraph) -> CellParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let rho = rng.gen_range(0.0..3.0);
        ParamSet {
            alpha: rng.gen_range(0.0..10.0),
            rho,
            sigma: rho + rng.gen_range(0.0..6.0),
            gamma: rng.gen_range(0.0..=1.0),
        }
    };
    let n = graph.cell_count();
    let initial: Vec<ParamSet> = (0..n).map(|_| draw(&mut rng)).collect();
    let afforested: Vec<ParamSet> = (0..n).map(|_| draw(&mut rng)).collect();
    CellParams::new(graph, initial, afforested).expect("randomly drawn parameters are valid")
}

/// Outflow recomputed from its defining regimes, in an expression shape
/// intentionally different from the production kernel (the operand order is
/// commuted, which is exact in floating point).
fn oracle_outflow(sa: f64, p: &ParamSet) -> f64 {
    match () {
        _ if sa > p.sigma => (sa - p.sigma) + p.gamma * (p.sigma - p.rho),
        _ if sa > p.rho => p.gamma * (sa - p.rho),
        _ => 0.0,
    }
}

/// Reference transport simulation over a flat edge-event list.
///
/// Events are gathered from the successor side and sorted by (target
/// position, source position) — the same total order the production sweep
/// walks — then applied one by one. The result must equal
/// [`crate::transport::compute_base_flow`] bit for bit.
pub fn oracle_sa(graph: &FlowGraph, params: &CellParams, afforested: &[bool]) -> Vec<f64> {
    let n = graph.cell_count();
    assert_eq!(afforested.len(), n);
    let mut events: Vec<(u32, u32, f64)> = Vec::with_capacity(graph.edge_count());
    for s in 0..n as u32 {
        for (t, f) in graph.successors_of(s) {
            events.push((t, s, f));
        }
    }
    events.sort_by_key(|&(t, s, _)| (graph.position_of(t), graph.position_of(s)));

    let mut sa: Vec<f64> = (0..n)
        .map(|i| params.get(i as u32, afforested[i]).alpha)
        .collect();
    for &(t, s, f) in &events {
        let p = params.get(s, afforested[s as usize]);
        let d = oracle_outflow(sa[s as usize], p) * f;
        sa[s as usize] -= d;
        sa[t as usize] += d;
    }
    sa
}

/// Yield of a reference simulation: final sediment summed over the outlets
/// in ascending cell order, exactly as the production sweep sums it.
pub fn oracle_sy(sa: &[f64], outlets: &Outlets) -> f64 {
    outlets.ids().iter().map(|&o| sa[o as usize]).sum()
}

/// Reference first greedy step: evaluates every candidate by full
/// re-simulation and returns the complete argmax set (ascending cell order),
/// or an empty set when no candidate achieves a positive reduction.
pub fn oracle_greedy_step(
    graph: &FlowGraph,
    params: &CellParams,
    outlets: &Outlets,
    candidates: &CandidateSet,
) -> Vec<u32> {
    let n = graph.cell_count();
    let base_flags = vec![false; n];
    let sy_base = oracle_sy(&oracle_sa(graph, params, &base_flags), outlets);
    let mut best = f64::NEG_INFINITY;
    let mut argmax: Vec<u32> = Vec::new();
    for &cand in candidates.ids() {
        let mut flags = base_flags.clone();
        flags[cand as usize] = true;
        let syr = sy_base - oracle_sy(&oracle_sa(graph, params, &flags), outlets);
        if syr > best {
            best = syr;
            argmax = vec![cand];
        } else if syr == best {
            argmax.push(cand);
        }
    }
    if best > 0.0 {
        argmax
    } else {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::read_ascii_grid;
    use crate::selection::{select, SelectOptions, StopRule};
    use crate::transport::compute_base_flow;

    #[test]
    fn generation_is_deterministic() {
        let a = SyntheticCase::generate(42, 12, 9, 80.0, 0.4).unwrap();
        let b = SyntheticCase::generate(42, 12, 9, 80.0, 0.4).unwrap();
        assert_eq!(a.dem.values(), b.dem.values());
        assert_eq!(a.alpha1.values(), b.alpha1.values());
        assert_eq!(a.gamma1.values(), b.gamma1.values());
        assert_eq!(a.candidates.values(), b.candidates.values());
    }

    #[test]
    fn different_seeds_differ() {
        let a = SyntheticCase::generate(1, 10, 10, 50.0, 0.5).unwrap();
        let b = SyntheticCase::generate(2, 10, 10, 50.0, 0.5).unwrap();
        assert_ne!(a.dem.values(), b.dem.values());
    }

    #[test]
    fn conditioned_terrain_drains_entirely_to_the_outlet() {
        let case = SyntheticCase::generate(7, 16, 14, 120.0, 0.3).unwrap();
        for single in [true, false] {
            let graph = case.graph(single).unwrap();
            let sinks = graph.sinks();
            assert_eq!(sinks.len(), 1, "single={single}");
            assert_eq!(graph.cell_of(sinks[0]), case.outlet);
        }
        // The outlet is the unique global minimum.
        let zo = case.dem.get(case.outlet.row, case.outlet.col);
        for cell in case.dem.active_cells() {
            if cell != case.outlet {
                assert!(case.dem.get(cell.row, cell.col) > zo);
            }
        }
        // One direction per cell ⇒ a spanning tree into the outlet.
        let graph = case.graph(true).unwrap();
        assert_eq!(graph.edge_count(), graph.cell_count() - 1);
    }

    #[test]
    fn zero_relief_is_flat_and_yield_is_the_outlet_production() {
        let case = SyntheticCase::generate(3, 6, 6, 0.0, 0.5).unwrap();
        assert!(case.dem.values().iter().all(|&z| z == 0.0));
        let graph = case.graph(false).unwrap();
        assert_eq!(graph.edge_count(), 0);
        let params = case.params(&graph).unwrap();
        let outlets = case.outlets(&graph).unwrap();
        let n = graph.cell_count();
        let state = compute_base_flow(&graph, &params, &vec![false; n], &outlets);
        let outlet_id = graph.compact_id(case.outlet).unwrap();
        assert_eq!(state.sy(), params.initial(outlet_id).alpha);
    }

    #[test]
    fn candidate_fraction_bounds_are_exact() {
        let all = SyntheticCase::generate(5, 8, 8, 40.0, 1.0).unwrap();
        let graph = all.graph(true).unwrap();
        assert_eq!(all.candidate_set(&graph).unwrap().len(), 64);
        let none = SyntheticCase::generate(5, 8, 8, 40.0, 0.0).unwrap();
        assert!(none.candidate_set(&graph).unwrap().is_empty());
    }

    #[test]
    fn production_and_flow_factor_ranges_hold() {
        let case = SyntheticCase::generate(11, 10, 10, 60.0, 0.5).unwrap();
        for cell in case.alpha1.active_cells() {
            let a = case.alpha1.get(cell.row, cell.col);
            assert!((1.0..300.0).contains(&a));
        }
        for cell in case.gamma1.active_cells() {
            let g = case.gamma1.get(cell.row, cell.col);
            assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(matches!(
            SyntheticCase::generate(0, 0, 5, 10.0, 0.5),
            Err(Error::InvalidSynthRequest { .. })
        ));
        assert!(matches!(
            SyntheticCase::generate(0, 5, 5, -1.0, 0.5),
            Err(Error::InvalidSynthRequest { .. })
        ));
        assert!(matches!(
            SyntheticCase::generate(0, 5, 5, f64::NAN, 0.5),
            Err(Error::InvalidSynthRequest { .. })
        ));
        assert!(matches!(
            SyntheticCase::generate(0, 5, 5, 10.0, 1.5),
            Err(Error::InvalidSynthRequest { .. })
        ));
    }

    #[test]
    fn fixtures_round_trip_bit_exactly() {
        let case = SyntheticCase::generate(9, 7, 5, 30.0, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        case.write_fixtures(dir.path()).unwrap();
        let dem = read_ascii_grid(dir.path().join("dem.asc")).unwrap();
        assert_eq!(dem.values(), case.dem.values());
        let gamma = read_ascii_grid(dir.path().join("gamma1.asc")).unwrap();
        assert_eq!(gamma.values(), case.gamma1.values());
        let derivation =
            ParamDerivation::from_file(dir.path().join("derivation.txt")).unwrap();
        assert_eq!(derivation, case.derivation);
        assert!(dir.path().join("case.cfg").exists());
    }

    #[test]
    fn oracle_matches_production_sweep_on_synthetic_cases() {
        for seed in 0..20 {
            let case = SyntheticCase::generate(seed, 9, 9, 70.0, 0.5).unwrap();
            for single in [true, false] {
                let graph = case.graph(single).unwrap();
                let params = case.params(&graph).unwrap();
                let outlets = case.outlets(&graph).unwrap();
                let n = graph.cell_count();
                let flags = vec![false; n];
                let state = compute_base_flow(&graph, &params, &flags, &outlets);
                let reference = oracle_sa(&graph, &params, &flags);
                assert_eq!(state.sa(), &reference[..], "seed {seed}, single {single}");
                assert_eq!(state.sy(), oracle_sy(&reference, &outlets));
            }
        }
    }

    #[test]
    fn oracle_matches_production_sweep_on_random_instances() {
        for seed in 100..140 {
            let dem = random_dem(seed, 6, 6, 0.1);
            for single in [true, false] {
                let graph = if single {
                    FlowGraph::d8(&dem).unwrap()
                } else {
                    FlowGraph::fd8(&dem).unwrap()
                };
                let params = random_params(seed ^ 0xfeed, &graph);
                let n = graph.cell_count();
                let mut flags = vec![false; n];
                if n > 0 {
                    flags[(seed % n as u64) as usize] = true;
                }
                let outlets = Outlets::new(
                    &graph,
                    &graph
                        .sinks()
                        .into_iter()
                        .map(|i| graph.cell_of(i))
                        .collect::<Vec<_>>(),
                )
                .unwrap();
                let state = compute_base_flow(&graph, &params, &flags, &outlets);
                assert_eq!(state.sa(), &oracle_sa(&graph, &params, &flags)[..]);
            }
        }
    }

    #[test]
    fn first_greedy_iteration_matches_the_oracle_step() {
        for seed in 0..12 {
            let case = SyntheticCase::generate(seed, 7, 7, 50.0, 0.3).unwrap();
            let graph = case.graph(false).unwrap();
            let params = case.params(&graph).unwrap();
            let outlets = case.outlets(&graph).unwrap();
            let candidates = case.candidate_set(&graph).unwrap();
            let reference = oracle_greedy_step(&graph, &params, &outlets, &candidates);
            let options = SelectOptions {
                stop: StopRule::CellCount(candidates.len().max(1)),
                mode: crate::transport::ReplayMode::Suffix,
                threads: Some(1),
            };
            let result = select(&graph, &params, &outlets, &candidates, &options).unwrap();
            if reference.is_empty() {
                assert!(
                    result.iterations.is_empty(),
                    "seed {seed}: oracle found no positive gain"
                );
            } else {
                let committed: Vec<u32> = result.iterations[0]
                    .committed
                    .iter()
                    .map(|&(cell, _)| graph.compact_id(cell).unwrap())
                    .collect();
                assert_eq!(committed, reference, "seed {seed}");
            }
        }
    }
}
