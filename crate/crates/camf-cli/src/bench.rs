//! Timing harness: base flow and one full candidate-scan iteration per
//! problem size, under both routing methods, with the incremental replay
//! engine and with naive per-candidate full recomputation.
//!
//! Sizes come either from seeded synthetic catchments or, when a config
//! file provides a real dataset, from windows cropped out of it (anchored
//! at the north-west corner; cropped windows use automatic outlet
//! detection since the configured outlet may fall outside). Each
//! measurement is repeated and the median kept, so one slow run does not
//! skew the report. Note the naive column costs roughly
//! `candidates x active cells` edge operations per run — budget
//! accordingly for large grids.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use camf::flow::FlowGraph;
use camf::raster::{crop, read_ascii_grid, CellIndex, RasterGrid};
use camf::rusle::{derive_params, ParamDerivation};
use camf::selection::CandidateSet;
use camf::synth::SyntheticCase;
use camf::transport::{compute_base_flow, Outlets, ReplayEngine, ReplayMode};

use crate::commands;
use crate::config::{ConfigError, Method, OutletSpec, RunConfig, OUTPUT_DIR_ENV};
use crate::CliError;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Run configuration providing a real dataset to benchmark
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Problem sizes as ROWSxCOLS, comma separated. Without --config these
    /// are synthetic dimensions; with it, crop windows of the dataset
    #[arg(long, value_delimiter = ',', value_name = "RxC")]
    pub sizes: Vec<String>,

    /// Seed for synthetic benchmark cases
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Relief of synthetic cases, m
    #[arg(long, default_value_t = 40.0)]
    pub relief: f64,

    /// Candidate fraction of synthetic cases
    #[arg(long, default_value_t = 0.3)]
    pub candidate_fraction: f64,

    /// Timed repetitions per measurement; the report keeps the median
    #[arg(long, default_value_t = 3)]
    pub runs: usize,

    /// Output directory for bench.csv [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// One catchment to measure, method-agnostic.
struct BenchInput {
    label: String,
    dem: RasterGrid,
    alpha1: RasterGrid,
    gamma1: RasterGrid,
    candidates: RasterGrid,
    derivation: ParamDerivation,
    outlet: OutletSpec,
}

/// Measured medians for one input; index 0 = SFD, 1 = MFD.
struct BenchRow {
    label: String,
    rows: usize,
    cols: usize,
    cells: usize,
    active: usize,
    candidates: usize,
    baseflow_s: [f64; 2],
    iter_replay_s: [f64; 2],
    iter_naive_s: [f64; 2],
}

fn parse_size(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::Config(ConfigError::new(format!(
            "size `{text}` must be ROWSxCOLS with both at least 2, e.g. 89x87"
        )))
    };
    let (rows, cols) = text.split_once('x').ok_or_else(bad)?;
    let rows = rows.trim().parse::<usize>().map_err(|_| bad())?;
    let cols = cols.trim().parse::<usize>().map_err(|_| bad())?;
    if rows < 2 || cols < 2 {
        return Err(bad());
    }
    Ok((rows, cols))
}

fn synthetic_input(seed: u64, rows: usize, cols: usize, relief: f64, fraction: f64) -> Result<BenchInput, CliError> {
    let case = SyntheticCase::generate(seed, rows, cols, relief, fraction)?;
    Ok(BenchInput {
        label: format!("{rows}x{cols}"),
        outlet: OutletSpec::Cell {
            row: case.outlet.row,
            col: case.outlet.col,
        },
        dem: case.dem,
        alpha1: case.alpha1,
        gamma1: case.gamma1,
        candidates: case.candidates,
        derivation: case.derivation,
    })
}

fn build_inputs(args: &BenchArgs) -> Result<Vec<BenchInput>, CliError> {
    match &args.config {
        None => {
            if args.sizes.is_empty() {
                return Err(CliError::Config(ConfigError::new(
                    "nothing to measure: pass --sizes (and/or --config)",
                )));
            }
            args.sizes
                .iter()
                .map(|size| {
                    let (rows, cols) = parse_size(size)?;
                    synthetic_input(args.seed, rows, cols, args.relief, args.candidate_fraction)
                })
                .collect()
        }
        Some(path) => {
            let cfg = RunConfig::from_file(path)?;
            let dem = read_ascii_grid(cfg.require_dem()?)?;
            let alpha1 = read_ascii_grid(cfg.require_alpha1()?)?;
            let gamma1 = read_ascii_grid(cfg.require_gamma1()?)?;
            let candidates = read_ascii_grid(cfg.require_candidates()?)?;
            let derivation = ParamDerivation::from_file(cfg.require_derivation()?)?;
            if args.sizes.is_empty() {
                return Ok(vec![BenchInput {
                    label: "full".to_string(),
                    dem,
                    alpha1,
                    gamma1,
                    candidates,
                    derivation,
                    outlet: cfg.outlet(),
                }]);
            }
            args.sizes
                .iter()
                .map(|size| {
                    let (rows, cols) = parse_size(size)?;
                    Ok(BenchInput {
                        label: format!("{rows}x{cols}"),
                        dem: crop(&dem, 0, 0, rows, cols)?,
                        alpha1: crop(&alpha1, 0, 0, rows, cols)?,
                        gamma1: crop(&gamma1, 0, 0, rows, cols)?,
                        candidates: crop(&candidates, 0, 0, rows, cols)?,
                        derivation,
                        outlet: OutletSpec::Auto,
                    })
                })
                .collect()
        }
    }
}

/// Runs `f` `runs` times and returns the median wall time in seconds.
fn timed<T>(runs: usize, mut f: impl FnMut() -> Result<T, CliError>) -> Result<f64, CliError> {
    let mut secs = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = f()?;
        secs.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    secs.sort_by(f64::total_cmp);
    let mid = secs.len() / 2;
    Ok(if secs.len() % 2 == 1 {
        secs[mid]
    } else {
        0.5 * (secs[mid - 1] + secs[mid])
    })
}

fn measure(input: &BenchInput, runs: usize) -> Result<BenchRow, CliError> {
    let mut row = BenchRow {
        label: input.label.clone(),
        rows: input.dem.rows(),
        cols: input.dem.cols(),
        cells: input.dem.rows() * input.dem.cols(),
        active: 0,
        candidates: 0,
        baseflow_s: [0.0; 2],
        iter_replay_s: [0.0; 2],
        iter_naive_s: [0.0; 2],
    };
    for (slot, method) in [(0, Method::Sfd), (1, Method::Mfd)] {
        let graph = match method {
            Method::Sfd => FlowGraph::d8(&input.dem)?,
            Method::Mfd => FlowGraph::fd8(&input.dem)?,
        };
        let params = derive_params(&graph, &input.alpha1, &input.gamma1, &input.derivation)?;
        let outlets = match input.outlet {
            OutletSpec::Auto => Outlets::auto(&graph)?,
            OutletSpec::Cell { row, col } => Outlets::new(&graph, &[CellIndex::new(row, col)])?,
        };
        let candidate_set = CandidateSet::from_mask(&graph, &input.candidates)?;
        if candidate_set.is_empty() {
            return Err(CliError::Config(ConfigError::new(format!(
                "case {} has no candidate cells to scan",
                input.label
            ))));
        }
        let cells: Vec<CellIndex> = candidate_set.cells(&graph);
        row.active = graph.cell_count();
        row.candidates = cells.len();

        let initial = vec![false; graph.cell_count()];
        row.baseflow_s[slot] = timed(runs, || {
            Ok(compute_base_flow(&graph, &params, &initial, &outlets))
        })?;
        let base = compute_base_flow(&graph, &params, &initial, &outlets);

        row.iter_replay_s[slot] = timed(runs, || {
            let mut engine = ReplayEngine::new(&graph, &params, &base, &outlets);
            let mut checksum = 0.0;
            for &cell in &cells {
                checksum += engine.replay(ReplayMode::Suffix, cell)?;
            }
            Ok(checksum)
        })?;

        let mut flags = initial.clone();
        row.iter_naive_s[slot] = timed(runs, || {
            let mut checksum = 0.0;
            for &cell in &cells {
                let id = graph.compact_id(cell).expect("candidates are active") as usize;
                flags[id] = true;
                checksum += compute_base_flow(&graph, &params, &flags, &outlets).sy();
                flags[id] = false;
            }
            Ok(checksum)
        })?;
    }
    Ok(row)
}

/// Ratio guarded against a zero denominator (degenerate timings).
fn ratio(num: f64, den: f64) -> f64 {
    num / den.max(1e-12)
}

fn write_report(rows: &[BenchRow], path: &PathBuf) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| {
        CliError::Lib(camf::Error::Io {
            path: path.clone(),
            source: e,
        })
    })?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| {
        CliError::Lib(camf::Error::Io {
            path: path.clone(),
            source: e,
        })
    };
    writeln!(
        w,
        "label,rows,cols,cells,active_cells,candidate_cells,\
         baseflow_sfd_s,baseflow_mfd_s,iter_replay_sfd_s,iter_replay_mfd_s,\
         iter_naive_sfd_s,iter_naive_mfd_s,speedup_sfd,speedup_mfd,\
         mfd_sfd_baseflow_ratio,mfd_sfd_iter_ratio,\
         baseflow_scale_sfd,baseflow_scale_mfd,iter_scale_sfd,iter_scale_mfd"
    )
    .map_err(io)?;
    let first = &rows[0];
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},\
             {:.6},{:.6},{:.6},{:.6},{:.6},{:.6},\
             {:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            row.label,
            row.rows,
            row.cols,
            row.cells,
            row.active,
            row.candidates,
            row.baseflow_s[0],
            row.baseflow_s[1],
            row.iter_replay_s[0],
            row.iter_replay_s[1],
            row.iter_naive_s[0],
            row.iter_naive_s[1],
            ratio(row.iter_naive_s[0], row.iter_replay_s[0]),
            ratio(row.iter_naive_s[1], row.iter_replay_s[1]),
            ratio(row.baseflow_s[1], row.baseflow_s[0]),
            ratio(row.iter_replay_s[1], row.iter_replay_s[0]),
            ratio(row.baseflow_s[0], first.baseflow_s[0]),
            ratio(row.baseflow_s[1], first.baseflow_s[1]),
            ratio(row.iter_replay_s[0], first.iter_replay_s[0]),
            ratio(row.iter_replay_s[1], first.iter_replay_s[1]),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    if args.runs == 0 {
        return Err(CliError::Config(ConfigError::new(
            "--runs must be at least 1",
        )));
    }
    if !args.relief.is_finite() || args.relief < 0.0 {
        return Err(CliError::Config(ConfigError::new(format!(
            "relief must be finite and >= 0, got {}",
            args.relief
        ))));
    }
    if !(0.0..=1.0).contains(&args.candidate_fraction) {
        return Err(CliError::Config(ConfigError::new(format!(
            "candidate fraction must lie in [0, 1], got {}",
            args.candidate_fraction
        ))));
    }
    let inputs = build_inputs(&args)?;
    let mut rows = Vec::with_capacity(inputs.len());
    for input in &inputs {
        rows.push(measure(input, args.runs)?);
    }

    let out_dir = match (args.out_dir, std::env::var_os(OUTPUT_DIR_ENV)) {
        (Some(dir), _) => dir,
        (None, Some(dir)) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from("."),
    };
    commands::ensure_dir(&out_dir)?;
    let csv_path = out_dir.join("bench.csv");
    write_report(&rows, &csv_path)?;

    for row in &rows {
        println!(
            "{}: {} active cells, {} candidates; base flow {:.6}s sfd / {:.6}s mfd; \
             one iteration {:.6}s sfd / {:.6}s mfd (replay), {:.6}s / {:.6}s (naive)",
            row.label,
            row.active,
            row.candidates,
            row.baseflow_s[0],
            row.baseflow_s[1],
            row.iter_replay_s[0],
            row.iter_replay_s[1],
            row.iter_naive_s[0],
            row.iter_naive_s[1],
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}
