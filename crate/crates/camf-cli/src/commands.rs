//! The five file-to-file subcommands. The benchmark harness lives in
//! [`crate::bench`].

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use camf::flow::FlowGraph;
use camf::raster::{crop, read_ascii_grid, write_ascii_grid, CellIndex, RasterGrid};
use camf::rusle::{derive_params, simple_ls, Factor, FactorTable, ParamDerivation};
use camf::selection::{select, CandidateSet, SelectOptions, StopRule};
use camf::synth::SyntheticCase;
use camf::transport::{compute_base_flow, CellParams, Outlets, TransportState};

use crate::config::{ConfigError, Engine, FactorSpec, Method, OutletSpec, RunConfig, OUTPUT_DIR_ENV};
use crate::CliError;

/// Wraps a raw [`std::io::Error`] on `path` in the crate error type.
fn io_err(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Lib(camf::Error::Io {
        path: path.into(),
        source,
    })
}

/// Creates `dir` (and parents) if needed.
pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

// ── shared input flags and pipeline loading ─────────────────────────────────

/// Input selection shared by `baseflow`, `optimize` and (partially) `rusle`.
/// Every flag overrides the matching config-file key.
#[derive(Args, Debug)]
pub struct InputArgs {
    /// Run configuration file (`key = value` lines; `#` comments)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Digital elevation model (ESRI ASCII grid)
    #[arg(long, value_name = "GRID")]
    pub dem: Option<PathBuf>,

    /// Local sediment production raster, ton/ha/yr
    #[arg(long, value_name = "GRID")]
    pub alpha1: Option<PathBuf>,

    /// Initial flow factor raster, values in [0, 1]
    #[arg(long, value_name = "GRID")]
    pub gamma1: Option<PathBuf>,

    /// Candidate mask raster (cells > 0 are candidates)
    #[arg(long, value_name = "GRID")]
    pub candidates: Option<PathBuf>,

    /// Afforestation response factors (`key = value` file)
    #[arg(long, value_name = "FILE")]
    pub derivation: Option<PathBuf>,

    /// Flow routing method [default: sfd]
    #[arg(long, value_enum, value_name = "METHOD")]
    pub method: Option<Method>,

    /// Outlet cell as `ROW,COL`, or `auto` for the sink draining the most
    /// cells [default: auto]
    #[arg(long, value_name = "ROW,COL|auto")]
    pub outlet: Option<OutletSpec>,

    /// Output directory; CAMF_OUTPUT_DIR overrides the config file
    /// [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

impl InputArgs {
    /// Merges config file, environment and flags (flags win).
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_env();
        cfg.overlay(RunConfig {
            method: self.method,
            dem: self.dem,
            alpha1: self.alpha1,
            gamma1: self.gamma1,
            candidates: self.candidates,
            derivation: self.derivation,
            outlet: self.outlet,
            out_dir: self.out_dir,
            ..RunConfig::default()
        });
        Ok(cfg)
    }
}

/// Everything the transport pipeline needs, loaded and validated.
pub struct LoadedCase {
    pub dem: RasterGrid,
    pub graph: FlowGraph,
    pub params: CellParams,
    pub outlets: Outlets,
    /// Present whenever a candidates raster is configured.
    pub candidates: Option<CandidateSet>,
}

/// Reads the rasters named by `cfg`, builds the flow graph for its method,
/// derives per-cell transport parameters and resolves the outlet.
pub fn load_case(cfg: &RunConfig, need_candidates: bool) -> Result<LoadedCase, CliError> {
    let dem = read_ascii_grid(cfg.require_dem()?)?;
    let graph = match cfg.method() {
        Method::Sfd => FlowGraph::d8(&dem)?,
        Method::Mfd => FlowGraph::fd8(&dem)?,
    };
    let alpha1 = read_ascii_grid(cfg.require_alpha1()?)?;
    let gamma1 = read_ascii_grid(cfg.require_gamma1()?)?;
    let derivation = ParamDerivation::from_file(cfg.require_derivation()?)?;
    let params = derive_params(&graph, &alpha1, &gamma1, &derivation)?;
    let outlets = match cfg.outlet() {
        OutletSpec::Auto => Outlets::auto(&graph)?,
        OutletSpec::Cell { row, col } => Outlets::new(&graph, &[CellIndex::new(row, col)])?,
    };
    let candidates = match (&cfg.candidates, need_candidates) {
        (Some(path), _) => Some(CandidateSet::from_mask(&graph, &read_ascii_grid(path)?)?),
        (None, true) => return Err(CliError::Config(ConfigError::new(
            "missing input: candidates (set `candidates` in the config file or pass --candidates)",
        ))),
        (None, false) => None,
    };
    Ok(LoadedCase {
        dem,
        graph,
        params,
        outlets,
        candidates,
    })
}

fn outlet_list(outlets: &Outlets, graph: &FlowGraph) -> String {
    outlets
        .ids()
        .iter()
        .map(|&id| {
            let cell = graph.cell_of(id);
            format!("({}, {})", cell.row, cell.col)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

// ── baseflow ────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct BaseflowArgs {
    #[command(flatten)]
    pub inputs: InputArgs,

    /// Also write the flow-graph edge list as edges.csv
    #[arg(long)]
    pub dump_edges: bool,

    /// Also write per-edge sediment deliveries as deliveries.csv
    #[arg(long)]
    pub dump_deliveries: bool,
}

/// Runs the accumulation sweep with every cell in its initial state and
/// writes `sa.asc` (per-hectare units) plus `report.txt`.
pub fn cmd_baseflow(args: BaseflowArgs) -> Result<(), CliError> {
    let dump_edges = args.dump_edges;
    let dump_deliveries = args.dump_deliveries;
    let cfg = args.inputs.into_config()?;
    let case = load_case(&cfg, false)?;
    let initial = vec![false; case.graph.cell_count()];
    let state = compute_base_flow(&case.graph, &case.params, &initial, &case.outlets);

    let out_dir = cfg.out_dir();
    ensure_dir(&out_dir)?;
    write_ascii_grid(&state.to_sa_raster(&case.graph, &case.dem)?, out_dir.join("sa.asc"))?;
    write_text(
        &out_dir.join("report.txt"),
        &baseflow_report(&cfg, &case, &state),
    )?;
    if dump_edges {
        let path = out_dir.join("edges.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
        case.graph.write_edge_csv(&mut w).map_err(|e| io_err(&path, e))?;
    }
    if dump_deliveries {
        let path = out_dir.join("deliveries.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
        state
            .write_delivery_csv(&case.graph, &mut w)
            .map_err(|e| io_err(&path, e))?;
    }
    println!(
        "wrote {}/sa.asc and report.txt (SY = {:.6} ton/yr)",
        out_dir.display(),
        state.sy()
    );
    Ok(())
}

fn baseflow_report(cfg: &RunConfig, case: &LoadedCase, state: &TransportState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "base flow report");
    let _ = writeln!(out, "method: {}", cfg.method());
    let _ = writeln!(
        out,
        "grid: {} x {} cells, cell size {} m",
        case.graph.rows(),
        case.graph.cols(),
        case.graph.cell_size()
    );
    let _ = writeln!(out, "active cells: {}", case.graph.cell_count());
    if let Some(candidates) = &case.candidates {
        let _ = writeln!(out, "candidate cells: {}", candidates.len());
    }
    let _ = writeln!(out, "outlet cells: {}", outlet_list(&case.outlets, &case.graph));
    let _ = writeln!(
        out,
        "total production: {:.6} ton/yr",
        case.params.total_alpha(state.afforested())
    );
    let _ = writeln!(out, "sediment yield: {:.6} ton/yr", state.sy());
    out
}

// ── optimize ────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub inputs: InputArgs,

    /// Stop after selecting this many cells (exactly one stop criterion)
    #[arg(long, value_name = "N", conflicts_with = "target_syr")]
    pub select_n: Option<usize>,

    /// Stop once the cumulative yield reduction reaches this many ton/yr
    #[arg(long, value_name = "TON_PER_YR")]
    pub target_syr: Option<f64>,

    /// Replay engine; `path` requires single-direction flow [default: suffix]
    #[arg(long, value_enum, value_name = "ENGINE")]
    pub engine: Option<Engine>,

    /// Worker threads for candidate evaluation (0 = default pool);
    /// results never depend on this
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

/// Runs the greedy selection loop and writes `trajectory.csv`,
/// `selection.asc` and `summary.txt`.
pub fn cmd_optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let mut cfg = args.inputs.into_config()?;
    cfg.overlay(RunConfig {
        select_n: args.select_n,
        target_syr: args.target_syr,
        engine: args.engine,
        threads: args.threads,
        ..RunConfig::default()
    });
    let stop = cfg.stop_rule()?;
    let case = load_case(&cfg, true)?;
    let candidates = case.candidates.as_ref().expect("loaded with candidates");
    let options = SelectOptions {
        stop,
        mode: cfg.engine().mode(),
        threads: cfg.threads,
    };
    let result = select(&case.graph, &case.params, &case.outlets, candidates, &options)?;

    let out_dir = cfg.out_dir();
    ensure_dir(&out_dir)?;
    let path = out_dir.join("trajectory.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    result.write_trajectory_csv(&mut w).map_err(|e| io_err(&path, e))?;
    w.flush().map_err(|e| io_err(&path, e))?;
    write_ascii_grid(
        &result.to_raster(&case.graph, &case.dem)?,
        out_dir.join("selection.asc"),
    )?;

    let mut summary = String::new();
    let _ = writeln!(summary, "site selection summary");
    let _ = writeln!(summary, "method: {}", cfg.method());
    let _ = writeln!(summary, "engine: {}", cfg.engine());
    let _ = writeln!(
        summary,
        "stop rule: {}",
        match stop {
            StopRule::CellCount(n) => format!("select {n} cell(s)"),
            StopRule::TargetReduction(t) => format!("reach a reduction of {t} ton/yr"),
        }
    );
    let _ = writeln!(summary, "candidate cells: {}", candidates.len());
    let _ = writeln!(summary, "iterations: {}", result.iterations.len());
    let _ = writeln!(summary, "cells selected: {}", result.selected.len());
    let _ = writeln!(summary, "stopped on zero gain: {}", result.stopped_zero_gain);
    let _ = writeln!(summary, "SY base: {:.6} ton/yr", result.sy_base);
    let _ = writeln!(summary, "SY final: {:.6} ton/yr", result.final_sy);
    let _ = writeln!(summary, "SYR: {:.6} ton/yr", result.total_syr());
    let _ = writeln!(summary, "%SYR: {:.2}", result.percent_syr());
    write_text(&out_dir.join("summary.txt"), &summary)?;

    println!(
        "selected {} cell(s) in {} iteration(s): SYR {:.6} ton/yr ({:.2}% of base SY)",
        result.selected.len(),
        result.iterations.len(),
        result.total_syr(),
        result.percent_syr()
    );
    Ok(())
}

// ── rusle ───────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct RusleArgs {
    /// Run configuration file; factor keys r/k/ls/c/p and the class inputs
    /// below may come from it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Rainfall erosivity R: a number or a raster path
    #[arg(long, value_name = "VAL|GRID")]
    pub r: Option<String>,

    /// Soil erodibility K: a number or a raster path
    /// (ignored when --soil/--k-table are given)
    #[arg(long, value_name = "VAL|GRID")]
    pub k: Option<String>,

    /// Slope-length factor LS: a number or a raster path
    /// (ignored when --ls-from-dem is given)
    #[arg(long, value_name = "VAL|GRID")]
    pub ls: Option<String>,

    /// Cover factor C: a number or a raster path
    /// (ignored when --landuse/--c-table are given)
    #[arg(long, value_name = "VAL|GRID")]
    pub c: Option<String>,

    /// Support practice factor P: a number or a raster path [default: 1]
    #[arg(long, value_name = "VAL|GRID")]
    pub p: Option<String>,

    /// Land-use class raster, classified through --c-table into C factors
    #[arg(long, value_name = "GRID", requires = "c_table")]
    pub landuse: Option<PathBuf>,

    /// Factor table (`code = value`) for land-use classes
    #[arg(long, value_name = "FILE", requires = "landuse")]
    pub c_table: Option<PathBuf>,

    /// Soil class raster, classified through --k-table into K factors
    #[arg(long, value_name = "GRID", requires = "k_table")]
    pub soil: Option<PathBuf>,

    /// Factor table (`code = value`) for soil classes
    #[arg(long, value_name = "FILE", requires = "soil")]
    pub k_table: Option<PathBuf>,

    /// Compute LS from this DEM (D8 specific area and slope)
    #[arg(long, value_name = "GRID")]
    pub ls_from_dem: Option<PathBuf>,

    /// Output directory [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Resolves one factor: an explicit grid source wins over the value-or-path
/// string; a missing factor without a default is a config error.
fn resolve_factor(
    label: &str,
    spec: Option<&FactorSpec>,
    grid: Option<RasterGrid>,
    default: Option<f64>,
) -> Result<Factor, CliError> {
    if let Some(grid) = grid {
        return Ok(Factor::Grid(grid));
    }
    match spec {
        Some(FactorSpec::Constant(v)) => Ok(Factor::Constant(*v)),
        Some(FactorSpec::Raster(path)) => Ok(Factor::Grid(read_ascii_grid(path)?)),
        None => match default {
            Some(v) => Ok(Factor::Constant(v)),
            None => Err(CliError::Config(ConfigError::new(format!(
                "missing RUSLE factor {label}: pass --{} with a number or a raster path",
                label.to_lowercase()
            )))),
        },
    }
}

/// Multiplies the five RUSLE factors into `alpha1.asc` (ton/ha/yr).
pub fn cmd_rusle(args: RusleArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    let spec_of = |s: &Option<String>| {
        s.as_ref().map(|v| match v.parse::<f64>() {
            Ok(n) if n.is_finite() => FactorSpec::Constant(n),
            _ => FactorSpec::Raster(PathBuf::from(v)),
        })
    };
    cfg.overlay(RunConfig {
        r: spec_of(&args.r),
        k: spec_of(&args.k),
        ls: spec_of(&args.ls),
        c: spec_of(&args.c),
        p: spec_of(&args.p),
        landuse: args.landuse,
        c_table: args.c_table,
        soil: args.soil,
        k_table: args.k_table,
        out_dir: args.out_dir,
        ..RunConfig::default()
    });

    let classified = |classes: &Option<PathBuf>, table: &Option<PathBuf>| -> Result<Option<RasterGrid>, CliError> {
        match (classes, table) {
            (Some(classes), Some(table)) => {
                let table = FactorTable::from_file(table)?;
                Ok(Some(table.classify(&read_ascii_grid(classes)?)?))
            }
            (None, None) => Ok(None),
            _ => Err(CliError::Config(ConfigError::new(
                "class raster and factor table must be configured together",
            ))),
        }
    };
    let c_grid = classified(&cfg.landuse, &cfg.c_table)?;
    let k_grid = classified(&cfg.soil, &cfg.k_table)?;
    let ls_grid = match &args.ls_from_dem {
        Some(dem) => Some(simple_ls(&read_ascii_grid(dem)?)?),
        None => None,
    };

    let r = resolve_factor("R", cfg.r.as_ref(), None, None)?;
    let k = resolve_factor("K", cfg.k.as_ref(), k_grid, None)?;
    let ls = resolve_factor("LS", cfg.ls.as_ref(), ls_grid, None)?;
    let c = resolve_factor("C", cfg.c.as_ref(), c_grid, None)?;
    let p = resolve_factor("P", cfg.p.as_ref(), None, Some(1.0))?;

    let alpha1 = camf::rusle::rusle_alpha(&r, &k, &ls, &c, &p)?;
    let out_dir = cfg.out_dir();
    ensure_dir(&out_dir)?;
    write_ascii_grid(&alpha1, out_dir.join("alpha1.asc"))?;

    let active = alpha1.active_count();
    let mean = if active == 0 {
        0.0
    } else {
        alpha1
            .active_cells()
            .map(|cell| alpha1.get(cell.row, cell.col))
            .sum::<f64>()
            / active as f64
    };
    println!(
        "wrote {}/alpha1.asc ({active} active cells, mean {mean:.6} ton/ha/yr)",
        out_dir.display()
    );
    Ok(())
}

// ── synth ───────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Random seed; the same seed always yields the same case
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Grid rows (at least 2)
    #[arg(long)]
    pub rows: usize,

    /// Grid columns (at least 2)
    #[arg(long)]
    pub cols: usize,

    /// Total elevation range in m; 0 produces a flat, all-sink grid
    #[arg(long, default_value_t = 40.0)]
    pub relief: f64,

    /// Probability that a cell is an afforestation candidate
    #[arg(long, default_value_t = 0.3)]
    pub candidate_fraction: f64,

    /// Output directory [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Generates a seeded synthetic catchment and writes its fixture files
/// (`dem.asc`, `alpha1.asc`, `gamma1.asc`, `candidates.asc`,
/// `derivation.txt`, `case.cfg`).
pub fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    if args.rows < 2 || args.cols < 2 {
        return Err(CliError::Config(ConfigError::new(format!(
            "synthetic grids need at least 2 rows and 2 columns, got {}x{}",
            args.rows, args.cols
        ))));
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
    let case = SyntheticCase::generate(
        args.seed,
        args.rows,
        args.cols,
        args.relief,
        args.candidate_fraction,
    )?;
    let out_dir = match (args.out_dir, std::env::var_os(OUTPUT_DIR_ENV)) {
        (Some(dir), _) => dir,
        (None, Some(dir)) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from("."),
    };
    case.write_fixtures(&out_dir)?;
    println!(
        "wrote synthetic case seed {} ({} x {}) to {}; outlet ({}, {})",
        args.seed,
        args.rows,
        args.cols,
        out_dir.display(),
        case.outlet.row,
        case.outlet.col
    );
    Ok(())
}

// ── crop ────────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct CropArgs {
    /// Input raster (ESRI ASCII grid)
    #[arg(long, value_name = "GRID")]
    pub input: PathBuf,

    /// First row of the window (0-based, from the top)
    #[arg(long, default_value_t = 0)]
    pub row0: usize,

    /// First column of the window (0-based)
    #[arg(long, default_value_t = 0)]
    pub col0: usize,

    /// Window height in cells
    #[arg(long)]
    pub rows: usize,

    /// Window width in cells
    #[arg(long)]
    pub cols: usize,

    /// Output raster path
    #[arg(long, value_name = "GRID")]
    pub output: PathBuf,
}

/// Cuts a window out of a raster, keeping map coordinates intact.
pub fn cmd_crop(args: CropArgs) -> Result<(), CliError> {
    let grid = read_ascii_grid(&args.input)?;
    let window = crop(&grid, args.row0, args.col0, args.rows, args.cols)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_ascii_grid(&window, &args.output)?;
    println!(
        "wrote {}: {} x {} cells ({} total, {} active)",
        args.output.display(),
        window.rows(),
        window.cols(),
        window.rows() * window.cols(),
        window.active_count()
    );
    Ok(())
}
