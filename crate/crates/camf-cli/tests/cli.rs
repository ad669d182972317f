//! End-to-end tests of the `camf` binary: every subcommand, the config
//! file/flag/environment precedence, and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn camf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_camf"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to spawn the camf binary")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Writes a small ASCII grid with the given row-major values.
fn write_grid(path: &Path, rows: usize, cols: usize, cell_size: f64, values: &[f64]) {
    assert_eq!(values.len(), rows * cols);
    let mut text = format!(
        "ncols        {cols}\nnrows        {rows}\nxllcorner    0\nyllcorner    0\ncellsize     {cell_size}\nNODATA_value -9999\n"
    );
    for row in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| values[row * cols + c].to_string()).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// A pass-through derivation: no retention, no saturation, afforestation
/// halves production and flow.
const PASSTHROUGH_DERIVATION: &str = "alpha2_of_alpha1 = 0.5\nrho1_of_alpha1 = 0\nrho2_of_alpha1 = 0\nsigma1_of_alpha1 = 1000000000\nsigma2_of_alpha1 = 1000000000\ngamma2_of_gamma1 = 0.5\n";

/// Like the pass-through derivation, but afforestation suppresses
/// production entirely and leaves the flow factor alone, so each flip's
/// yield reduction equals the flipped cell's production exactly.
const SUPPRESS_DERIVATION: &str = "alpha2_of_alpha1 = 0\nrho1_of_alpha1 = 0\nrho2_of_alpha1 = 0\nsigma1_of_alpha1 = 1000000000\nsigma2_of_alpha1 = 1000000000\ngamma2_of_gamma1 = 1\n";

/// A three-cell west-to-east chain on 1-hectare cells where everything
/// passes through: productions (2, 1, 0) pile up to 3 at the outlet.
fn chain3_fixture(dir: &Path) {
    write_grid(&dir.join("dem.asc"), 1, 3, 100.0, &[2.0, 1.0, 0.0]);
    write_grid(&dir.join("alpha1.asc"), 1, 3, 100.0, &[2.0, 1.0, 0.0]);
    write_grid(&dir.join("gamma1.asc"), 1, 3, 100.0, &[1.0, 1.0, 1.0]);
    write_grid(&dir.join("candidates.asc"), 1, 3, 100.0, &[0.0, 1.0, 1.0]);
    fs::write(dir.join("derivation.txt"), PASSTHROUGH_DERIVATION).unwrap();
    fs::write(
        dir.join("case.cfg"),
        "dem = dem.asc\nalpha1 = alpha1.asc\ngamma1 = gamma1.asc\ncandidates = candidates.asc\nderivation = derivation.txt\noutlet_row = 0\noutlet_col = 2\n",
    )
    .unwrap();
}

/// A four-cell chain with one dominant producer (50) and one minor one (1)
/// among the candidates, plus a zero-production candidate that can never
/// improve the yield. Base yield is exactly 51.
fn chain4_fixture(dir: &Path) {
    write_grid(&dir.join("dem.asc"), 1, 4, 100.0, &[3.0, 2.0, 1.0, 0.0]);
    write_grid(&dir.join("alpha1.asc"), 1, 4, 100.0, &[0.0, 50.0, 1.0, 0.0]);
    write_grid(&dir.join("gamma1.asc"), 1, 4, 100.0, &[1.0; 4]);
    write_grid(&dir.join("candidates.asc"), 1, 4, 100.0, &[1.0, 1.0, 1.0, 0.0]);
    fs::write(dir.join("derivation.txt"), SUPPRESS_DERIVATION).unwrap();
    fs::write(
        dir.join("case.cfg"),
        "dem = dem.asc\nalpha1 = alpha1.asc\ngamma1 = gamma1.asc\ncandidates = candidates.asc\nderivation = derivation.txt\noutlet_row = 0\noutlet_col = 3\n",
    )
    .unwrap();
}

fn parse_report_value(report: &str, key: &str) -> f64 {
    let line = report
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{report}"));
    line.split(':')
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

// ── synth ───────────────────────────────────────────────────────────────────

#[test]
fn synth_is_deterministic_and_writes_the_full_fixture_set() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let out_run = run(camf()
            .args(["synth", "--seed", "11", "--rows", "89", "--cols", "87"])
            .arg("--out-dir")
            .arg(out));
        assert_ok(&out_run);
    }
    for name in [
        "dem.asc",
        "alpha1.asc",
        "gamma1.asc",
        "candidates.asc",
        "derivation.txt",
        "case.cfg",
    ] {
        assert_eq!(read(a.join(name)), read(b.join(name)), "{name} differs between runs");
    }
    let dem = read(a.join("dem.asc"));
    assert!(dem.starts_with("ncols        87\nnrows        89\n"));
}

#[test]
fn synth_rejects_degenerate_dimensions_as_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(camf()
        .args(["synth", "--seed", "1", "--rows", "1", "--cols", "1"])
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("at least 2 rows"));
}

// ── baseflow ────────────────────────────────────────────────────────────────

#[test]
fn baseflow_on_the_chain_fixture_yields_exactly_three() {
    let dir = tempfile::tempdir().unwrap();
    chain3_fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);

    let report = read(out_dir.join("report.txt"));
    assert_eq!(parse_report_value(&report, "sediment yield"), 3.0);
    assert_eq!(parse_report_value(&report, "total production"), 3.0);
    assert!(report.contains("active cells: 3"));
    assert!(report.contains("candidate cells: 2"));
    assert!(report.contains("outlet cells: (0, 2)"));

    // One-hectare cells: the per-hectare SA raster holds the raw residuals.
    let sa = read(out_dir.join("sa.asc"));
    let last = sa.lines().last().unwrap();
    assert_eq!(last.trim(), "0 0 3");
}

#[test]
fn baseflow_optionally_dumps_edges_and_deliveries() {
    let dir = tempfile::tempdir().unwrap();
    chain3_fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--dump-edges", "--dump-deliveries"]));
    assert_ok(&out);

    let edges = read(out_dir.join("edges.csv"));
    assert!(edges.lines().next().unwrap().contains("from_row"));
    assert_eq!(edges.lines().count(), 3, "header + two chain edges");
    let deliveries = read(out_dir.join("deliveries.csv"));
    // Full pass-through: 2 flows a->b, then 3 flows b->c.
    assert!(deliveries.contains("0,0,0,1,2"));
    assert!(deliveries.contains("0,1,0,2,3"));
}

#[test]
fn baseflow_runs_under_both_routing_methods() {
    let dir = tempfile::tempdir().unwrap();
    let fix = dir.path().join("fix");
    assert_ok(&run(camf()
        .args(["synth", "--seed", "3", "--rows", "10", "--cols", "10"])
        .arg("--out-dir")
        .arg(&fix)));
    let mut yields = Vec::new();
    for method in ["sfd", "mfd"] {
        let out_dir = dir.path().join(method);
        let out = run(camf()
            .arg("baseflow")
            .arg("--config")
            .arg(fix.join("case.cfg"))
            .args(["--method", method])
            .arg("--out-dir")
            .arg(&out_dir));
        assert_ok(&out);
        let report = read(out_dir.join("report.txt"));
        assert!(report.contains(&format!("method: {method}")));
        yields.push(parse_report_value(&report, "sediment yield"));
    }
    assert!(yields.iter().all(|&sy| sy > 0.0));
}

// ── optimize ────────────────────────────────────────────────────────────────

#[test]
fn optimize_commits_the_dominant_producer_first() {
    let dir = tempfile::tempdir().unwrap();
    chain4_fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .args(["--select-n", "2"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);

    let trajectory = read(out_dir.join("trajectory.csv"));
    assert_eq!(
        trajectory,
        "iteration,cell_row,cell_col,marginal_SYR,cumulative_SYR,SY\n\
         1,0,1,50,50,1\n\
         2,0,2,1,51,0\n"
    );
    let summary = read(out_dir.join("summary.txt"));
    assert!(summary.contains("cells selected: 2"));
    assert!(summary.contains("%SYR: 100.00"));
    assert!(summary.contains("stopped on zero gain: false"));

    // The selection raster tags each chosen cell with its iteration number.
    let selection = read(out_dir.join("selection.asc"));
    assert_eq!(selection.lines().last().unwrap().trim(), "-9999 1 2 -9999");
}

#[test]
fn optimize_with_reachable_target_stops_at_the_target() {
    let dir = tempfile::tempdir().unwrap();
    chain4_fixture(dir.path());
    let out_dir = dir.path().join("out");
    // 51 is the maximum attainable reduction (afforesting every candidate);
    // the greedy loop reaches it exactly and stops on the target check.
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .args(["--target-syr", "51"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);
    let summary = read(out_dir.join("summary.txt"));
    assert!(summary.contains("cells selected: 2"));
    assert!(summary.contains("%SYR: 100.00"));
}

#[test]
fn optimize_with_unreachable_target_stops_on_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    chain4_fixture(dir.path());
    let out_dir = dir.path().join("out");
    // Beyond the attainable 51: both gainful cells are committed, the
    // zero-production candidate offers nothing, and the loop reports it.
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .args(["--target-syr", "60"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);
    let summary = read(out_dir.join("summary.txt"));
    assert!(summary.contains("cells selected: 2"));
    assert!(summary.contains("stopped on zero gain: true"));
    assert!(summary.contains("SYR: 51.000000"));
}

#[test]
fn optimize_with_zero_cells_writes_an_empty_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    chain4_fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .args(["--select-n", "0"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);
    assert_eq!(
        read(out_dir.join("trajectory.csv")),
        "iteration,cell_row,cell_col,marginal_SYR,cumulative_SYR,SY\n"
    );
    let summary = read(out_dir.join("summary.txt"));
    assert!(summary.contains("cells selected: 0"));
    assert!(summary.contains("%SYR: 0.00"));
}

#[test]
fn optimize_requires_exactly_one_stop_criterion() {
    let dir = tempfile::tempdir().unwrap();
    chain4_fixture(dir.path());
    // None configured at all.
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .arg("--out-dir")
        .arg(dir.path().join("o1")));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("stop criterion"));
    // Both flags at once: rejected by argument parsing.
    let out = run(camf()
        .arg("optimize")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .args(["--select-n", "1", "--target-syr", "2"]));
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn optimize_engines_agree_on_single_direction_flow() {
    let dir = tempfile::tempdir().unwrap();
    let fix = dir.path().join("fix");
    assert_ok(&run(camf()
        .args(["synth", "--seed", "5", "--rows", "12", "--cols", "12"])
        .arg("--out-dir")
        .arg(&fix)));
    let mut trajectories = Vec::new();
    for engine in ["suffix", "path"] {
        let out_dir = dir.path().join(engine);
        let out = run(camf()
            .arg("optimize")
            .arg("--config")
            .arg(fix.join("case.cfg"))
            .args(["--method", "sfd", "--engine", engine, "--select-n", "4"])
            .arg("--out-dir")
            .arg(&out_dir));
        assert_ok(&out);
        trajectories.push(read(out_dir.join("trajectory.csv")));
    }
    assert_eq!(trajectories[0], trajectories[1]);
}

// ── rusle ───────────────────────────────────────────────────────────────────

fn factor_table(dir: &Path) -> PathBuf {
    let path = dir.join("c_table.txt");
    fs::write(&path, "# cover factors\n1 = 0.2\n2 = 0.001\n3 = 0\n").unwrap();
    path
}

#[test]
fn rusle_classifies_landuse_and_multiplies_factors() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(&dir.path().join("landuse.asc"), 2, 2, 30.0, &[1.0, 2.0, 3.0, 1.0]);
    let table = factor_table(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(camf()
        .arg("rusle")
        .arg("--landuse")
        .arg(dir.path().join("landuse.asc"))
        .arg("--c-table")
        .arg(&table)
        .args(["--r", "1599", "--k", "0.0397", "--ls", "1"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert_ok(&out);

    let alpha = read(out_dir.join("alpha1.asc"));
    let first_value: f64 = alpha
        .lines()
        .nth(6)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((first_value - 12.69606).abs() < 1e-9);
    // The zero cover class annihilates the product.
    assert!(alpha.lines().nth(7).unwrap().starts_with("0 "));
}

#[test]
fn rusle_reports_unmapped_class_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(&dir.path().join("landuse.asc"), 1, 2, 30.0, &[1.0, 99.0]);
    let table = factor_table(dir.path());
    let out = run(camf()
        .arg("rusle")
        .arg("--landuse")
        .arg(dir.path().join("landuse.asc"))
        .arg("--c-table")
        .arg(&table)
        .args(["--r", "1", "--k", "1", "--ls", "1"])
        .arg("--out-dir")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("class code 99"));
}

// ── crop ────────────────────────────────────────────────────────────────────

#[test]
fn crop_of_the_full_window_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fix = dir.path().join("fix");
    assert_ok(&run(camf()
        .args(["synth", "--seed", "9", "--rows", "8", "--cols", "8"])
        .arg("--out-dir")
        .arg(&fix)));
    let output = dir.path().join("copy.asc");
    let out = run(camf()
        .arg("crop")
        .arg("--input")
        .arg(fix.join("dem.asc"))
        .args(["--rows", "8", "--cols", "8"])
        .arg("--output")
        .arg(&output));
    assert_ok(&out);
    assert_eq!(read(fix.join("dem.asc")), read(&output));
}

#[test]
fn crop_rejects_windows_past_the_grid_edge() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(&dir.path().join("g.asc"), 2, 2, 30.0, &[1.0; 4]);
    let out = run(camf()
        .arg("crop")
        .arg("--input")
        .arg(dir.path().join("g.asc"))
        .args(["--row0", "1", "--col0", "1", "--rows", "4", "--cols", "4"])
        .arg("--output")
        .arg(dir.path().join("o.asc")));
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("exceeds grid bounds"));
}

// ── bench ───────────────────────────────────────────────────────────────────

#[test]
fn bench_single_size_reports_one_row_with_sound_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(camf()
        .args(["bench", "--sizes", "64x64", "--seed", "2", "--runs", "3"])
        .arg("--out-dir")
        .arg(dir.path()));
    assert_ok(&out);
    let csv = read(dir.path().join("bench.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "header plus exactly one data row:\n{csv}");
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(header.len(), row.len());

    let col = |name: &str| -> f64 {
        let idx = header
            .iter()
            .position(|&h| h == name)
            .unwrap_or_else(|| panic!("missing column {name} in {csv}"));
        row[idx].parse().unwrap()
    };
    // Direction, not magnitude: on a 64x64 instance one replay-based scan
    // never loses to recomputing the base flow per candidate.
    assert!(col("speedup_sfd") >= 1.0, "sfd replay slower than naive:\n{csv}");
    assert!(col("speedup_mfd") >= 1.0, "mfd replay slower than naive:\n{csv}");
    // The multiple-direction sweep touches about eight times as many edges.
    assert!(col("mfd_sfd_baseflow_ratio") > 0.0);
    assert!(col("candidate_cells") >= 1.0);
}

// ── configuration precedence and exit codes ─────────────────────────────────

#[test]
fn output_directory_precedence_is_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    chain3_fixture(dir.path());
    // The config file names out_dir; the environment must beat it.
    let mut cfg = read(dir.path().join("case.cfg"));
    cfg.push_str("out_dir = from_config\n");
    fs::write(dir.path().join("case.cfg"), cfg).unwrap();

    let env_dir = dir.path().join("from_env");
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .env("CAMF_OUTPUT_DIR", &env_dir));
    assert_ok(&out);
    assert!(env_dir.join("report.txt").exists());
    assert!(!dir.path().join("from_config").exists());

    // And a flag must beat the environment.
    let flag_dir = dir.path().join("from_flag");
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .env("CAMF_OUTPUT_DIR", &env_dir)
        .arg("--out-dir")
        .arg(&flag_dir));
    assert_ok(&out);
    assert!(flag_dir.join("report.txt").exists());
}

#[test]
fn exit_codes_distinguish_config_io_and_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    chain3_fixture(dir.path());

    // Config error: unknown key in the config file.
    fs::write(dir.path().join("bad.cfg"), "demm = dem.asc\n").unwrap();
    let out = run(camf().arg("baseflow").arg("--config").arg(dir.path().join("bad.cfg")));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("unknown key"));

    // I/O error: the dem path does not exist.
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .arg("--dem")
        .arg(dir.path().join("missing.asc"))
        .arg("--out-dir")
        .arg(dir.path().join("o")));
    assert_eq!(exit_code(&out), 3);

    // Domain error: derivation factors violating the afforestation ordering.
    fs::write(
        dir.path().join("bad_derivation.txt"),
        "alpha2_of_alpha1 = 0.5\nrho1_of_alpha1 = 0\nrho2_of_alpha1 = 0\nsigma1_of_alpha1 = 1\nsigma2_of_alpha1 = 1\ngamma2_of_gamma1 = 2\n",
    )
    .unwrap();
    let out = run(camf()
        .arg("baseflow")
        .arg("--config")
        .arg(dir.path().join("case.cfg"))
        .arg("--derivation")
        .arg(dir.path().join("bad_derivation.txt"))
        .arg("--out-dir")
        .arg(dir.path().join("o")));
    assert_eq!(exit_code(&out), 4);

    // Argument error from the parser itself.
    let out = run(camf().arg("baseflow").arg("--no-such-flag"));
    assert_eq!(exit_code(&out), 2);
}
