//! Run configuration: a plain-text `key = value` file plus flag overrides.
//!
//! Precedence, highest first: command-line flags, the `CAMF_OUTPUT_DIR`
//! environment variable (output directory only), the config file, built-in
//! defaults. Paths inside a config file are resolved relative to the file's
//! own directory, so a fixture directory stays relocatable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use camf::selection::StopRule;
use camf::transport::ReplayMode;

/// Environment variable overriding the output directory (and nothing else).
pub const OUTPUT_DIR_ENV: &str = "CAMF_OUTPUT_DIR";

/// Flow routing method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Single flow direction: all outflow goes to the steepest neighbor.
    Sfd,
    /// Multiple flow directions: outflow splits over all lower neighbors.
    Mfd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sfd => "sfd",
            Method::Mfd => "mfd",
        })
    }
}

/// Incremental engine used to evaluate tentative afforestations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Engine {
    /// Replay the sweep over the sorted suffix; works for any method.
    Suffix,
    /// Replay only the downstream path; requires single-direction flow.
    Path,
}

impl Engine {
    pub fn mode(self) -> ReplayMode {
        match self {
            Engine::Suffix => ReplayMode::Suffix,
            Engine::Path => ReplayMode::SinglePath,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Suffix => "suffix",
            Engine::Path => "path",
        })
    }
}

/// Outlet designation: a fixed cell or automatic detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutletSpec {
    /// Use the sink with the largest contributing cell count.
    Auto,
    /// Use this cell; it must be a sink.
    Cell { row: usize, col: usize },
}

impl FromStr for OutletSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(OutletSpec::Auto);
        }
        let (row, col) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `ROW,COL` or `auto`, got `{s}`"))?;
        let parse = |part: &str, what| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("outlet {what} `{}` is not a cell index", part.trim()))
        };
        Ok(OutletSpec::Cell {
            row: parse(row, "row")?,
            col: parse(col, "col")?,
        })
    }
}

impl fmt::Display for OutletSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutletSpec::Auto => f.write_str("auto"),
            OutletSpec::Cell { row, col } => write!(f, "({row}, {col})"),
        }
    }
}

/// A problem with the run configuration itself (file or merged flags).
/// Reported before any pipeline work starts; exits with code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A RUSLE factor as configured: either a number or a raster path.
///
/// The distinction is syntactic — anything that parses as a finite number is
/// a constant, everything else is a path.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorSpec {
    Constant(f64),
    Raster(PathBuf),
}

impl FactorSpec {
    /// Interprets `value`, resolving a path form against `base`.
    fn parse(value: &str, base: Option<&Path>) -> FactorSpec {
        match value.parse::<f64>() {
            Ok(number) if number.is_finite() => FactorSpec::Constant(number),
            _ => FactorSpec::Raster(resolve(base, value)),
        }
    }
}

/// Assembled run configuration. Every field is optional here; each command
/// demands the inputs it actually needs via the `require_*` accessors.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub method: Option<Method>,
    pub dem: Option<PathBuf>,
    pub alpha1: Option<PathBuf>,
    pub gamma1: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub derivation: Option<PathBuf>,
    pub outlet: Option<OutletSpec>,
    pub select_n: Option<usize>,
    pub target_syr: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub engine: Option<Engine>,
    pub threads: Option<usize>,
    /// RUSLE factor inputs, used by the `rusle` subcommand.
    pub r: Option<FactorSpec>,
    pub k: Option<FactorSpec>,
    pub ls: Option<FactorSpec>,
    pub c: Option<FactorSpec>,
    pub p: Option<FactorSpec>,
    pub landuse: Option<PathBuf>,
    pub c_table: Option<PathBuf>,
    pub soil: Option<PathBuf>,
    pub k_table: Option<PathBuf>,
}

/// Joins `value` onto the directory `base` unless it is already absolute.
fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let path = PathBuf::from(value);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

impl RunConfig {
    /// Reads a `key = value` config file. `#` starts a comment, blank lines
    /// are skipped, keys may appear at most once, unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ConfigError::new(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let base = path.parent().map(Path::to_path_buf);
        let base = base.as_deref();
        let fail = |line: usize, reason: String| {
            ConfigError::new(format!("{}: line {line}: {reason}", path.display()))
        };

        let mut cfg = RunConfig::default();
        let mut outlet_row: Option<usize> = None;
        let mut outlet_col: Option<usize> = None;
        let mut seen: Vec<String> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(fail(line_no, format!("key `{key}` has an empty value")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(fail(line_no, format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());

            let parse_usize = |what: &str| {
                value
                    .parse::<usize>()
                    .map_err(|_| fail(line_no, format!("{what} `{value}` is not a whole number")))
            };
            match key {
                "method" => {
                    cfg.method = Some(match value {
                        "sfd" => Method::Sfd,
                        "mfd" => Method::Mfd,
                        other => {
                            return Err(fail(line_no, format!("method must be sfd or mfd, got `{other}`")))
                        }
                    })
                }
                "dem" => cfg.dem = Some(resolve(base, value)),
                "alpha1" => cfg.alpha1 = Some(resolve(base, value)),
                "gamma1" => cfg.gamma1 = Some(resolve(base, value)),
                "candidates" => cfg.candidates = Some(resolve(base, value)),
                "derivation" => cfg.derivation = Some(resolve(base, value)),
                "outlet" => {
                    if !value.eq_ignore_ascii_case("auto") {
                        return Err(fail(
                            line_no,
                            format!("outlet accepts only `auto` here; use outlet_row/outlet_col for a cell, got `{value}`"),
                        ));
                    }
                    cfg.outlet = Some(OutletSpec::Auto);
                }
                "outlet_row" => outlet_row = Some(parse_usize("outlet_row")?),
                "outlet_col" => outlet_col = Some(parse_usize("outlet_col")?),
                "select_n" => cfg.select_n = Some(parse_usize("select_n")?),
                "target_syr" => {
                    let target = value.parse::<f64>().map_err(|_| {
                        fail(line_no, format!("target_syr `{value}` is not a number"))
                    })?;
                    cfg.target_syr = Some(target);
                }
                "out_dir" => cfg.out_dir = Some(resolve(base, value)),
                "engine" => {
                    cfg.engine = Some(match value {
                        "suffix" => Engine::Suffix,
                        "path" => Engine::Path,
                        other => {
                            return Err(fail(
                                line_no,
                                format!("engine must be suffix or path, got `{other}`"),
                            ))
                        }
                    })
                }
                "threads" => cfg.threads = Some(parse_usize("threads")?),
                "r" => cfg.r = Some(FactorSpec::parse(value, base)),
                "k" => cfg.k = Some(FactorSpec::parse(value, base)),
                "ls" => cfg.ls = Some(FactorSpec::parse(value, base)),
                "c" => cfg.c = Some(FactorSpec::parse(value, base)),
                "p" => cfg.p = Some(FactorSpec::parse(value, base)),
                "landuse" => cfg.landuse = Some(resolve(base, value)),
                "c_table" => cfg.c_table = Some(resolve(base, value)),
                "soil" => cfg.soil = Some(resolve(base, value)),
                "k_table" => cfg.k_table = Some(resolve(base, value)),
                other => return Err(fail(line_no, format!("unknown key `{other}`"))),
            }
        }

        match (outlet_row, outlet_col) {
            (Some(row), Some(col)) => {
                if cfg.outlet.is_some() {
                    return Err(ConfigError::new(format!(
                        "{}: outlet = auto conflicts with outlet_row/outlet_col",
                        path.display()
                    )));
                }
                cfg.outlet = Some(OutletSpec::Cell { row, col });
            }
            (None, None) => {}
            _ => {
                return Err(ConfigError::new(format!(
                    "{}: outlet_row and outlet_col must be given together",
                    path.display()
                )))
            }
        }
        Ok(cfg)
    }

    /// Applies the output-directory environment override (weaker than flags,
    /// stronger than the config file).
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.out_dir = Some(PathBuf::from(dir));
            }
        }
    }

    /// Overlays `flags` onto `self`: any field set there wins. A stop
    /// criterion given via flags replaces the file's criterion entirely, so
    /// a flag can switch the criterion kind without a conflict.
    pub fn overlay(&mut self, flags: RunConfig) {
        if flags.select_n.is_some() || flags.target_syr.is_some() {
            self.select_n = None;
            self.target_syr = None;
        }
        macro_rules! take {
            ($($field:ident),+) => {
                $(if flags.$field.is_some() { self.$field = flags.$field; })+
            };
        }
        take!(
            method, dem, alpha1, gamma1, candidates, derivation, outlet, select_n, target_syr,
            out_dir, engine, threads, r, k, ls, c, p, landuse, c_table, soil, k_table
        );
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Sfd)
    }

    pub fn engine(&self) -> Engine {
        self.engine.unwrap_or(Engine::Suffix)
    }

    pub fn outlet(&self) -> OutletSpec {
        self.outlet.unwrap_or(OutletSpec::Auto)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, ConfigError> {
        path.as_deref().ok_or_else(|| {
            ConfigError::new(format!(
                "missing input: {key} (set `{key}` in the config file or pass --{flag})",
                flag = key.replace('_', "-")
            ))
        })
    }

    pub fn require_dem(&self) -> Result<&Path, ConfigError> {
        Self::require(&self.dem, "dem")
    }

    pub fn require_alpha1(&self) -> Result<&Path, ConfigError> {
        Self::require(&self.alpha1, "alpha1")
    }

    pub fn require_gamma1(&self) -> Result<&Path, ConfigError> {
        Self::require(&self.gamma1, "gamma1")
    }

    pub fn require_candidates(&self) -> Result<&Path, ConfigError> {
        Self::require(&self.candidates, "candidates")
    }

    pub fn require_derivation(&self) -> Result<&Path, ConfigError> {
        Self::require(&self.derivation, "derivation")
    }

    /// Exactly one stop criterion must be configured.
    pub fn stop_rule(&self) -> Result<StopRule, ConfigError> {
        match (self.select_n, self.target_syr) {
            (Some(n), None) => Ok(StopRule::CellCount(n)),
            (None, Some(target)) => Ok(StopRule::TargetReduction(target)),
            (None, None) => Err(ConfigError::new(
                "no stop criterion: set exactly one of select_n (--select-n) or target_syr (--target-syr)",
            )),
            (Some(_), Some(_)) => Err(ConfigError::new(
                "conflicting stop criteria: set exactly one of select_n and target_syr",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, text).unwrap();
        RunConfig::from_file(&path)
    }

    #[test]
    fn parses_the_full_key_set_with_comments() {
        let cfg = parse(
            "# a run\nmethod = mfd\ndem = dem.asc  # relative\nalpha1 = a.asc\n\
             gamma1 = g.asc\ncandidates = c.asc\nderivation = d.txt\n\
             outlet_row = 3\noutlet_col = 0\nselect_n = 5\nengine = path\nthreads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.method(), Method::Mfd);
        assert_eq!(cfg.outlet(), OutletSpec::Cell { row: 3, col: 0 });
        assert!(matches!(cfg.stop_rule().unwrap(), StopRule::CellCount(5)));
        assert_eq!(cfg.engine(), Engine::Path);
        assert_eq!(cfg.threads, Some(2));
        // Relative paths are anchored at the config file's directory.
        let dem = cfg.dem.unwrap();
        assert!(dem.ends_with("dem.asc"));
        assert!(dem.is_absolute());
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_keys() {
        assert!(parse("bogus = 1\n").unwrap_err().message.contains("unknown key"));
        assert!(parse("dem = a\ndem = b\n")
            .unwrap_err()
            .message
            .contains("duplicate"));
        assert!(parse("just words\n")
            .unwrap_err()
            .message
            .contains("key = value"));
        assert!(parse("dem =\n").unwrap_err().message.contains("empty value"));
    }

    #[test]
    fn outlet_cell_needs_both_coordinates() {
        let err = parse("outlet_row = 2\n").unwrap_err();
        assert!(err.message.contains("together"));
        let err = parse("outlet = auto\noutlet_row = 2\noutlet_col = 0\n").unwrap_err();
        assert!(err.message.contains("conflicts"));
    }

    #[test]
    fn stop_rule_demands_exactly_one_criterion() {
        assert!(parse("").unwrap().stop_rule().is_err());
        let both = parse("select_n = 2\ntarget_syr = 1.5\n").unwrap();
        assert!(both.stop_rule().unwrap_err().message.contains("exactly one"));
    }

    #[test]
    fn flag_overlay_replaces_the_stop_criterion_kind() {
        let mut cfg = parse("select_n = 7\n").unwrap();
        let flags = RunConfig {
            target_syr: Some(2.0),
            ..RunConfig::default()
        };
        cfg.overlay(flags);
        assert!(matches!(
            cfg.stop_rule().unwrap(),
            StopRule::TargetReduction(t) if t == 2.0
        ));
    }

    #[test]
    fn factor_specs_split_numbers_from_paths() {
        let cfg = parse("r = 1599\nk = soils.asc\n").unwrap();
        assert_eq!(cfg.r, Some(FactorSpec::Constant(1599.0)));
        match cfg.k {
            Some(FactorSpec::Raster(ref p)) => assert!(p.ends_with("soils.asc")),
            other => panic!("expected a raster path, got {other:?}"),
        }
    }

    #[test]
    fn outlet_spec_parses_cells_and_auto() {
        assert_eq!("auto".parse::<OutletSpec>().unwrap(), OutletSpec::Auto);
        assert_eq!(
            "4, 2".parse::<OutletSpec>().unwrap(),
            OutletSpec::Cell { row: 4, col: 2 }
        );
        assert!("4".parse::<OutletSpec>().is_err());
        assert!("a,b".parse::<OutletSpec>().is_err());
    }
}
