//! Crate-wide error type.
//!
//! Errors carry enough position information (line numbers for file formats,
//! row/col for cells) to point at the offending input directly.

use std::path::PathBuf;

use crate::raster::CellIndex;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying filesystem failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A grid file header line is missing or does not match `<key> <value>`.
    #[error("{path}: line {line}: malformed header, expected `{expected} <value>`")]
    MalformedHeader {
        path: PathBuf,
        line: usize,
        expected: &'static str,
    },

    /// A token in a grid file body failed to parse as a number.
    #[error("{path}: line {line}: non-numeric token `{token}`")]
    NonNumericToken {
        path: PathBuf,
        line: usize,
        token: String,
    },

    /// A grid file body held more or fewer values than the header promised.
    #[error("{path}: expected {expected} data tokens for the declared grid, found {found}")]
    TokenCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    /// Rejected request to build a structurally invalid grid.
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    /// Crop window extends past the grid edge.
    #[error(
        "crop window (row0={row0}, col0={col0}, {rows}x{cols}) exceeds grid bounds {grid_rows}x{grid_cols}"
    )]
    WindowOutOfBounds {
        row0: usize,
        col0: usize,
        rows: usize,
        cols: usize,
        grid_rows: usize,
        grid_cols: usize,
    },

    /// Grids that must align cell-for-cell do not.
    #[error("raster mismatch between {left} and {right}: {reason}")]
    RasterMismatch {
        left: String,
        right: String,
        reason: String,
    },

    /// Flow directions contain a cycle, so no topological order exists.
    #[error("flow directions contain a cycle: {residual} cell(s) unreachable from the ready set, starting at {first:?}")]
    CycleDetected {
        residual: usize,
        first: Vec<CellIndex>,
    },

    /// An operation referenced a cell that is nodata or out of bounds.
    #[error("cell ({row}, {col}) is not an active grid cell", row = cell.row, col = cell.col)]
    InactiveCell { cell: CellIndex },

    /// A transport parameter violates its admissible range.
    #[error("invalid transport parameters at cell ({row}, {col}): {reason}", row = cell.row, col = cell.col)]
    InvalidParams { cell: CellIndex, reason: String },

    /// A designated outlet cell has outgoing flow.
    #[error("outlet ({row}, {col}) is not a sink: it has outgoing flow", row = cell.row, col = cell.col)]
    OutletNotSink { cell: CellIndex },

    /// No sink exists to act as the automatic outlet.
    #[error("cannot pick an outlet automatically: the flow graph has no active cells")]
    NoOutletCandidate,

    /// Path replay was asked to traverse a cell with more than one successor.
    #[error(
        "path replay requires single-direction flow, but cell ({row}, {col}) has {degree} successors",
        row = cell.row,
        col = cell.col
    )]
    NotSingleFlow { cell: CellIndex, degree: usize },

    /// A candidate evaluation was requested for an already committed cell.
    #[error("cell ({row}, {col}) is already afforested", row = cell.row, col = cell.col)]
    AlreadyAfforested { cell: CellIndex },

    /// Selection was asked to run with nothing to choose from.
    #[error("candidate set is empty but {requested} cell(s) were requested")]
    NoCandidates { requested: usize },

    /// Stop rule is inconsistent with the candidate set or target.
    #[error("invalid stop rule: {reason}")]
    InvalidStopRule { reason: String },

    /// A key-value parameter file line failed to parse.
    #[error("{path}: line {line}: {reason}")]
    ParamFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A class raster holds a code with no entry in the factor table.
    #[error("class code {code} at cell ({row}, {col}) has no factor table entry", row = cell.row, col = cell.col)]
    UnmappedClass { code: i64, cell: CellIndex },

    /// A class raster holds a value that is not an integer code.
    #[error("class value {value} at cell ({row}, {col}) is not an integer code", row = cell.row, col = cell.col)]
    NonIntegralClass { value: f64, cell: CellIndex },

    /// Afforestation response factors violate their admissible ranges.
    #[error("invalid derivation factors: {reason}")]
    InvalidDerivation { reason: String },

    /// Synthetic case generation was given unusable dimensions or rates.
    #[error("invalid synthetic case request: {reason}")]
    InvalidSynthRequest { reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
