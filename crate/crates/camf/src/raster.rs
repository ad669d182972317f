//! Row-major raster grids and the ESRI ASCII grid format.
//!
//! A [`RasterGrid`] stores one `f64` per cell in row-major order with row 0 as
//! the northernmost row, mirroring the on-disk layout of ESRI ASCII grids.
//! Cells holding the grid's nodata value are *inactive* and are skipped by
//! every derived computation (flow routing, slope, normalization, ...).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The eight D8 neighbor offsets as `(drow, dcol)`, in the fixed enumeration
/// order used everywhere in this crate: E, SE, S, SW, W, NW, N, NE.
///
/// Row indices grow southward, so `drow = 1` points south.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (0, 1),   // E
    (1, 1),   // SE
    (1, 0),   // S
    (1, -1),  // SW
    (0, -1),  // W
    (-1, -1), // NW
    (-1, 0),  // N
    (-1, 1),  // NE
];

/// `true` where the matching [`NEIGHBOR_OFFSETS`] entry is a diagonal step.
pub const NEIGHBOR_IS_DIAGONAL: [bool; 8] = [false, true, false, true, false, true, false, true];

/// Center-to-center distance to neighbor `k` on a grid with the given cell size.
#[inline]
pub fn neighbor_distance(k: usize, cell_size: f64) -> f64 {
    if NEIGHBOR_IS_DIAGONAL[k] {
        cell_size * std::f64::consts::SQRT_2
    } else {
        cell_size
    }
}

/// A `(row, col)` cell address.
///
/// The derived ordering is row-major, i.e. ascending linear index, which is
/// the tie-break order used by the flow and selection code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub fn new(row: usize, col: usize) -> Self {
        CellIndex { row, col }
    }

    /// Linear row-major index on a grid with `cols` columns.
    #[inline]
    pub fn linear(&self, cols: usize) -> usize {
        self.row * cols + self.col
    }

    /// Inverse of [`CellIndex::linear`].
    #[inline]
    pub fn from_linear(linear: usize, cols: usize) -> Self {
        CellIndex {
            row: linear / cols,
            col: linear % cols,
        }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A georeferenced row-major grid of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    /// Map x of the lower-left grid corner.
    origin_x: f64,
    /// Map y of the lower-left grid corner.
    origin_y: f64,
    nodata: f64,
    values: Vec<f64>,
}

impl RasterGrid {
    /// Builds a grid from parts, validating the structural invariants:
    /// positive dimensions and cell size, finite values, and
    /// `values.len() == rows * cols`.
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin_x: f64,
        origin_y: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid {
                reason: format!("dimensions {rows}x{cols} must both be positive"),
            });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid {
                reason: format!("cell size {cell_size} must be finite and positive"),
            });
        }
        if !nodata.is_finite() || !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::InvalidGrid {
                reason: "nodata value and origin must be finite".to_string(),
            });
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidGrid {
                reason: format!(
                    "value buffer holds {} cells but {rows}x{cols} = {} were declared",
                    values.len(),
                    rows * cols
                ),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid {
                reason: format!("non-finite cell value {bad}"),
            });
        }
        Ok(RasterGrid {
            rows,
            cols,
            cell_size,
            origin_x,
            origin_y,
            nodata,
            values,
        })
    }

    /// Uniform grid with origin (0, 0) and nodata -9999, handy in tests and
    /// as a template for derived outputs.
    pub fn filled(rows: usize, cols: usize, cell_size: f64, value: f64) -> Self {
        RasterGrid::new(
            rows,
            cols,
            cell_size,
            0.0,
            0.0,
            -9999.0,
            vec![value; rows * cols],
        )
        .expect("filled grid parts are valid by construction")
    }

    /// New grid sharing this grid's shape, georeference, and nodata value,
    /// with every cell set to nodata.
    pub fn like_empty(&self) -> Self {
        RasterGrid {
            rows: self.rows,
            cols: self.cols,
            cell_size: self.cell_size,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            nodata: self.nodata,
            values: vec![self.nodata; self.rows * self.cols],
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

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell area in hectares (`cell_size² / 10⁴` with cell size in meters).
    pub fn cell_area_ha(&self) -> f64 {
        self.cell_size * self.cell_size / 1.0e4
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.values[i] = value;
    }

    pub fn set_nodata_at(&mut self, row: usize, col: usize) {
        let nodata = self.nodata;
        self.set(row, col, nodata);
    }

    /// `true` for in-bounds cells whose value differs from the nodata marker.
    #[inline]
    pub fn is_active(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.values[row * self.cols + col] != self.nodata
    }

    #[inline]
    pub fn is_active_cell(&self, cell: CellIndex) -> bool {
        self.is_active(cell.row, cell.col)
    }

    /// Active cells in row-major (ascending linear) order.
    pub fn active_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let cols = self.cols;
        self.values
            .iter()
            .enumerate()
            .filter(move |(_, v)| **v != self.nodata)
            .map(move |(i, _)| CellIndex::from_linear(i, cols))
    }

    pub fn active_count(&self) -> usize {
        self.values.iter().filter(|v| **v != self.nodata).count()
    }

    /// Applies `f` to every active cell value; nodata cells pass through.
    pub fn map_active(&self, mut f: impl FnMut(f64) -> f64) -> RasterGrid {
        let mut out = self.clone();
        for v in &mut out.values {
            if *v != self.nodata {
                *v = f(*v);
            }
        }
        out
    }
}

// ── ESRI ASCII grid I/O ─────────────────────────────────────────────────────

/// Header keys in their mandatory order. Matching is case-insensitive.
const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "NODATA_value",
];

/// Reads an ESRI ASCII grid: a six-line header (`ncols`, `nrows`,
/// `xllcorner`, `yllcorner`, `cellsize`, `NODATA_value`, keys matched
/// case-insensitively) followed by `nrows × ncols` whitespace-separated
/// values, northernmost row first.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, path)
}

fn parse_ascii_grid(text: &str, path: &Path) -> Result<RasterGrid> {
    let mut lines = text.lines().enumerate();
    let mut header = [0.0_f64; 6];

    for (k, expected) in HEADER_KEYS.iter().enumerate() {
        let (line_no, line) = lines.next().ok_or(Error::MalformedHeader {
            path: path.to_path_buf(),
            line: k + 1,
            expected,
        })?;
        let mut parts = line.split_whitespace();
        let key = parts.next();
        let value = parts.next();
        let extra = parts.next();
        match (key, value, extra) {
            (Some(key), Some(value), None) if key.eq_ignore_ascii_case(expected) => {
                header[k] = value.parse::<f64>().map_err(|_| Error::NonNumericToken {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    token: value.to_string(),
                })?;
            }
            _ => {
                return Err(Error::MalformedHeader {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    expected,
                })
            }
        }
    }

    let [ncols, nrows, xll, yll, cell_size, nodata] = header;
    if ncols.fract() != 0.0 || nrows.fract() != 0.0 || ncols < 1.0 || nrows < 1.0 {
        return Err(Error::InvalidGrid {
            reason: format!("ncols {ncols} and nrows {nrows} must be positive integers"),
        });
    }
    let (rows, cols) = (nrows as usize, ncols as usize);
    let expected = rows * cols;

    let mut values = Vec::with_capacity(expected);
    let mut found = 0_usize;
    for (line_no, line) in lines {
        for token in line.split_whitespace() {
            found += 1;
            if found > expected {
                continue; // keep counting so the error can name the surplus
            }
            let v = token.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(
                Error::NonNumericToken {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    token: token.to_string(),
                },
            )?;
            values.push(v);
        }
    }
    if found != expected {
        return Err(Error::TokenCount {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }

    RasterGrid::new(rows, cols, cell_size, xll, yll, nodata, values)
}

/// Writes `grid` in the format read by [`read_ascii_grid`].
///
/// Values are printed with Rust's shortest round-trip `f64` formatting, so a
/// read-back grid compares bit-for-bit equal to the original.
pub fn write_ascii_grid(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ascii_grid(grid)).map_err(|e| Error::io(path, e))
}

fn format_ascii_grid(grid: &RasterGrid) -> String {
    // Rough size guess: ~8 bytes per value plus the header.
    let mut out = String::with_capacity(grid.values.len() * 8 + 128);
    let _ = writeln!(out, "ncols        {}", grid.cols);
    let _ = writeln!(out, "nrows        {}", grid.rows);
    let _ = writeln!(out, "xllcorner    {}", grid.origin_x);
    let _ = writeln!(out, "yllcorner    {}", grid.origin_y);
    let _ = writeln!(out, "cellsize     {}", grid.cell_size);
    let _ = writeln!(out, "NODATA_value {}", grid.nodata);
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", grid.get(row, col));
        }
        out.push('\n');
    }
    out
}

// ── window and terrain operations ───────────────────────────────────────────

/// Copies the window starting at `(row0, col0)` spanning `rows × cols` cells.
///
/// The geotransform shifts with the window, so every kept cell retains its
/// map coordinates: cropping never moves data relative to the world.
pub fn crop(
    grid: &RasterGrid,
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
) -> Result<RasterGrid> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGrid {
            reason: format!("crop window {rows}x{cols} must be non-empty"),
        });
    }
    if row0 + rows > grid.rows || col0 + cols > grid.cols {
        return Err(Error::WindowOutOfBounds {
            row0,
            col0,
            rows,
            cols,
            grid_rows: grid.rows,
            grid_cols: grid.cols,
        });
    }
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let src = grid.index(row0 + r, col0);
        values.extend_from_slice(&grid.values[src..src + cols]);
    }
    // Rows count from the north edge while the origin anchors the south-west
    // corner, hence the flipped row term in the y shift.
    let origin_x = grid.origin_x + col0 as f64 * grid.cell_size;
    let origin_y = grid.origin_y + (grid.rows - (row0 + rows)) as f64 * grid.cell_size;
    RasterGrid::new(
        rows,
        cols,
        grid.cell_size,
        origin_x,
        origin_y,
        grid.nodata,
        values,
    )
}

/// Steepest-descent gradient per cell: the maximum of
/// `(z_cell − z_neighbor) / distance` over the active neighborhood, clamped
/// at zero. Cells with no active neighbor (or no descent) get 0; nodata cells
/// stay nodata.
pub fn slope(dem: &RasterGrid) -> RasterGrid {
    let mut out = dem.like_empty();
    for cell in dem.active_cells() {
        let z = dem.get(cell.row, cell.col);
        let mut steepest = 0.0_f64;
        for (k, (dr, dc)) in NEIGHBOR_OFFSETS.iter().enumerate() {
            let (nr, nc) = (cell.row as isize + dr, cell.col as isize + dc);
            if nr < 0 || nc < 0 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !dem.is_active(nr, nc) {
                continue;
            }
            let descent = (z - dem.get(nr, nc)) / neighbor_distance(k, dem.cell_size);
            steepest = steepest.max(descent);
        }
        out.set(cell.row, cell.col, steepest);
    }
    out
}

/// Rescales active values linearly onto `[0, 1]`. A constant grid (zero
/// range) maps to all zeros rather than dividing by zero.
pub fn minmax_normalize(grid: &RasterGrid) -> RasterGrid {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in grid.values.iter().filter(|v| **v != grid.nodata) {
        min = min.min(*v);
        max = max.max(*v);
    }
    // Also covers the all-nodata grid, where min/max keep their infinities.
    if max <= min {
        return grid.map_active(|_| 0.0);
    }
    let range = max - min;
    grid.map_active(|v| (v - min) / range)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, cell_size: f64, values: &[f64]) -> RasterGrid {
        RasterGrid::new(rows, cols, cell_size, 0.0, 0.0, -9999.0, values.to_vec()).unwrap()
    }

    fn write_temp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.asc");
        fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn cell_index_orders_row_major() {
        let a = CellIndex::new(0, 5);
        let b = CellIndex::new(1, 0);
        assert!(a < b, "row-major order: {a} must precede {b}");
        assert_eq!(CellIndex::from_linear(a.linear(6), 6), a);
    }

    #[test]
    fn reads_single_cell_grid() {
        let (_d, path) = write_temp(
            "ncols 1\nnrows 1\nxllcorner 0.0\nyllcorner 0.0\ncellsize 30.0\nNODATA_value -9999\n5.0\n",
        );
        let g = read_ascii_grid(&path).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 1));
        assert_eq!(g.get(0, 0), 5.0);
        assert_eq!(g.cell_size(), 30.0);
        assert_eq!(g.active_count(), 1);
    }

    #[test]
    fn header_keys_match_case_insensitively() {
        let (_d, path) = write_temp(
            "NCOLS 1\nNROWS 1\nXLLCORNER 2\nYLLCORNER 3\nCELLSIZE 10\nnodata_value -1\n7\n",
        );
        let g = read_ascii_grid(&path).unwrap();
        assert_eq!(g.origin_x(), 2.0);
        assert_eq!(g.nodata(), -1.0);
    }

    #[test]
    fn nodata_cells_are_inactive() {
        let (_d, path) = write_temp(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n-9999 4\n",
        );
        let g = read_ascii_grid(&path).unwrap();
        assert_eq!(g.active_count(), 3);
        assert!(!g.is_active(1, 0));
        assert_eq!(
            g.active_cells().collect::<Vec<_>>(),
            vec![
                CellIndex::new(0, 0),
                CellIndex::new(0, 1),
                CellIndex::new(1, 1)
            ]
        );
    }

    #[test]
    fn short_body_reports_token_shortfall() {
        let (_d, path) = write_temp(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2 3\n",
        );
        match read_ascii_grid(&path) {
            Err(Error::TokenCount {
                expected, found, ..
            }) => {
                assert_eq!((expected, found), (4, 3));
            }
            other => panic!("expected TokenCount error, got {other:?}"),
        }
    }

    #[test]
    fn surplus_tokens_are_counted() {
        let (_d, path) = write_temp(
            "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2 3 4\n",
        );
        match read_ascii_grid(&path) {
            Err(Error::TokenCount {
                expected, found, ..
            }) => assert_eq!((expected, found), (2, 4)),
            other => panic!("expected TokenCount error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_token_names_its_line() {
        let (_d, path) = write_temp(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\nx 4\n",
        );
        match read_ascii_grid(&path) {
            Err(Error::NonNumericToken { line, token, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(token, "x");
            }
            other => panic!("expected NonNumericToken error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_names_line_and_key() {
        let (_d, path) = write_temp("ncols 2\nnrows 2\nbogus 0\n");
        match read_ascii_grid(&path) {
            Err(Error::MalformedHeader { line, expected, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(expected, "xllcorner");
            }
            other => panic!("expected MalformedHeader error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_grid_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.asc");
        let g = RasterGrid::new(
            3,
            2,
            12.5,
            100.25,
            -50.75,
            -9999.0,
            vec![0.1, 1.0 / 3.0, -9999.0, 2.5e-7, 123456.789012345, 9.0],
        )
        .unwrap();
        write_ascii_grid(&g, &path).unwrap();
        let back = read_ascii_grid(&path).unwrap();
        assert_eq!(back, g, "ASCII round trip must be bit-exact");
    }

    #[test]
    fn all_nodata_grid_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nd.asc");
        let g = grid(2, 2, 10.0, &[-9999.0; 4]);
        write_ascii_grid(&g, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let body: Vec<&str> = text.lines().skip(6).flat_map(str::split_whitespace).collect();
        assert_eq!(body, vec!["-9999"; 4]);
        assert_eq!(read_ascii_grid(&path).unwrap().active_count(), 0);
    }

    #[test]
    fn crop_full_window_is_identity() {
        let g = grid(3, 4, 10.0, &(0..12).map(f64::from).collect::<Vec<_>>());
        assert_eq!(crop(&g, 0, 0, 3, 4).unwrap(), g);
    }

    #[test]
    fn crop_shifts_origin_to_keep_map_coordinates() {
        let g = RasterGrid::new(
            4,
            4,
            10.0,
            100.0,
            200.0,
            -9999.0,
            (0..16).map(f64::from).collect(),
        )
        .unwrap();
        let c = crop(&g, 1, 2, 2, 2).unwrap();
        // Kept cells are rows 1..3, cols 2..4 of the original.
        assert_eq!(c.values(), &[6.0, 7.0, 10.0, 11.0]);
        // Two columns skipped on the west side.
        assert_eq!(c.origin_x(), 120.0);
        // One row remains south of the window (row 3), so yll rises by one cell.
        assert_eq!(c.origin_y(), 210.0);
    }

    #[test]
    fn crop_composes() {
        let g = grid(6, 6, 5.0, &(0..36).map(f64::from).collect::<Vec<_>>());
        let once = crop(&crop(&g, 1, 1, 4, 4).unwrap(), 1, 2, 2, 2).unwrap();
        let direct = crop(&g, 2, 3, 2, 2).unwrap();
        assert_eq!(once, direct);
    }

    #[test]
    fn crop_out_of_bounds_is_rejected() {
        let g = grid(3, 3, 10.0, &[0.0; 9]);
        assert!(matches!(
            crop(&g, 1, 1, 3, 3),
            Err(Error::WindowOutOfBounds { .. })
        ));
    }

    #[test]
    fn slope_of_flat_grid_is_zero() {
        let g = grid(3, 3, 10.0, &[5.0; 9]);
        let s = slope(&g);
        assert!(s.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn slope_takes_steepest_cardinal_descent() {
        // Center 10, east neighbor 8, everything else higher: drop 2 over 10 m.
        let mut g = grid(3, 3, 10.0, &[20.0; 9]);
        g.set(1, 1, 10.0);
        g.set(1, 2, 8.0);
        assert!((slope(&g).get(1, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn slope_uses_diagonal_distance() {
        // Center 10 with the SE neighbor at 6: drop 4 over 10·√2 m beats the
        // cardinal drop of 2 over 10 m.
        let mut g = grid(3, 3, 10.0, &[20.0; 9]);
        g.set(1, 1, 10.0);
        g.set(1, 2, 8.0);
        g.set(2, 2, 6.0);
        let expected = 4.0 / (10.0 * std::f64::consts::SQRT_2);
        assert!((slope(&g).get(1, 1) - expected).abs() < 1e-15);
        assert!(expected > 0.2, "diagonal descent must win here");
    }

    #[test]
    fn slope_ignores_nodata_neighbors_and_isolated_cells() {
        let mut g = grid(1, 3, 10.0, &[9.0, 5.0, 1.0]);
        g.set_nodata_at(0, 2);
        // Cell 1's only active neighbor is the higher cell 0: clamped to 0.
        let s = slope(&g);
        assert_eq!(s.get(0, 1), 0.0);
        assert!((s.get(0, 0) - 0.4).abs() < 1e-15);
        assert_eq!(s.get(0, 2), g.nodata(), "nodata propagates");

        let mut lone = grid(1, 1, 10.0, &[3.0]);
        assert_eq!(slope(&lone).get(0, 0), 0.0);
        lone.set_nodata_at(0, 0);
        assert_eq!(slope(&lone).active_count(), 0);
    }

    #[test]
    fn minmax_normalize_maps_onto_unit_interval() {
        let g = grid(1, 3, 10.0, &[2.0, 4.0, 6.0]);
        assert_eq!(minmax_normalize(&g).values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn minmax_normalize_of_constant_grid_is_zero() {
        let g = grid(2, 2, 10.0, &[7.0; 4]);
        assert!(minmax_normalize(&g).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn minmax_normalize_keeps_unit_range_fixed() {
        let g = grid(1, 2, 10.0, &[0.0, 1.0]);
        assert_eq!(minmax_normalize(&g).values(), g.values());
    }

    #[test]
    fn minmax_normalize_skips_nodata() {
        let mut g = grid(1, 3, 10.0, &[2.0, 4.0, 6.0]);
        g.set_nodata_at(0, 2);
        let n = minmax_normalize(&g);
        assert_eq!(n.get(0, 0), 0.0);
        assert_eq!(n.get(0, 1), 1.0);
        assert!(!n.is_active(0, 2));
    }

    #[test]
    fn neighbor_order_starts_east_and_alternates_parity() {
        assert_eq!(NEIGHBOR_OFFSETS[0], (0, 1), "first neighbor must be east");
        for (k, diag) in NEIGHBOR_IS_DIAGONAL.iter().enumerate() {
            let (dr, dc) = NEIGHBOR_OFFSETS[k];
            assert_eq!(*diag, dr != 0 && dc != 0);
        }
        assert!((neighbor_distance(1, 10.0) - 10.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(neighbor_distance(2, 10.0), 10.0);
    }
}
