//! Multi-year vegetation-index series: ingestion, per-season segmentation and
//! resampling of smoothed seasons onto a common grid.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harmonic::HarmonicModel;

/// Sentinel used in CSV input for a missing observation.
pub const MISSING: &str = "NA";

/// Default number of points in the common evaluation grid (one per day of year).
pub const DEFAULT_GRID_N: usize = 365;

/// Layout of a multi-year series: `seasons` consecutive blocks of
/// `per_season_len` composites each.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    per_season_len: usize,
    seasons: usize,
    season_labels: Vec<String>,
}

impl ObservationGrid {
    pub fn new(per_season_len: usize, seasons: usize) -> Result<Self> {
        let labels = (1..=seasons).map(|s| format!("season-{s}")).collect();
        Self::with_labels(per_season_len, seasons, labels)
    }

    pub fn with_labels(per_season_len: usize, seasons: usize, labels: Vec<String>) -> Result<Self> {
        if per_season_len < 3 {
            return Err(Error::Contract(format!(
                "per-season length must be at least 3, got {per_season_len}"
            )));
        }
        if seasons < 2 {
            return Err(Error::Contract(format!(
                "at least 2 seasons are required, got {seasons}"
            )));
        }
        if labels.len() != seasons {
            return Err(Error::Contract(format!(
                "{} season labels given for {seasons} seasons",
                labels.len()
            )));
        }
        Ok(Self {
            per_season_len,
            seasons,
            season_labels: labels,
        })
    }

    pub fn per_season_len(&self) -> usize {
        self.per_season_len
    }

    pub fn seasons(&self) -> usize {
        self.seasons
    }

    pub fn season_labels(&self) -> &[String] {
        &self.season_labels
    }

    pub fn total_len(&self) -> usize {
        self.per_season_len * self.seasons
    }
}

/// Raw observations for one location.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSeries {
    grid: ObservationGrid,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl PixelSeries {
    /// Builds a series from optional values; `None` marks a missing observation.
    pub fn from_options(grid: ObservationGrid, values: &[Option<f64>]) -> Result<Self> {
        if values.len() != grid.total_len() {
            return Err(Error::MalformedInput(format!(
                "expected {} values ({} per season x {} seasons), got {}",
                grid.total_len(),
                grid.per_season_len,
                grid.seasons,
                values.len()
            )));
        }
        let mut vals = Vec::with_capacity(values.len());
        let mut missing = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => {
                    vals.push(*x);
                    missing.push(false);
                }
                Some(x) => {
                    return Err(Error::MalformedInput(format!(
                        "non-finite value {x} at position {}",
                        i + 1
                    )))
                }
                None => {
                    vals.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Ok(Self {
            grid,
            values: vals,
            missing,
        })
    }

    /// Builds a complete series (no missing values).
    pub fn from_values(grid: ObservationGrid, values: Vec<f64>) -> Result<Self> {
        let opts: Vec<Option<f64>> = values.into_iter().map(Some).collect();
        Self::from_options(grid, &opts)
    }

    pub fn grid(&self) -> &ObservationGrid {
        &self.grid
    }

    /// Raw values; missing positions hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    /// Multiplies every observed value by `factor` (e.g. 1e-4 for integer-scaled NDVI).
    pub fn scaled(mut self, factor: f64) -> Self {
        for (v, m) in self.values.iter_mut().zip(&self.missing) {
            if !m {
                *v *= factor;
            }
        }
        self
    }
}

/// One annual segment after gap filling.
#[derive(Debug, Clone, PartialEq)]
pub struct Season {
    pub label: String,
    /// Imputed values; all NaN when the season has no observations at all.
    pub values: Vec<f64>,
    pub observed: usize,
    pub usable: bool,
}

/// Segments a series into seasons and fills gaps by within-season linear
/// interpolation (nearest observed value at the edges).
///
/// Seasons with fewer than `2 * num_freq + 1` observed values are marked unusable.
pub fn split_seasons(series: &PixelSeries, num_freq: usize) -> Vec<Season> {
    let l = series.grid.per_season_len;
    let min_points = 2 * num_freq + 1;
    series
        .values
        .chunks(l)
        .zip(series.missing.chunks(l))
        .zip(&series.grid.season_labels)
        .map(|((vals, miss), label)| {
            let observed = miss.iter().filter(|m| !**m).count();
            Season {
                label: label.clone(),
                values: impute_linear(vals, miss),
                observed,
                usable: observed >= min_points,
            }
        })
        .collect()
}

fn impute_linear(vals: &[f64], miss: &[bool]) -> Vec<f64> {
    let known: Vec<usize> = (0..vals.len()).filter(|&i| !miss[i]).collect();
    if known.is_empty() {
        return vec![f64::NAN; vals.len()];
    }
    let mut out = vals.to_vec();
    for i in 0..vals.len() {
        if !miss[i] {
            continue;
        }
        // first observed index at or after i
        let pos = known.partition_point(|&k| k < i);
        out[i] = if pos == 0 {
            vals[known[0]]
        } else if pos == known.len() {
            vals[known[known.len() - 1]]
        } else {
            let (a, b) = (known[pos - 1], known[pos]);
            let w = (i - a) as f64 / (b - a) as f64;
            vals[a] + w * (vals[b] - vals[a])
        };
    }
    out
}

/// Annual curves sampled on a common grid of `grid_n` points spanning one season.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMatrix {
    samples: DMatrix<f64>,
    season_labels: Vec<String>,
}

impl CurveMatrix {
    pub fn new(samples: DMatrix<f64>, season_labels: Vec<String>) -> Result<Self> {
        if samples.ncols() != season_labels.len() {
            return Err(Error::Contract(format!(
                "{} columns but {} labels",
                samples.ncols(),
                season_labels.len()
            )));
        }
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::Contract("curve matrix must be non-empty".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("curve matrix has non-finite entries".into()));
        }
        Ok(Self {
            samples,
            season_labels,
        })
    }

    /// Wraps a matrix with default curve labels.
    pub fn from_matrix(samples: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=samples.ncols()).map(|j| format!("curve-{j}")).collect();
        Self::new(samples, labels)
    }

    /// Convenience constructor from columns (one `Vec` per curve).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Contract("columns have unequal lengths".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, m, |i, j| columns[j][i]))
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn grid_n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_curves(&self) -> usize {
        self.samples.ncols()
    }

    pub fn season_labels(&self) -> &[String] {
        &self.season_labels
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.column(j).iter().copied().collect()
    }

    /// Keeps only the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|&&j| j >= self.num_curves()) {
            return Err(Error::Contract(format!("no curve with index {bad}")));
        }
        let cols: Vec<_> = columns.iter().map(|&j| self.samples.column(j)).collect();
        let samples = DMatrix::from_columns(&cols);
        let labels = columns
            .iter()
            .map(|&j| self.season_labels[j].clone())
            .collect();
        Self::new(samples, labels)
    }
}

/// Position of grid point `i` (0-based) on the unit interval.
pub fn grid_point(i: usize, grid_n: usize) -> f64 {
    i as f64 / (grid_n - 1) as f64
}

/// Evaluates every model on `grid_n` equally spaced points of one period.
/// Grid point `x` in `[0, 1]` maps to season time `t = x * L`.
pub fn resample_curves(
    models: &[HarmonicModel],
    grid_n: usize,
    labels: Vec<String>,
) -> Result<CurveMatrix> {
    if grid_n < 2 {
        return Err(Error::Contract(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let Some(first) = models.first() else {
        return Err(Error::Contract("no models to resample".into()));
    };
    let period = first.period();
    if models.iter().any(|m| m.period() != period) {
        return Err(Error::Contract("models do not share a common period".into()));
    }
    let samples = DMatrix::from_fn(grid_n, models.len(), |i, j| {
        models[j].eval(grid_point(i, grid_n) * period)
    });
    CurveMatrix::new(samples, labels)
}

/// Parses one CSV record (already split into cells) into a series.
/// `row` and column positions in errors are 1-based.
pub fn parse_pixel_record<'a, I>(cells: I, grid: &ObservationGrid, row: usize) -> Result<PixelSeries>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut values = Vec::with_capacity(grid.total_len());
    for (c, cell) in cells.into_iter().enumerate() {
        let cell = cell.trim();
        if cell == MISSING || cell.is_empty() {
            values.push(None);
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(Some(v)),
            _ => {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    cell: cell.to_string(),
                })
            }
        }
    }
    if values.len() != grid.total_len() {
        return Err(Error::MalformedInput(format!(
            "row {row}: expected {} cells ({} x {}), found {}",
            grid.total_len(),
            grid.per_season_len,
            grid.seasons,
            values.len()
        )));
    }
    PixelSeries::from_options(grid.clone(), &values)
}

fn is_header(record: &csv::StringRecord) -> bool {
    record
        .iter()
        .all(|c| c.trim() != MISSING && c.trim().parse::<f64>().is_err())
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Reads the first pixel row of a CSV file. A leading header row is skipped
/// when none of its cells is numeric.
pub fn load_pixel_csv(path: &Path, per_season_len: usize, seasons: usize) -> Result<PixelSeries> {
    let grid = ObservationGrid::new(per_season_len, seasons)?;
    let mut rdr = reader(path)?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && is_header(&rec) {
            continue;
        }
        return parse_pixel_record(rec.iter(), &grid, i + 1);
    }
    Err(Error::MalformedInput(format!(
        "{} contains no data rows",
        path.display()
    )))
}

/// Reads a polygon file: one pixel per row, first cell is the pixel id.
pub fn load_polygon_csv(
    path: &Path,
    per_season_len: usize,
    seasons: usize,
) -> Result<Vec<(String, PixelSeries)>> {
    let grid = ObservationGrid::new(per_season_len, seasons)?;
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && rec.iter().skip(1).all(|c| c.trim().parse::<f64>().is_err() && c.trim() != MISSING) {
            continue;
        }
        let mut cells = rec.iter();
        let Some(id) = cells.next() else {
            continue;
        };
        // data columns start at 2 in the file
        let series = parse_pixel_record(cells, &grid, i + 1).map_err(|e| match e {
            Error::Parse { row, column, cell } => Error::Parse {
                row,
                column: column + 1,
                cell,
            },
            e => e,
        })?;
        out.push((id.to_string(), series));
    }
    if out.is_empty() {
        return Err(Error::MalformedInput(format!(
            "{} contains no pixel rows",
            path.display()
        )));
    }
    Ok(out)
}
