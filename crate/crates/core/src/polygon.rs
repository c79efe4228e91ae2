//! Many pixels at once: parallel fitting and robust per-date summaries.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phenodates::{Phase, PhenoDates};
use crate::pipeline::{Pipeline, RunConfig};
use crate::series::PixelSeries;

/// Normal-consistency factor for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

/// Outcome for one pixel.
#[derive(Debug, Clone)]
pub struct PixelOutcome {
    pub id: String,
    pub result: std::result::Result<PhenoDates, String>,
}

/// Robust summary of one date across pixels, in day-of-year units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub phase: Phase,
    pub median: Option<f64>,
    /// Unscaled median absolute deviation of the retained values.
    pub mad: Option<f64>,
    pub outlier_fraction: f64,
    /// Pixels whose estimate was retained after trimming.
    pub pixel_count: usize,
    /// Pixels that produced this date at all.
    pub present: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSummary {
    pub total_pixels: usize,
    pub failed_pixels: usize,
    pub failed_ids: Vec<String>,
    pub trim_z: f64,
    pub params: Vec<ParamSummary>,
}

impl PolygonSummary {
    pub fn param(&self, phase: Phase) -> &ParamSummary {
        &self.params[phase.index()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mad(values: &[f64]) -> Option<f64> {
    let med = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

/// Single-pass trimming: keeps values within `median ± z · 1.4826 · MAD`.
/// Returns the retained values and how many were removed.
pub fn trim(values: &[f64], z: f64) -> (Vec<f64>, usize) {
    let (Some(med), Some(m)) = (median(values), mad(values)) else {
        return (Vec::new(), 0);
    };
    let half = z * MAD_SCALE * m;
    let kept: Vec<f64> = values.iter().copied().filter(|v| (v - med).abs() <= half).collect();
    let removed = values.len() - kept.len();
    (kept, removed)
}

pub fn summarize(outcomes: &[PixelOutcome], trim_z: f64) -> PolygonSummary {
    let ok: Vec<&PhenoDates> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let failed_ids: Vec<String> = outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .map(|o| o.id.clone())
        .collect();
    let params = Phase::ALL
        .iter()
        .map(|&phase| {
            let values: Vec<f64> = ok.iter().filter_map(|d| d.doy(phase)).map(f64::from).collect();
            let (kept, removed) = trim(&values, trim_z);
            ParamSummary {
                phase,
                median: median(&kept),
                mad: mad(&kept),
                outlier_fraction: if values.is_empty() {
                    0.0
                } else {
                    removed as f64 / values.len() as f64
                },
                pixel_count: kept.len(),
                present: values.len(),
            }
        })
        .collect();
    PolygonSummary {
        total_pixels: outcomes.len(),
        failed_pixels: failed_ids.len(),
        failed_ids,
        trim_z,
        params,
    }
}

/// Fits every pixel on a pool of `config.workers` threads. Results come back
/// in input order whatever the worker count.
pub fn process_polygon(pixels: &[(String, PixelSeries)], config: &RunConfig) -> Result<Vec<PixelOutcome>> {
    if pixels.is_empty() {
        return Err(Error::MalformedInput("polygon has no pixels".into()));
    }
    let pipeline = Pipeline::new(config.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes = pool.install(|| {
        pixels
            .par_iter()
            .map(|(id, series)| {
                let result = pipeline.fit_pixel(series).map(|f| f.dates).map_err(|e| {
                    log::warn!("pixel {id}: {e}");
                    e.to_string()
                });
                PixelOutcome { id: id.clone(), result }
            })
            .collect()
    });
    Ok(outcomes)
}

/// Per-pixel CSV: id, six DoY columns, flags and error message.
pub fn write_pixel_csv<W: Write>(outcomes: &[PixelOutcome], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(PhenoDates::csv_header());
    header.push("error".into());
    out.write_record(&header)?;
    for o in outcomes {
        let mut rec = vec![o.id.clone()];
        match &o.result {
            Ok(d) => {
                rec.extend(d.csv_row());
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(crate::series::MISSING.to_string(), 6));
                rec.push(String::new());
                rec.push(e.clone());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a per-pixel CSV written by [`write_pixel_csv`]. Pixels that failed
/// are skipped.
pub fn read_pixel_csv(path: &std::path::Path) -> Result<Vec<(String, PhenoDates)>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let doy_cols: Vec<usize> = Phase::ALL
        .iter()
        .map(|p| {
            col(&format!("{p}_doy"))
                .ok_or_else(|| Error::MalformedInput(format!("missing column {p}_doy")))
        })
        .collect::<Result<_>>()?;
    let id_col = col("id").unwrap_or(0);
    let flags_col = col("flags");
    let error_col = col("error");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if error_col.and_then(|c| rec.get(c)).is_some_and(|e| !e.trim().is_empty()) {
            continue;
        }
        let mut doys = [None; 6];
        for (k, &c) in doy_cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("").trim();
            if cell.is_empty() || cell == crate::series::MISSING {
                continue;
            }
            let parse_err = || Error::Parse {
                row: i + 2,
                column: c + 1,
                cell: cell.to_string(),
            };
            let v: u32 = cell.parse().map_err(|_| parse_err())?;
            if !(1..=365).contains(&v) {
                return Err(parse_err());
            }
            doys[k] = Some(v);
        }
        let mut dates = PhenoDates::from_doys(doys);
        if let Some(f) = flags_col.and_then(|c| rec.get(c)) {
            dates
                .flags
                .extend(f.split(';').filter_map(|s| crate::phenodates::DateFlag::parse(s.trim())));
        }
        out.push((rec.get(id_col).unwrap_or("").to_string(), dates));
    }
    if out.is_empty() {
        return Err(Error::MalformedInput(format!("{} has no usable pixel rows", path.display())));
    }
    Ok(out)
}
