//! Idealized annual vegetation-phenology curves from multi-year
//! vegetation-index series.
//!
//! A pixel's series is split into seasons, each season is smoothed by
//! harmonic regression and resampled onto a common grid, the annual curves
//! are clustered by dynamic time warping, and a penalised-spline functional
//! PCA of the dominating cluster yields a trend curve. Six phenological
//! dates are read from the derivatives of that trend.
//!
//! ```no_run
//! use phenocurve::{Pipeline, RunConfig};
//! use phenocurve::series::load_pixel_csv;
//!
//! let config = RunConfig::default();
//! let pipeline = Pipeline::new(config.clone())?;
//! let series = load_pixel_csv("pixel.csv".as_ref(), config.per_season_len, config.seasons)?;
//! let fit = pipeline.fit_pixel(&series)?;
//! println!("{}", fit.dates.to_json()?);
//! # Ok::<(), phenocurve::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod fpca;
pub mod harmonic;
pub mod phenodates;
pub mod pipeline;
pub mod plot;
pub mod polygon;
pub mod series;
pub mod simulation;

pub use clustering::{ClusterAssignment, DistanceMatrix, DistanceVariant};
pub use error::{Error, Result, Stage};
pub use fpca::{BasisSet, FpcaFit, TrendCurve};
pub use harmonic::HarmonicModel;
pub use phenodates::{DateFlag, Phase, PhenoDates};
pub use pipeline::{fit_pixel, Pipeline, PixelFit, RunConfig};
pub use polygon::PolygonSummary;
pub use series::{CurveMatrix, ObservationGrid, PixelSeries};
pub use simulation::{MseTable, SimConfig};
