//! End-to-end processing of one pixel: seasons, harmonic smoothing,
//! resampling, clustering, FPCA and date extraction.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    default_dominating_threshold, hierarchical_two_cluster, pairwise_distances, select_dominating,
    ClusterAssignment, DistanceVariant,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::fpca::{build_dr_basis, fpca_fit, predict_trend, BasisSet, FpcaFit, TrendCurve};
use crate::harmonic::{fit_harmonic, HarmonicModel};
use crate::phenodates::{extract_phenodates, PhenoDates};
use crate::series::{resample_curves, split_seasons, CurveMatrix, PixelSeries};

/// Settings shared by the pixel, polygon and simulation runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub per_season_len: usize,
    pub seasons: usize,
    pub num_freq: usize,
    pub distance: DistanceVariant,
    pub h: usize,
    pub samples: usize,
    pub grid_n: usize,
    pub dense_n: usize,
    /// `None` means `ceil(0.6 m)` for `m` usable seasons.
    pub dominating_threshold: Option<usize>,
    pub trim_z: f64,
    pub workers: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Multiplier applied to raw input values, e.g. `1e-4` for integer NDVI.
    pub scale: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            per_season_len: 23,
            seasons: 24,
            num_freq: crate::harmonic::DEFAULT_NUM_FREQ,
            distance: DistanceVariant::DtwBasic,
            h: crate::fpca::DEFAULT_H,
            samples: crate::fpca::DEFAULT_SAMPLES,
            grid_n: crate::series::DEFAULT_GRID_N,
            dense_n: crate::phenodates::DEFAULT_DENSE_N,
            dominating_threshold: None,
            trim_z: 1.96,
            workers: 1,
            seed: 0,
            max_iter: crate::fpca::DEFAULT_MAX_ITER,
            tol: crate::fpca::DEFAULT_TOL,
            scale: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("per-season-len", self.per_season_len),
            ("seasons", self.seasons),
            ("num-freq", self.num_freq),
            ("h", self.h),
            ("samples", self.samples),
            ("grid-n", self.grid_n),
            ("dense-n", self.dense_n),
            ("workers", self.workers),
            ("max-iter", self.max_iter),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.dominating_threshold == Some(0) {
            return Err(Error::Config("dominating-threshold must be positive".into()));
        }
        if !(self.trim_z > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config("trim-z and tol must be positive".into()));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("scale must be positive, got {s}")));
            }
        }
        if self.dense_n < 10 * self.grid_n {
            return Err(Error::Config(format!(
                "dense-n ({}) must be at least 10 x grid-n ({})",
                self.dense_n, self.grid_n
            )));
        }
        Ok(())
    }
}

/// Everything produced for one pixel.
#[derive(Debug, Clone)]
pub struct PixelFit {
    /// Smoothed annual curves of the usable seasons.
    pub curves: CurveMatrix,
    pub models: Vec<HarmonicModel>,
    pub assignment: ClusterAssignment,
    /// Indices into `curves` used for the FPCA.
    pub used: Vec<usize>,
    pub dominating_found: bool,
    pub fit: FpcaFit,
    pub trend: TrendCurve,
    pub dates: PhenoDates,
}

/// A configured runner holding the basis shared by all pixels.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: RunConfig,
    basis: BasisSet,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let basis = build_dr_basis(config.grid_n, config.samples).stage(Stage::Fpca)?;
        Ok(Self { config, basis })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn fit_pixel(&self, series: &PixelSeries) -> Result<PixelFit> {
        let cfg = &self.config;
        let series = match cfg.scale {
            Some(f) => series.clone().scaled(f),
            None => series.clone(),
        };
        let seasons = split_seasons(&series, cfg.num_freq);
        let usable: Vec<_> = seasons.into_iter().filter(|s| s.usable).collect();
        if usable.len() < 2 {
            return Err(Error::Contract(format!(
                "{} usable seasons; at least two are needed",
                usable.len()
            ))
            .at(Stage::Split));
        }

        let mut models = Vec::with_capacity(usable.len());
        for s in &usable {
            let (m, _) = fit_harmonic(&s.values, cfg.num_freq).stage(Stage::Harmonic)?;
            models.push(m);
        }
        let labels = usable.iter().map(|s| s.label.clone()).collect();
        let curves = resample_curves(&models, cfg.grid_n, labels).stage(Stage::Resample)?;

        let d = pairwise_distances(&curves, cfg.distance).stage(Stage::Cluster)?;
        let assignment = hierarchical_two_cluster(&d).stage(Stage::Cluster)?;
        let m = curves.num_curves();
        let threshold = cfg.dominating_threshold.unwrap_or_else(|| default_dominating_threshold(m));
        let dominating = select_dominating(&assignment, threshold).stage(Stage::Cluster)?;
        let dominating_found = dominating.is_some();
        let used = dominating.unwrap_or_else(|| (0..m).collect());
        debug!("using {} of {m} curves", used.len());
        let selected = curves.select(&used).stage(Stage::Cluster)?;

        let h = cfg.h.min(selected.num_curves());
        let fit = fpca_fit(&selected, &self.basis, h, cfg.max_iter, cfg.tol).stage(Stage::Fpca)?;
        if !fit.converged {
            log::warn!("FPCA stopped after {} iterations without converging", fit.iterations);
        }
        let period = series.grid().per_season_len() as f64;
        let trend = predict_trend(&fit, &self.basis, period).stage(Stage::Fpca)?;
        let dates = extract_phenodates(&trend, cfg.num_freq, cfg.dense_n).stage(Stage::Phenodates)?;
        Ok(PixelFit {
            curves,
            models,
            assignment,
            used,
            dominating_found,
            fit,
            trend,
            dates,
        })
    }
}

/// One-shot convenience wrapper around [`Pipeline`].
pub fn fit_pixel(series: &PixelSeries, config: &RunConfig) -> Result<PixelFit> {
    Pipeline::new(config.clone())?.fit_pixel(series)
}
