//! Synthetic signals and Monte Carlo accuracy studies.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::DistanceVariant;
use crate::error::{Error, Result};
use crate::harmonic::{closed_form_phenodates, HarmonicModel};
use crate::phenodates::Phase;
use crate::pipeline::{Pipeline, RunConfig};
use crate::series::{ObservationGrid, PixelSeries};

/// Standard deviation of the per-season offset in the heteroscedastic design.
pub const DEFAULT_SEASON_SD: f64 = 0.7229;

/// Dates scored in a study.
pub const SCORED: [Phase; 4] = [Phase::GreenUp, Phase::StartOfSeason, Phase::Maturity, Phase::EndOfSeason];

/// `c0 + c1 cos(2πt/L − φ)` sampled at `t = 1..L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSignal {
    pub c0: f64,
    pub c1: f64,
    pub period: usize,
    pub phase_deg: f64,
}

impl Default for BaseSignal {
    fn default() -> Self {
        Self {
            c0: 0.0,
            c1: 1.0,
            period: 23,
            phase_deg: 210.0,
        }
    }
}

impl BaseSignal {
    pub fn model(&self) -> HarmonicModel {
        HarmonicModel::single(self.c0, self.c1, self.period as f64, self.phase_deg)
    }

    pub fn samples(&self) -> Vec<f64> {
        let m = self.model();
        (1..=self.period).map(|t| m.eval(t as f64)).collect()
    }

    /// True date positions of the noiseless signal.
    pub fn truth(&self) -> Result<[Option<f64>; 4]> {
        let d = closed_form_phenodates(self.c0, self.c1, self.period as f64, self.phase_deg)?;
        Ok(SCORED.map(|p| d.position(p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    Homoscedastic {
        sigma: f64,
    },
    Heteroscedastic {
        df: f64,
        #[serde(default = "default_season_sd")]
        season_sd: f64,
    },
}

fn default_season_sd() -> f64 {
    DEFAULT_SEASON_SD
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Homoscedastic { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::Heteroscedastic { df, season_sd } if df >= 1.0 && season_sd >= 0.0 => Ok(()),
            other => Err(Error::Config(format!("invalid noise model {other:?}"))),
        }
    }

    pub fn label(&self) -> (&'static str, f64) {
        match *self {
            NoiseModel::None => ("none", 0.0),
            NoiseModel::Homoscedastic { sigma } => ("homoscedastic", sigma),
            NoiseModel::Heteroscedastic { df, .. } => ("heteroscedastic", df),
        }
    }
}

/// Estimator settings varied across the rows of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub num_freq: usize,
    #[serde(default)]
    pub distance: DistanceVariant,
    #[serde(default = "one")]
    pub h: usize,
    #[serde(default = "fifty")]
    pub samples: usize,
}

fn one() -> usize {
    1
}

fn fifty() -> usize {
    crate::fpca::DEFAULT_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub base: BaseSignal,
    pub seasons: usize,
    pub noise: NoiseModel,
    pub reps: usize,
    pub estimator: EstimatorConfig,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.seasons < 2 {
            return Err(Error::Config("seasons must be at least 2".into()));
        }
        self.noise.validate()
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            per_season_len: self.base.period,
            seasons: self.seasons,
            num_freq: self.estimator.num_freq,
            distance: self.estimator.distance,
            h: self.estimator.h,
            samples: self.estimator.samples,
            seed: self.seed,
            ..RunConfig::default()
        }
    }

    /// Generator for replication `rep`; streams are independent of how reps
    /// are scheduled.
    pub fn rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

fn replicate(config: &SimConfig) -> Vec<f64> {
    let base = config.base.samples();
    (0..config.seasons).flat_map(|_| base.iter().copied()).collect()
}

fn to_series(config: &SimConfig, values: Vec<f64>) -> Result<PixelSeries> {
    let grid = ObservationGrid::new(config.base.period, config.seasons)?;
    PixelSeries::from_values(grid, values)
}

/// Base signal repeated over all seasons plus iid Gaussian noise.
pub fn gen_homoscedastic(config: &SimConfig, rng: &mut impl Rng) -> Result<PixelSeries> {
    let sigma = match config.noise {
        NoiseModel::Homoscedastic { sigma } => sigma,
        NoiseModel::None => 0.0,
        other => return Err(Error::Config(format!("expected homoscedastic noise, got {other:?}"))),
    };
    let mut y = replicate(config);
    if sigma > 0.0 {
        for v in &mut y {
            let e: f64 = rng.sample(StandardNormal);
            *v += sigma * e;
        }
    }
    to_series(config, y)
}

/// Base signal plus one Gaussian offset per season and a χ² perturbation
/// per within-season position that is shared by all seasons.
pub fn gen_heteroscedastic(config: &SimConfig, rng: &mut impl Rng) -> Result<PixelSeries> {
    let NoiseModel::Heteroscedastic { df, season_sd } = config.noise else {
        return Err(Error::Config(format!("expected heteroscedastic noise, got {:?}", config.noise)));
    };
    let l = config.base.period;
    let chi = ChiSquared::new(df).map_err(|e| Error::Config(e.to_string()))?;
    let position: Vec<f64> = (0..l).map(|_| chi.sample(rng)).collect();
    let normal = Normal::new(0.0, season_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut y = replicate(config);
    for season in y.chunks_mut(l) {
        let offset = normal.sample(rng);
        for (v, p) in season.iter_mut().zip(&position) {
            *v += offset + p;
        }
    }
    to_series(config, y)
}

pub fn generate(config: &SimConfig, rng: &mut impl Rng) -> Result<PixelSeries> {
    match config.noise {
        NoiseModel::Heteroscedastic { .. } => gen_heteroscedastic(config, rng),
        _ => gen_homoscedastic(config, rng),
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// the input, not on how work was scheduled.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// One row of an accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub noise: String,
    /// σ for homoscedastic rows, degrees of freedom for heteroscedastic rows.
    pub level: f64,
    pub distance: DistanceVariant,
    pub num_freq: usize,
    pub h: usize,
    pub samples: usize,
    pub reps: usize,
    /// MSE per scored date; `None` when no rep produced that date.
    pub mse: [Option<f64>; 4],
    pub absent: [usize; 4],
    pub failures: usize,
}

impl MseRow {
    pub fn mse_of(&self, phase: Phase) -> Option<f64> {
        SCORED.iter().position(|p| *p == phase).and_then(|i| self.mse[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub const HEADER: [&'static str; 16] = [
        "noise", "level", "distance", "num_freq", "h", "samples", "reps", "mse_GU", "mse_SoS", "mse_Mat",
        "mse_EoS", "absent_GU", "absent_SoS", "absent_Mat", "absent_EoS", "failures",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::HEADER)?;
        for r in &self.rows {
            let mut rec = vec![
                r.noise.clone(),
                format!("{}", r.level),
                r.distance.to_string(),
                r.num_freq.to_string(),
                r.h.to_string(),
                r.samples.to_string(),
                r.reps.to_string(),
            ];
            rec.extend(r.mse.iter().map(|m| m.map_or("NA".to_string(), |v| format!("{v:.9}"))));
            rec.extend(r.absent.iter().map(|a| a.to_string()));
            rec.push(r.failures.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Date estimates of one replication, or `None` if the pipeline failed.
pub fn run_rep(config: &SimConfig, pipeline: &Pipeline, rep: u64) -> Option<[Option<f64>; 4]> {
    let mut rng = config.rng(rep);
    let series = generate(config, &mut rng).ok()?;
    match pipeline.fit_pixel(&series) {
        Ok(fit) => Some(SCORED.map(|p| fit.dates.position(p))),
        Err(e) => {
            log::debug!("rep {rep} failed: {e}");
            None
        }
    }
}

/// Runs all replications of one configuration and scores them against the
/// closed-form truth.
pub fn run_study(config: &SimConfig) -> Result<MseRow> {
    config.validate()?;
    let truth = config.base.truth()?;
    let pipeline = Pipeline::new(config.run_config())?;
    let results: Vec<Option<[Option<f64>; 4]>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(config, &pipeline, rep))
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    let mut mse = [None; 4];
    let mut absent = [0; 4];
    for i in 0..4 {
        let mut sq = Vec::with_capacity(results.len());
        for est in results.iter().flatten() {
            match (est[i], truth[i]) {
                (Some(e), Some(t)) => sq.push((e - t).powi(2)),
                _ => absent[i] += 1,
            }
        }
        if !sq.is_empty() {
            mse[i] = Some(pairwise_sum(&sq) / sq.len() as f64);
        }
    }
    let (noise, level) = config.noise.label();
    Ok(MseRow {
        noise: noise.to_string(),
        level,
        distance: config.estimator.distance,
        num_freq: config.estimator.num_freq,
        h: config.estimator.h,
        samples: config.estimator.samples,
        reps: config.reps,
        mse,
        absent,
        failures,
    })
}

/// One row of a study file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyRow {
    pub noise: NoiseModel,
    pub num_freq: usize,
    #[serde(default)]
    pub distance: DistanceVariant,
    #[serde(default = "one")]
    pub h: usize,
    #[serde(default = "fifty")]
    pub samples: usize,
}

impl StudyRow {
    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            num_freq: self.num_freq,
            distance: self.distance,
            h: self.h,
            samples: self.samples,
        }
    }
}

/// A study file: shared settings and a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub base: BaseSignal,
    #[serde(default = "default_seasons")]
    pub seasons: usize,
    pub rows: Vec<StudyRow>,
}

fn default_seasons() -> usize {
    24
}

impl StudySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        if spec.rows.is_empty() {
            return Err(Error::Config("study has no rows".into()));
        }
        Ok(spec)
    }

    pub fn configs(&self) -> Vec<SimConfig> {
        self.rows
            .iter()
            .map(|r| SimConfig {
                base: self.base,
                seasons: self.seasons,
                noise: r.noise,
                reps: self.reps,
                estimator: r.estimator(),
                seed: self.seed,
            })
            .collect()
    }

    pub fn run(&self) -> Result<MseTable> {
        let rows = self.configs().iter().map(run_study).collect::<Result<Vec<_>>>()?;
        Ok(MseTable { rows })
    }
}
