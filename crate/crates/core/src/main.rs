use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phenocurve::clustering::DistanceVariant;
use phenocurve::error::{Error, Result, Stage};
use phenocurve::pipeline::{Pipeline, RunConfig};
use phenocurve::plot::{render_profile, render_spiral, ProfileStyle, SpiralStyle};
use phenocurve::polygon::{process_polygon, read_pixel_csv, summarize, write_pixel_csv};
use phenocurve::series::{load_pixel_csv, load_polygon_csv};
use phenocurve::simulation::StudySpec;

#[derive(Parser)]
#[command(name = "phenocurve", version, about = "Idealized annual phenology curves and dates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one pixel and print its dates as JSON.
    FitPixel {
        /// CSV with one row of S x L observations ("NA" for missing).
        #[arg(long)]
        input: PathBuf,
        /// Write the dates JSON here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the FPCA fit (coefficients, smoothing parameters, trace).
        #[arg(long)]
        fit_json: Option<PathBuf>,
        /// Also write a profile plot.
        #[arg(long)]
        profile_svg: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit every pixel of a polygon CSV (first column is the pixel id).
    FitPolygon {
        #[arg(long)]
        input: PathBuf,
        /// Directory receiving pixels.csv, summary.json and spiral.svg.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a Monte Carlo study described by a JSON file and write an MSE table.
    Simulate {
        #[arg(long)]
        study: PathBuf,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the number of replications in the study file.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the seed in the study file.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the replications.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Spiral plot from a per-pixel dates CSV.
    PlotSpiral {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Radial growth per loop; fitted to the canvas when omitted.
        #[arg(long)]
        growth: Option<f64>,
    },
    /// Profile plot of a pixel's annual curves and its idealized trend.
    PlotProfile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Observations per season.
    #[arg(long, default_value_t = 23)]
    per_season_len: usize,
    /// Number of seasons in the series.
    #[arg(long, default_value_t = 24)]
    seasons: usize,
    #[arg(long, default_value_t = 3)]
    num_freq: usize,
    /// dtw_basic or dtw2.
    #[arg(long, default_value = "dtw_basic")]
    distance: DistanceVariant,
    /// Number of principal components.
    #[arg(long, default_value_t = 1)]
    h: usize,
    /// Number of spline basis functions.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 365)]
    grid_n: usize,
    #[arg(long, default_value_t = 3650)]
    dense_n: usize,
    /// Minimum size of the dominating cluster; ceil(0.6 m) when omitted.
    #[arg(long)]
    dominating_threshold: Option<usize>,
    #[arg(long, default_value_t = 1.96)]
    trim_z: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Multiply input values by this factor (1e-4 for integer NDVI).
    #[arg(long)]
    scale: Option<f64>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            per_season_len: self.per_season_len,
            seasons: self.seasons,
            num_freq: self.num_freq,
            distance: self.distance,
            h: self.h,
            samples: self.samples,
            grid_n: self.grid_n,
            dense_n: self.dense_n,
            dominating_threshold: self.dominating_threshold,
            trim_z: self.trim_z,
            workers: self.workers,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            scale: self.scale,
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitPixel {
            input,
            output,
            fit_json,
            profile_svg,
            run,
        } => {
            let cfg = run.config();
            let pipeline = Pipeline::new(cfg.clone())?;
            let series = load_pixel_csv(&input, cfg.per_season_len, cfg.seasons).map_err(|e| e.at(Stage::Ingest))?;
            let fit = pipeline.fit_pixel(&series)?;
            let mut json = fit.dates.to_json()?;
            json.push('\n');
            write_or_print(output.as_deref(), &json)?;
            if let Some(p) = fit_json {
                fs::write(p, fit.fit.to_json()? + "\n")?;
            }
            if let Some(p) = profile_svg {
                fs::write(p, render_profile(&fit.curves, &fit.trend, &ProfileStyle::default())?)?;
            }
        }
        Command::FitPolygon { input, out_dir, run } => {
            let cfg = run.config();
            cfg.validate()?;
            let pixels = load_polygon_csv(&input, cfg.per_season_len, cfg.seasons).map_err(|e| e.at(Stage::Ingest))?;
            let outcomes = process_polygon(&pixels, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            write_pixel_csv(&outcomes, fs::File::create(out_dir.join("pixels.csv"))?)?;
            let summary = summarize(&outcomes, cfg.trim_z);
            fs::write(out_dir.join("summary.json"), summary.to_json()? + "\n")?;
            let dates: Vec<_> = outcomes.iter().filter_map(|o| o.result.as_ref().ok().cloned()).collect();
            if dates.is_empty() {
                return Err(Error::NumericalFailure {
                    iteration: 0,
                    message: "every pixel failed".into(),
                });
            }
            fs::write(out_dir.join("spiral.svg"), render_spiral(&dates, &SpiralStyle::default())?)?;
            eprintln!(
                "{} pixels, {} failed; outputs in {}",
                summary.total_pixels,
                summary.failed_pixels,
                out_dir.display()
            );
        }
        Command::Simulate {
            study,
            output,
            reps,
            seed,
            workers,
        } => {
            let text = fs::read_to_string(&study)?;
            let mut spec = StudySpec::from_json(&text)?;
            if let Some(r) = reps {
                spec.reps = r;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            let table = pool.install(|| spec.run())?;
            write_or_print(output.as_deref(), &table.to_csv_string()?)?;
        }
        Command::PlotSpiral { input, output, growth } => {
            let dates: Vec<_> = read_pixel_csv(&input)?.into_iter().map(|(_, d)| d).collect();
            let style = SpiralStyle {
                growth,
                ..SpiralStyle::default()
            };
            fs::write(output, render_spiral(&dates, &style)?)?;
        }
        Command::PlotProfile { input, output, run } => {
            let cfg = run.config();
            let pipeline = Pipeline::new(cfg.clone())?;
            let series = load_pixel_csv(&input, cfg.per_season_len, cfg.seasons).map_err(|e| e.at(Stage::Ingest))?;
            let fit = pipeline.fit_pixel(&series)?;
            fs::write(output, render_profile(&fit.curves, &fit.trend, &ProfileStyle::default())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
