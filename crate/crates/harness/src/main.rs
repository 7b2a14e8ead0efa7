use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pvrow_core::lineclust::PanelSpec;
use pvrow_core::optimizer::{optimize_thresholds, CostConfig, OptimizeOptions, SearchMethod, ThresholdSet};
use pvrow_core::{GrayImage, RgbImage};
use pvrow_harness::config::{ExperimentConfig, SegmentationSettings};
use pvrow_harness::error::{HarnessError, Result};
use pvrow_harness::{compute_metrics, run_experiment, Trace};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pvrow", version, about = "PV-row inspection simulator and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Coordinate,
    QuasiNewton,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one simulated experiment and write trace.csv, metrics.json and
    /// summary.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tune the nine segmentation thresholds on a thermal/RGB image pair.
    Tune {
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        /// TOML file with a `[thermal]` and `[rgb]` threshold table.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "coordinate")]
        method: Method,
        /// Flight height the pair was taken at, meters.
        #[arg(long, default_value_t = 15.0)]
        height: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute accuracy metrics from a trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable value");
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::Io { path: path.to_owned(), source: e })
}

fn open<T>(path: &Path, read: impl FnOnce(std::io::BufReader<std::fs::File>) -> pvrow_core::Result<T>) -> Result<T> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::Io { path: path.to_owned(), source: e })?;
    Ok(read(std::io::BufReader::new(f))?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io { path: out.clone(), source: e })?;
            let result = run_experiment(&cfg)?;
            result.trace.save(&out.join("trace.csv"))?;
            write_json(&out.join("summary.json"), &result.summary)?;
            let metrics = result.metrics()?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!("{}", serde_json::to_string(&json!({ "metrics": metrics, "summary": result.summary })).unwrap());
        }
        Command::Tune { thermal, rgb, init, method, height, out } => {
            let t = open(&thermal, GrayImage::read_pgm)?;
            let c = open(&rgb, RgbImage::read_ppm)?;
            let seg: SegmentationSettings = match init {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::Io { path: p.clone(), source: e })?;
                    toml::from_str(&text).map_err(|e| HarnessError::Config { path: p, message: e.to_string() })?
                }
                None => SegmentationSettings::default(),
            };
            let geom = pvrow_core::Geometry::from_fov(t.width(), t.height(), 57.12, height)?;
            let panel = PanelSpec { width: seg.panel_width, module_length: seg.module_length };
            let cost = CostConfig::for_panels(&geom, &panel);
            let opts = OptimizeOptions {
                method: match method {
                    Method::Coordinate => SearchMethod::CoordinateDescent,
                    Method::QuasiNewton => SearchMethod::QuasiNewton,
                },
                ..OptimizeOptions::default()
            };
            let res = optimize_thresholds(&t, &c, &ThresholdSet::new(seg.thermal, seg.rgb), &cost, &opts)?;
            let tuned = SegmentationSettings { thermal: res.thresholds.thermal(), rgb: res.thresholds.rgb(), ..seg };
            let text = toml::to_string(&tuned).expect("serialisable thresholds");
            std::fs::write(&out, text).map_err(|e| HarnessError::Io { path: out.clone(), source: e })?;
            println!(
                "{}",
                json!({
                    "initial_cost": res.initial_cost.total,
                    "cost": res.cost.total,
                    "thermal_regions": res.cost.n_thermal(),
                    "rgb_regions": res.cost.n_rgb(),
                    "evaluations": res.evaluations,
                    "elapsed_s": res.elapsed.as_secs_f64(),
                })
            );
        }
        Command::Metrics { trace } => {
            let m = compute_metrics(&Trace::load(&trace)?)?;
            println!("{}", serde_json::to_string_pretty(&m).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PVROW_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
