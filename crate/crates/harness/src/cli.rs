use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use matchbandits_core::environments::{
    estimate_min_gap, min_gap_from_samples, stream_rng, Environment, Stream,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::checks::oracle_check;
use crate::config::{EnvironmentSpec, ExperimentConfig, SCHEMA_VERSION};
use crate::error::{HarnessError, Result};
use crate::figures::{reproduce, Figure, FigureOptions};
use crate::output::{mean_stderr, write_bundle, write_text};
use crate::plot::svg_from_csv;
use crate::runner::{prepare, run_experiment};

#[derive(Parser, Debug)]
#[command(
    name = "matchbandits",
    version,
    about = "Bandit experiments in two-sided matching markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment config and write its result bundle.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path into the config, e.g. `policies.0.algorithm.initial_gap`.
        #[arg(long)]
        param: String,
        /// Comma-separated JSON values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the minimum preference gap of a stochastic environment.
    DiagnoseGap {
        env: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force check of the approximation oracle guarantee.
    OracleCheck {
        #[arg(long, default_value_t = 300)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate the data behind one figure.
    Reproduce {
        /// fig1, fig2, fig3, fig4, fig5, fig6 or figH.
        figure: String,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, default_value_t = 10)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Redraw the max-over-players plot of a curves.csv file.
    Plot {
        curves: PathBuf,
        #[arg(long, default_value = "regret")]
        metric: String,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// Input of `diagnose-gap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub schema_version: u32,
    /// Player parameters, one row per player.
    pub theta: Vec<Vec<f64>>,
    pub n_arms: usize,
    pub environment: EnvironmentSpec,
    pub horizons: Vec<u64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    100_000
}

pub fn diagnose_gap(cfg: &GapConfig) -> Result<serde_json::Value> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::config(
            "schema_version",
            format!("expected {SCHEMA_VERSION}"),
        ));
    }
    let dim = cfg.theta.first().map_or(0, Vec::len);
    if dim == 0 || cfg.theta.iter().any(|t| t.len() != dim) {
        return Err(HarnessError::config(
            "theta",
            "rows must be non-empty and equally long",
        ));
    }
    if cfg.horizons.is_empty() || cfg.horizons.contains(&0) {
        return Err(HarnessError::config(
            "horizons",
            "need at least one positive horizon",
        ));
    }
    let Environment::Stochastic(env) = cfg.environment.resolve(dim, cfg.n_arms, "environment")?
    else {
        return Err(HarnessError::config("environment", "must be stochastic"));
    };
    let theta: Vec<DVector<f64>> = cfg
        .theta
        .iter()
        .map(|t| DVector::from_column_slice(t))
        .collect();
    let mut rng = stream_rng(cfg.seed, Stream::Diagnostics);
    let diag = estimate_min_gap(&env, &theta, cfg.horizons[0], cfg.n_samples, &mut rng)
        .map_err(|e| HarnessError::config("environment", e.to_string()))?;
    let per_horizon: Vec<serde_json::Value> = cfg
        .horizons
        .iter()
        .map(|&t| {
            let (gap, crossings) = min_gap_from_samples(&diag.cdf, t);
            serde_json::json!({"horizon": t, "min_gap": gap, "crossings": crossings})
        })
        .collect();
    Ok(serde_json::json!({
        "n_samples": diag.n_samples,
        "per_horizon": per_horizon,
        "eigen_floor": diag.eigen_floor,
        "joint_eigen_floor": diag.joint_eigen_floor,
        "cdf_slope": diag.cdf_slope,
        "cdf_grid": diag.cdf_grid,
    }))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn default_out(config: &ExperimentConfig, path: &Path) -> PathBuf {
    if let Some(dir) = &config.output_dir {
        return base_dir(path).join(dir);
    }
    let stem = config
        .name
        .clone()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "experiment".into());
    PathBuf::from("results").join(stem.replace([' ', '/', ','], "_"))
}

fn run_one(config: ExperimentConfig, base: &Path, out: &Path) -> Result<crate::runner::Experiment> {
    let exp = run_experiment(prepare(config, base)?)?;
    write_bundle(out, &exp)?;
    Ok(exp)
}

/// Sets the value at a dotted path; numeric segments index arrays.
pub fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        cur = match cur {
            serde_json::Value::Array(items) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| HarnessError::config(path, format!("`{seg}` is not an index")))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| HarnessError::config(path, format!("index {i} out of range")))?
            }
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*seg)
                    .ok_or_else(|| HarnessError::config(path, format!("no key `{seg}`")))?
            }
            _ => {
                return Err(HarnessError::config(
                    path,
                    format!("cannot descend into `{seg}`"),
                ))
            }
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Err(HarnessError::config(path, "empty path"))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            out,
            horizon,
            replicas,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(r) = replicas {
                cfg.replicas = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| default_out(&cfg, &config));
            let exp = run_one(cfg, &base_dir(&config), &out)?;
            for label in exp.labels() {
                if let Some(v) = exp.mean_final_max_regret(&label) {
                    println!("{label}: final max regret {v:.4}");
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| HarnessError::io(&config, e))?;
            let root: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| HarnessError::config("<root>", e.to_string()))?;
            let base_cfg = ExperimentConfig::from_json(&text)?;
            let out = out.unwrap_or_else(|| default_out(&base_cfg, &config).join("sweep"));
            let mut rows: Vec<(String, String, f64, f64)> = Vec::new();
            for raw in &values {
                let value: serde_json::Value = serde_json::from_str(raw)
                    .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
                let mut doc = root.clone();
                set_path(&mut doc, &param, value)?;
                let cfg = ExperimentConfig::from_json(&doc.to_string())?;
                let dir = out.join(format!("{}={}", param, raw.replace('/', "_")));
                let exp = run_one(cfg, &base_dir(&config), &dir)?;
                for (p, label) in exp.labels().iter().enumerate() {
                    let finals: Vec<f64> = exp.runs(p).map(|r| r.final_max_regret()).collect();
                    let (m, s) = mean_stderr(&finals);
                    rows.push((raw.clone(), label.clone(), m, s));
                }
            }
            let mut csv_out =
                String::from("value,policy,final_max_regret_mean,final_max_regret_stderr\n");
            for (v, l, m, s) in &rows {
                csv_out.push_str(&format!("{v},{l},{m},{s}\n"));
            }
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            write_text(&out.join("sweep.csv"), &csv_out)?;
            let means: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            for (v, l, m, s) in &rows {
                println!("{param}={v} {l}: final max regret {m:.4} +/- {s:.4}");
            }
            println!(
                "spread {:.4} ({:.1}% of max)",
                hi - lo,
                100.0 * (hi - lo) / hi
            );
            println!("wrote {}", out.display());
        }
        Command::DiagnoseGap { env, out } => {
            let text = std::fs::read_to_string(&env).map_err(|e| HarnessError::io(&env, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let cfg: GapConfig = serde_path_to_error::deserialize(de).map_err(|e| {
                HarnessError::config(e.path().to_string(), e.into_inner().to_string())
            })?;
            let report = serde_json::to_string_pretty(&diagnose_gap(&cfg)?)?;
            match out {
                Some(p) => write_text(&p, &report)?,
                None => println!("{report}"),
            }
        }
        Command::OracleCheck { instances, seed } => {
            let report = oracle_check(instances, seed);
            println!(
                "oracle check: {} instances, {} player checks, {} violations, {} malformed supports, min slack {:.3e}",
                report.instances,
                report.checks,
                report.violations.len(),
                report.malformed,
                report.min_slack
            );
            for v in &report.violations {
                println!("  {}", serde_json::to_string(v)?);
            }
            if !report.passed() {
                return Err(HarnessError::config("oracle-check", "guarantee violated"));
            }
        }
        Command::Reproduce {
            figure,
            out,
            horizon,
            replicas,
            seed,
        } => {
            let fig = Figure::parse(&figure).ok_or_else(|| {
                HarnessError::config(
                    "figure",
                    format!("unknown figure {figure}; expected fig1..fig6 or figH"),
                )
            })?;
            if horizon == 0 || replicas == 0 {
                return Err(HarnessError::config(
                    "reproduce",
                    "horizon and replicas must be positive",
                ));
            }
            let dir = reproduce(
                fig,
                &FigureOptions {
                    horizon,
                    replicas,
                    seed,
                    out,
                },
            )?;
            println!("wrote {}", dir.display());
        }
        Command::Plot {
            curves,
            metric,
            out,
        } => {
            let svg = svg_from_csv(&curves, &metric, &format!("max {metric} over players"))?;
            write_text(&out, &svg)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code: 0 on success, 1 on config or runtime errors and 2 on
/// usage errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
