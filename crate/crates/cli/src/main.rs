use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use genclass::genclass::{load_classifier, sample_grid};
use genclass::harness::{
    bar_chart_svg, compare, compare_csv, default_grid, load_data, parse_grid, run, sample_curve_svg, sweep,
    ExperimentConfig, Profile, RunResult,
};
use genclass::stream::Method;

#[derive(Parser)]
#[command(name = "genclass", version, about = "Class-incremental learning experiments")]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for `sample-grid` and `plot`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Ci,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Ci => Profile::Ci,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    /// Final accuracy per method.
    Bar,
    /// Accuracy against importance samples.
    Samples,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one method over all seeds.
    Run {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        benchmark: Option<String>,
        /// Override a configuration key, e.g. `--set si_lambda=100`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Save the trained class models here (generative classifier only).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Grid search with the first seed only.
    Sweep {
        #[arg(long)]
        method: Option<String>,
        /// `key=v1,v2;key2=v3`; defaults to the method's standard grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Table of final accuracies from saved results.
    Compare {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// PGM grid of samples, one row per class.
    SampleGrid {
        /// Directory of a saved generative classifier.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_row: usize,
    },
    /// SVG chart from saved results.
    Plot {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "bar")]
        kind: PlotKind,
    },
    /// Gradient, oracle, protocol and reproducibility checks.
    Selftest,
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    let profile = cli.profile.map(Profile::from).unwrap_or_default();
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path, profile)?;
            if let Some(p) = cli.profile {
                c.apply_profile(p.into());
            }
            c
        }
        None => ExperimentConfig::for_profile(profile),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn configure(cli: &Cli, method: &Option<String>, benchmark: Option<&String>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = base_config(cli)?;
    if let Some(m) = method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(b) = benchmark {
        cfg.set("benchmark", b)?;
    }
    for o in overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` needs KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.out = cli.out.clone().or(cfg.out);
    cfg.validate()?;
    Ok(cfg)
}

fn result_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(format!("{}-{}", cfg.method.as_str(), cfg.hash())))
}

fn load_results(paths: &[PathBuf]) -> Result<Vec<RunResult>> {
    paths
        .iter()
        .map(|p| RunResult::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run {
            method,
            benchmark,
            overrides,
            models,
        } => {
            let cfg = configure(cli, method, benchmark.as_ref(), overrides)?;
            let dir = result_dir(&cfg);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("config.txt"), cfg.to_text())?;
            info!("{} on {}: seeds {:?}, config {}", cfg.method.as_str(), cfg.benchmark, cfg.seeds, cfg.hash());
            let result = run(&cfg, models.as_deref())?;
            result.save(&dir)?;
            for w in result.warnings() {
                warn!("{w}");
            }
            print!("{}", compare(std::slice::from_ref(&result))?);
            println!("results in {}", dir.display());
        }
        Command::Sweep { method, grid, overrides } => {
            let cfg = configure(cli, method, None, overrides)?;
            let axes = match grid {
                Some(g) => parse_grid(g)?,
                None => default_grid(cfg.method)?,
            };
            let (train, test) = load_data(&cfg)?;
            let outcome = sweep(&cfg, &axes, &train, &test)?;
            let dir = cfg
                .out
                .clone()
                .unwrap_or_else(|| Path::new("results").join(format!("sweep-{}-{}", cfg.method.as_str(), cfg.hash())));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("grid.csv"), outcome.table())?;
            fs::write(dir.join("best.txt"), outcome.best_config.to_text())?;
            print!("{}", outcome.table());
            let best = &outcome.points[outcome.best];
            println!("best: {:?} at {:.2}%", best.assignments, 100.0 * best.accuracy);
            println!("results in {}", dir.display());
        }
        Command::Compare { results, csv } => {
            let results = load_results(results)?;
            let table = if *csv { compare_csv(&results)? } else { compare(&results)? };
            match &cli.out {
                Some(path) => write_file(path, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::SampleGrid { models, per_row } => {
            let gc = load_classifier(models)?;
            let classes = gc.classes();
            let seed = cli.seed.unwrap_or(0);
            let img = sample_grid(&gc, &classes, *per_row, seed)?;
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("samples.pgm"));
            write_file(&path, &img.to_pgm())?;
        }
        Command::Plot { results, kind } => {
            let results = load_results(results)?;
            let svg = match kind {
                PlotKind::Bar => bar_chart_svg(&results)?,
                PlotKind::Samples => {
                    if results.len() != 1 {
                        bail!("the sample curve takes exactly one result");
                    }
                    sample_curve_svg(&results[0].sample_curve()?)?
                }
            };
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("chart.svg"));
            write_file(&path, svg.as_bytes())?;
        }
        Command::Selftest => {
            let checks = genclass::selftest::run_all();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<genclass::Error>(), Some(genclass::Error::Usage(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
