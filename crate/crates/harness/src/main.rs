use clap::{Args, Parser, Subcommand};
use ofnav_core::Execution;
use ofnav_harness::{
    estimate_dir, export_report, export_sweep, run_oracle, run_pipeline_with, run_sweep,
    simulate_to_dir, DepthChoice, HarnessError, OracleDepth, RunReport, ScenarioConfig, SweepAxis,
    SweepConfig,
};
use ofnav_sim::ScenarioKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Optical-flow velocimetry experiments on simulated lunar descents.
#[derive(Parser, Debug)]
#[command(name = "ofnav", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Command,
}

/// Flags layered over the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    frame_rate: Option<f64>,
    #[arg(long, global = true)]
    resolution: Option<u32>,
    /// Pixel noise standard deviation in 8-bit levels.
    #[arg(long, global = true)]
    camera_noise: Option<f64>,
    /// Attitude (rad) and rate (rad/s) noise standard deviation.
    #[arg(long, global = true)]
    state_noise: Option<f64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render frames and write them with telemetry and the resolved config.
    Simulate {
        /// TOML file or scenario name.
        config: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Render and process a scenario in one go.
    Run {
        config: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        model: Option<DepthChoice>,
    },
    /// Process a directory written by `simulate`.
    Estimate {
        dir: PathBuf,
        #[arg(long, value_enum)]
        model: Option<DepthChoice>,
        /// Configuration to use instead of the one stored in the directory.
        #[arg(long)]
        config: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one pipeline per value of a single axis.
    Sweep {
        config: String,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Exact injected flow instead of rendering and tracking.
    Oracle {
        config: String,
        #[arg(long, value_enum, default_value = "exact")]
        depth: OracleDepth,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print a scenario's default configuration as TOML.
    Config {
        #[arg(default_value = "flat")]
        scenario: String,
    },
}

fn load_config(arg: &str) -> Result<ScenarioConfig, HarnessError> {
    let path = Path::new(arg);
    if path.exists() {
        return ScenarioConfig::load(path);
    }
    arg.parse::<ScenarioKind>()
        .map(ScenarioConfig::preset)
        .map_err(|_| HarnessError::Config(format!("{arg}: no such file or scenario")))
}

impl Overrides {
    fn apply(&self, mut c: ScenarioConfig) -> Result<ScenarioConfig, HarnessError> {
        if let Some(s) = self.seed {
            c.seed = s;
            c.noise.seed = s;
        }
        if let Some(r) = self.frame_rate {
            c.frame_rate = r;
        }
        if let Some(r) = self.resolution {
            c.resolution = r;
        }
        if let Some(s) = self.camera_noise {
            c.noise.camera_sigma = s;
        }
        if let Some(s) = self.state_noise {
            c.noise.attitude_sigma = s;
            c.noise.rate_sigma = s;
        }
        c.validate()?;
        Ok(c)
    }

    fn execution(&self) -> Result<Execution, HarnessError> {
        match self.threads {
            None => Ok(Execution::Parallel),
            Some(0) => Err(HarnessError::Config("--threads must be at least 1".into())),
            Some(1) => Ok(Execution::Sequential),
            Some(n) => {
                #[cfg(feature = "parallel")]
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                #[cfg(not(feature = "parallel"))]
                eprintln!("built without the parallel feature; ignoring --threads {n}");
                Ok(Execution::Parallel)
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

fn print_summary(r: &RunReport) {
    let a = &r.aggregates;
    println!("{}", r.label);
    println!(
        "  pairs {}  failed {}  excluded {}  rel mean {}  max {}  min {}  std {}  mean abs {} m/s",
        a.n_frames,
        a.n_failed,
        a.n_excluded,
        fmt_opt(a.rel_mean),
        fmt_opt(a.rel_max),
        fmt_opt(a.rel_min),
        fmt_opt(a.rel_std),
        fmt_opt(a.mean_abs_error)
    );
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let exec = cli.overrides.execution()?;
    let o = &cli.overrides;
    match cli.cmd {
        Command::Simulate { config, out } => {
            let cfg = o.apply(load_config(&config)?)?;
            let n = simulate_to_dir(&cfg, &out, exec)?;
            println!("wrote {n} frames to {}", out.display());
        }
        Command::Run { config, out, model } => {
            let mut cfg = o.apply(load_config(&config)?)?;
            if let Some(m) = model {
                cfg.depth_model = m;
            }
            let r = run_pipeline_with(&cfg, exec)?;
            export_report(&r, &out)?;
            print_summary(&r);
        }
        Command::Estimate {
            dir,
            model,
            config,
            out,
        } => {
            let stored = dir.join(ofnav_harness::pipeline::CONFIG_FILE);
            let base = match config {
                Some(c) => load_config(&c)?,
                None if stored.exists() => ScenarioConfig::load(&stored)?,
                None => ScenarioConfig::default(),
            };
            let mut cfg = o.apply(base)?;
            if let Some(m) = model {
                cfg.depth_model = m;
            }
            let r = estimate_dir(&cfg, &dir, exec)?;
            export_report(&r, &out)?;
            print_summary(&r);
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let base = o.apply(load_config(&config)?)?;
            let sw = SweepConfig { base, axis, values };
            let points = run_sweep(&sw, exec)?;
            export_sweep(axis, &points, &out)?;
            for p in &points {
                println!("{} = {}", axis.name(), p.value);
                print_summary(&p.report);
            }
        }
        Command::Oracle { config, depth, out } => {
            let cfg = o.apply(load_config(&config)?)?;
            let r = run_oracle(&cfg, depth, exec)?;
            if let Some(out) = out {
                export_report(&r, &out)?;
            }
            print_summary(&r);
        }
        Command::Config { scenario } => {
            let cfg = o.apply(load_config(&scenario)?)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
