use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypoloop::io::Report;
use hypoloop::modelfile::{bundled_models_dir, ModelFile};
use hypoloop::pipeline::{self, ChartMode, Options};
use hypoloop::simulate::{SimConfig, DEFAULT_CHUNK_SIZE, DEFAULT_STEPS};
use hypoloop::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hypoloop", version, about = "Small-time loop laws of hypoelliptic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bracket flag, step, weights and homogeneous dimension at the base point
    Analyze(Common),
    /// Validate the model's chart or construct an adapted one
    Chart {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "validate")]
        construct: bool,
        #[arg(long)]
        validate: bool,
    },
    /// Nilpotent approximation and its structural checks
    Nilpotent(Common),
    /// Simulate the diffusion and export the ensemble as CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: Sim,
        /// Record times in (0, 1] (the terminal time is always recorded)
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Simulate in adapted coordinates and add v and lambda_min columns
        #[arg(long)]
        malliavin: bool,
        /// Also write ensemble.bin next to ensemble.csv
        #[arg(long, requires = "out")]
        binary: bool,
    },
    /// Log-log slope of the on-diagonal heat kernel
    HeatSlope {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: Sim,
        /// Allowed distance between the slope and Q/2
        #[arg(long, default_value_t = 0.3)]
        tolerance: f64,
    },
    /// Loop comparison with the limit, tightness and sqrt(eps) collapse
    Loops {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: Sim,
        /// Paths simulated for the limiting system (defaults to --paths)
        #[arg(long)]
        limit_paths: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        min_accepted: usize,
    },
    /// Reweighted Brownian bridge oracle for the Example's limit loop
    OracleBridge {
        /// Number of bridges
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Limit paths simulated for the cross-check (0 skips it)
        #[arg(long, default_value_t = 200_000)]
        reference_paths: usize,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Model file, or the name of a bundled model
    model: String,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_degree: Option<u32>,
    /// Directory for reports and CSV output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Sim {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Noise scale; repeat or separate by commas for a grid
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Acceptance radius (loops) or ball radius factor (heat slope)
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
}

struct Resolved {
    eps: Vec<f64>,
    config: SimConfig,
    radius: f64,
}

impl Sim {
    fn resolve(&self, mf: &ModelFile) -> Resolved {
        let d = &mf.defaults;
        let eps = if self.eps.is_empty() { d.eps.clone() } else { self.eps.clone() };
        let mut config = SimConfig::new(
            eps.first().copied().unwrap_or(1.0),
            self.steps.or(d.steps).unwrap_or(DEFAULT_STEPS),
            self.paths.or(d.paths).unwrap_or(10_000),
            self.seed.or(d.seed).unwrap_or(0),
        )
        .with_chunk_size(self.chunk_size.unwrap_or(DEFAULT_CHUNK_SIZE));
        if let Some(t) = self.threads {
            config = config.with_threads(t);
        }
        Resolved {
            eps,
            config,
            radius: self.radius.or(d.radius).unwrap_or(0.1),
        }
    }
}

impl Common {
    fn load(&self) -> Result<ModelFile> {
        let p = Path::new(&self.model);
        if p.exists() {
            return ModelFile::load(p);
        }
        let bundled = bundled_models_dir().join(format!("{}.model", self.model));
        if !self.model.contains(['/', '.']) && bundled.exists() {
            return ModelFile::load(&bundled);
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("model file '{}' not found", self.model),
        )))
    }

    fn options(&self) -> Options {
        let mut o = Options::default();
        if let Some(d) = self.max_depth {
            o.max_depth = d;
        }
        if let Some(d) = self.max_degree {
            o.max_degree = d;
            o.max_correction_degree = Some(d);
        }
        o
    }
}

fn emit(report: &Report, out: Option<&Path>) -> Result<()> {
    print!("{}", report.render());
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), report.render())?;
        fs::write(dir.join("stats.csv"), report.stats_csv())?;
        if !report.long.is_empty() {
            fs::write(dir.join("long.csv"), report.long_csv())?;
        }
    }
    Ok(())
}

fn run(cmd: Command) -> Result<Report> {
    match cmd {
        Command::Analyze(c) => {
            let r = pipeline::analyze(&c.load()?, &c.options())?;
            emit(&r, c.out.as_deref())?;
            Ok(r)
        }
        Command::Chart { common, construct, validate } => {
            let mode = match (construct, validate) {
                (true, _) => ChartMode::Construct,
                (_, true) => ChartMode::Validate,
                _ => return Err(Error::Config("chart needs --construct or --validate".into())),
            };
            let (r, _) = pipeline::chart(&common.load()?, mode, &common.options())?;
            emit(&r, common.out.as_deref())?;
            Ok(r)
        }
        Command::Nilpotent(c) => {
            let out = pipeline::nilpotent(&c.load()?, &c.options())?;
            emit(&out.report, c.out.as_deref())?;
            Ok(out.report)
        }
        Command::Simulate {
            common,
            sim,
            times,
            malliavin,
            binary,
        } => {
            let mf = common.load()?;
            let res = sim.resolve(&mf);
            // without --eps the first of the model's defaults is used
            if sim.eps.len() > 1 {
                return Err(Error::Config("simulate takes a single --eps".into()));
            }
            let (r, table) = pipeline::simulate(&mf, &res.config, &times, malliavin, &common.options())?;
            match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    table.write_csv(fs::File::create(dir.join("ensemble.csv"))?)?;
                    if binary {
                        table.write_binary(std::io::BufWriter::new(fs::File::create(dir.join("ensemble.bin"))?))?;
                    }
                    emit(&r, Some(dir))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    table.write_csv(&mut lock)?;
                    lock.flush()?;
                    eprint!("{}", r.render());
                }
            }
            Ok(r)
        }
        Command::HeatSlope { common, sim, tolerance } => {
            let mf = common.load()?;
            let res = sim.resolve(&mf);
            let out = pipeline::heat_slope(&mf, &res.eps, &res.config, res.radius, tolerance, &common.options())?;
            emit(&out.report, common.out.as_deref())?;
            Ok(out.report)
        }
        Command::Loops {
            common,
            sim,
            limit_paths,
            min_accepted,
        } => {
            let mf = common.load()?;
            let res = sim.resolve(&mf);
            let limit = limit_paths.unwrap_or(res.config.paths);
            let out = pipeline::loops(&mf, &res.eps, &res.config, limit, res.radius, min_accepted, &common.options())?;
            emit(&out.report, common.out.as_deref())?;
            Ok(out.report)
        }
        Command::OracleBridge {
            n,
            steps,
            seed,
            reference_paths,
            radius,
            threads,
            out,
        } => {
            let reference = if reference_paths > 0 {
                let mf = hypoloop::modelfile::bundled("example_grushin_like")?;
                let nil = pipeline::nilpotent(&mf, &Options::default())?;
                let mut cfg = SimConfig::new(1.0, steps, reference_paths, seed.wrapping_add(1));
                if let Some(t) = threads {
                    cfg = cfg.with_threads(t);
                }
                let l = hypoloop::loops::sample_limit_loops(&nil.system, &cfg, radius, &[0.5], 100)?;
                Some(l.coordinate_at(0, 0))
            } else {
                None
            };
            let r = pipeline::oracle_bridge(n, steps, seed, reference.as_deref())?;
            emit(&r, out.as_deref())?;
            Ok(r)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(r) if r.passed() => ExitCode::SUCCESS,
        Ok(r) => {
            eprintln!("check failed: {}", r.failing().join(", "));
            ExitCode::from(2)
        }
        Err(Error::CheckFailed { check, detail }) => {
            eprintln!("check failed: {check}: {detail}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
