use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fracdim::fbm::GeneratorKind;
use fracdim::harness::{parse_spec, report_render, run, ExperimentSpec, RunReport};
use fracdim::rde::SchemeKind;
use std::process::ExitCode;

/// Sampling, rough-path solving and dimension experiments for
/// fBm-driven differential equations.
#[derive(Parser)]
#[command(name = "fracdim", version)]
struct Cli {
    /// Base seed; member i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output root; results go to <out>/<name>/.
    #[arg(long, global = true, env = "FRACDIM_OUT")]
    out: Option<String>,
    /// Print the JSON report instead of the table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample fBm drivers and write them as path files.
    Gen(Common),
    /// Solve the equation for each member and write the solutions.
    Solve(Common),
    /// Box-counting dimension of images or graphs.
    Dim {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "image")]
        kind: DimKind,
    },
    /// Level-set dimension or, when dH > 1, the vanishing tube-hit trend.
    Levelset(Common),
    /// Tail of the largest increment and its time scaling.
    Tail(Common),
    /// Increment density and, with --bivariate, the joint density.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bivariate: bool,
    },
    /// Energy integrals under grid refinement.
    Energy(Common),
    /// Mollified occupation measures at the level.
    Mu(Common),
    /// Run every task of a config file.
    Repro {
        config: std::path::PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DimKind {
    Image,
    Graph,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Auto,
    Step2Davie,
    Step3,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Grid steps (a power of two).
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Catalog names or file:<path>; repeat for several field sets.
    #[arg(long, default_value = "identity")]
    fields: Vec<String>,
    #[arg(long, value_enum, default_value = "circulant")]
    generator: Generator,
    #[arg(long, value_enum, default_value = "auto")]
    scheme: Scheme,
    /// Run name (default: the verb).
    #[arg(long)]
    name: Option<String>,
    /// Task parameter as task.key=value; repeatable.
    #[arg(long = "param", value_name = "TASK.KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Cholesky,
    Circulant,
}

impl Common {
    fn spec(&self, verb: &str) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(self.name.clone().unwrap_or_else(|| verb.to_string()), self.hurst, self.dim, self.n)?;
        spec.ensemble = self.ensemble;
        spec.fields = self.fields.clone();
        spec.generator = match self.generator {
            Generator::Cholesky => GeneratorKind::Cholesky,
            Generator::Circulant => GeneratorKind::Circulant,
        };
        spec.scheme = match self.scheme {
            Scheme::Auto => SchemeKind::for_hurst(spec.hurst),
            Scheme::Step2Davie => SchemeKind::Step2Davie,
            Scheme::Step3 => SchemeKind::Step3,
        };
        for p in &self.params {
            let (k, v) = p.split_once('=').with_context(|| format!("--param '{p}' is not task.key=value"))?;
            spec.estimator_params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(spec)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let (mut spec, tasks): (ExperimentSpec, Vec<String>) = match &cli.command {
        Command::Gen(c) => (c.spec("gen")?, vec!["generate".into()]),
        Command::Solve(c) => (c.spec("solve")?, vec!["solve".into()]),
        Command::Dim { common, kind } => match kind {
            DimKind::Image => (common.spec("dim")?, vec!["dim_image".into()]),
            DimKind::Graph => (common.spec("dim")?, vec!["dim_graph".into()]),
        },
        Command::Levelset(c) => (c.spec("levelset")?, vec!["levelset".into()]),
        Command::Tail(c) => (c.spec("tail")?, vec!["tail".into()]),
        Command::Density { common, bivariate } => {
            let tasks = if *bivariate { vec!["density".into(), "bivariate".into()] } else { vec!["density".into()] };
            (common.spec("density")?, tasks)
        }
        Command::Energy(c) => (c.spec("energy")?, vec!["energy".into()]),
        Command::Mu(c) => (c.spec("mu")?, vec!["mu".into()]),
        Command::Repro { config } => {
            let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let spec = parse_spec(&text).with_context(|| format!("parsing {}", config.display()))?;
            let tasks = spec.tasks.clone();
            if tasks.is_empty() {
                bail!("{} requests no tasks; add a [task] section", config.display());
            }
            (spec, tasks)
        }
    };
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        spec.output_dir = out.clone();
    }
    let report: RunReport = run(&spec, &tasks)?;
    let (text, json) = report_render(&report);
    println!("{}", if cli.json { json } else { text });
    eprintln!("wrote {}/{}", spec.output_dir, spec.name);
    Ok(ExitCode::from(report.exit_code() as u8))
}

