//! Command-line front end: each subcommand builds an invocation, runs it into
//! an output directory and prints the manifest summary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpkpz::harness::config::{ExperimentConfig, GSpec, LawConfig, RhoConfig};
use dpkpz::harness::output::{
    self, ColehopfJob, EtaJob, Invocation, PolymerJob, PolymerOutput, WalkJob, WalkQuantity,
};
use dpkpz::{Error, Result};

#[derive(Parser)]
#[command(name = "dpkpz", version, about = "Directed polymer simulations and their deterministic KPZ limit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random-walk quantities: return probability, coincidence counts, meeting probability, local CLT.
    Walk(WalkArgs),
    /// Polymer surface per site or aggregated over environments.
    Polymer(PolymerArgs),
    /// Discrete heat recursion against the Cole–Hopf solution along an eps ladder.
    Colehopf(ColehopfArgs),
    /// Free-energy estimates E log Y(t, 0).
    Eta(EtaArgs),
    /// Smoothed and unsmoothed rescaled surface per environment and scale.
    Scale(ConfigArgs),
    /// Mean squared error of the smoothed surface against h along the eps ladder.
    Theorem(ConfigArgs),
    /// Squared gap of the weak integral against its limit along the eps ladder.
    Corollary(ConfigArgs),
    /// Re-executes the run recorded in a manifest.
    Rerun {
        /// manifest.json, or the run directory holding it.
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    Rho,
    Intersections,
    Kappa,
    LocalClt,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 100_000)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rho")]
    quantity: Quantity,
    /// Start of the second walk for `intersections` (defaults to the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offset: Option<Vec<i64>>,
    #[arg(long, default_value_t = 20)]
    max_k: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<i64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<i64>>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    n_list: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SiteOutput {
    Sites,
    Aggregate,
}

/// Optional return-probability run used to report the `beta` regime.
#[derive(Args)]
struct RegimeArgs {
    /// Estimate beta_0 and note whether beta lies in the L2 regime.
    #[arg(long)]
    check_regime: bool,
    #[arg(long, default_value_t = 10_000)]
    rho_horizon: u64,
    #[arg(long, default_value_t = 100_000)]
    rho_replicates: u64,
    #[arg(long, default_value_t = 0)]
    rho_seed: u64,
}

impl RegimeArgs {
    fn config(&self) -> Option<RhoConfig> {
        self.check_regime.then_some(RhoConfig {
            horizon: self.rho_horizon,
            replicates: self.rho_replicates,
            seed: self.rho_seed,
        })
    }
}

#[derive(Args)]
struct PolymerArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    beta: f64,
    /// standard-gaussian | affine:SCALE,SHIFT | csv:PATH,LIPSCHITZ
    #[arg(long, default_value = "standard-gaussian")]
    law: String,
    /// zero | constant:C | linear:A1,..,AD | capped-norm:CAP
    #[arg(long, default_value = "zero")]
    g: String,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long)]
    t: u64,
    /// L1 radius of the exact region kept at the final time.
    #[arg(long = "box", default_value_t = 0)]
    radius: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, value_enum, default_value = "aggregate")]
    output: SiteOutput,
    #[command(flatten)]
    regime: RegimeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ColehopfArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    g: String,
    #[arg(long)]
    t: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    eps: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EtaArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value = "standard-gaussian")]
    law: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    t_list: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    regime: RegimeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_floats(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {v:?}: {e}"))))
        .collect()
}

fn parse_law(spec: &str) -> Result<LawConfig> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "standard-gaussian" => Ok(LawConfig::StandardGaussian),
        "affine" => match parse_floats(rest)?.as_slice() {
            &[scale, shift] => Ok(LawConfig::AffineGaussian { scale, shift }),
            _ => Err(Error::InvalidInput("affine law needs SCALE,SHIFT".into())),
        },
        "csv" => {
            let (path, lip) =
                rest.rsplit_once(',').ok_or_else(|| Error::InvalidInput("csv law needs PATH,LIPSCHITZ".into()))?;
            let lipschitz = lip.trim().parse().map_err(|_| Error::InvalidInput(format!("bad lipschitz {lip:?}")))?;
            Ok(LawConfig::LipschitzCsv { path: path.into(), lipschitz })
        }
        other => Err(Error::InvalidInput(format!("unknown law {other:?}"))),
    }
}

fn parse_g(spec: &str) -> Result<GSpec> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let one = |v: Vec<f64>| match v.as_slice() {
        &[x] => Ok(x),
        _ => Err(Error::InvalidInput(format!("{kind} takes one number"))),
    };
    match kind {
        "zero" => Ok(GSpec::Zero),
        "constant" => Ok(GSpec::Constant { value: one(parse_floats(rest)?)? }),
        "linear" => Ok(GSpec::Linear { a: parse_floats(rest)? }),
        "capped-norm" => Ok(GSpec::CappedNorm { cap: one(parse_floats(rest)?)? }),
        other => Err(Error::InvalidInput(format!("unknown initial condition {other:?}"))),
    }
}

fn load_config(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let out = match (&args.out, &cfg.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => args.config.parent().unwrap_or(Path::new(".")).join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(Error::Config("no output directory: pass --out or set `output`".into())),
    };
    Ok((cfg, out))
}

fn build(command: Command) -> Result<(Option<Invocation>, PathBuf, Option<PathBuf>)> {
    Ok(match command {
        Command::Walk(a) => {
            let quantity = match a.quantity {
                Quantity::Rho => WalkQuantity::Rho,
                Quantity::Intersections => WalkQuantity::Intersections {
                    offset: a.offset.unwrap_or_else(|| vec![0; a.d]),
                    max_k: a.max_k,
                },
                Quantity::Kappa => WalkQuantity::Kappa {
                    x: a.x.ok_or_else(|| Error::InvalidInput("kappa needs --x".into()))?,
                    y: a.y.ok_or_else(|| Error::InvalidInput("kappa needs --y".into()))?,
                },
                Quantity::LocalClt => WalkQuantity::LocalClt { n_list: a.n_list },
            };
            let job = WalkJob { d: a.d, horizon: a.horizon, replicates: a.replicates, seed: a.seed, quantity };
            (Some(Invocation::Walk(job)), a.out, None)
        }
        Command::Polymer(a) => {
            let job = PolymerJob {
                d: a.d,
                law: parse_law(&a.law)?,
                beta: a.beta,
                g: parse_g(&a.g)?,
                eps: a.eps,
                t: a.t,
                radius: a.radius,
                seed: a.seed,
                replicates: a.replicates,
                output: match a.output {
                    SiteOutput::Sites => PolymerOutput::Sites,
                    SiteOutput::Aggregate => PolymerOutput::Aggregate,
                },
                rho: a.regime.config(),
            };
            (Some(Invocation::Polymer(job)), a.out, None)
        }
        Command::Colehopf(a) => {
            let job = ColehopfJob { d: a.d, beta: a.beta, g: parse_g(&a.g)?, t: a.t, x: a.x, eps: a.eps };
            (Some(Invocation::Colehopf(job)), a.out, None)
        }
        Command::Eta(a) => {
            let job = EtaJob {
                d: a.d,
                law: parse_law(&a.law)?,
                beta: a.beta,
                t_list: a.t_list,
                replicates: a.replicates,
                seed: a.seed,
                rho: a.regime.config(),
            };
            (Some(Invocation::Eta(job)), a.out, None)
        }
        Command::Scale(a) => {
            let (cfg, out) = load_config(&a)?;
            (Some(Invocation::Scale(cfg)), out, None)
        }
        Command::Theorem(a) => {
            let (cfg, out) = load_config(&a)?;
            (Some(Invocation::Theorem(cfg)), out, None)
        }
        Command::Corollary(a) => {
            let (cfg, out) = load_config(&a)?;
            (Some(Invocation::Corollary(cfg)), out, None)
        }
        Command::Rerun { manifest, out } => (None, out, Some(manifest)),
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot set up {n} threads: {e}")))?;
    }
    let (invocation, out, manifest) = build(cli.command)?;
    let result = match (invocation, manifest) {
        (Some(inv), _) => output::execute(&inv, &out)?,
        (None, Some(m)) => output::rerun(&m, &out)?,
        (None, None) => unreachable!("every command yields an invocation or a manifest"),
    };
    let summary = serde_json::json!({
        "command": result.invocation.command(),
        "out": out,
        "files": result.files,
        "notes": result.notes,
        "wall_time_s": result.wall_time_s,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "category": e.category(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
