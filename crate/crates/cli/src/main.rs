use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mzmetro_cli::config::{ConfigFile, RunKind, StateSpec};
use mzmetro_cli::run::{run_all, state_info, Overrides};
use mzmetro_cli::CliError;

/// Bayesian phase estimation for two-mode interferometers.
#[derive(Parser, Debug)]
#[command(name = "mzmetro", version)]
struct Cli {
    /// TOML experiment file; subcommand flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "METROLOGY_THREADS", global = true)]
    threads: Option<String>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args, Debug, Default)]
struct StateArgs {
    /// coherent, noon, tsv, ses, tsc-opt or tsc-int
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// NOON photon number.
    #[arg(long)]
    n: Option<usize>,
    /// Per-mode Fock cutoff.
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct PriorArgs {
    /// Prior width.
    #[arg(long = "w0")]
    w0: Option<f64>,
    /// Prior centre.
    #[arg(long = "theta-bar", allow_hyphen_values = true)]
    theta_bar: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SweepArgs {
    #[arg(long)]
    mu_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trajectories per checkpoint.
    #[arg(long)]
    samples: Option<usize>,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Photon statistics and Fisher information of a probe.
    StateInfo {
        #[command(flatten)]
        state: StateArgs,
        /// MSE curve CSV from which to read off the settling repetition count.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Optimal single-shot bound and estimator spectrum.
    Personick {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        prior: PriorArgs,
        /// Spectrum CSV (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bound CSV (summary on stderr if absent).
        #[arg(long)]
        bound_out: Option<PathBuf>,
    },
    /// Repeated-measurement MSE curve.
    Simulate {
        #[command(flatten)]
        state: StateArgs,
        /// optimal, counting-even, counting-odd, quadratures,
        /// undo-preparation, parity or collective
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        quadrature_angle: Option<f64>,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// MSE curve of the two-photon probe with loss in one arm.
    Loss {
        /// Transmissivity of the lossy arm.
        #[arg(long)]
        eta: Option<f64>,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Runs every experiment in the --config file.
    Run,
}

fn overrides(state: StateArgs, prior: PriorArgs, sweep: SweepArgs) -> Overrides {
    Overrides {
        state: state.state,
        r: state.r,
        alpha: state.alpha,
        n: state.n,
        cutoff: state.cutoff,
        w0: prior.w0,
        theta_bar: prior.theta_bar,
        mu_max: sweep.mu_max,
        seed: sweep.seed,
        samples: sweep.samples,
        out: sweep.out,
        ..Default::default()
    }
}

fn init_threads(spec: Option<&str>) -> Result<(), CliError> {
    let Some(s) = spec else { return Ok(()) };
    let n: usize = s
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("METROLOGY_THREADS must be a positive integer, got '{s}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn real_main() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let ok = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { Ok(()) } else { Err(CliError::Config("invalid command line".into())) };
        }
    };
    init_threads(cli.threads.as_deref())?;
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;

    let (kind, o) = match cli.command {
        None | Some(Cmd::Run) => {
            let Some(file) = file else {
                return Err(CliError::Config("nothing to do: pass a subcommand or --config".into()));
            };
            return run_all(&file.experiments)?.write();
        }
        Some(Cmd::StateInfo { state, curve }) => {
            let name = state.state.ok_or_else(|| CliError::Config("--state is required".into()))?;
            let spec = StateSpec { name, r: state.r, alpha: state.alpha, n: state.n, cutoff: state.cutoff };
            return state_info(&spec, curve.as_deref())?.write_to(None);
        }
        Some(Cmd::Personick { state, prior, out, bound_out }) => {
            let mut o = overrides(state, prior, SweepArgs::default());
            o.out = out;
            o.bound_out = bound_out;
            (RunKind::Personick, o)
        }
        Some(Cmd::Simulate { state, scheme, quadrature_angle, prior, sweep }) => {
            let mut o = overrides(state, prior, sweep);
            o.scheme = scheme;
            o.quadrature_angle = quadrature_angle;
            (RunKind::Simulate, o)
        }
        Some(Cmd::Loss { eta, prior, sweep }) => {
            let mut o = overrides(StateArgs::default(), prior, sweep);
            o.eta = eta;
            (RunKind::Loss, o)
        }
    };

    let exps = match file {
        None => vec![o.standalone(kind)?],
        Some(f) => {
            let mut picked: Vec<_> = f.experiments.into_iter().filter(|e| e.kind == kind).collect();
            if picked.is_empty() {
                return Err(CliError::Config(format!("config holds no {kind:?} experiments")));
            }
            for e in &mut picked {
                o.apply(e);
            }
            picked
        }
    };
    run_all(&exps)?.write()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mzmetro: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
