use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rbmprune::experiment::{cmd_generate, cmd_prune, cmd_report, cmd_train, cmd_validate, ExperimentConfig};
use rbmprune::metrics::MetricsRecord;
use rbmprune::{Error, Result};

const OUTPUT_ROOT_ENV: &str = "RBMPRUNE_OUTPUT_ROOT";
const THREADS_ENV: &str = "RBMPRUNE_THREADS";

#[derive(Parser)]
#[command(name = "rbmprune", version, about = "RBM reconstruction of TFIM ground states with pruning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from the exact ground state and store reference observables.
    Generate(RunArgs),
    /// Train the configured arm and record metrics.
    Train(RunArgs),
    /// Iteratively prune and fine-tune a trained dense model.
    Prune(RunArgs),
    /// Aggregate run directories into plot-ready tables.
    Report {
        /// Output directory for the tables.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Re-check the file checksums recorded in run manifests.
    Validate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; unset keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set field=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Any config key as a flag: `--n-sites 10`, `--arm=sc`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    keys: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        cfg.apply_overrides(&flag_overrides(&self.keys)?)?;
        if let Some(root) = output_root() {
            cfg = cfg.rooted(&root);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Turns `--key value` / `--key=value` tokens into `key=value` overrides.
fn flag_overrides(tokens: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument {tok:?}")));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push(format!("{k}={v}")),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{flag} needs a value")))?;
                out.push(format!("{flag}={v}"));
            }
        }
    }
    Ok(out)
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from)
}

fn rooted(path: &Path) -> PathBuf {
    match output_root() {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.5}"))
}

fn print_record(r: &MetricsRecord) {
    println!(
        "  epoch {:>4} iter {:>2} active {:>5.1}%  kl {}  1-F {}  eROE {}  mROE {:.5}  C_MSE {:.3e}  <|m|> {:.4}  connected {}",
        r.epoch,
        r.prune_iter,
        100.0 * r.frac_remaining,
        fmt_opt(r.kl),
        fmt_opt(r.infidelity()),
        fmt_opt(r.eroe),
        r.mroe,
        r.c_mse_norm,
        r.m_abs_mean,
        r.connected
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let out = cmd_generate(&cfg)?;
            let r = &out.reference;
            println!("wrote {} samples to {}", r.dataset_size, out.data_dir.display());
            if let Some(e) = r.energy {
                println!("  ground energy {e:.10}  <m> {:.3e}  <|m|> {:.6}", r.m_mean, r.m_abs_mean);
            }
            println!("  data <m> {:.5}  <|m|> {:.5}", r.data_m_mean, r.data_m_abs_mean);
        }
        Command::Train(args) => {
            for cfg in args.load()?.replicates() {
                let out = cmd_train(&cfg)?;
                println!("trained {} (seed {}) -> {}", cfg.arm.name(), cfg.seed, out.checkpoint.display());
                if let Some(r) = out.records.last() {
                    print_record(r);
                }
            }
        }
        Command::Prune(args) => {
            for cfg in args.load()?.replicates() {
                let out = cmd_prune(&cfg)?;
                println!("pruned {} (seed {})", cfg.output_dir.display(), cfg.seed);
                for r in &out.records {
                    print_record(r);
                }
                match out.summary.first_disconnected {
                    Some(k) => println!("  graph first disconnected at iteration {k}"),
                    None => println!("  graph stayed connected"),
                }
            }
        }
        Command::Report { out, runs } => {
            let runs: Vec<PathBuf> = runs.iter().map(|r| rooted(r)).collect();
            let report = cmd_report(&runs, &rooted(&out))?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for (name, rho) in &report.spearman.coefficients {
                println!("  spearman(kl, {name}) = {rho:.3}");
            }
        }
        Command::Validate { dirs } => {
            for d in dirs {
                let d = rooted(&d);
                let n = cmd_validate(&d)?;
                println!("{}: {n} files ok", d.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
