use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pel::experiment::{self, Outcome};
use pel::{load_config, ExperimentConfig, PelError};

#[derive(Parser)]
#[command(
    name = "pel",
    version,
    about = "Perception-learning experiments and representation certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a bundled config
    #[arg(long)]
    config: Option<String>,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress messages
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train, certify and check the theory for one config
    Run(Common),
    /// Certify codes from an embeddings CSV
    Certify {
        #[command(flatten)]
        common: Common,
        /// CSV with z_0..z_{d-1} and optional x_*, t, v, y, alpha columns
        #[arg(long)]
        embeddings: PathBuf,
        /// Class column treated as the nuisance (v or y)
        #[arg(long, default_value = "v")]
        nuisance: String,
    },
    /// Run the theory scenario named in the config
    VerifyTheory(Common),
    /// List the available worlds
    ListWorlds,
    /// Print every config key with its default
    PrintConfigSchema,
}

fn resolve(c: &Common, required: bool) -> Result<ExperimentConfig, PelError> {
    let cfg = match &c.config {
        Some(spec) => load_config(spec)?,
        None if required => return Err(PelError::Usage("--config is required".into())),
        None => ExperimentConfig::parse("").map_err(|source| PelError::Config {
            path: PathBuf::from("<defaults>"),
            source,
        })?,
    };
    let cfg = match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    Ok(match &c.out {
        Some(dir) => cfg.with_output_dir(&dir.to_string_lossy()),
        None => cfg,
    })
}

fn execute(cli: Cli) -> Result<Option<Outcome>, PelError> {
    let (common, cmd) = match cli.command {
        Command::ListWorlds => {
            for (name, about) in pel::world_list() {
                println!("{name:14} {about}");
            }
            return Ok(None);
        }
        Command::PrintConfigSchema => {
            print!("{}", pel::config::schema_text());
            return Ok(None);
        }
        Command::Run(c) => (c, 0),
        Command::VerifyTheory(c) => (c, 1),
        Command::Certify {
            common,
            embeddings,
            nuisance,
        } => {
            let cfg = resolve(&common, false)?;
            let quiet = common.quiet;
            let progress = move |m: &str| {
                if !quiet {
                    eprintln!("pel: {m}");
                }
            };
            let out = PathBuf::from(&cfg.output_dir);
            return experiment::certify(&embeddings, &nuisance, &cfg, &out, &progress).map(Some);
        }
    };
    let cfg = resolve(&common, true)?;
    let quiet = common.quiet;
    let progress = move |m: &str| {
        if !quiet {
            eprintln!("pel: {m}");
        }
    };
    let out = PathBuf::from(&cfg.output_dir);
    let outcome = if cmd == 0 {
        experiment::run(&cfg, &out, &progress)?
    } else {
        experiment::verify_theory(&cfg, &out, &progress)?
    };
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(o)) => {
            for v in &o.report.theory {
                let status = if v.pass { "pass" } else { "fail" };
                let mark = if v.matches_expectation {
                    "as expected"
                } else {
                    "UNEXPECTED"
                };
                println!("{:<40} {status:<5} ({mark})", v.name);
            }
            for (name, m) in &o.report.metrics {
                if m.status == pel::report::Status::Failed {
                    println!("{name:<40} failed: {}", m.notes.join("; "));
                }
            }
            if let Some(p) = o.files.last() {
                println!("report: {}", p.display());
            }
            if o.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("pel: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
