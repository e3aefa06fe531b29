use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ivmatch::commands::{cmd_diagnose, cmd_infer, cmd_match, cmd_simulate, SimulationTable};
use ivmatch::parallel::resolve_threads;
use ivmatch::{CliError, CliResult, Context, PipelineConfig};

#[derive(Parser, Debug)]
#[command(name = "ivmatch", version, about = "Strengthened-IV matched-pair designs and inference")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulations; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the matched design from the input cohort.
    Match,
    /// Balance table, compliance summary and permutation tests.
    Diagnose,
    /// Bounds, effect ratio and K1 sweeps per outcome and subgroup.
    Infer,
    /// Run a simulation study.
    Simulate {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        study: u8,
        /// Use 1000 replicates instead of the configured count.
        #[arg(long)]
        full_scale: bool,
    },
}

fn context(cli: &Cli) -> CliResult<Context> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None if matches!(cli.command, Command::Simulate { .. }) => {
            let mut table = toml::Table::new();
            ivmatch::config::apply_env(&mut table, std::env::vars())?;
            PipelineConfig::from_toml(&table.to_string(), std::iter::empty(), std::path::Path::new("."))?
        }
        None => return Err(CliError::Config("--config is required for this command".into())),
    };
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        config.output = o.clone();
    }
    Ok(Context { config, config_path: cli.config.clone(), threads: resolve_threads(cli.threads) })
}

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Match => {
            let p = cmd_match(&ctx)?;
            println!(
                "matched {} pairs, eliminated {} units ({} sinks{})",
                p.n_pairs,
                p.n_eliminated,
                p.provenance.n_sinks,
                if p.provenance.auto_sink { ", one added for parity" } else { "" }
            );
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Diagnose => {
            let d = cmd_diagnose(&ctx)?;
            println!("max |SMD| {:.3}; permutation test p = {}", d.max_smd, d.cpt_p_value);
            for (g, p) in &d.biased {
                println!("biased permutation test at Gamma {g}: p = {p}");
            }
            if let Some(g) = d.gamma_cap {
                println!("calibrated Gamma {:.4}, gamma {:.4}", g.gamma_cap, g.gamma);
            }
        }
        Command::Infer => {
            let r = cmd_infer(&ctx)?;
            println!("{} reports, {} skipped", r.entries.len(), r.skipped.len());
        }
        Command::Simulate { study, full_scale } => {
            let rows = match cmd_simulate(&ctx, *study, *full_scale)? {
                SimulationTable::Study1(t) => t.rows.len(),
                SimulationTable::Study2(t) => t.rows.len(),
            };
            println!("wrote {rows} rows to {}", ctx.out_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("serializable report"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
