use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rvbir_cli::{
    builtin_corpus, cmd_bench, cmd_check_sim, cmd_lift, cmd_symex, cmd_verify, parse_addr, read,
    read_corpus, CliError, Format, RunConfig, EXIT_ERROR, EXIT_OK,
};

#[derive(Parser)]
#[command(
    name = "rvbir",
    version,
    about = "Lift RV64 listings to BIR and check contracts on them"
)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Solver executable, or `none`.
    #[arg(long, global = true, env = "RVBIR_SOLVER", default_value = "z3")]
    solver: String,
    /// Per-obligation timeout in seconds.
    #[arg(long, global = true, default_value_t = 30)]
    timeout: u64,
    /// Loop unrolling bound; overrides the contract's `unroll`.
    #[arg(long, global = true)]
    unroll: Option<u32>,
    /// Symbolic states explored before giving up.
    #[arg(long, global = true, default_value_t = RunConfig::default().max_states)]
    max_states: u64,
    /// Abbreviate expressions larger than this many nodes; 0 never does.
    #[arg(long, global = true, default_value_t = RunConfig::default().abbrev_threshold)]
    abbrev_threshold: u64,
    /// Solver processes run in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write every solver script to this directory.
    #[arg(long, global = true)]
    dump_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print the BIR program of a listing's code range.
    Lift {
        listing: PathBuf,
        #[arg(long, value_parser = parse_addr)]
        entry: u64,
        /// End address; repeatable.
        #[arg(long = "end", value_parser = parse_addr, required = true)]
        ends: Vec<u64>,
    },
    /// Verify a contract and report at the ISA level.
    Verify {
        listing: PathBuf,
        contract: PathBuf,
        /// Simulation and translation trials per check.
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the symbolic structure of a contract's program.
    Symex { listing: PathBuf, contract: PathBuf },
    /// Differential trials of every supported instruction kind.
    CheckSim {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Use a lifter with off-by-one immediates; the suite must fail.
        #[arg(long, hide = true)]
        mutate: bool,
    },
    /// Verify every program of a corpus directory and tabulate the times.
    Bench {
        /// Directory of `<name>/<name>.dis` and `<name>.contract`; the
        /// built-in corpus when omitted.
        corpus: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

impl ConfigArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            solver: self.solver.clone(),
            timeout_secs: self.timeout,
            unroll: self.unroll,
            max_states: self.max_states,
            abbrev_threshold: self.abbrev_threshold,
            jobs: self.jobs,
            format: match self.format {
                FormatArg::Text => Format::Text,
                FormatArg::Json => Format::Json,
            },
            dump_dir: self.dump_dir.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = cli.config.config();
    cfg.validate()?;
    match cli.command {
        Command::Lift {
            listing,
            entry,
            ends,
        } => {
            print!("{}", cmd_lift(&read(&listing)?, entry, &ends)?);
            Ok(EXIT_OK)
        }
        Command::Verify {
            listing,
            contract,
            trials,
            seed,
        } => {
            let r = cmd_verify(&read(&listing)?, &read(&contract)?, &cfg, trials, seed)?;
            print!("{}", r.render(cfg.format));
            Ok(r.exit_code())
        }
        Command::Symex { listing, contract } => {
            let r = cmd_symex(&read(&listing)?, &read(&contract)?, &cfg)?;
            print!("{}", r.render(cfg.format));
            Ok(EXIT_OK)
        }
        Command::CheckSim {
            trials,
            seed,
            mutate,
        } => {
            let r = cmd_check_sim(trials, seed, mutate)?;
            print!("{}", r.render(cfg.format));
            Ok(r.exit_code())
        }
        Command::Bench { corpus, csv } => {
            let inputs = match &corpus {
                Some(dir) => read_corpus(dir)?,
                None => builtin_corpus(),
            };
            let table = cmd_bench(&inputs, &cfg)?;
            print!("{}", table.render(cfg.format));
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()?)
                    .map_err(|source| CliError::Io { path, source })?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rvbir: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
