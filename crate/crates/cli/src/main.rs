use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use stochdp_cli::schema::{CheckLevel, DualIndexOpt};
use stochdp_cli::{failure, run, CliError, Command, Flags};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Solve,
    Bellman,
    CheckLinearity,
    NoArbitrage,
    Superhedge,
    Varhedge,
    Consume,
    Dual,
    DualityGap,
    OracleCompare,
    PhiProbe,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Bellman => Command::Bellman,
            Cmd::CheckLinearity => Command::CheckLinearity,
            Cmd::NoArbitrage => Command::NoArbitrage,
            Cmd::Superhedge => Command::Superhedge,
            Cmd::Varhedge => Command::Varhedge,
            Cmd::Consume => Command::Consume,
            Cmd::Dual => Command::Dual,
            Cmd::DualityGap => Command::DualityGap,
            Cmd::OracleCompare => Command::OracleCompare,
            Cmd::PhiProbe => Command::PhiProbe,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Index {
    Derivation,
    Displayed,
}

/// Exact dynamic programming on scenario trees.
#[derive(Debug, Parser)]
#[command(name = "stochdp", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,
    /// Result file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    check_level: Option<Level>,
    #[arg(long, value_enum)]
    dual_index: Option<Index>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cmd = Command::from(args.command);
    let flags = Flags {
        check_level: args.check_level.map(|l| match l {
            Level::Fast => CheckLevel::Fast,
            Level::Full => CheckLevel::Full,
        }),
        dual_index: args.dual_index.map(|i| match i {
            Index::Derivation => DualIndexOpt::Derivation,
            Index::Displayed => DualIndexOpt::Displayed,
        }),
    };
    let outcome = match std::fs::read_to_string(&args.instance) {
        Ok(text) => run(cmd, &text, &flags),
        Err(e) => failure(cmd, &CliError::Io(format!("cannot read {}: {e}", args.instance.display()))),
    };
    let mut text = serde_json::to_string_pretty(&outcome.result).expect("JSON values serialize");
    text.push('\n');
    let written = match &args.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(msg) = written {
        eprintln!("{msg}");
        return ExitCode::from(1);
    }
    if outcome.exit_code != 0 {
        if let Some(m) = outcome.result["error"]["message"].as_str() {
            eprintln!("error: {m}");
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
