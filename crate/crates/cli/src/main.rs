use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcaudit_cli::{cmd_audit, cmd_check_hi, cmd_experiment, RunArgs, BUILTIN_SCENARIOS};
use dcaudit_core::audit::AuditKind;
use dcaudit_core::scenario::Overrides;

#[derive(Parser)]
#[command(name = "dcaudit", version, about = "Audit data collectors for deletion compliance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the weak, strong or privacy advantage of a scenario.
    Audit {
        kind: Kind,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Exhaustively check a data structure for history independence.
    CheckHi {
        #[arg(long = "impl")]
        implementation: String,
        #[arg(long, default_value_t = 3)]
        universe_size: usize,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a composition or reduction bound against measured errors.
    Experiment {
        name: Experiment,
        #[command(flatten)]
        run: RunFlags,
    },
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Weak,
    Strong,
    Privacy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Thm3,
    Thm5,
    Thm6,
    Thm7,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Thm3 => "thm3",
            Experiment::Thm5 => "thm5",
            Experiment::Thm6 => "thm6",
            Experiment::Thm7 => "thm7",
        }
    }
}

#[derive(Args)]
struct RunFlags {
    /// Scenario file, or the name of a built-in scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<u32>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunFlags {
    fn into_args(self) -> RunArgs {
        RunArgs {
            scenario: self.scenario,
            out: self.out,
            overrides: Overrides {
                trials: self.trials,
                seed: self.seed,
                lambda: self.lambda,
                threshold: self.threshold,
                jobs: self.jobs,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Audit { kind, run } => {
            let kind = match kind {
                Kind::Weak => AuditKind::Weak,
                Kind::Strong => AuditKind::Strong,
                Kind::Privacy => AuditKind::Privacy,
            };
            cmd_audit(kind, &run.into_args())
        }
        Command::CheckHi { implementation, universe_size, max_len, out } => {
            cmd_check_hi(&implementation, universe_size, max_len, out.as_deref())
        }
        Command::Experiment { name, run } => cmd_experiment(name.name(), &run.into_args()),
        Command::Scenarios => {
            for (name, _) in BUILTIN_SCENARIOS {
                println!("{name}");
            }
            0
        }
    };
    ExitCode::from(code as u8)
}
