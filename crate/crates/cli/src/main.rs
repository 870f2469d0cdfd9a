//! `conseq`: derivations, extensions to more variables, filters and
//! counterexample search from the command line. Every command prints a JSON
//! report on stdout (see `docs/report-schema.md`), except
//! `natext-lattice --emit dot`, which prints the diagram.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use conseq::natext::{Property, DEFAULT_SEARCH_BUDGET, DEFAULT_SEARCH_SEED};
use conseq::Arity;

use report::Report;

#[derive(Parser)]
#[command(
    name = "conseq",
    version,
    about = "Finite consequence relations, their extensions and filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ls,
    Ss,
    Minus,
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Chain,
    Closure,
    Filters,
    Roundtrip,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Dot,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Decide `premises ⊢ goal` in a presented logic.
    Derive {
        logic: PathBuf,
        /// Comma-separated formulas.
        #[arg(long, default_value = "")]
        premises: String,
        #[arg(long)]
        goal: String,
        /// Override the file's bounds, e.g. `depth=3,iters=64`.
        #[arg(long)]
        bounds: Option<String>,
        /// Exit with 3 when a bound was hit.
        #[arg(long)]
        strict: bool,
    },
    /// Decide a query in an extension of the logic to more variables.
    Extend {
        logic: PathBuf,
        /// Target variables, extending the file's variables in order.
        #[arg(long)]
        to_vars: Option<String>,
        #[arg(long, value_enum)]
        method: Method,
        /// Premise-size bound; for `plus` it defaults to the base logic's.
        #[arg(long)]
        arity: Option<Arity>,
        #[arg(long, default_value = "")]
        premises: String,
        #[arg(long)]
        goal: String,
        #[arg(long)]
        bounds: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Compare two extensions of a constants-only logic exhaustively.
    Compare {
        logic: PathBuf,
        #[arg(long)]
        to_vars: Option<String>,
        #[arg(long, value_enum)]
        left: Method,
        #[arg(long, value_enum)]
        right: Method,
    },
    /// Run invariant suites on a constants-only logic.
    Check {
        logic: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        to_vars: Option<String>,
        /// Drop one theory before comparing filters with theories.
        #[arg(long, hide = true)]
        perturb_theories: bool,
    },
    /// Enumerate filters on finite structures and check naturality along
    /// the declared homomorphisms.
    Filters {
        logic: PathBuf,
        #[arg(long)]
        structures: PathBuf,
        /// Restrict to one structure.
        #[arg(long)]
        structure: Option<String>,
        /// Check whether these elements form a filter.
        #[arg(long)]
        set: Option<String>,
        /// Report the filter generated by these elements.
        #[arg(long)]
        generate: Option<String>,
        /// Also compare the base logic's filters with those of this
        /// extension (reported, never a failure).
        #[arg(long, value_enum)]
        extension: Option<Method>,
        #[arg(long, requires = "extension")]
        to_vars: Option<String>,
    },
    /// Enumerate the natural extensions of a constants-only logic.
    NatextLattice {
        #[arg(required_unless_present = "verify")]
        logic: Option<PathBuf>,
        #[arg(long)]
        to_vars: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        emit: Emit,
        /// Re-verify a lattice previously emitted as JSON.
        #[arg(long, conflicts_with = "logic")]
        verify: Option<PathBuf>,
    },
    /// Search random presentations for a counterexample.
    Search {
        #[arg(long)]
        property: Property,
        #[arg(long, default_value_t = DEFAULT_SEARCH_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SEARCH_BUDGET)]
        budget: usize,
        /// Write the witness here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with 3 when the budget runs out without a witness.
        #[arg(long)]
        strict: bool,
    },
    /// Re-check a witness file.
    Replay { witness: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive { .. } => "derive",
            Command::Extend { .. } => "extend",
            Command::Compare { .. } => "compare",
            Command::Check { .. } => "check",
            Command::Filters { .. } => "filters",
            Command::NatextLattice { .. } => "natext-lattice",
            Command::Search { .. } => "search",
            Command::Replay { .. } => "replay",
        }
    }

    fn strict(&self) -> bool {
        matches!(
            self,
            Command::Derive { strict: true, .. }
                | Command::Extend { strict: true, .. }
                | Command::Search { strict: true, .. }
        )
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let name = cli.command.name();
    let strict = cli.command.strict();
    let outcome = match cli.command {
        Command::Derive {
            logic,
            premises,
            goal,
            bounds,
            ..
        } => commands::derive(&logic, &premises, &goal, bounds.as_deref(), started),
        Command::Extend {
            logic,
            to_vars,
            method,
            arity,
            premises,
            goal,
            bounds,
            ..
        } => commands::extend(
            &logic,
            to_vars.as_deref(),
            method,
            arity,
            &premises,
            &goal,
            bounds.as_deref(),
            started,
        ),
        Command::Compare {
            logic,
            to_vars,
            left,
            right,
        } => commands::compare(&logic, to_vars.as_deref(), left, right, started),
        Command::Check {
            logic,
            suite,
            to_vars,
            perturb_theories,
        } => commands::check(&logic, suite, to_vars.as_deref(), perturb_theories, started),
        Command::Filters {
            logic,
            structures,
            structure,
            set,
            generate,
            extension,
            to_vars,
        } => commands::filters(
            &logic,
            &structures,
            structure.as_deref(),
            set.as_deref(),
            generate.as_deref(),
            extension,
            to_vars.as_deref(),
            started,
        ),
        Command::NatextLattice {
            logic,
            to_vars,
            emit,
            verify,
        } => match verify {
            Some(path) => commands::verify_lattice(&path, started),
            None => {
                let logic = logic.expect("clap requires a logic file");
                match commands::natext_lattice(&logic, to_vars.as_deref(), started) {
                    Ok((report, dot)) if emit == Emit::Dot => {
                        write_out(&dot);
                        return ExitCode::from(report.status.exit_code(false));
                    }
                    Ok((report, _)) => Ok(report),
                    Err(e) => Err(e),
                }
            }
        },
        Command::Search {
            property,
            seed,
            budget,
            out,
            ..
        } => commands::search(property, seed, budget, out.as_deref(), started),
        Command::Replay { witness } => commands::replay(&witness, started),
    };
    let report = outcome.unwrap_or_else(|e| Report::error(name, started, format!("{e:#}")));
    write_out(&format!("{}\n", report.to_json()));
    ExitCode::from(report.status.exit_code(strict))
}

/// Writes to stdout; a closed pipe is not an error.
fn write_out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
