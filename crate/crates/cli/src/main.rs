//! `idstack`: extract, sign, verify and score machine-readable documents.
//!
//! JSON results go to stdout; `--pretty` adds a human-readable table on
//! stderr. Exit codes: 0 success, 1 IO or argument error, 2 domain
//! validation error, 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod endorse;
mod error;
mod remote;

use commands::{Context, ExtractArgs, KeygenArgs, SignArgs};
use config::{CliConfig, Overrides, HOME_ENV};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "idstack", version, about = "Document verification with chained signatures")]
struct Cli {
    /// Configuration root holding config.json, templates/, trust.json, weights.json.
    #[arg(long, env = HOME_ENV, global = true)]
    home: Option<PathBuf>,
    /// Document store directory.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Template directory.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Trust anchor file.
    #[arg(long, global = true)]
    trust: Option<PathBuf>,
    /// Score weights file.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Base URL of a running service; commands go over HTTP when set.
    #[arg(long, global = true)]
    remote: Option<String>,
    /// Print a human-readable table to stderr.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a key pair and a self-signed certificate.
    Keygen {
        #[arg(long)]
        name: String,
        #[arg(long)]
        email: String,
        #[arg(long, default_value_t = 365)]
        days: u32,
        /// Output prefix: writes <out>.key and <out>.cert.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Certify an existing key instead of generating one.
        #[arg(long)]
        from_key: Option<PathBuf>,
    },
    /// Extract a document's text with a template and sign it as extractor.
    Extract {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        template: String,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        doc_type: Option<String>,
    },
    /// Append a validator signature to a document file.
    Sign {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        /// content[:PATHS] | signature:SIGID[,SIGID] | both[:PATHS]+signature:SIGID[,SIGID]
        #[arg(long)]
        endorse: String,
    },
    /// Verify every signature; exits 3 unless all are effectively valid.
    Verify {
        #[arg(long)]
        doc: PathBuf,
    },
    /// Confidence per document and correlation across them.
    Score {
        #[arg(long, num_args = 1.., required = true)]
        docs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let config = CliConfig::resolve(Overrides {
        home: cli.home,
        store: cli.store,
        templates: cli.templates,
        trust: cli.trust,
        weights: cli.weights,
        remote: cli.remote,
    })?;
    let ctx = Context {
        config,
        clock: config::clock()?,
    };
    match cli.command {
        Command::Keygen {
            name,
            email,
            days,
            out,
            force,
            from_key,
        } => commands::keygen(
            &ctx,
            KeygenArgs {
                name,
                email,
                days,
                out,
                force,
                from_key,
            },
        ),
        Command::Extract {
            text,
            template,
            key,
            cert,
            out,
            doc_type,
        } => commands::extract(
            &ctx,
            ExtractArgs {
                text,
                template,
                key,
                cert,
                out,
                doc_type,
            },
        ),
        Command::Sign {
            doc,
            key,
            cert,
            endorse,
        } => commands::sign(
            &ctx,
            SignArgs {
                doc,
                key,
                cert,
                endorse,
            },
        ),
        Command::Verify { doc } => commands::verify(&ctx, &doc),
        Command::Score { docs } => commands::score(&ctx, &docs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let pretty = cli.pretty;
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.json);
            if pretty {
                if let Some(table) = &outcome.table {
                    eprint!("{table}");
                }
            }
            if outcome.verification_failed {
                eprintln!("idstack: verification failed");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("idstack: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
