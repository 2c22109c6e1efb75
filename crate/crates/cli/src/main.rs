use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use outfitgen_cli::commands::{self, load_config, GenerateArgs, Status, UsageError};
use outfitgen_cli::server::{self, AppState};
use outfitgen_core::pipeline::StrategyKind;
use outfitgen_core::TripletKind;

#[derive(Parser)]
#[command(name = "outfitgen", version, about = "Generate, evaluate and survey triplet-driven outfits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Simple,
    Complex,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Jsonl,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the triplet × strategy grid and write records.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// zs, fs, cot, rag-pdf, rag-blog (comma separated or repeated); all when omitted
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategy: Vec<StrategyKind>,
        #[arg(long, value_enum, default_value = "simple")]
        kind: Kind,
        #[arg(long)]
        style: Option<String>,
        #[arg(long)]
        occasion: Option<String>,
        #[arg(long = "type")]
        wearer_type: Option<String>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Chunk and embed the configured corpora.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write alignment and survey CSV reports.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve survey stimuli and collect responses.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "OUTFITGEN_ADMIN_TOKEN")]
        admin_token: Option<String>,
    },
    /// Copy collected responses out, verbatim or as a long-format CSV.
    Export {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: ExportFormat,
        /// Written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn required(path: Option<PathBuf>, fallback: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.or(fallback)
        .ok_or_else(|| commands::usage(format!("--{flag} or --config is required")))
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Generate {
            config,
            strategy,
            kind,
            style,
            occasion,
            wearer_type,
            parallelism,
            output_dir,
            seed,
        } => {
            let cfg = load_config(&config)?;
            let args = GenerateArgs {
                strategies: strategy,
                kind: Some(match kind {
                    Kind::Simple => TripletKind::Simple,
                    Kind::Complex => TripletKind::Complex,
                }),
                style,
                occasion,
                wearer_type,
                parallelism,
                output_dir,
                seed,
            };
            let (status, summary) = commands::generate(cfg, &args)?;
            println!("{summary}");
            Ok(status)
        }
        Command::Ingest { config } => {
            let cfg = load_config(&config)?;
            for (kind, n) in commands::ingest(&cfg)? {
                println!("{kind}: {n} chunks");
            }
            Ok(Status::Success)
        }
        Command::Eval {
            config,
            records,
            responses,
            out,
        } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let records = required(records, cfg.as_ref().map(|c| c.records_path()), "records")?;
            let responses = responses.or_else(|| cfg.as_ref().map(|c| c.responses_path()));
            let out = required(out, cfg.as_ref().map(|c| c.output_dir.join("reports")), "out")?;
            let reports = commands::eval(&records, responses.as_deref())?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, body) in reports {
                let path = out.join(name);
                std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
            }
            Ok(Status::Success)
        }
        Command::Serve {
            config,
            bind,
            admin_token,
        } => {
            let cfg = load_config(&config)?;
            let records = commands::records_by_id(&cfg.records_path())?;
            let state = AppState::from_config(&cfg, records)
                .map_err(|e| commands::usage(format!("{e:#}")))?
                .with_admin_token(admin_token);
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, &bind))?;
            Ok(Status::Success)
        }
        Command::Export {
            config,
            responses,
            format,
            out,
        } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let responses = required(responses, cfg.as_ref().map(|c| c.responses_path()), "responses")?;
            let body = match format {
                ExportFormat::Jsonl => std::fs::read_to_string(&responses)
                    .with_context(|| format!("reading {}", responses.display()))?,
                ExportFormat::Csv => commands::export_long_csv(&responses)?,
            };
            match out {
                Some(path) => std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{body}"),
            }
            Ok(Status::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
