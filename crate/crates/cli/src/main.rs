use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aegis_cli::commands::{self, detection_json, CommandError};
use aegis_cli::gateway;
use aegis_cli::settings::{parse_key, ConfigFlags};
use aegis_core::watermark::DEFAULT_KEY;
use clap::{ArgGroup, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aegis", version, about = "Plan, generate, review, integrate and watermark images, with a provenance ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a prompt end to end; writes artifact.ppm, ledger.provlog, report.json
    #[command(group(ArgGroup::new("input").required(true).args(["prompt", "prompt_file"])))]
    Run {
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Detect the watermark in a PPM image; exit 0 iff the payload checks out
    VerifyWatermark {
        image: PathBuf,
        #[arg(long, value_parser = parse_key)]
        key: Option<u64>,
        /// Expected payload as 16 hex digits
        #[arg(long)]
        reference: Option<String>,
    },
    /// Re-hash a .provlog; exit 0 iff the chain is intact
    VerifyLedger { file: PathBuf },
    /// Start the HTTP/SSE gateway
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "AEGIS_STORE", default_value = "aegis-store")]
        store: PathBuf,
    },
}

fn fail(e: CommandError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            prompt,
            prompt_file,
            out,
            config,
        } => {
            let prompt = match (prompt, prompt_file) {
                (Some(p), _) => p,
                (None, Some(path)) => match fs::read_to_string(&path) {
                    Ok(p) => p,
                    Err(e) => return fail(CommandError::Usage(format!("{}: {e}", path.display()))),
                },
                (None, None) => unreachable!("clap requires one input"),
            };
            let cfg = match config.to_config() {
                Ok(c) => c,
                Err(e) => return fail(CommandError::Usage(e)),
            };
            match commands::run(&prompt, cfg, &out) {
                Ok(s) => {
                    println!("session {} finished in state {}", s.id, s.state);
                    if let Some(a) = s.artifact() {
                        println!("payload {} psnr {:.2} dB", a.payload.hex(), a.psnr);
                    }
                    println!("wrote {}", out.display());
                    if commands::run_succeeded(&s) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::VerifyWatermark { image, key, reference } => {
            let bytes = match fs::read(&image) {
                Ok(b) => b,
                Err(e) => return fail(CommandError::Usage(format!("{}: {e}", image.display()))),
            };
            if !bytes.starts_with(b"P6") {
                return fail(CommandError::BadImage(format!("{} is not a binary PPM", image.display())));
            }
            match commands::verify_watermark(&bytes, key.unwrap_or(DEFAULT_KEY), reference.as_deref()) {
                Ok(d) => {
                    println!("{}", serde_json::to_string_pretty(&detection_json(&d)).expect("json"));
                    if d.crc_ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::VerifyLedger { file } => {
            let bytes = match fs::read(&file) {
                Ok(b) => b,
                Err(e) => return fail(CommandError::Usage(format!("{}: {e}", file.display()))),
            };
            match commands::verify_ledger(&bytes) {
                Ok(n) => {
                    println!("ok: {n} records");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    println!("FAILED: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Serve { bind, store } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(gateway::serve(&bind, store)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
