use std::path::PathBuf;
use std::process::ExitCode;

use actkit::harness::{
    cmd_library, cmd_report, cmd_run, Dataset, EmbedderChoice, FlagSettings, LibraryCommand,
    ProviderChoice, Settings,
};
use actkit::{LoopOptions, Phase};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::filter::LevelFilter;

#[derive(Parser)]
#[command(
    name = "actkit",
    version,
    about = "Run code-acting agents that grow their own action library"
)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every task of a dataset.
    Run(Box<RunArgs>),
    /// Rebuild the reports of a run directory.
    Report { run_dir: PathBuf },
    /// Inspect or maintain an action library.
    Library {
        #[arg(long)]
        library: PathBuf,
        /// Config file, read for embedder settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(subcommand)]
        cmd: LibCmd,
    },
}

#[derive(Subcommand)]
enum LibCmd {
    List,
    Show { name: String },
    Verify,
    InstallPlugins,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Http,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Deterministic,
    Remote,
}

#[derive(Args)]
struct RunArgs {
    /// JSONL task file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    library: PathBuf,
    /// Run directory for trajectories and reports.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    phase: Option<PhaseArg>,
    #[arg(long)]
    no_accumulation: bool,
    #[arg(long)]
    no_generation: bool,
    #[arg(long)]
    no_initial_actions: bool,
    #[arg(long)]
    max_steps: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    retrieval_k: Option<u32>,
    #[arg(long)]
    step_timeout: Option<u64>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Transcript to replay with the scripted provider.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Append every provider exchange to this file.
    #[arg(long)]
    record_transcript: Option<PathBuf>,
    #[arg(long, value_enum)]
    embedder: Option<EmbedderArg>,
    #[arg(long)]
    embedding_endpoint: Option<String>,
    #[arg(long)]
    embedding_model: Option<String>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Execute in-process instead of in a worker process.
    #[arg(long)]
    mock_executor: bool,
    /// Worker command line.
    #[arg(long)]
    worker_cmd: Option<String>,
    /// Number of tasks run at once.
    #[arg(long)]
    parallel: Option<usize>,
}

impl RunArgs {
    fn settings(&self) -> Settings {
        let off = |b: bool| if b { Some(false) } else { None };
        Settings {
            max_steps: self.max_steps,
            temperature: self.temperature,
            retrieval_k: self.retrieval_k,
            step_timeout_s: self.step_timeout,
            observation_limit_chars: None,
            phase: self.phase.map(|p| match p {
                PhaseArg::Train => Phase::Train,
                PhaseArg::Test => Phase::Test,
            }),
            flags: FlagSettings {
                accumulate: off(self.no_accumulation),
                allow_generation: off(self.no_generation),
                load_initial_actions: off(self.no_initial_actions),
            },
            provider: self.provider.map(|p| match p {
                ProviderArg::Http => ProviderChoice::Http,
                ProviderArg::Scripted => ProviderChoice::Scripted,
            }),
            endpoint_url: self.endpoint_url.clone(),
            model_name: self.model.clone(),
            transcript: self.transcript.clone(),
            record_transcript: self.record_transcript.clone(),
            embedder: self.embedder.map(|e| match e {
                EmbedderArg::Deterministic => EmbedderChoice::Deterministic,
                EmbedderArg::Remote => EmbedderChoice::Remote,
            }),
            embedding_endpoint: self.embedding_endpoint.clone(),
            embedding_model: self.embedding_model.clone(),
            embedding_dim: self.embedding_dim,
            mock_executor: self.mock_executor.then_some(true),
            worker_cmd: self.worker_cmd.clone(),
            parallel: self.parallel,
        }
    }
}

fn file_settings(path: &Option<PathBuf>) -> Result<Settings, String> {
    match path {
        Some(p) => Settings::from_file(p).map_err(|e| e.to_string()),
        None => Ok(Settings::default()),
    }
}

fn run(args: RunArgs) -> u8 {
    let settings = match file_settings(&args.config) {
        Ok(f) => args.settings().merge(f),
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cfg = match settings.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let dataset = match Dataset::load(&args.dataset) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match cmd_run(
        &dataset,
        &cfg,
        &args.library,
        &args.out,
        &LoopOptions::default(),
    ) {
        Ok(outcome) => {
            print!("{}", outcome.report.stdout);
            eprint!("{}", outcome.report.stderr);
            for t in &outcome.manifest.aborted {
                eprintln!("task {t} was aborted by a provider failure");
            }
            outcome.exit_code() as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        2 => LevelFilter::DEBUG,
        _ => LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let code = match cli.cmd {
        Cmd::Run(args) => run(*args),
        Cmd::Report { run_dir } => {
            let out = cmd_report(&run_dir);
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
            out.code as u8
        }
        Cmd::Library {
            library,
            config,
            cmd,
        } => {
            let embedder = match file_settings(&config)
                .and_then(|s| s.resolve_embedder().map_err(|e| e.to_string()))
            {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let cmd = match cmd {
                LibCmd::List => LibraryCommand::List,
                LibCmd::Show { name } => LibraryCommand::Show(name),
                LibCmd::Verify => LibraryCommand::Verify,
                LibCmd::InstallPlugins => LibraryCommand::InstallPlugins,
            };
            let out = cmd_library(&library, &cmd, &embedder);
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
            out.code as u8
        }
    };
    ExitCode::from(code)
}
