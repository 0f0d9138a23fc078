use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use varlab_core::persistence::{archive, summarize_cache};
use varlab_core::runtime::{self, load_config_file, Config, LoadError};

const USAGE_ERROR: u8 = 64;

#[derive(Parser)]
#[command(name = "varlab", version, about = "Variability analysis workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured pipeline.
    Run(ConfigArgs),
    /// Load the configuration and print the resolved pipeline without running it.
    Validate(ConfigArgs),
    /// Summarize the models stored in a cache directory.
    InspectCache { dir: PathBuf },
    /// Verify a reproduction archive and extract it.
    Unpack { archive: PathBuf, dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Override a configuration key (repeatable).
    #[arg(short = 'D', value_name = "KEY=VALUE", value_parser = parse_override)]
    define: Vec<(String, String)>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    archive: bool,
    #[arg(long, value_parser = ["error", "warn", "info", "debug"])]
    log_level: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.trim().to_owned())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = self.define.clone();
        if let Some(j) = self.jobs {
            out.push(("jobs".into(), j.to_string()));
        }
        if self.archive {
            out.push(("archive".into(), "true".into()));
        }
        if let Some(l) = &self.log_level {
            out.push(("log.level".into(), l.clone()));
        }
        if let Some(d) = &self.output_dir {
            let d = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
            out.push(("output_dir".into(), d.display().to_string()));
        }
        out
    }

    fn load(&self) -> Result<Config, ExitCode> {
        match load_config_file(&self.config, &self.overrides()) {
            Ok(c) => Ok(c),
            Err(e) => {
                init_logging(LevelFilter::Warn);
                eprintln!("error: {e}");
                Err(ExitCode::from(match e {
                    LoadError::Io { .. } => 4,
                    LoadError::Config(_) => 1,
                }))
            }
        }
    }
}

fn init_logging(level: LevelFilter) {
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn run(args: &ConfigArgs) -> ExitCode {
    let config = match args.load() {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(config.log_level);
    match runtime::run(&config) {
        Ok(report) => {
            println!("status: {}", report.status);
            println!("pipeline: {}", report.pipeline);
            println!("files: {}, blocks: {}", report.code_files, report.blocks);
            for o in &report.outputs {
                println!("wrote {}", config.output_dir.join(o).display());
            }
            if let Some(a) = &report.archive {
                println!("archive {a}");
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {}", failure.error);
            ExitCode::from(failure.error.exit_code() as u8)
        }
    }
}

fn validate(args: &ConfigArgs) -> ExitCode {
    let config = match args.load() {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(config.log_level);
    for w in &config.warnings {
        log::warn!("{w}");
    }
    match runtime::plan(&config) {
        Ok(graph) => {
            println!("{}", graph.to_dsl());
            print!("{}", graph.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn inspect_cache(dir: &Path) -> ExitCode {
    init_logging(LevelFilter::Warn);
    if !dir.is_dir() {
        eprintln!("error: {}: not a directory", dir.display());
        return ExitCode::from(4);
    }
    match summarize_cache(dir) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn unpack(archive_path: &Path, dir: &Path) -> ExitCode {
    init_logging(LevelFilter::Warn);
    match archive::unpack(archive_path, dir) {
        Ok(manifest) => {
            println!("verified {} files (tool {}, config {})", manifest.files.len(), manifest.tool_version, &manifest.config_fingerprint[..12.min(manifest.config_fingerprint.len())]);
            println!("extracted to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::InspectCache { dir } => inspect_cache(dir),
        Command::Unpack { archive, dir } => unpack(archive, dir),
    }
}
