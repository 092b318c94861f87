use clap::{Parser, Subcommand};
use grazing_cli::{config, run, EXIT_CONFIG};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "grazing", version, about = "Grazing-limit studies for the non-cutoff Boltzmann operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a TOML or JSON config
    Run {
        config: PathBuf,
        /// override a config value, e.g. --set kernel.s=0.9
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// worker threads (default: available parallelism)
        #[arg(long)]
        workers: Option<usize>,
        /// output directory (overrides output.dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// random seed (overrides seed)
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("{msg}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let Command::Run { config: path, mut set, workers, out, seed } = cli.command;
    if let Some(s) = seed {
        set.push(format!("seed={s}"));
    }
    if let Some(o) = out {
        // quoted so any path text stays a string
        set.push(format!("output.dir={}", toml::Value::String(o.display().to_string())));
    }
    let cfg = match config::load(&path, &set) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return fail("config error: --workers must be at least 1");
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        return fail(format!("cannot start {workers} workers: {e}"));
    }
    match run(&cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(e),
    }
}
