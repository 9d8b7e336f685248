use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dfs_core::config::{RunConfig, Task};
use dfs_core::{harness, Error};

#[derive(Parser, Debug)]
#[command(name = "dfsgen", version, about = "Run a simulation task from a JSON config")]
struct Cli {
    /// couplings | gate | emit | cz | protocol | sweep-fig3a | sweep-fig3b | sweep-fig3c | sweep-figS1
    task: String,
    /// JSON config; `couplings` runs without one
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory (falls back to config output.dir, then $DFS_OUT_DIR, then ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// override numerics.dt
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let task = Task::parse(&cli.task)?;
    let bytes = match &cli.config {
        Some(p) => std::fs::read(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => b"{}".to_vec(),
    };
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(dt) = cli.dt {
        cfg.numerics.dt = Some(dt);
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let out = cli
        .out
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os("DFS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    log::info!("task {} -> {}", task.name(), out.display());
    let m = harness::run(task, &cfg, &bytes, &out)?;
    for a in &m.artifacts {
        println!("{}", out.join(&a.path).display());
    }
    log::info!("done in {:.2}s", m.wall_time_s);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dfsgen: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
