mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use asepkpz::io::sha256_hex;
use clap::{Parser, ValueEnum};

use config::{RunConfig, DEFAULTS_TOML};
use output::{write_atomic, Manifest, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Params,
    Simulate,
    Kernel,
    Identities,
    She,
    Compare,
    AuditAll,
    Config,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Params => "params",
            Kind::Simulate => "simulate",
            Kind::Kernel => "kernel",
            Kind::Identities => "identities",
            Kind::She => "she",
            Kind::Compare => "compare",
            Kind::AuditAll => "audit-all",
            Kind::Config => "config",
        }
    }
}

/// Open ASEP / Robin SHE experiment runner.
#[derive(Debug, Parser)]
#[command(name = "asepkpz", version)]
struct Cli {
    kind: Kind,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Replace an existing run directory with the same config hash.
    #[arg(long)]
    force: bool,
    /// Worker threads (falls back to ASEPKPZ_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// With `config`: print the documented defaults.
    #[arg(long)]
    print_defaults: bool,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    if cli.kind == Kind::Config {
        if cli.print_defaults {
            print!("{DEFAULTS_TOML}");
            return ExitCode::SUCCESS;
        }
        return config_error("`config` needs --print-defaults");
    }

    let Some(path) = cli.config.as_ref() else { return config_error("--config FILE is required") };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return config_error(format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg: RunConfig = match toml::from_str(&text) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let problems = cfg.validate(cli.kind.name());
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("config error: {p}");
        }
        return ExitCode::from(EXIT_CONFIG);
    }

    let threads = cli.threads.or_else(|| std::env::var("ASEPKPZ_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(k) = threads {
        if k == 0 {
            return config_error("thread count must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return config_error(e);
        }
    }

    let canonical = serde_json::to_string(&serde_json::json!({ "kind": cli.kind.name(), "config": cfg }))
        .expect("config serializes");
    let hash = sha256_hex(canonical.as_bytes());
    let dir = cli.out.join(format!("{}-{}", cli.kind.name(), &hash[..16]));
    if dir.exists() {
        if !cli.force {
            return config_error(format!("{} exists; rerun with --force to replace it", dir.display()));
        }
        if let Err(e) = std::fs::remove_dir_all(&dir) {
            return config_error(format!("cannot clear {}: {e}", dir.display()));
        }
    }
    match execute(cli.kind, &cfg, dir.clone(), &hash) {
        Ok(true) => {
            println!("PASS {}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("FAIL {}", dir.display());
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

type Step = fn(&RunConfig, &mut Run) -> anyhow::Result<()>;

fn steps(kind: Kind) -> Vec<(&'static str, Step)> {
    let all: [(&'static str, Step); 6] = [
        ("params", experiments::params),
        ("simulate", experiments::simulate),
        ("kernel", experiments::kernel),
        ("identities", experiments::identities),
        ("she", experiments::she),
        ("compare", experiments::compare),
    ];
    match kind {
        Kind::AuditAll => all.to_vec(),
        other => all.into_iter().filter(|(n, _)| *n == other.name()).collect(),
    }
}

/// Runs every step, always writing the manifest; returns whether all checks passed.
fn execute(kind: Kind, cfg: &RunConfig, dir: PathBuf, hash: &str) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut run = Run::new(dir.clone());
    let mut error = None;
    let nested = kind == Kind::AuditAll;
    for (name, step) in steps(kind) {
        let mut sub = Run::new(if nested { dir.join(name) } else { dir.clone() });
        let res = step(cfg, &mut sub);
        let prefix = if nested { format!("{name}/") } else { String::new() };
        run.checks.extend(sub.checks.into_iter().map(|mut c| {
            c.name = format!("{prefix}{}", c.name);
            c
        }));
        run.files.extend(sub.files.into_iter().map(|mut f| {
            f.name = format!("{prefix}{}", f.name);
            f
        }));
        if let Err(e) = res {
            error = Some(format!("{name}: {e:#}"));
            break;
        }
    }
    for c in &run.checks {
        println!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = error.is_none() && run.passed();
    let manifest = Manifest {
        kind: kind.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        config: cfg,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        complete: error.is_none(),
        error: error.clone(),
        passed,
        checks: &run.checks,
        files: &run.files,
    };
    write_atomic(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    if let Some(e) = error {
        anyhow::bail!(e);
    }
    Ok(passed)
}
