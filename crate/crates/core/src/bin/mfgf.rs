use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfgf::experiments::{self, CommandKind, LoadedManifest, RunContext};
use mfgf::Error;

#[derive(Parser)]
#[command(name = "mfgf", version, about = "Mean-field gradient-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean-field equation.
    Evolve(RunArgs),
    /// Compute the transport distance between two measures.
    Metric(RunArgs),
    /// Compare the particle system with its mean-field limit.
    Particles(RunArgs),
    /// Scan the Curie–Weiss model over β.
    CwScan(RunArgs),
    /// Run the invariant suite.
    Check(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest (TOML).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory [default: manifest `out_dir`, else `out`].
    #[arg(long, env = "MFGF_OUT_DIR")]
    out: Option<PathBuf>,
    /// Seed [default: manifest `seed`, else 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: manifest `threads`, else all cores].
    #[arg(long, env = "MFGF_THREADS")]
    threads: Option<usize>,
}

fn run(kind: CommandKind, args: RunArgs) -> Result<bool, Error> {
    let manifest = args.manifest.as_deref().map(LoadedManifest::from_path).transpose()?;
    let m = manifest.as_ref().map(|l| &l.manifest);
    let threads = args.threads.or(m.and_then(|m| m.threads));
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config { path: "--threads".into(), message: "must be at least 1".into() });
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out_dir = args
        .out
        .or_else(|| {
            let l = manifest.as_ref()?;
            l.manifest.out_dir.as_ref().map(|d| l.base_dir.join(d))
        })
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext {
        out_dir,
        seed: args.seed.or(m.and_then(|m| m.seed)).unwrap_or(0),
        manifest_sha256: manifest.as_ref().map(|l| l.sha256.clone()).unwrap_or_else(|| "none".into()),
    };
    let report = experiments::run(kind, manifest.as_ref(), &ctx)?;
    for (name, pass) in report.verdicts.iter() {
        println!("{} {name}", if *pass { "PASS" } else { "FAIL" });
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(report.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Evolve(a) => (CommandKind::Evolve, a),
        Command::Metric(a) => (CommandKind::Metric, a),
        Command::Particles(a) => (CommandKind::Particles, a),
        Command::CwScan(a) => (CommandKind::CwScan, a),
        Command::Check(a) => (CommandKind::Check, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
