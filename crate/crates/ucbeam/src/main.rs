use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use ucbeam::cli::{emit_reports, run_pipeline, Format, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "ucbeam", about = "Glued geometric-optics beams and their certification")]
struct Args {
    #[command(subcommand)]
    command: Option<Command>,
    /// JSON run configuration; defaults are used when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// stage to run, overriding the subcommand
    #[arg(long, global = true, value_enum)]
    stage: Option<Stage>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// alpha = 10 with the strict exponent check
    #[arg(long, global = true)]
    strict_alpha: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// also dump envelopes as binary
    #[arg(long, global = true)]
    fields: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    VerifyEikonal,
    BuildBands,
    FindSurfaces,
    Assemble,
    Certify,
    AadsPure,
    AadsGncc,
    Full,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::VerifyEikonal => Stage::VerifyEikonal,
            Command::BuildBands => Stage::BuildBands,
            Command::FindSurfaces => Stage::FindSurfaces,
            Command::Assemble => Stage::Assemble,
            Command::Certify => Stage::Certify,
            Command::AadsPure => Stage::AadsPure,
            Command::AadsGncc => Stage::AadsGncc,
            Command::Full => Stage::Full,
        }
    }
}

fn run(args: Args) -> ucbeam::Result<bool> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ucbeam::Error::Config(e.to_string()))?;
    }
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.stage.or(args.command.map(Stage::from)) {
        cfg.stage = s;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.strict_alpha {
        cfg.set_strict_alpha();
    }
    let out = cfg.out.clone();
    let result = run_pipeline(cfg)?;
    let mut formats = vec![Format::Json, Format::Csv];
    if args.fields {
        formats.push(Format::Fields);
    }
    emit_reports(&result, &formats, &out)?;
    for c in &result.checks {
        println!("{} [{}] {} measured={:.4e} threshold={:.4e}", if c.pass { "PASS" } else { "FAIL" }, c.criterion, c.name, c.measured, c.threshold);
    }
    for (name, secs) in &result.timings {
        eprintln!("{name}: {secs:.2}s");
    }
    Ok(result.pass())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
