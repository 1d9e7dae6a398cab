use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tuav_cbf::config::{config_to_toml, load_config};
use tuav_cbf::manifest::{load_manifest, RunManifest, Verbosity};
use tuav_cbf::output::{infer_config, read_csv_file, write_trajectory, Format};
use tuav_cbf::sim::{run_scenario, verify_log, CheckOutcome, InvariantReport, SimError};
use tuav_cbf::suite::{run_suite, EXIT_CONFIG, EXIT_PASS, EXIT_RUNTIME, EXIT_SAFETY};

#[derive(Parser)]
#[command(name = "tuav-cbf", version, about = "Tethered UAV simulator with a CBF-QP safety filter")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Both => Format::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VerbosityArg {
    Quiet,
    Summary,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a config file.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Disable the safety filter.
        #[arg(long)]
        no_filter: bool,
        /// Fail unless the run is free of random number generation.
        #[arg(long)]
        seedless: bool,
        /// Also write the fully resolved config next to the trajectory.
        #[arg(long)]
        emit_config: bool,
    },
    /// Run the canonical scenarios, or a manifest's list.
    Suite {
        manifest: Option<PathBuf>,
        /// Overrides the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        seedless: bool,
        #[arg(long, value_enum)]
        verbosity: Option<VerbosityArg>,
    },
    /// Re-verify invariants on an existing CSV log.
    Check {
        csv: PathBuf,
        /// Config the log was produced with; inferred from the log if absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn seedless_check(requested: bool) -> Result<(), i32> {
    if requested && tuav_cbf::USES_RNG {
        eprintln!("error: --seedless requested but the simulator draws random numbers");
        return Err(EXIT_RUNTIME);
    }
    Ok(())
}

fn print_report(report: &InvariantReport) {
    for c in &report.checks {
        let outcome = match c.outcome {
            CheckOutcome::Pass => "pass",
            CheckOutcome::Fail => "FAIL",
            CheckOutcome::NotApplicable => "n/a",
        };
        let kind = if c.safety { "safety" } else { "diagnostic" };
        println!("  {:<20} {outcome:<5} [{kind}] {}", c.name, c.detail);
    }
}

fn report_exit(report: &InvariantReport) -> i32 {
    if report.safety_ok() {
        EXIT_PASS
    } else {
        EXIT_SAFETY
    }
}

fn sim_exit(e: &SimError) -> i32 {
    match e {
        SimError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn cmd_run(
    config: &Path,
    out: &Path,
    format: Format,
    no_filter: bool,
    emit_config: bool,
) -> i32 {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    if no_filter {
        cfg.filter_enabled = false;
    }
    let log = match run_scenario(&cfg) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return sim_exit(&e);
        }
    };
    let name = stem(config);
    let mut files = match write_trajectory(&log, out, &name, format) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    if emit_config {
        let path = out.join(format!("{name}.resolved.toml"));
        if let Err(e) = std::fs::write(&path, config_to_toml(&cfg)) {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_RUNTIME;
        }
        files.push(path);
    }
    let report = verify_log(&log, &cfg);
    let s = &log.summary;
    println!(
        "{name}: {} records, min_h={:.6e} max_r={:.6e} final_err={:.6e}",
        log.len(),
        s.min_h,
        s.max_r,
        s.final_error_norm
    );
    print_report(&report);
    for f in files {
        println!("wrote {}", f.display());
    }
    report_exit(&report)
}

fn cmd_suite(
    manifest: Option<&Path>,
    out: Option<PathBuf>,
    format: Option<Format>,
    no_filter: bool,
    verbosity: Option<Verbosity>,
) -> i32 {
    let mut m = match manifest {
        Some(p) => match load_manifest(p) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return EXIT_CONFIG;
            }
        },
        None => RunManifest::default(),
    };
    if let Some(o) = out {
        m.out = o;
    }
    if let Some(f) = format {
        m.format = f;
    }
    if let Some(v) = verbosity {
        m.verbosity = v;
    }
    m.no_filter |= no_filter;
    let report = match run_suite(&m) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    print!("{}", report.render(m.verbosity));
    report.exit_code()
}

fn cmd_check(csv: &Path, config: Option<&Path>) -> i32 {
    let given = match config.map(load_config).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let read_with = given.unwrap_or_default();
    let log = match read_csv_file(csv, &read_with) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", csv.display());
            return EXIT_CONFIG;
        }
    };
    let (cfg, log) = match given {
        Some(c) => (c, log),
        None => {
            let c = infer_config(&log);
            let relinked = tuav_cbf::sim::TrajectoryLog::new(log.records, &c);
            (c, relinked)
        }
    };
    let report = verify_log(&log, &cfg);
    println!("{}: {} records", csv.display(), log.len());
    print_report(&report);
    report_exit(&report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let code = match cli.command {
        Command::Run {
            config,
            out,
            format,
            no_filter,
            seedless,
            emit_config,
        } => seedless_check(seedless)
            .map(|_| cmd_run(&config, &out, format.into(), no_filter, emit_config))
            .unwrap_or_else(|c| c),
        Command::Suite {
            manifest,
            out,
            format,
            no_filter,
            seedless,
            verbosity,
        } => seedless_check(seedless)
            .map(|_| {
                cmd_suite(
                    manifest.as_deref(),
                    out,
                    format.map(Into::into),
                    no_filter,
                    verbosity.map(|v| match v {
                        VerbosityArg::Quiet => Verbosity::Quiet,
                        VerbosityArg::Summary => Verbosity::Summary,
                        VerbosityArg::Full => Verbosity::Full,
                    }),
                )
            })
            .unwrap_or_else(|c| c),
        Command::Check { csv, config } => cmd_check(&csv, config.as_deref()),
    };
    ExitCode::from(code as u8)
}
