use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use demailly_lab::checks;
use demailly_lab::cli::{
    self, approx_csv_header, approx_rows, envelope_rows, field_csv_header, kernel_csv_header, kernel_rows,
    parse_point, CheckKind, ExperimentConfig, WeightEntry,
};
use demailly_lab::demailly::{converge_run, ConvergenceReport};
use demailly_lab::domains::{make_grid, DomainKind, Point};
use demailly_lab::envelope::psh_envelope_toric;
use demailly_lab::Error;

#[derive(Parser)]
#[command(name = "demailly-lab", version, about = "Weighted Bergman kernels, Demailly approximants and psh envelopes")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for `run` (overrides DEMAILLY_LAB_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict `run` to these checks.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<CheckKind>,
    /// Seed for randomized checks (default: the config's, else 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the config's checks and write CSV reports plus summary.json.
    Run,
    /// Print diagonal kernel values.
    Kernel(Overrides),
    /// Print Demailly approximants V_m.
    Approx(Overrides),
    /// Print the psh envelope field of a toric weight.
    Envelope(Overrides),
    /// Print a convergence report; exits 1 on bound violations.
    Converge(Overrides),
    /// Run the acceptance property suite and print a pass/fail table.
    CheckInvariants,
}

#[derive(Args, Default)]
struct Overrides {
    /// Catalog weight; replaces the config's weight list.
    #[arg(long)]
    weight: Option<String>,
    /// Pole coefficients, comma-separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    /// Values of m, comma-separated; replaces the schedule.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u32>>,
    /// Evaluation point, e.g. `0.5` or `0.3+0.1i,0.2`; repeatable.
    #[arg(long, value_parser = parse_point)]
    z: Vec<Point>,
    /// Domain kind: disk or polydisk.
    #[arg(long, value_parser = parse_kind)]
    domain: Option<DomainKind>,
}

fn parse_kind(s: &str) -> Result<DomainKind, String> {
    match s {
        "disk" => Ok(DomainKind::Disk),
        "polydisk" => Ok(DomainKind::Polydisk),
        other => Err(format!("unknown domain `{other}` (expected disk or polydisk)")),
    }
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::from_path)
}

fn apply(mut cfg: ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig, Error> {
    if let Some(kind) = o.domain {
        cfg.domain.kind = kind;
        cfg.domain.radii = None;
    }
    if let Some(name) = &o.weight {
        cfg.weights = vec![WeightEntry {
            gamma: o.gamma.clone(),
            epsilon: o.epsilon,
            shift: o.shift,
            ..WeightEntry::named(name)
        }];
    } else if o.gamma.is_some() || o.epsilon.is_some() || o.shift.is_some() {
        for w in &mut cfg.weights {
            w.gamma = o.gamma.clone().or(w.gamma.take());
            w.epsilon = o.epsilon.or(w.epsilon);
            w.shift = o.shift.or(w.shift);
        }
    }
    if let Some(m) = &o.m {
        cfg.schedule = m.clone();
    }
    cfg.validate()?;
    if cfg.weights.is_empty() {
        return Err(Error::Config("no weight given: use --weight or a config with [[weights]]".into()));
    }
    Ok(cfg)
}

fn points(cfg: &ExperimentConfig, o: &Overrides) -> Result<Vec<Point>, Error> {
    if o.z.is_empty() {
        Ok(make_grid(&cfg.domain.build()?, &cfg.grid)?.points)
    } else {
        Ok(o.z.clone())
    }
}

/// Exit status 2 marks unusable input; numerical errors use 1.
fn status(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Catalog(_) | Error::Domain(_) | Error::OutsideDomain { .. } => {
            ExitCode::from(2)
        }
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            status(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    let base = load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(base.seed);
    match &cli.command {
        Command::Run => {
            if cli.config.is_none() {
                return Err(Error::Config("`run` needs --config".into()));
            }
            let out = cli::output_dir(cli.out.as_deref(), &base);
            let only = (!cli.only.is_empty()).then_some(cli.only.as_slice());
            let summary = cli::run(&base, &out, only, seed)?;
            for r in &summary.checks {
                println!(
                    "{:<9} {}  rows {:>6}  violations {:>4}  failures {}",
                    r.check,
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.rows,
                    r.violations,
                    r.failures.len()
                );
                for f in &r.failures {
                    println!("          {}: {}", f.weight, f.message);
                }
            }
            println!("reports written to {}", out.display());
            if !summary.failed_checks.is_empty() {
                let names: Vec<String> = summary.failed_checks.iter().map(ToString::to_string).collect();
                eprintln!("failed checks: {}", names.join(", "));
            }
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Kernel(o) => {
            let cfg = apply(base, o)?;
            let domain = cfg.domain.build()?;
            let pts = points(&cfg, o)?;
            println!("{}", kernel_csv_header(domain.dim()));
            for entry in &cfg.weights {
                let w = entry.build(domain.dim())?;
                for (line, _) in kernel_rows(&w, &domain, &cfg.schedule, &pts, &cfg.settings())? {
                    println!("{line}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Approx(o) => {
            let cfg = apply(base, o)?;
            let domain = cfg.domain.build()?;
            let pts = points(&cfg, o)?;
            println!("{}", approx_csv_header(domain.dim()));
            for entry in &cfg.weights {
                let w = entry.build(domain.dim())?;
                for line in approx_rows(&w, &domain, &cfg.schedule, &pts, &cfg.settings())? {
                    println!("{line}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Envelope(o) => {
            let cfg = apply(base, o)?;
            let domain = cfg.domain.build()?;
            println!("{}", field_csv_header(domain.dim()));
            let t = &cfg.tolerances;
            for entry in &cfg.weights {
                let w = entry.build(domain.dim())?;
                let env = psh_envelope_toric(&w, &domain, &cfg.envelope_grid, t.envelope_tol, t.envelope_max_iter)?;
                for (line, _) in envelope_rows(&w, &env) {
                    println!("{line}");
                }
                let summary = serde_json::to_string(&env.summary()).expect("summary serializes");
                eprintln!("{}: {summary}", w.name());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Converge(o) => {
            let cfg = apply(base, o)?;
            let domain = cfg.domain.build()?;
            let pts = points(&cfg, o)?;
            println!("{}", ConvergenceReport::csv_header(domain.dim()));
            let mut violations = 0;
            for entry in &cfg.weights {
                let w = entry.build(domain.dim())?;
                let t = &cfg.tolerances;
                let oracle = if w.is_toric() {
                    Some(psh_envelope_toric(&w, &domain, &cfg.envelope_grid, t.envelope_tol, t.envelope_max_iter)?)
                } else {
                    None
                };
                let report = converge_run(&w, &domain, &cfg.schedule, &pts, &cfg.settings(), oracle.as_ref())?;
                report.write_rows(std::io::stdout().lock())?;
                violations += report.rows.iter().filter(|r| r.violated()).count();
                let summary = serde_json::to_string(&report.summary).expect("summary serializes");
                eprintln!("{summary}");
            }
            Ok(if violations == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::CheckInvariants => {
            let outcomes = checks::run_all(seed);
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} passed, {failed} failed", outcomes.len() - failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
