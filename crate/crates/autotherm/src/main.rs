//! Command-line front end: run a scenario to CSV, list the preset catalog,
//! or execute the verification suite.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use autotherm::acceptance;
use autotherm::models::{default_coherent_levels, InitialFactor, Kind};
use autotherm::scenarios::{
    emit_csv, emit_gnuplot, parse_config, preset_catalog, preset_config, render_csv, run_scenario,
    ScenarioConfig,
};
use autotherm::Error;

#[derive(Parser)]
#[command(name = "autotherm", version, about = "Thermodynamic ledgers for autonomous quantum systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and emit its thermodynamic table as CSV
    Run(RunArgs),
    /// List the built-in scenario presets
    ListPresets,
    /// Run the verification suite and print one line per criterion
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in preset name (see list-presets)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// Config file: flat key=value lines, dotted keys, '#' comments
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output CSV path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the sample count
    #[arg(long)]
    samples: Option<usize>,

    /// Override the integrator step for damped runs, in the run's time unit
    #[arg(long)]
    dt: Option<f64>,

    /// Override the run length, in the run's dimensionless time unit
    #[arg(long)]
    tmax: Option<f64>,

    /// Override the coherent-state amplitude (oscillator scenarios)
    #[arg(long)]
    alpha: Option<f64>,

    /// Also write a ready-to-run gnuplot script next to the CSV (needs --out)
    #[arg(long)]
    gnuplot: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::ListPresets => {
            for (name, desc) in preset_catalog() {
                println!("{name:<28} {desc}");
            }
            Ok(())
        }
        Cmd::Verify => {
            let outcomes = acceptance::run_all()?;
            print!("{}", acceptance::format_report(&outcomes));
            if !acceptance::all_passed(&outcomes) {
                std::process::exit(2);
            }
            Ok(())
        }
        Cmd::Run(args) => run_cmd(args),
    }
}

fn base_config(args: &RunArgs) -> Result<ScenarioConfig, Error> {
    match (&args.preset, &args.config) {
        (Some(name), None) => preset_config(name),
        (None, Some(path)) => parse_config(&std::fs::read_to_string(path)?),
        (None, None) => Err(Error::BadSpec("run needs --preset or --config".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

fn apply_alpha(cfg: &mut ScenarioConfig, alpha: f64) -> Result<(), Error> {
    let oscillator_b =
        cfg.model.subsystems.len() == 2 && cfg.model.subsystems[1].kind == Kind::Oscillator;
    if !oscillator_b {
        return Err(Error::BadSpec(
            "--alpha needs a scenario whose second subsystem is an oscillator".into(),
        ));
    }
    cfg.initial.factors[1] = InitialFactor::Coherent(alpha);
    cfg.model.subsystems[1].truncation = default_coherent_levels(alpha);
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), Error> {
    let mut cfg = base_config(&args)?;
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(dt) = args.dt {
        cfg.dt = Some(dt);
    }
    if let Some(t) = args.tmax {
        cfg.t_max = t;
    }
    if let Some(a) = args.alpha {
        apply_alpha(&mut cfg, a)?;
    }
    if let Some(out) = &args.out {
        cfg.out_path = Some(out.clone());
    }
    let table = run_scenario(&cfg)?;
    match &cfg.out_path {
        Some(path) => {
            emit_csv(&table, path)?;
            if args.gnuplot {
                emit_gnuplot(&table, path, &path.with_extension("gp"))?;
            }
        }
        None => {
            if args.gnuplot {
                return Err(Error::BadSpec(
                    "--gnuplot needs --out: the script references the CSV file".into(),
                ));
            }
            print!("{}", render_csv(&table));
        }
    }
    Ok(())
}
