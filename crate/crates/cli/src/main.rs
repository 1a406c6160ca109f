use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pisim_cli::commands;
use pisim_cli::config::{load_config, Overrides};
use pisim_cli::presets;
use pisim_core::calibration;
use pisim_core::{ProtocolVariant, WsaMode};

#[derive(Parser)]
#[command(name = "pisim", version, about = "Cost model and simulator for hybrid private inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-phase latency breakdown of one inference.
    Costs(Common),
    /// Storage per pre-computed inference, both protocols.
    Storage(Common),
    /// Sequential against layer-parallel HE on the server.
    Lphe(Common),
    /// Communication time over the upload share of the link.
    Wsa(Common),
    /// Accumulated acceleration ladder.
    Whatif(Common),
    /// Dump the message trace of one inference.
    Trace(Common),
    /// Replications at a single arrival rate.
    Simulate(Common),
    /// Replications over a list of arrival rates.
    Sweep(Common),
    /// Sweeps for every configured series.
    Compare(Common),
    /// Refit the calibration and write its files.
    Calibrate {
        #[arg(long, default_value = "calibration")]
        out: PathBuf,
    },
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Config file, or `preset:<name>`.
    #[arg(long)]
    config: String,
    /// Directory for record files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Rates in requests/s: `0.001,1/30m`, `geom:1/3h:1/15m:20`, `lin:...`.
    #[arg(long)]
    rates: Option<String>,
    /// sg or cg.
    #[arg(long)]
    protocol: Option<ProtocolVariant>,
    /// on or off.
    #[arg(long, value_parser = parse_on_off)]
    lphe: Option<bool>,
    /// even, opt or fixed:<fraction>.
    #[arg(long)]
    wsa: Option<WsaMode>,
    /// Print the resolved configuration with the origin of every value and exit.
    #[arg(long)]
    explain: bool,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn run_common(name: &str, c: &Common, cmd: fn(&pisim_cli::Resolved) -> Result<commands::Report>) -> Result<()> {
    let overrides = Overrides {
        seed: c.seed,
        runs: c.runs,
        rates: c.rates.clone(),
        protocol: c.protocol,
        lphe: c.lphe,
        wsa: c.wsa,
    };
    let resolved = load_config(&c.config, &overrides)?;
    if c.explain {
        print!("{}", resolved.explain());
        return Ok(());
    }
    let report = cmd(&resolved).with_context(|| format!("{name} failed"))?;
    print!("{}", report.table);
    for p in report.write(&c.out, &timestamp())? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Costs(c) => run_common("costs", &c, commands::costs),
        Command::Storage(c) => run_common("storage", &c, commands::storage),
        Command::Lphe(c) => run_common("lphe", &c, commands::lphe),
        Command::Wsa(c) => run_common("wsa", &c, commands::wsa),
        Command::Whatif(c) => run_common("whatif", &c, commands::whatif),
        Command::Trace(c) => run_common("trace", &c, commands::trace),
        Command::Simulate(c) => run_common("simulate", &c, commands::simulate),
        Command::Sweep(c) => run_common("sweep", &c, commands::sweep_cmd),
        Command::Compare(c) => run_common("compare", &c, commands::compare),
        Command::Calibrate { out } => {
            let cal = calibration::fit(&calibration::Anchors::default())?;
            println!(
                "he exponent {:.6}, he scale {:.6e} s, {} networks",
                cal.he_exponent,
                cal.he_scale_s,
                cal.networks.len()
            );
            for p in calibration::write_files(&cal, &out).with_context(|| format!("writing {}", out.display()))? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Presets { name: None } => {
            for n in presets::names() {
                println!("{n}");
            }
            Ok(())
        }
        Command::Presets { name: Some(n) } => match presets::get(&n) {
            Some(text) => {
                print!("{text}");
                Ok(())
            }
            None => bail!("unknown preset `{n}`"),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
