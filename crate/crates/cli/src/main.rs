mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use gelfand_core::experiments::{config_hash, format_number};
use gelfand_core::golden::{self, GoldenCheck};
use gelfand_core::{
    bounds_report, branch_scan, lambda_star_bisect, sweep_a, sweep_p, Error, ProblemSetup, SweepResult,
};

use config::{ConfigError, Format, Overrides, RunConfig};

/// Torsion functions, extremal-parameter bounds and minimal-solution branches
/// for radial Gelfand problems with drift on the unit ball.
#[derive(Debug, Parser)]
#[command(name = "gelfand", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Torsion function psi on the grid nodes.
    Torsion(Overrides),
    /// Lower and upper bounds on lambda* with the discrete bracket.
    Bounds(Overrides),
    /// Bisection bracket on the discrete extremal parameter.
    LambdaStar(Overrides),
    /// Minimal solutions at fractions of lambda_lo.
    Branch(Overrides),
    /// Sweep over the drift amplitude A.
    SweepA(Overrides),
    /// Sweep over the composition exponent p of f(u^p).
    SweepP(Overrides),
    /// Run the built-in golden-value suite.
    Verify {
        /// Run only these criteria (comma-separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some() || matches!(c.downcast_ref::<Error>(), Some(Error::Config { .. }))
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (name, overrides) = match &cli.command {
        Command::Verify { only, format } => return verify(only.as_deref(), format.unwrap_or(Format::Csv)),
        Command::Torsion(o) => ("torsion", o),
        Command::Bounds(o) => ("bounds", o),
        Command::LambdaStar(o) => ("lambda-star", o),
        Command::Branch(o) => ("branch", o),
        Command::SweepA(o) => ("sweep-a", o),
        Command::SweepP(o) => ("sweep-p", o),
    };
    let cfg = RunConfig::resolve(name, overrides)?;
    if let Some(n) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let setup = setup_of(&cfg)?;
    let text = match &cli.command {
        Command::Torsion(_) => torsion(&cfg, &setup)?,
        Command::Bounds(_) => bounds(&cfg, &setup)?,
        Command::LambdaStar(_) => lambda_star(&cfg, &setup)?,
        Command::Branch(_) => sweep(&cfg, branch_scan(&setup, &cfg.fractions, &cfg.tolerances)?)?,
        Command::SweepA(_) => sweep(&cfg, sweep_a(&setup, &cfg.a_list, &cfg.tolerances)?)?,
        Command::SweepP(_) => sweep(&cfg, sweep_p(&setup, &cfg.p_list, &cfg.tolerances)?)?,
        Command::Verify { .. } => unreachable!(),
    };
    emit(&cfg, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn setup_of(cfg: &RunConfig) -> Result<ProblemSetup> {
    let invalid = |field: &str, e: Error| ConfigError {
        field: field.into(),
        reason: e.to_string(),
    };
    let profile = cfg.flow.build().map_err(|e| invalid("flow", e))?;
    let nl = cfg.nonlinearity.build().map_err(|e| invalid("nonlinearity", e))?;
    let mut setup = ProblemSetup::new(profile, cfg.amplitude, cfg.dim, nl, cfg.cells);
    setup.stencil = cfg.stencil;
    Ok(setup)
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => write_stdout(text)?,
    }
    Ok(())
}

/// A reader that closes the pipe early is not an error.
fn write_stdout(text: &str) -> std::io::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}

fn csv_header(config_json: &str) -> String {
    format!("# config-sha256: {}\n# config: {config_json}\n", config_hash(config_json))
}

fn json_doc(cfg: &RunConfig, body: serde_json::Value) -> Result<String> {
    let config_json = cfg.to_json();
    let config: serde_json::Value = serde_json::from_str(&config_json)?;
    let doc = json!({
        "config_sha256": config_hash(&config_json),
        "config": config,
        "result": body,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn torsion(cfg: &RunConfig, setup: &ProblemSetup) -> Result<String> {
    let tp = setup.torsion()?;
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json_doc(
            cfg,
            json!({ "psi_max": tp.psi_max, "r": tp.nodes, "psi": tp.psi, "dpsi": tp.dpsi }),
        ),
        Format::Csv => {
            let mut out = csv_header(&cfg.to_json());
            writeln!(out, "# psi_max: {}", format_number(tp.psi_max))?;
            out.push_str("r,psi,dpsi\n");
            for i in 0..tp.nodes.len() {
                writeln!(
                    out,
                    "{},{},{}",
                    format_number(tp.nodes[i]),
                    format_number(tp.psi[i]),
                    format_number(tp.dpsi[i])
                )?;
            }
            Ok(out)
        }
    }
}

fn bounds(cfg: &RunConfig, setup: &ProblemSetup) -> Result<String> {
    let report = bounds_report(setup, &cfg.tolerances, cfg.alpha_points)?;
    if !report.sandwich_ok {
        log::warn!(
            "bounds do not sandwich the discrete bracket: lower {} upper {} bracket [{}, {}]",
            report.best_lower(),
            report.best_upper(),
            report.lambda_lo,
            report.lambda_hi
        );
    }
    let value = serde_json::to_value(&report)?;
    match cfg.format.unwrap_or(Format::Json) {
        Format::Json => json_doc(cfg, value),
        Format::Csv => Ok(key_value_csv(&cfg.to_json(), &value)),
    }
}

fn lambda_star(cfg: &RunConfig, setup: &ProblemSetup) -> Result<String> {
    let op = setup.operator()?;
    let ls = lambda_star_bisect(&op, &setup.nl, cfg.tolerances.bisection)?;
    let value = json!({
        "lambda_lo": ls.lo,
        "lambda_hi": ls.hi,
        "lambda_mid": ls.mid(),
        "width": ls.width(),
        "steps": ls.steps,
        "certificate": ls.certificate,
        "psi_h_max": ls.psi_h_max,
        "u_max_at_lo": ls.witness.u_max(),
        "kappa1_at_lo": ls.witness.kappa1,
    });
    match cfg.format.unwrap_or(Format::Json) {
        Format::Json => json_doc(cfg, value),
        Format::Csv => Ok(key_value_csv(&cfg.to_json(), &value)),
    }
}

/// Two-column CSV of the scalar entries of a flat JSON object.
fn key_value_csv(config_json: &str, value: &serde_json::Value) -> String {
    let mut out = csv_header(config_json);
    out.push_str("quantity,value\n");
    if let Some(map) = value.as_object() {
        for (k, v) in map {
            let cell = match v {
                serde_json::Value::Number(n) => n.as_f64().map(format_number).unwrap_or_else(|| n.to_string()),
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Null => "NaN".to_string(),
                _ => continue,
            };
            let _ = writeln!(out, "{k},{cell}");
        }
    }
    out
}

fn sweep(cfg: &RunConfig, result: SweepResult) -> Result<String> {
    for v in result.verdicts.iter().filter(|v| !v.passed) {
        log::warn!("verdict `{}` failed: {}", v.name, v.detail);
    }
    for (point, why) in &result.skipped {
        log::warn!("skipped {point}: {why}");
    }
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => Ok(result.to_csv(&cfg.to_json())),
        Format::Json => json_doc(
            cfg,
            json!({
                "columns": result.columns,
                "rows": result.rows,
                "summary": result.verdict_summary(),
            }),
        ),
    }
}

fn verify(only: Option<&[u32]>, format: Format) -> Result<ExitCode> {
    let checks: Vec<GoldenCheck> = golden::CRITERIA
        .iter()
        .filter(|(id, _, _)| only.is_none_or(|ids| ids.contains(id)))
        .map(|&(id, title, f)| golden::run_one(id, title, f))
        .collect();
    if checks.is_empty() {
        return Err(ConfigError {
            field: "only".into(),
            reason: format!("no criterion among 1..={}", golden::CRITERIA.len()),
        }
        .into());
    }
    let mut out = String::new();
    match format {
        Format::Json => out = serde_json::to_string_pretty(&checks)? + "\n",
        Format::Csv => {
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                writeln!(out, "criterion {:>2} {status}  {}", c.id, c.title)?;
                writeln!(out, "    {}", c.detail)?;
            }
        }
    }
    write_stdout(&out)?;
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
