use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use oscint_cli::config::{ExperimentConfig, ExperimentKind};
use oscint_cli::{run, threads_from_env, RunError};

/// Run one oscillatory-integral experiment from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "oscint", version)]
struct Args {
    /// Experiment kind; must match the config's `experiment` field.
    experiment: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` or `out/<id>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<i32, RunError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.experiment != args.experiment {
        return Err(RunError::config(format!(
            "command asks for `{}` but the config describes `{}`",
            args.experiment.as_str(),
            cfg.experiment.as_str()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let threads = threads_from_env()?;
    let outcome = run(&cfg, args.out.as_deref(), threads)?;
    let s = &outcome.summary;
    // Output is informational; a closed stdout must not change the exit code.
    let mut out = std::io::stdout().lock();
    for f in &s.fits {
        let verdict = match f.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        let pred = f.predicted.map_or("-".to_string(), |p| format!("{p:.4}"));
        let _ = writeln!(
            out,
            "fit {}: slope {:.4} (predicted {pred}, r2 {:.4}) {verdict}",
            f.label, f.slope, f.r_squared
        );
    }
    for c in &s.checks {
        let _ = writeln!(
            out,
            "check {}: {:.4e} {} {:.4e} {}",
            c.name,
            c.value,
            c.relation,
            c.bound,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if !s.converged {
        eprintln!("warning: at least one power iteration did not converge");
    }
    let _ = writeln!(out, "wrote {}", outcome.out_dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("oscint: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
