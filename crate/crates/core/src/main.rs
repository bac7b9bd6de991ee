use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use globinv::cli::{invalid_config_outcome, parse_config, run, Command, KChoice, Outcome, Overrides, EXIT_INVALID};

/// Certified global inversion of nonlinear maps.
#[derive(Parser, Debug)]
#[command(name = "globinv", version)]
struct Args {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.json and CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "n-cells")]
    n_cells: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Bielecki weight rate, or `auto`.
    #[arg(long)]
    k: Option<KChoice>,
}

fn emit(outcome: &Outcome, out: Option<&PathBuf>) -> ExitCode {
    let text = serde_json::to_string_pretty(&outcome.report_with_timestamp()).expect("report serializes");
    println!("{text}");
    if let Some(dir) = out {
        if let Err(e) = outcome.write(dir) {
            eprintln!("cannot write outputs to {}: {e}", dir.display());
            return ExitCode::from(EXIT_INVALID as u8);
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let document = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_INVALID as u8);
            }
        },
        None => String::new(),
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        n_cells: args.n_cells,
        alpha: args.alpha,
        p: args.p,
        k: args.k,
    };
    let cfg = parse_config(&document, Some(args.command)).and_then(|mut c| c.apply(&overrides).map(|_| c));
    match cfg {
        Ok(cfg) => emit(&run(&cfg), cfg.out.as_ref()),
        Err(e) => emit(&invalid_config_outcome(Some(args.command), &e), args.out.as_ref()),
    }
}
