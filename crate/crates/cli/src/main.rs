use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hermite_fem::runner::{run_experiment, Levels, RunConfig, RunSummary};

/// Runs the Hermite finite element experiments and writes CSV reports.
///
/// Exit codes: 0 success, 1 usage error, 2 solver failure, 3 invariant
/// violation.
#[derive(Debug, Parser)]
#[command(name = "hermite-fem", version)]
struct Args {
    /// TOML run description; flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// exp1, exp2, exp3, exp4 or custom (custom needs a config file).
    #[arg(long)]
    experiment: Option<String>,
    /// Polynomial degree, 3 or 4.
    #[arg(long)]
    degree: Option<usize>,
    /// `4,8,16` (uniform n × n meshes) or `graded:<count>[:<C>]`.
    #[arg(long)]
    levels: Option<Levels>,
    /// Newton stopping threshold on the increment norm (default 1e-8, 1e-6 for
    /// exp4).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Face coefficient parameter for linear problems, in [0, ε].
    #[arg(long)]
    eps_tilde: Option<f64>,
    /// Also write each level's mesh as `mesh_<level>.txt`.
    #[arg(long)]
    save_meshes: bool,
}

fn config_from(args: Args) -> Result<RunConfig, String> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => RunConfig::new(args.experiment.clone().ok_or("either --config or --experiment is required")?),
    };
    if let Some(e) = args.experiment {
        config.experiment = e;
    }
    if let Some(k) = args.degree {
        config.degree = k;
    }
    if let Some(l) = args.levels {
        config.levels = Some(l);
    }
    if args.tol.is_some() {
        config.tol = args.tol;
    }
    if let Some(m) = args.max_iter {
        config.max_iter = m;
    }
    if let Some(o) = args.out {
        config.out = o;
    }
    if args.eps_tilde.is_some() {
        config.eps_tilde = args.eps_tilde;
    }
    config.save_meshes |= args.save_meshes;
    Ok(config)
}

fn print_summary(config: &RunConfig, summary: &RunSummary) {
    println!("{} k={} -> {}", config.experiment, config.degree, config.out.display());
    println!("{:>5} {:>9} {:>9} {:>12} {:>12} {:>12} {:>8}", "level", "triangles", "ndof", "L2", "H1", "H2", "newton");
    for r in &summary.levels {
        let (ndof, l2, h1, h2) = match r.errors {
            Some(e) => (e.ndof.to_string(), format!("{:.5e}", e.l2), format!("{:.5e}", e.h1), format!("{:.5e}", e.h2_broken)),
            None => Default::default(),
        };
        let newton = r.newton.as_ref().map(|(h, _)| h.len().to_string()).unwrap_or_else(|| "-".into());
        println!("{:>5} {:>9} {:>9} {:>12} {:>12} {:>12} {:>8}", r.level, r.triangles, ndof, l2, h1, h2, newton);
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let config = match config_from(args) {
        Ok(c) => c,
        Err(m) => {
            eprintln!("usage error: {m}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&config) {
        Ok(summary) => {
            print_summary(&config, &summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
