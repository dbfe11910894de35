use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ensemble_core::galerkin::{ensemble_propagate, uniform_grid, EnsembleReport, PiecewiseControl};
use ensemble_core::pipeline::{
    load_model, plan, run_pipeline, run_trend, trend_csv, write_artifacts, write_plan, ExitStatus, PipelineConfig,
    PipelineError,
};
use ensemble_core::spectral::{model_from_json, truncate, validate_assumptions};

#[derive(Parser)]
#[command(name = "ensemble", version, about = "Ensemble pulse synthesis for bilinear quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the driven-pair assumptions of a model file.
    Validate { model: PathBuf },
    /// Fit, synthesize and schedule; writes train.json and control files.
    Synthesize {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a saved control over the α grid; writes report.csv.
    Simulate {
        config: PathBuf,
        control: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full run with report, stage table and summary.
    Report {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Comma-separated synthesis slice counts for a trend table.
        #[arg(long, value_delimiter = ',')]
        trend: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    grid_points: Option<usize>,
    /// Cap on the averaging n of any stage.
    #[arg(long)]
    n_budget: Option<usize>,
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

fn load_config(path: &Path, common: &Common) -> Result<(PipelineConfig, PathBuf), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = PipelineConfig::from_json(&text)?;
    if let Some(p) = common.grid_points {
        cfg.grid.points = p;
    }
    if let Some(n) = common.n_budget {
        cfg.averaging.n_max = n;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn validate(model: &Path) -> Result<ExitStatus, PipelineError> {
    let m = model_from_json(&read(model)?)?;
    let report = validate_assumptions(&m)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(if report.passed {
        ExitStatus::Success
    } else {
        ExitStatus::Validation
    })
}

fn synthesize(config: &Path, common: &Common) -> Result<ExitStatus, PipelineError> {
    let (cfg, base) = load_config(config, common)?;
    let p = plan(&cfg, &base)?;
    write_plan(&p, &cfg, &common.output)?;
    for n in &p.notes {
        eprintln!("note: {n}");
    }
    println!(
        "degree {} train {} segments, {} stages, control {} steps over {:.6e}",
        p.fit_degree,
        p.train.len(),
        p.stages.len(),
        p.control.step_count(),
        p.control.total_duration()
    );
    Ok(p.status)
}

fn simulate(config: &Path, control: &Path, common: &Common) -> Result<ExitStatus, PipelineError> {
    let (cfg, base) = load_config(config, common)?;
    let model = load_model(&cfg.model, &base)?;
    let system = truncate(&model, cfg.dimension.unwrap_or(model.dimension()))?;
    let text = read(control)?;
    let ctrl = if control.extension().is_some_and(|e| e == "csv") {
        PiecewiseControl::from_csv(&text)?
    } else {
        PiecewiseControl::from_json(&text)?
    };
    ctrl.check_bound(cfg.delta)?;
    let grid = uniform_grid(cfg.grid.points);
    let props = ensemble_propagate(&system, &ctrl, &grid)?;
    let report = EnsembleReport::from_propagators(&grid, &props, &cfg.target);
    std::fs::create_dir_all(&common.output).map_err(|e| PipelineError::Io(e.to_string()))?;
    write(&common.output.join("report.csv"), &report.to_csv())?;
    println!("sup moduli error {:.6e} over {} points", report.sup_error, grid.len());
    Ok(ExitStatus::Success)
}

fn report(config: &Path, common: &Common, trend: &[usize]) -> Result<ExitStatus, PipelineError> {
    let (cfg, base) = load_config(config, common)?;
    let out = run_pipeline(&cfg, &base)?;
    write_artifacts(&out, &cfg, &common.output)?;
    let s = &out.summary;
    println!(
        "sup moduli error {:.6e} (fit floor {:.6e}, two-level {:.6e}), degree {}, {} stages",
        s.sup_error, s.fit_floor, s.aux_error, s.fit_degree, s.stages
    );
    if !trend.is_empty() {
        let rows = run_trend(&cfg, &base, trend)?;
        write(&common.output.join("trend.csv"), &trend_csv(&rows))?;
        for r in &rows {
            println!("n = {:>6}: sup {:.6e}, fit floor {:.6e}", r.n, r.sup_error, r.fit_floor);
        }
    }
    Ok(out.status())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { model } => validate(model),
        Command::Synthesize { config, common } => synthesize(config, common),
        Command::Simulate { config, control, common } => simulate(config, control, common),
        Command::Report { config, common, trend } => report(config, common, trend),
    };
    let status = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_status()
    });
    ExitCode::from(status.code() as u8)
}
