use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oodbench::bench::{
    cell_seed, emit_grid, format_text_table, read_reports_csv, render_png, run_benchmark, write_atomic, BenchConfig,
    GridField, MethodConfig,
};
use oodbench::toyspace::generate_toy;
use oodbench::{OodError, Points, ToyKind, ToySpec};

#[derive(Parser)]
#[command(name = "oodbench", version, about = "Toy benchmarks for out-of-distribution detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Txt,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, toy) cell of a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the report table of a run directory.
    Table {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "txt")]
        format: TableFormat,
    },
    /// Fit one method on one toy and write its confidence grid.
    Grid {
        #[arg(long)]
        toy: String,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a grid CSV as PNG.
    Plot {
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV whose first two columns are drawn as black markers.
        #[arg(long)]
        train: Option<PathBuf>,
        /// CSV whose first two columns are drawn as white markers.
        #[arg(long)]
        synthetic: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Cells(String),
}

impl From<OodError> for Failure {
    fn from(e: OodError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn read_xy(path: &Path) -> Result<Points, Failure> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Failure::Config(e.to_string()))?;
        let xy: Result<Vec<f64>, _> = rec.iter().take(2).map(str::parse::<f64>).collect();
        let xy = xy.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        if xy.len() == 2 {
            rows.push(xy);
        }
    }
    Ok(Points::from_rows(&rows)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, jobs, seed } => {
            let mut cfg = BenchConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::Config("no output directory: pass --out".into()))?;
            let summary = run_benchmark(&cfg, &out, jobs)?;
            eprintln!("{} cells succeeded, {} failed", summary.reports.len(), summary.failures.len());
            for f in &summary.failures {
                eprintln!("  {} / {}: {}", f.method, f.toy, f.error);
            }
            if !summary.failures.is_empty() {
                return Err(Failure::Cells(format!("see {}", out.join("failures.csv").display())));
            }
        }
        Command::Table { dir, format } => {
            let path = dir.join("reports.csv");
            let text = fs::read(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            match format {
                TableFormat::Csv => print!("{}", String::from_utf8_lossy(&text)),
                TableFormat::Txt => print!("{}", format_text_table(&read_reports_csv(&text[..])?)?),
            }
        }
        Command::Grid { toy, method, resolution, out, seed } => {
            let kind = ToyKind::parse(&toy)?;
            let method = MethodConfig::from_name(&method)?;
            if resolution < 2 {
                return Err(Failure::Config("resolution must be at least 2".into()));
            }
            let spec = ToySpec::default_for(kind);
            let splits = generate_toy(&spec, seed, 1000, 1000, 2000)?;
            let cell = cell_seed(seed, &method.label(), kind);
            let fitted = method.fit(&splits, &spec, cell).map_err(|e| Failure::Cells(e.to_string()))?;
            let grid = emit_grid(&spec, resolution, cell, |p| fitted.confidence(p))
                .map_err(|e| Failure::Cells(e.to_string()))?;
            let mut buf = Vec::new();
            grid.write_csv(&mut buf)?;
            write_atomic(&out, &buf)?;
        }
        Command::Plot { grid, out, train, synthetic } => {
            let file = fs::File::open(&grid).map_err(|e| Failure::Config(format!("{}: {e}", grid.display())))?;
            let field = GridField::read_csv(file)?;
            let train = train.as_deref().map(read_xy).transpose()?;
            let synthetic = synthetic.as_deref().map(read_xy).transpose()?;
            let png = render_png(&field, train.as_ref(), synthetic.as_ref())?;
            write_atomic(&out, &png)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Cells(m)) => {
            eprintln!("error: partial failure, {m}");
            ExitCode::from(2)
        }
    }
}
