//! Configuration-driven benchmark runner.
//!
//! Every (method, toy) cell is fitted, calibrated on validation data and
//! scored on the test split. A run directory holds:
//!
//! - `reports.csv` / `reports.txt`: metric table
//! - `failures.csv`: cells that errored or panicked
//! - `grids/<method>_<toy>.csv` (+ `.png`): confidence fields
//! - `synth/<method>_<toy>.csv`: synthetic OOD sets of supervised methods
//! - `data/<toy>_<split>.csv`: the generated splits

pub mod grid;
pub mod methods;
pub mod plot;
pub mod table;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorConfig;
use crate::error::{OodError, Result};
use crate::metrics::{evaluate, profile, MetricsReport};
use crate::points::Points;
use crate::rng::substream_key;
use crate::synthesis::SynthesisedSet;
use crate::toyspace::{generate_toy, write_dataset_csv, LabeledSplits, ToyKind, ToySpec};

pub use grid::{emit_grid, GridField};
pub use methods::{slug, FittedMethod, MethodConfig, SynthesiserConfig, WeightingConfig};
pub use plot::render_png;
pub use table::{format_text_table, read_reports_csv, write_reports_csv};

fn default_resolution() -> usize {
    100
}
fn default_colormap() -> String {
    plot::COLORMAPS[0].to_string()
}
fn default_true() -> bool {
    true
}
fn default_overlay() -> usize {
    200
}
fn default_n_train() -> usize {
    1000
}
fn default_n_valid() -> usize {
    1000
}
fn default_n_test() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyEntry {
    pub kind: ToyKind,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_valid")]
    pub n_valid: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
}

impl ToyEntry {
    pub fn new(kind: ToyKind) -> Self {
        Self {
            kind,
            n_train: default_n_train(),
            n_valid: default_n_valid(),
            n_test: default_n_test(),
            noise_sigma: None,
        }
    }

    pub fn spec(&self) -> ToySpec {
        let mut spec = ToySpec::default_for(self.kind);
        if let Some(s) = self.noise_sigma {
            spec.noise_sigma = s;
        }
        spec
    }
}

/// A benchmark run as data. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub master_seed: u64,
    /// Lattice points per axis of the 2-D confidence grids.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_colormap")]
    pub colormap: String,
    /// Used when the command line gives no `--out`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub png: bool,
    /// Re-run every cell serially for median-of-three timings. When off the
    /// timing columns are written as 0 so reruns are byte-identical.
    #[serde(default)]
    pub profile: bool,
    /// Training / synthetic points drawn over each PNG.
    #[serde(default = "default_overlay")]
    pub overlay_points: usize,
    #[serde(default)]
    pub toys: Vec<ToyEntry>,
    #[serde(default)]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub synthesisers: Vec<SynthesiserConfig>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| OodError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| OodError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn methods(&self) -> Vec<MethodConfig> {
        self.detectors
            .iter()
            .cloned()
            .map(MethodConfig::Detector)
            .chain(self.synthesisers.iter().cloned().map(MethodConfig::Synthesiser))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(OodError::Config(m));
        if self.toys.is_empty() {
            return cfg("at least one toy is required".into());
        }
        if self.detectors.is_empty() && self.synthesisers.is_empty() {
            return cfg("at least one detector or synthesiser is required".into());
        }
        if self.resolution < 2 {
            return cfg("resolution must be at least 2".into());
        }
        plot::check_colormap(&self.colormap).map_err(|e| OodError::Config(e.to_string()))?;
        for (i, t) in self.toys.iter().enumerate() {
            if self.toys[..i].iter().any(|o| o.kind == t.kind) {
                return cfg(format!("toy '{}' listed twice", t.kind));
            }
            if t.n_train == 0 || t.n_valid == 0 || t.n_test == 0 {
                return cfg(format!("toy '{}' needs non-zero split sizes", t.kind));
            }
            t.spec().validate().map_err(|e| OodError::Config(e.to_string()))?;
        }
        let mut slugs: Vec<String> = Vec::new();
        for m in self.methods() {
            if let MethodConfig::Synthesiser(s) = &m {
                s.validate()?;
            }
            let s = slug(&m.label());
            if slugs.contains(&s) {
                return cfg(format!("two methods share the label '{}'", m.label()));
            }
            slugs.push(s);
        }
        Ok(())
    }
}

/// Per-cell seed, independent of run order.
pub fn cell_seed(master_seed: u64, method_label: &str, toy: ToyKind) -> u64 {
    substream_key(master_seed, &["cell", method_label, toy.name()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub report: MetricsReport,
    pub grid: GridField,
    pub synthetic: Option<SynthesisedSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub method: String,
    pub toy: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Fits, calibrates and scores one cell, and emits its grid.
pub fn run_cell(
    method: &MethodConfig,
    spec: &ToySpec,
    splits: &LabeledSplits,
    resolution: usize,
    seed: u64,
) -> Result<(CellOutput, FittedMethod)> {
    let fitted = method.fit(splits, spec, seed)?;
    let conf = fitted.confidence(&splits.test.points)?;
    let (precision, f1, roc_auc) = evaluate(&conf, &splits.test_is_id)?;
    let memory_kib = fitted.to_blob()?.len() as f64 / 1024.0;
    let grid = emit_grid(spec, resolution, seed, |p| fitted.confidence(p))?;
    let report = MetricsReport {
        detector: method.label(),
        toy: spec.kind().name().to_string(),
        precision,
        f1,
        roc_auc,
        fit_time_s: 0.0,
        score_time_s: 0.0,
        memory_kib,
    };
    let synthetic = fitted.synthetic_points().cloned();
    Ok((CellOutput { report, grid, synthetic }, fitted))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn head(points: &Points, n: usize) -> Points {
    points.select(&(0..n.min(points.len())).collect::<Vec<_>>())
}

/// Runs every cell of `config`, writing outputs under `out_dir`.
///
/// Configuration and output-directory problems are errors; failing cells
/// are collected in the summary and do not stop the run.
pub fn run_benchmark(config: &BenchConfig, out_dir: &Path, jobs: Option<usize>) -> Result<RunSummary> {
    config.validate()?;
    for sub in ["grids", "synth", "data"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    let mut toys = Vec::new();
    for t in &config.toys {
        let spec = t.spec();
        let splits = generate_toy(&spec, config.master_seed, t.n_train, t.n_valid, t.n_test)?;
        let name = spec.kind().name();
        for (split, ds, flags) in [
            ("train", &splits.train, None),
            ("valid", &splits.valid, None),
            ("test", &splits.test, Some(splits.test_is_id.as_slice())),
        ] {
            let bytes = csv_bytes(|b| write_dataset_csv(ds, flags, b))?;
            write_atomic(&out_dir.join("data").join(format!("{name}_{split}.csv")), &bytes)?;
        }
        toys.push((spec, splits));
    }
    let methods = config.methods();
    let cells: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..toys.len()).map(move |t| (m, t))).collect();

    let run_one = |&(m, t): &(usize, usize)| {
        let (spec, splits) = &toys[t];
        let seed = cell_seed(config.master_seed, &methods[m].label(), spec.kind());
        catch_unwind(AssertUnwindSafe(|| run_cell(&methods[m], spec, splits, config.resolution, seed)))
            .map_err(panic_message)
            .and_then(|r| r.map(|(out, _)| out).map_err(|e| e.to_string()))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| OodError::Config(e.to_string()))?;
    let mut outcomes: Vec<std::result::Result<CellOutput, String>> =
        pool.install(|| cells.par_iter().map(run_one).collect());

    if config.profile {
        profile_cells(config, &methods, &toys, &cells, &mut outcomes);
    }

    let mut summary = RunSummary::default();
    for (&(m, t), outcome) in cells.iter().zip(&outcomes) {
        let (spec, splits) = &toys[t];
        let toy = spec.kind().name();
        let label = methods[m].label();
        let stem = format!("{}_{toy}", slug(&label));
        match outcome {
            Ok(out) => {
                let bytes = csv_bytes(|b| out.grid.write_csv(b))?;
                write_atomic(&out_dir.join("grids").join(format!("{stem}.csv")), &bytes)?;
                if let Some(set) = &out.synthetic {
                    let bytes = csv_bytes(|b| set.write_csv(b))?;
                    write_atomic(&out_dir.join("synth").join(format!("{stem}.csv")), &bytes)?;
                }
                if config.png {
                    let train = head(&splits.train.points, config.overlay_points);
                    let synth = out.synthetic.as_ref().map(|s| head(&s.points, config.overlay_points));
                    let png = render_png(&out.grid, Some(&train), synth.as_ref())?;
                    write_atomic(&out_dir.join("grids").join(format!("{stem}.png")), &png)?;
                }
                summary.reports.push(out.report.clone());
            }
            Err(e) => summary.failures.push(CellFailure { method: label, toy: toy.into(), error: e.clone() }),
        }
    }
    let bytes = csv_bytes(|b| write_reports_csv(&summary.reports, b))?;
    write_atomic(&out_dir.join("reports.csv"), &bytes)?;
    if !summary.reports.is_empty() {
        write_atomic(&out_dir.join("reports.txt"), format_text_table(&summary.reports)?.as_bytes())?;
    }
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["method", "toy", "error"])?;
        for f in &summary.failures {
            w.write_record([&f.method, &f.toy, &f.error])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_atomic(&out_dir.join("failures.csv"), &bytes)?;
    Ok(summary)
}

/// Serial re-execution of successful cells on one dedicated thread.
fn profile_cells(
    config: &BenchConfig,
    methods: &[MethodConfig],
    toys: &[(ToySpec, LabeledSplits)],
    cells: &[(usize, usize)],
    outcomes: &mut [std::result::Result<CellOutput, String>],
) {
    std::thread::scope(|s| {
        s.spawn(|| {
            for (&(m, t), outcome) in cells.iter().zip(outcomes.iter_mut()) {
                let Ok(out) = outcome else { continue };
                let (spec, splits) = &toys[t];
                let seed = cell_seed(config.master_seed, &methods[m].label(), spec.kind());
                let prof = profile(
                    || methods[m].fit(splits, spec, seed),
                    |f| f.confidence(&splits.test.points).map(|_| ()),
                    |f| f.to_blob(),
                );
                match prof {
                    Ok(p) => {
                        out.report.fit_time_s = p.fit_time_s;
                        out.report.score_time_s = p.score_time_s;
                        out.report.memory_kib = p.memory_kib;
                    }
                    Err(e) => *outcome = Err(format!("profiling: {e}")),
                }
            }
        })
        .join()
        .expect("profiling thread");
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 3
resolution = 4
[[toys]]
kind = "line"
n_train = 50
n_valid = 30
n_test = 40
[[detectors]]
kind = "mahalanobis"
"#;

    #[test]
    fn parses_minimal_config() {
        let c = BenchConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.methods().len(), 1);
        assert!(c.png && !c.profile);
        assert_eq!(c.colormap, "cet-l20");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(BenchConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
        assert!(BenchConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
        assert!(BenchConfig::from_toml(&MINIMAL.replace("resolution = 4", "resolution = 1")).is_err());
        assert!(BenchConfig::from_toml(&MINIMAL.replace("mahalanobis", "gan")).is_err());
        assert!(BenchConfig::from_toml(&format!("{MINIMAL}\n[[detectors]]\nkind = \"mahalanobis\"\n")).is_err());
        assert!(BenchConfig::from_toml("master_seed = 1\n[[detectors]]\nkind = \"lof\"\n").is_err());
        assert!(BenchConfig::from_toml(
            &MINIMAL.replace("cet-l20", "jet").replace("resolution = 4", "resolution = 4\ncolormap = \"jet\"")
        )
        .is_err());
    }

    #[test]
    fn cell_seeds_differ_by_cell() {
        assert_ne!(cell_seed(1, "MD", ToyKind::Line), cell_seed(1, "MD", ToyKind::Circle));
        assert_ne!(cell_seed(1, "MD", ToyKind::Line), cell_seed(1, "LOF", ToyKind::Line));
        assert_eq!(cell_seed(1, "MD", ToyKind::Line), cell_seed(1, "MD", ToyKind::Line));
    }
}
