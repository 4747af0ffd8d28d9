use std::fs;
use std::path::Path;

use oodbench::bench::grid::QUANTILES;
use oodbench::bench::{emit_grid, run_benchmark, BenchConfig, GridField, MethodConfig};
use oodbench::toyspace::{generate_toy, ToyGeometry, ToySpec};

const TWO_BY_TWO: &str = r#"
master_seed = 5
resolution = 12
png = false

[[toys]]
kind = "line"
n_train = 200
n_valid = 200
n_test = 400

[[toys]]
kind = "haystack"
n_train = 200
n_valid = 200
n_test = 400

[[detectors]]
kind = "mahalanobis"

[[detectors]]
kind = "pca"
"#;

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn two_toys_by_two_detectors_give_four_cells() {
    let cfg = BenchConfig::from_toml(TWO_BY_TWO).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_benchmark(&cfg, dir.path(), Some(2)).unwrap();
    assert_eq!(summary.exit_code(), 0);
    assert_eq!(summary.reports.len(), 4);
    let csv = fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(files_in(&dir.path().join("grids")).len(), 4);
    for name in files_in(&dir.path().join("grids")) {
        let g = GridField::read_csv(fs::File::open(dir.path().join("grids").join(&name)).unwrap()).unwrap();
        assert!(g.confidences().iter().all(|c| (0.0..=1.0).contains(c)), "{name}");
        match g {
            GridField::Plane { xs, ys, .. } => {
                assert!(name.ends_with("_line.csv"));
                assert_eq!((xs.len(), ys.len()), (12, 12));
                assert!(xs.windows(2).all(|w| w[1] > w[0]) && ys.windows(2).all(|w| w[1] > w[0]));
            }
            GridField::Sweep { values, .. } => {
                assert!(name.ends_with("_haystack.csv"));
                assert_eq!(values.len(), 101);
            }
        }
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "grids", "synth", "data"] {
        let d = dir.join(sub);
        for name in files_in(&d) {
            let p = d.join(&name);
            if p.is_file() {
                out.push((format!("{sub}/{name}"), fs::read(p).unwrap()));
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let cfg = BenchConfig::from_toml(&format!(
        "{}\n[[synthesisers]]\nkind = \"fgsm_uniform\"\nlo = 0.0\nhi = 1.0\n",
        TWO_BY_TWO.replace("png = false", "png = true")
    ))
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_benchmark(&cfg, a.path(), Some(1)).unwrap();
    run_benchmark(&cfg, b.path(), Some(4)).unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.len() > 10);
    assert_eq!(sa.len(), sb.len());
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
}

#[test]
fn a_failing_cell_leaves_the_others_unchanged() {
    let good = BenchConfig::from_toml(&format!("{TWO_BY_TWO}\n[[detectors]]\nkind = \"lof\"\nk = 20\n")).unwrap();
    let bad = BenchConfig::from_toml(&format!("{TWO_BY_TWO}\n[[detectors]]\nkind = \"lof\"\nk = 5000\n")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run_benchmark(&good, a.path(), None).unwrap();
    let sb = run_benchmark(&bad, b.path(), None).unwrap();
    assert_eq!(sa.exit_code(), 0);
    assert_eq!(sb.exit_code(), 2);
    assert_eq!(sb.failures.len(), 2);
    assert!(sb.failures.iter().all(|f| f.method.starts_with("LOF")));
    assert_eq!(sb.reports.len(), 4);
    let failures = fs::read_to_string(b.path().join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 3);
    for name in files_in(&b.path().join("grids")) {
        let ga = fs::read(a.path().join("grids").join(&name)).unwrap();
        let gb = fs::read(b.path().join("grids").join(&name)).unwrap();
        assert_eq!(ga, gb, "{name}");
    }
    let rows = |d: &Path| -> Vec<String> {
        fs::read_to_string(d.join("reports.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("LOF"))
            .map(String::from)
            .collect()
    };
    assert_eq!(rows(a.path()), rows(b.path()));
}

fn haystack_sweep(method: &str) -> (Vec<f64>, Vec<f64>, f64) {
    let spec = ToySpec::haystack();
    let ToyGeometry::Haystack(h) = &spec.geometry else { unreachable!() };
    let splits = generate_toy(&spec, 7, 1000, 1000, 2000).unwrap();
    let fitted = MethodConfig::from_name(method).unwrap().fit(&splits, &spec, 7).unwrap();
    let GridField::Sweep { values, quantiles, .. } = emit_grid(&spec, 2, 7, |p| fitted.confidence(p)).unwrap() else {
        unreachable!()
    };
    let median = QUANTILES.iter().position(|q| *q == 0.5).unwrap();
    (values, quantiles.iter().map(|q| q[median]).collect(), h.constant_value)
}

#[test]
fn reference_sweep_peaks_at_the_constant() {
    let (values, medians, c) = haystack_sweep("reference");
    let at_c = values.iter().position(|v| (v - c).abs() < 1e-9).expect("sweep contains c");
    for (v, m) in values.iter().zip(&medians) {
        if (v - c).abs() > 0.5 {
            assert!(medians[at_c] > *m, "median at c {} vs {m} at {v}", medians[at_c]);
        }
    }
}

#[test]
fn one_class_svm_sweep_is_flat() {
    let (_, medians, _) = haystack_sweep("ocsvm");
    let hi = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        hi - lo <= 0.2,
        "median range {} (medians {:.2?})",
        hi - lo,
        medians.iter().step_by(10).collect::<Vec<_>>()
    );
}

#[test]
fn gp_beats_lof_on_the_haystack() {
    let spec = ToySpec::haystack();
    let splits = generate_toy(&spec, 7, 1000, 1000, 2000).unwrap();
    let auc = |name: &str| {
        let f = MethodConfig::from_name(name).unwrap().fit(&splits, &spec, 7).unwrap();
        let c = f.confidence(&splits.test.points).unwrap();
        oodbench::metrics::roc_auc(&c, &splits.test_is_id).unwrap()
    };
    let (gp, lof) = (auc("gp"), auc("lof"));
    assert!(gp > lof, "GP {gp} vs LOF {lof}");
}

#[test]
fn unwritable_output_is_an_error() {
    let cfg = BenchConfig::from_toml(TWO_BY_TWO).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("taken");
    fs::write(&file, b"x").unwrap();
    assert!(run_benchmark(&cfg, &file, None).is_err());
}
