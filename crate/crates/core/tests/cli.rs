use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oodbench::bench::plot::{colormap, MARGIN, SWEEP_COLUMN_WIDTH, SWEEP_HEIGHT};

const CONFIG: &str = r#"
master_seed = 2
resolution = 10

[[toys]]
kind = "line"
n_train = 150
n_valid = 150
n_test = 300

[[detectors]]
kind = "mahalanobis"
"#;

fn oodbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodbench")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_and_table_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("run");
    let o = oodbench(&["run", "--config", p(&cfg), "--out", p(&out), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("grids/md_line.csv").is_file());
    assert!(out.join("grids/md_line.png").is_file());

    let t = oodbench(&["table", p(&out), "--format", "csv"]);
    assert_eq!(t.status.code(), Some(0));
    let text = String::from_utf8(t.stdout).unwrap();
    assert!(text.starts_with("detector,toy,precision,f1,roc_auc,fit_time_s,score_time_s,memory_kib\n"));
    let t = oodbench(&["table", p(&out)]);
    assert!(String::from_utf8(t.stdout).unwrap().contains("ROC-AUC (L / C / H)"));

    let again = dir.path().join("again");
    oodbench(&["run", "--config", p(&cfg), "--out", p(&again), "--seed", "2"]);
    assert_eq!(fs::read(out.join("reports.csv")).unwrap(), fs::read(again.join("reports.csv")).unwrap());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{CONFIG}\nunknown_key = 3\n")).unwrap();
    let out = dir.path().join("run");
    assert_eq!(oodbench(&["run", "--config", p(&cfg), "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(
        oodbench(&["run", "--config", p(&dir.path().join("missing.toml")), "--out", p(&out)]).status.code(),
        Some(1)
    );
    assert_eq!(oodbench(&["grid", "--toy", "square", "--method", "md", "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(oodbench(&["grid", "--toy", "line", "--method", "gan", "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(oodbench(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn failed_cells_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{CONFIG}\n[[detectors]]\nkind = \"lof\"\nk = 1000\n")).unwrap();
    let out = dir.path().join("run");
    let o = oodbench(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("grids/md_line.csv").is_file());
    assert_eq!(fs::read_to_string(out.join("failures.csv")).unwrap().lines().count(), 2);
}

#[test]
fn grid_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let png = dir.path().join("g.png");
    let o = oodbench(&["grid", "--toy", "circle", "--method", "mahalanobis", "--resolution", "16", "--out", p(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,y,confidence\n"));
    assert_eq!(text.lines().count(), 1 + 16 * 16);
    assert_eq!(oodbench(&["plot", p(&csv), "--out", p(&png)]).status.code(), Some(0));
    let img = image::open(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), ((16 + 2 * MARGIN) as u32, (16 + 2 * MARGIN) as u32));
}

fn constant_plane(path: &Path, res: usize, value: f64) {
    let mut s = String::from("x,y,confidence\n");
    for iy in 0..res {
        for ix in 0..res {
            s.push_str(&format!("{},{},{value}\n", ix as f64 / (res - 1) as f64, iy as f64 / (res - 1) as f64));
        }
    }
    fs::write(path, s).unwrap();
}

#[test]
fn constant_fields_render_as_colormap_endpoints() {
    let lut = colormap();
    let dir = tempfile::tempdir().unwrap();
    let res = 7;
    for (value, entry) in [(0.0, 0usize), (1.0, 255)] {
        let csv = dir.path().join(format!("c{entry}.csv"));
        let png = dir.path().join(format!("c{entry}.png"));
        constant_plane(&csv, res, value);
        assert_eq!(oodbench(&["plot", p(&csv), "--out", p(&png)]).status.code(), Some(0));
        let img = image::open(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), ((res + 2 * MARGIN) as u32, (res + 2 * MARGIN) as u32));
        for y in MARGIN..MARGIN + res {
            for x in MARGIN..MARGIN + res {
                assert_eq!(img.get_pixel(x as u32, y as u32).0, lut[entry], "({x},{y})");
            }
        }
    }
}

#[test]
fn haystack_grid_renders_as_band_chart() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let png = dir.path().join("h.png");
    let o = oodbench(&["grid", "--toy", "haystack", "--method", "reference", "--out", p(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("constant_value,q05,q25,q50,q75,q95\n"));
    assert_eq!(text.lines().count(), 102);
    assert_eq!(oodbench(&["plot", p(&csv), "--out", p(&png)]).status.code(), Some(0));
    let img = image::open(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), ((101 * SWEEP_COLUMN_WIDTH + 2 * MARGIN) as u32, (SWEEP_HEIGHT + 2 * MARGIN) as u32));
}
