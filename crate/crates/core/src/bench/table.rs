//! Report tables: the CSV source of truth and an aligned text view with one
//! row per method and `L / C / H` triples per metric.

use std::io::{Read, Write};

use crate::error::{invalid, Result};
use crate::metrics::{MetricsReport, REPORT_COLUMNS};
use crate::toyspace::ToyKind;

pub fn write_reports_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports_csv<R: Read>(input: R) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != REPORT_COLUMNS {
        return Err(invalid(format!("unexpected report columns {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn triple(reports: &[&MetricsReport], metric: impl Fn(&MetricsReport) -> f64) -> String {
    ToyKind::ALL
        .iter()
        .map(|k| reports.iter().find(|r| r.toy == k.name()).map_or("-".to_string(), |r| format!("{:.3}", metric(r))))
        .collect::<Vec<_>>()
        .join(" / ")
}

/// Aligned text table, methods in order of first appearance.
pub fn format_text_table(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(invalid("no reports to tabulate"));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.detector.as_str()) {
            methods.push(&r.detector);
        }
    }
    let header = [
        "Method".to_string(),
        "Precision (L / C / H)".into(),
        "F1 (L / C / H)".into(),
        "ROC-AUC (L / C / H)".into(),
        "Fit s (L / C / H)".into(),
        "Score s (L / C / H)".into(),
        "Memory KiB (L / C / H)".into(),
    ];
    let mut rows = vec![header];
    for m in methods {
        let rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.detector == m).collect();
        rows.push([
            m.to_string(),
            triple(&rs, |r| r.precision),
            triple(&rs, |r| r.f1),
            triple(&rs, |r| r.roc_auc),
            triple(&rs, |r| r.fit_time_s),
            triple(&rs, |r| r.score_time_s),
            triple(&rs, |r| r.memory_kib),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(det: &str, toy: &str, auc: f64) -> MetricsReport {
        MetricsReport {
            detector: det.into(),
            toy: toy.into(),
            precision: 0.1 + auc / 3.0,
            f1: 1.0 / 3.0,
            roc_auc: auc,
            fit_time_s: 0.0,
            score_time_s: 0.0,
            memory_kib: 1.25,
        }
    }

    #[test]
    fn one_report_gives_one_row_of_eight_columns() {
        let mut buf = Vec::new();
        write_reports_csv(&[report("MD", "line", 0.999)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        assert_eq!(lines[1].split(',').count(), 8);
    }

    #[test]
    fn csv_round_trips() {
        let rs = vec![report("MD", "line", 0.123456789012345), report("GP@10%", "haystack", 0.7)];
        let mut buf = Vec::new();
        write_reports_csv(&rs, &mut buf).unwrap();
        let back = read_reports_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rs.iter().zip(&back) {
            assert_eq!(a.detector, b.detector);
            assert!((a.roc_auc - b.roc_auc).abs() <= 1e-9 && (a.precision - b.precision).abs() <= 1e-9);
        }
    }

    #[test]
    fn empty_csv_writes_header_only() {
        let mut buf = Vec::new();
        write_reports_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), REPORT_COLUMNS.join(","));
    }

    #[test]
    fn text_table_groups_toys() {
        let t = format_text_table(&[report("MD", "line", 0.999), report("MD", "haystack", 0.5)]).unwrap();
        assert!(t.contains("0.999 / - / 0.500"), "{t}");
        assert_eq!(t.lines().count(), 3);
    }
}
