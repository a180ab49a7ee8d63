//! Human- and machine-readable renderings of rankings and evaluation reports.

use std::fmt::Write as _;
use std::io;

use transatt_core::eval::{EvalReport, Metrics, ScoredAttribute};
use transatt_core::kb::ClassPath;

/// One line per attribute: `name<TAB>score`, score with 6 decimals.
pub fn ranking_lines(ranking: &[ScoredAttribute]) -> String {
    let mut out = String::new();
    for s in ranking {
        writeln!(out, "{}\t{:.6}", s.name, s.score).expect("writing to a String");
    }
    out
}

pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only finite numbers");
    s.push('\n');
    s
}

/// Column headers of [`report_table`], after the `category` column.
pub fn table_columns(ks: &[usize]) -> Vec<String> {
    let mut cols = vec!["Q".to_string()];
    cols.extend(ks.iter().map(|k| format!("P@{k}")));
    cols.extend(ks.iter().map(|k| format!("Hits@{k}")));
    cols
}

fn row(name: &str, m: &Metrics, ks: &[usize]) -> Vec<String> {
    let mut cells = vec![name.to_string(), m.q.to_string()];
    cells.extend(ks.iter().map(|k| format!("{:.6}", m.precision.get(k).copied().unwrap_or(f64::NAN))));
    cells.extend(ks.iter().map(|k| format!("{:.6}", m.hits.get(k).copied().unwrap_or(f64::NAN))));
    cells
}

/// Aligned plain-text table: one row per category, then `all`.
pub fn report_table(report: &EvalReport) -> String {
    let mut rows = vec![{
        let mut h = vec!["category".to_string()];
        h.extend(table_columns(&report.ks));
        h
    }];
    for (cat, m) in &report.categories {
        rows.push(row(cat, m, &report.ks));
    }
    rows.push(row("all", &report.overall, &report.ks));

    let ncols = rows[0].len();
    let widths: Vec<usize> = (0..ncols).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = format!("{} (truth: {})\n", report.task, report.truth_source);
    for r in &rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c == 0 {
                write!(line, "{:<w$}", cell, w = widths[c]).unwrap();
            } else {
                write!(line, "  {:>w$}", cell, w = widths[c]).unwrap();
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    if report.skipped > 0 || report.all_oov > 0 {
        writeln!(out, "skipped: {}  all-oov: {}", report.skipped, report.all_oov).unwrap();
    }
    out
}

/// Attention matrix as CSV: header `attribute` then one column per path,
/// one row per attribute with α to 6 decimals.
pub fn write_attention_csv<W: io::Write>(
    out: W,
    paths: &[ClassPath],
    attributes: &[String],
    attention: &[Vec<f64>],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["attribute".to_string()];
    header.extend(paths.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for (name, alphas) in attributes.iter().zip(attention) {
        let mut rec = vec![name.clone()];
        rec.extend(alphas.iter().map(|a| format!("{a:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use transatt_core::eval::Task;

    fn metrics(q: usize, p: f64, h: f64) -> Metrics {
        Metrics { q, hits: BTreeMap::from([(1, h), (5, h)]), precision: BTreeMap::from([(1, p), (5, p / 2.0)]) }
    }

    #[test]
    fn table_lists_categories_then_all() {
        let report = EvalReport {
            task: Task::Ape,
            truth_source: "planted".into(),
            ks: vec![1, 5],
            overall: metrics(3, 1.0, 1.0),
            categories: BTreeMap::from([("person".into(), metrics(1, 1.0, 1.0)), ("thing".into(), metrics(2, 1.0, 1.0))]),
            skipped: 0,
            all_oov: 0,
        };
        let t = report_table(&report);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "APE (truth: planted)");
        assert!(lines[1].starts_with("category"));
        assert!(lines[1].contains("Hits@5"));
        assert!(lines[2].starts_with("person"));
        assert!(lines[4].starts_with("all"));
        assert!(lines[4].contains("0.500000"));
        assert_eq!(lines.len(), 5);
        let widths: Vec<usize> = lines[1..].iter().map(|l| l.len()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{t}");
    }

    #[test]
    fn attention_csv_layout() {
        let paths = vec![ClassPath::parse("a/b").unwrap(), ClassPath::parse("a/c").unwrap()];
        let mut buf = Vec::new();
        write_attention_csv(&mut buf, &paths, &["x".into()], &[vec![0.25, 0.75]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "attribute,a/b,a/c\nx,0.250000,0.750000\n");
    }
}
