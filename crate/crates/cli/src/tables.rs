//! Tab-separated output tables and their readers. Numbers use Rust's shortest
//! round-trip formatting, so every table parses back to identical values.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::Result;

pub const SUMMARY_HEADER: &str = "dataset\tlabel_rate\tseed\ttest_acc";
pub const SWEEP_CORNER: &str = "alpha\\beta";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> crate::error::CliError {
    mlsg_core::Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
    .into()
}

fn field<T: std::str::FromStr>(s: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(path, line, format!("bad {what} {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub label_rate: usize,
    pub seed: u64,
    pub test_acc: f64,
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.dataset, r.label_rate, r.seed, r.test_acc);
    }
    out
}

pub fn parse_summary(text: &str, path: &Path) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(parse_err(path, 1, "missing summary header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let ln = i + 2;
            let f: Vec<&str> = line.split('\t').collect();
            let [dataset, rate, seed, acc] = f.as_slice() else {
                return Err(parse_err(path, ln, "expected 4 fields"));
            };
            Ok(SummaryRow {
                dataset: dataset.to_string(),
                label_rate: field(rate, path, ln, "label rate")?,
                seed: field(seed, path, ln, "seed")?,
                test_acc: field(acc, path, ln, "accuracy")?,
            })
        })
        .collect()
}

/// Test accuracy for every (alpha, beta) pair; rows follow `alphas`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub acc: Array2<f64>,
}

pub fn format_sweep(grid: &SweepGrid) -> String {
    let mut out = String::from(SWEEP_CORNER);
    for b in &grid.betas {
        let _ = write!(out, "\t{b}");
    }
    out.push('\n');
    for (a, row) in grid.alphas.iter().zip(grid.acc.rows()) {
        let _ = write!(out, "{a}");
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_sweep(text: &str, path: &Path) -> Result<SweepGrid> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty sweep table"))?;
    let mut head = header.split('\t');
    if head.next() != Some(SWEEP_CORNER) {
        return Err(parse_err(path, 1, "missing sweep header"));
    }
    let betas: Vec<f64> = head.map(|b| field(b, path, 1, "beta")).collect::<Result<_>>()?;
    let mut alphas = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let mut f = line.split('\t');
        alphas.push(field(f.next().unwrap_or(""), path, ln, "alpha")?);
        let row: Vec<f64> = f.map(|v| field(v, path, ln, "accuracy")).collect::<Result<_>>()?;
        if row.len() != betas.len() {
            return Err(parse_err(path, ln, format!("expected {} accuracies", betas.len())));
        }
        values.extend(row);
    }
    let acc = Array2::from_shape_vec((alphas.len(), betas.len()), values).expect("row lengths checked");
    Ok(SweepGrid { alphas, betas, acc })
}

/// One node per line: the embedding row, then the label or -1.
pub fn format_embeddings(z: &Array2<f64>, labels: &[Option<usize>]) -> String {
    let mut out = String::new();
    for (row, label) in z.rows().into_iter().zip(labels) {
        for v in row {
            let _ = write!(out, "{v}\t");
        }
        match label {
            Some(c) => {
                let _ = writeln!(out, "{c}");
            }
            None => out.push_str("-1\n"),
        }
    }
    out
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<(Array2<f64>, Vec<Option<usize>>)> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        let (label, row) = f.split_last().ok_or_else(|| parse_err(path, ln, "empty line"))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(parse_err(path, ln, "ragged embedding row"));
        }
        for v in row {
            values.push(field::<f64>(v, path, ln, "value")?);
        }
        let label: i64 = field(label, path, ln, "label")?;
        labels.push(match label {
            -1 => None,
            c if c >= 0 => Some(c as usize),
            _ => return Err(parse_err(path, ln, "label must be -1 or a class id")),
        });
    }
    let z = Array2::from_shape_vec((labels.len(), width.unwrap_or(0)), values).expect("widths checked");
    Ok((z, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn summary_round_trip() {
        let rows = vec![
            SummaryRow {
                dataset: "citeseer".into(),
                label_rate: 20,
                seed: 0,
                test_acc: 0.742,
            },
            SummaryRow {
                dataset: "citeseer".into(),
                label_rate: 20,
                seed: 1,
                test_acc: 1.0 / 3.0,
            },
        ];
        let text = format_summary(&rows);
        assert!(text.starts_with("dataset\tlabel_rate\tseed\ttest_acc\n"));
        assert_eq!(parse_summary(&text, Path::new("s")).unwrap(), rows);
        assert!(parse_summary("x\n", Path::new("s")).is_err());
    }

    #[test]
    fn sweep_round_trip() {
        let grid = SweepGrid {
            alphas: vec![0.0, 1e-3],
            betas: vec![1e3, 0.1, 7.0],
            acc: array![[0.5, 0.25, 1.0], [0.1, 0.2, 0.30000000000000004]],
        };
        let text = format_sweep(&grid);
        assert_eq!(text.lines().next().unwrap(), "alpha\\beta\t1000\t0.1\t7");
        assert_eq!(parse_sweep(&text, Path::new("g")).unwrap(), grid);
        assert!(parse_sweep("alpha\\beta\t1\n0\t0.5\t0.5\n", Path::new("g")).is_err());
    }

    #[test]
    fn embeddings_round_trip() {
        let z = array![[1.5, -2.0], [0.0, 1e-300], [3.25, f64::MIN_POSITIVE]];
        let labels = vec![Some(1), None, Some(0)];
        let text = format_embeddings(&z, &labels);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().ends_with("\t-1"));
        assert_eq!(parse_embeddings(&text, Path::new("e")).unwrap(), (z, labels));
        assert!(parse_embeddings("1\t2\t0\n1\t0\n", Path::new("e")).is_err());
        assert!(parse_embeddings("1\t-2\n", Path::new("e")).is_err());
    }
}
