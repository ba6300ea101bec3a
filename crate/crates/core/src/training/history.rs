use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l0: f64,
    pub la: f64,
    pub lb: f64,
    pub total: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

pub const HISTORY_HEADER: &str = "epoch\tL0\tLa\tLb\tL\ttrain_acc\tval_acc\ttest_acc";

/// Tab-separated log; floats use the shortest representation that parses back exactly.
pub fn format_history(records: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.epoch, r.l0, r.la, r.lb, r.total, r.train_acc, r.val_acc, r.test_acc
        )
        .expect("writing to a String");
    }
    out
}

pub fn parse_history(text: &str, path: &Path) -> Result<Vec<EpochRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HISTORY_HEADER => {}
        _ => return Err(err(1, "missing history header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 8 {
                return Err(err(k + 1, format!("expected 8 columns, found {}", cols.len())));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| err(k + 1, format!("{s:?}: {e}")));
            Ok(EpochRecord {
                epoch: cols[0].parse().map_err(|e| err(k + 1, format!("{:?}: {e}", cols[0])))?,
                l0: f(cols[1])?,
                la: f(cols[2])?,
                lb: f(cols[3])?,
                total: f(cols[4])?,
                train_acc: f(cols[5])?,
                val_acc: f(cols[6])?,
                test_acc: f(cols[7])?,
            })
        })
        .collect()
}
