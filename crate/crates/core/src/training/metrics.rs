use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{format_err, Error, Result};

pub const METRICS_HEADER: &str = "stage,epoch,train_loss,val_accuracy,val_map";

/// One line of `metrics.csv`. Stage-2 epoch 0 holds the post-stage-1 scores.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_map: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.stage,
            r.epoch,
            cell(r.train_loss),
            cell(r.val_accuracy),
            cell(r.val_map)
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(METRICS_HEADER) {
        return Err(format_err(path, format!("expected header `{METRICS_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || format_err(path, format!("malformed row {}: {line:?}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad());
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad())
                }
            };
            Ok(MetricsRow {
                stage: fields[0].parse().map_err(|_| bad())?,
                epoch: fields[1].parse().map_err(|_| bad())?,
                train_loss: opt(fields[2])?,
                val_accuracy: opt(fields[3])?,
                val_map: opt(fields[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_survive_a_roundtrip() {
        let rows = vec![
            MetricsRow {
                stage: 1,
                epoch: 1,
                train_loss: Some(1.0 / 3.0),
                val_accuracy: Some(0.25),
                val_map: None,
            },
            MetricsRow {
                stage: 2,
                epoch: 0,
                train_loss: None,
                val_accuracy: Some(0.5),
                val_map: Some(0.123456789012345),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        write_metrics(&rows, &p).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), rows);
        assert!(matches!(
            read_metrics(dir.path().join("nope.csv")),
            Err(Error::NotFound(_))
        ));
    }
}
