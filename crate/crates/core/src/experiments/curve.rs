//! Validation MAP learning curves from training logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{format_err, Result};
use crate::training::{read_metrics, MetricsRow};

pub const CURVE_HEADER: &str = "epoch,val_map";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub val_map: f64,
}

/// Stage-2 epochs `1..=E` with their validation MAP. `origin` labels errors.
pub fn curve_points(rows: &[MetricsRow], origin: &Path) -> Result<Vec<CurvePoint>> {
    let mut stage2: Vec<&MetricsRow> = rows.iter().filter(|r| r.stage == 2 && r.epoch >= 1).collect();
    stage2.sort_by_key(|r| r.epoch);
    let mut out = Vec::with_capacity(stage2.len());
    for (k, row) in stage2.iter().enumerate() {
        let expected = k + 1;
        if row.epoch != expected {
            return Err(format_err(
                origin,
                format!("stage-2 epoch {expected} is missing from the log"),
            ));
        }
        let val_map = row
            .val_map
            .ok_or_else(|| format_err(origin, format!("stage-2 epoch {expected} has no val_map")))?;
        out.push(CurvePoint {
            epoch: row.epoch,
            val_map,
        });
    }
    Ok(out)
}

/// Reads a `metrics.csv` and returns its learning curve.
pub fn export_curve(metrics: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let path = metrics.as_ref();
    curve_points(&read_metrics(path)?, path)
}

pub fn write_curve(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in points {
        writeln!(s, "{},{}", p.epoch, p.val_map).expect("writing to a String");
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn row(stage: u8, epoch: usize, map: Option<f64>) -> MetricsRow {
        MetricsRow {
            stage,
            epoch,
            train_loss: Some(0.1),
            val_accuracy: None,
            val_map: map,
        }
    }

    #[test]
    fn keeps_stage_two_epochs_in_order() {
        let mut rows = vec![row(1, 1, None), row(1, 2, None), row(2, 0, Some(0.3))];
        rows.extend((1..=50).map(|e| row(2, e, Some(e as f64 / 100.0))));
        let pts = curve_points(&rows, Path::new("m.csv")).unwrap();
        assert_eq!(pts.len(), 50);
        assert_eq!(
            pts[6],
            CurvePoint {
                epoch: 7,
                val_map: 0.07
            }
        );
    }

    #[test]
    fn gap_names_the_missing_epoch() {
        let rows: Vec<MetricsRow> = (1..=10).filter(|&e| e != 7).map(|e| row(2, e, Some(0.5))).collect();
        match curve_points(&rows, Path::new("m.csv")) {
            Err(Error::Format { msg, .. }) => assert!(msg.contains("epoch 7"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_log_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_curve(dir.path().join("metrics.csv")),
            Err(Error::NotFound(_))
        ));
    }
}
