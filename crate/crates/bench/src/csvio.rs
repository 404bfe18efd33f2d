//! CSV output of result rows.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{BenchError, Result};
use crate::experiment::ResultRow;

pub const HEADER: [&str; 9] = [
    "method",
    "action_id",
    "trial",
    "dim_full",
    "dim_involved",
    "n_particles",
    "mi_estimate",
    "elapsed_ns",
    "seed",
];

/// 17 significant digits, enough to reproduce any double exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.action_id.clone(),
            r.trial.to_string(),
            r.dim_full.to_string(),
            r.dim_involved.to_string(),
            r.n_particles.to_string(),
            format_float(r.mi_estimate),
            r.elapsed_ns.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_rows(rows, file).map_err(|source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let wrap = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<csv::Result<Vec<ResultRow>>>().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64) -> ResultRow {
        ResultRow {
            method: "mismc".into(),
            action_id: "obs_l3".into(),
            trial: 7,
            dim_full: 150,
            dim_involved: 4,
            n_particles: 300,
            mi_estimate: v,
            elapsed_ns: 12345,
            seed: u64::MAX,
        }
    }

    #[test]
    fn header_only_for_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        emit_csv(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{}\n", HEADER.join(",")));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rows.csv");
        let rows: Vec<_> = [0.1 + 0.2, -0.869_632_388_870_617_8, 1e-300, 5e-324, f64::MAX, 0.0]
            .into_iter()
            .map(row)
            .collect();
        emit_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&p).unwrap(), rows);
    }

    #[test]
    fn nan_survives() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.csv");
        emit_csv(&[row(f64::NAN)], &p).unwrap();
        assert!(read_csv(&p).unwrap()[0].mi_estimate.is_nan());
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = emit_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
