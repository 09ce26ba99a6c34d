//! CSV and JSON artifacts.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-for-bit.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::integrator::{EventKind, Trajectory};
use crate::model::Wheel;
use crate::poincare::{PhaseStep, PoincareSample};
use crate::sweep::SweepCell;

pub const TRAJECTORY_HEADER: [&str; 8] = ["tau", "theta1", "dtheta1", "theta2", "dtheta2", "D_hat", "n1", "n2"];
pub const EVENTS_HEADER: [&str; 6] = ["tau", "wheel", "kind", "theta_pre", "dtheta_pre", "dtheta_post"];
pub const PHASE_HEADER: [&str; 5] = ["step", "tau", "phase_pct", "phi_deg", "theta2_deg"];
pub const SWEEP_HEADER: [&str; 8] =
    ["k_hat", "b_hat", "valid", "n_converged", "n_failed", "dominant_abs", "lambda_re", "lambda_im"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    csv::Writer::from_path(path).map_err(|source| IoError::Csv { path: show(path), source })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| IoError::Csv { path: show(path), source };
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::Io { path: show(path), source })
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let rows = traj.samples.iter().map(|s| {
        let x = &s.state;
        vec![
            fmt_f64(s.tau),
            fmt_f64(x.theta1),
            fmt_f64(x.dtheta1),
            fmt_f64(x.theta2),
            fmt_f64(x.dtheta2),
            fmt_f64(x.d_hat),
            x.n1.to_string(),
            x.n2.to_string(),
        ]
    });
    write_rows(path, &TRAJECTORY_HEADER, rows)
}

pub fn write_events(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let rows = traj.events.iter().map(|e| {
        let (theta_pre, dtheta_pre, dtheta_post) = match e.wheel {
            Some(w) => (
                fmt_f64(e.state_pre.theta(w)),
                fmt_f64(e.state_pre.dtheta(w)),
                fmt_f64(e.state_post.dtheta(w)),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        vec![
            fmt_f64(e.tau),
            e.wheel.map(|w| w.to_string()).unwrap_or_default(),
            e.kind.as_str().to_string(),
            theta_pre,
            dtheta_pre,
            dtheta_post,
        ]
    });
    write_rows(path, &EVENTS_HEADER, rows)
}

pub fn write_phase(path: &Path, steps: &[PhaseStep]) -> Result<(), IoError> {
    let rows = steps.iter().map(|s| {
        vec![
            s.step.to_string(),
            fmt_f64(s.tau_start),
            fmt_opt(s.phase_pct),
            fmt_f64(s.phi_deg),
            fmt_f64(s.theta2_deg),
        ]
    });
    write_rows(path, &PHASE_HEADER, rows)
}

pub fn write_sweep(path: &Path, cells: &[SweepCell]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_sweep_to(&mut buf, cells).map_err(|source| IoError::Csv { path: show(path), source })?;
    std::fs::write(path, buf).map_err(|source| IoError::Io { path: show(path), source })
}

pub fn write_sweep_to<W: Write>(out: W, cells: &[SweepCell]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for c in cells {
        w.write_record([
            fmt_f64(c.k_hat),
            fmt_f64(c.b_hat),
            c.valid.to_string(),
            c.n_converged.to_string(),
            c.n_failed.to_string(),
            fmt_opt(c.dominant_abs),
            fmt_opt(c.dominant.map(|d| d.re)),
            fmt_opt(c.dominant.map(|d| d.im)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: show(path), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| IoError::Io { path: show(path), source })
}

fn read_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, IoError> {
    let csv_err = |source| IoError::Csv { path: show(path), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found = r.headers().map_err(csv_err)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(IoError::Format {
            path: show(path),
            message: format!("expected columns {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, IoError> {
    rec.get(i).unwrap_or("").parse().map_err(|_| IoError::Format {
        path: show(path),
        message: format!("line {}: bad {name} value {:?}", rec.position().map_or(0, |p| p.line()), rec.get(i).unwrap_or("")),
    })
}

fn opt_field(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>, IoError> {
    if rec.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(path, rec, i, name).map(Some)
    }
}

/// Section samples recovered from a trajectory CSV: the row logged at each
/// instant where the wheel-1 step counter advances.
pub fn read_section_samples(path: &Path, trial_id: usize) -> Result<Vec<PoincareSample>, IoError> {
    let mut samples = Vec::new();
    let mut prev_n1: Option<u32> = None;
    for rec in read_records(path, &TRAJECTORY_HEADER)? {
        let mut v = [0.0; 6];
        for (i, name) in TRAJECTORY_HEADER[..6].iter().enumerate() {
            v[i] = field(path, &rec, i, name)?;
        }
        let n1: u32 = field(path, &rec, 6, "n1")?;
        if prev_n1.is_some_and(|p| n1 > p) {
            samples.push(PoincareSample { x_p: [v[2], v[3], v[4], v[5]], trial_id, index_m: samples.len(), tau: v[0] });
        }
        prev_n1 = Some(n1);
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub tau: f64,
    pub wheel: Option<Wheel>,
    pub kind: EventKind,
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>, IoError> {
    read_records(path, &EVENTS_HEADER)?
        .iter()
        .map(|rec| {
            let bad = |message: String| IoError::Format { path: show(path), message };
            let wheel = match rec.get(1).unwrap_or("") {
                "" => None,
                s => Some(s.parse().ok().and_then(Wheel::from_index).ok_or_else(|| bad(format!("bad wheel {s:?}")))?),
            };
            let kind_text = rec.get(2).unwrap_or("");
            let kind = EventKind::parse(kind_text).ok_or_else(|| bad(format!("bad event kind {kind_text:?}")))?;
            Ok(EventRow { tau: field(path, rec, 0, "tau")?, wheel, kind })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k_hat: f64,
    pub b_hat: f64,
    pub valid: bool,
    pub n_converged: usize,
    pub n_failed: usize,
    pub dominant_abs: Option<f64>,
    pub dominant: Option<Complex64>,
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>, IoError> {
    read_records(path, &SWEEP_HEADER)?
        .iter()
        .map(|rec| {
            let re = opt_field(path, rec, 6, "lambda_re")?;
            let im = opt_field(path, rec, 7, "lambda_im")?;
            Ok(SweepRow {
                k_hat: field(path, rec, 0, "k_hat")?,
                b_hat: field(path, rec, 1, "b_hat")?,
                valid: field(path, rec, 2, "valid")?,
                n_converged: field(path, rec, 3, "n_converged")?,
                n_failed: field(path, rec, 4, "n_failed")?,
                dominant_abs: opt_field(path, rec, 5, "dominant_abs")?,
                dominant: re.zip(im).map(|(re, im)| Complex64::new(re, im)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567, f64::MIN_POSITIVE, 0.30797302793232430] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn sweep_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let cells = vec![
            SweepCell {
                k_hat: 1e-4,
                b_hat: 0.1,
                valid: false,
                dominant_abs: None,
                dominant: None,
                n_converged: 3,
                n_failed: 1,
                fit: None,
                fit_error: None,
            },
            SweepCell {
                k_hat: 2e-3,
                b_hat: 0.43,
                valid: true,
                dominant_abs: Some(0.91),
                dominant: Some(Complex64::new(0.9, 0.1349)),
                n_converged: 8,
                n_failed: 0,
                fit: None,
                fit_error: None,
            },
        ];
        write_sweep(&path, &cells).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k_hat,b_hat,valid,n_converged,n_failed,dominant_abs,lambda_re,lambda_im\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",false,3,1,,,"));
        let rows = read_sweep(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].dominant_abs, Some(0.91));
        assert_eq!(rows[1].dominant, Some(Complex64::new(0.9, 0.1349)));
        assert!(!rows[0].valid && rows[1].valid);
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_sweep(&path), Err(IoError::Format { .. })));
    }
}
