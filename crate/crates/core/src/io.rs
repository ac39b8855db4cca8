//! CSV import and export for every stream the toolkit produces or consumes.
//!
//! Writers emit full double precision (17 significant digits), LF line
//! endings, and deterministic bytes — the same data always writes the same
//! file, which is what makes replay round-trips and repeated-run checks
//! byte-exact. Readers are strict: the header must match the documented
//! schema exactly, every row needs the full column count, every field must
//! parse to a finite number, and replayed time axes must increase strictly.
//!
//! Schemas:
//!
//! | stream            | header                                |
//! |-------------------|---------------------------------------|
//! | scalar trace      | `t,value`                             |
//! | replay input      | `t,i_fc,v_fc`                         |
//! | regressor stream  | `t,Y,phi_1..phi_p`                    |
//! | bare regressor    | `t,phi_1..phi_p`                      |
//! | estimates         | `t,eta_1..eta_q` (+ `W_1..W_p,Delta`) |
//! | dependence series | `t,det,det_normalized`                |
//! | excitation series | `t_window,min_eig`                    |
//! | polarization sweep| `i,v`                                 |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{ExcitationReport, WronskianSeries};
use crate::error::{Error, Result};
use crate::regressor::RegressorSample;
use crate::signal::Trace;

/// One float, 17 significant digits — enough to round-trip any f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: Iterator<Item = Vec<f64>>,
{
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        let mut line = String::with_capacity(row.len() * 24);
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt(*x));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Strictly-checked numeric CSV: exact header, fixed column count, finite
/// fields. Returns the data rows.
fn read_rows(path: &Path, expected_header: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != expected_header {
            return Err(Error::Csv(format!(
                "{}: expected header `{expected_header}`, found `{got}`",
                path.display()
            )));
        }
    }
    let ncols = expected_header.split(',').count();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        if record.len() != ncols {
            return Err(Error::Csv(format!(
                "{}: row {} has {} fields, expected {ncols}",
                path.display(),
                idx + 1,
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(ncols);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Csv(format!(
                    "{}: row {}, column {}: `{field}` is not a number",
                    path.display(),
                    idx + 1,
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!(
                    "{}: row {}, column {}: non-finite value",
                    path.display(),
                    idx + 1,
                    col + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn check_increasing(rows: &[Vec<f64>]) -> Result<()> {
    for (i, w) in rows.windows(2).enumerate() {
        if w[1][0] <= w[0][0] {
            return Err(Error::NonMonotoneTime { row: i + 2, t_prev: w[0][0], t: w[1][0] });
        }
    }
    Ok(())
}

/// `t,value`
pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    write_rows(
        path,
        "t,value",
        trace.samples.iter().enumerate().map(|(k, v)| vec![trace.time(k), *v]),
    )
}

/// `t,value` back to (t, value) pairs, strictly increasing t.
pub fn read_trace(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_rows(path, "t,value")?;
    check_increasing(&rows)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

/// Generic strictly-two-column writer; `header` names the columns (e.g.
/// `"t,value"`). Backs the decimated run traces, which are not uniform
/// enough for [`write_trace`].
pub fn write_pairs(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    write_rows(path, header, rows.iter().map(|(a, b)| vec![*a, *b]))
}

/// `t,i_fc,v_fc` — the measured-data interchange format.
pub fn write_replay(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    write_rows(path, "t,i_fc,v_fc", rows.iter().map(|(t, i, v)| vec![*t, *i, *v]))
}

/// `t,i_fc,v_fc` with a strictly increasing time axis.
pub fn read_replay(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let rows = read_rows(path, "t,i_fc,v_fc")?;
    if rows.is_empty() {
        return Err(Error::Csv(format!("{}: no data rows", path.display())));
    }
    check_increasing(&rows)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1], r[2])).collect())
}

fn phi_header(prefix: &str, p: usize, with_y: bool) -> String {
    let mut h = String::from("t");
    if with_y {
        h.push_str(",Y");
    }
    for i in 1..=p {
        h.push_str(&format!(",{prefix}{i}"));
    }
    h
}

/// `t,Y,phi_1..phi_p`
pub fn write_regressor_stream(path: &Path, samples: &[RegressorSample]) -> Result<()> {
    let p = samples.first().map_or(0, |s| s.phi.len());
    write_rows(
        path,
        &phi_header("phi_", p, true),
        samples.iter().map(|s| {
            let mut row = Vec::with_capacity(2 + p);
            row.push(s.t);
            row.push(s.y);
            row.extend_from_slice(&s.phi);
            row
        }),
    )
}

/// `t,Y,phi_1..phi_p`; the column count fixes p.
pub fn read_regressor_stream(path: &Path, p: usize) -> Result<Vec<RegressorSample>> {
    let rows = read_rows(path, &phi_header("phi_", p, true))?;
    check_increasing(&rows)?;
    Ok(rows
        .into_iter()
        .map(|r| RegressorSample { t: r[0], y: r[1], phi: r[2..].to_vec() })
        .collect())
}

/// `t,phi_1..phi_p` — a bare regressor trajectory (no output channel), the
/// input format of the dependence diagnosis.
pub fn read_phi_stream(path: &Path, p: usize) -> Result<Vec<RegressorSample>> {
    let rows = read_rows(path, &phi_header("phi_", p, false))?;
    check_increasing(&rows)?;
    Ok(rows
        .into_iter()
        .map(|r| RegressorSample { t: r[0], y: 0.0, phi: r[1..].to_vec() })
        .collect())
}

/// Column count of a CSV minus the time column — used to size `p` before a
/// typed read.
pub fn csv_width(path: &Path) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let n = reader
        .headers()
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?
        .len();
    if n < 2 {
        return Err(Error::Csv(format!("{}: too few columns", path.display())));
    }
    Ok(n - 1)
}

/// `t,eta_1..eta_q`
pub fn write_estimates(path: &Path, times: &[f64], etas: &[Vec<f64>]) -> Result<()> {
    let q = etas.first().map_or(0, |e| e.len());
    write_rows(
        path,
        &phi_header("eta_", q, false),
        times.iter().zip(etas).map(|(t, eta)| {
            let mut row = Vec::with_capacity(1 + q);
            row.push(*t);
            row.extend_from_slice(eta);
            row
        }),
    )
}

/// `t,eta_1..eta_q` back into (times, states).
pub fn read_estimates(path: &Path, q: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let rows = read_rows(path, &phi_header("eta_", q, false))?;
    check_increasing(&rows)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1..].to_vec())).unzip())
}

/// `t,eta_1..eta_q,W_1..W_p,Delta` — the debug view of the least-squares
/// estimator's internals alongside its coordinate state.
pub fn write_estimates_debug(
    path: &Path,
    times: &[f64],
    etas: &[Vec<f64>],
    ws: &[Vec<f64>],
    deltas: &[f64],
) -> Result<()> {
    let q = etas.first().map_or(0, |e| e.len());
    let p = ws.first().map_or(0, |w| w.len());
    let mut header = phi_header("eta_", q, false);
    for i in 1..=p {
        header.push_str(&format!(",W_{i}"));
    }
    header.push_str(",Delta");
    write_rows(
        path,
        &header,
        times
            .iter()
            .zip(etas)
            .zip(ws.iter().zip(deltas))
            .map(|((t, eta), (w, d))| {
                let mut row = Vec::with_capacity(2 + q + p);
                row.push(*t);
                row.extend_from_slice(eta);
                row.extend_from_slice(w);
                row.push(*d);
                row
            }),
    )
}

/// `t,det,det_normalized`
pub fn write_wronskian(path: &Path, series: &WronskianSeries) -> Result<()> {
    write_rows(
        path,
        "t,det,det_normalized",
        series
            .times
            .iter()
            .zip(series.det.iter().zip(&series.det_normalized))
            .map(|(t, (d, dn))| vec![*t, *d, *dn]),
    )
}

/// `t_window,min_eig` — one row per excitation window, keyed by its start.
pub fn write_excitation(path: &Path, reports: &[ExcitationReport]) -> Result<()> {
    write_rows(
        path,
        "t_window,min_eig",
        reports.iter().map(|r| vec![r.window.0, r.min_eigenvalue]),
    )
}

/// `i,v` — a polarization-curve sweep.
pub fn write_sweep(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    write_rows(path, "i,v", points.iter().map(|(i, v)| vec![*i, *v]))
}

/// `i,v` back to points, strictly increasing current.
pub fn read_sweep(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_rows(path, "i,v")?;
    check_increasing(&rows)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Trace;
    use tempfile::tempdir;

    #[test]
    fn trace_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        // Values chosen to have no short decimal representation.
        let samples = vec![0.1 + 0.2, 1.0 / 3.0, std::f64::consts::PI, -1e-17, 2.5e17];
        let trace = Trace::new(1e-3, 0.0, samples.clone()).unwrap();
        write_trace(&path, &trace).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.len(), samples.len());
        for (k, (t, v)) in back.iter().enumerate() {
            assert_eq!(*t, k as f64 * 1e-3, "time must round-trip exactly");
            assert_eq!(*v, samples[k], "value must round-trip exactly");
        }
    }

    #[test]
    fn writers_emit_lf_only_and_are_deterministic() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let rows = vec![(0.0, 10.0, 30.0), (0.5, 20.0, 28.0)];
        write_replay(&a, &rows).unwrap();
        write_replay(&b, &rows).unwrap();
        let bytes_a = std::fs::read(&a).unwrap();
        let bytes_b = std::fs::read(&b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert!(!bytes_a.contains(&b'\r'));
        assert!(bytes_a.starts_with(b"t,i_fc,v_fc\n"));
    }

    #[test]
    fn replay_reader_rejects_non_monotone_time() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "t,i_fc,v_fc\n0.0,10,30\n0.5,20,28\n0.5,21,27\n").unwrap();
        match read_replay(&path) {
            Err(Error::NonMonotoneTime { row, t_prev, t }) => {
                assert_eq!(row, 3);
                assert_eq!(t_prev, 0.5);
                assert_eq!(t, 0.5);
            }
            other => panic!("expected non-monotone time, got {other:?}"),
        }
    }

    #[test]
    fn readers_reject_schema_violations() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "time,current,volts\n0,10,30\n").unwrap();
        assert!(matches!(read_replay(&path), Err(Error::Csv(_))));

        std::fs::write(&path, "t,i_fc,v_fc\n0,10\n").unwrap();
        assert!(matches!(read_replay(&path), Err(Error::Csv(_))));

        std::fs::write(&path, "t,i_fc,v_fc\n0,ten,30\n").unwrap();
        assert!(matches!(read_replay(&path), Err(Error::Csv(_))));

        std::fs::write(&path, "t,i_fc,v_fc\n0,inf,30\n").unwrap();
        assert!(matches!(read_replay(&path), Err(Error::Csv(_))));

        std::fs::write(&path, "t,i_fc,v_fc\n").unwrap();
        assert!(matches!(read_replay(&path), Err(Error::Csv(_))));
    }

    #[test]
    fn regressor_stream_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phi.csv");
        let samples: Vec<RegressorSample> = (0..50)
            .map(|k| RegressorSample {
                t: k as f64 * 0.25,
                y: (k as f64).sin(),
                phi: vec![1.0, k as f64 / 7.0, (k as f64).cos()],
            })
            .collect();
        write_regressor_stream(&path, &samples).unwrap();
        assert_eq!(csv_width(&path).unwrap(), 4);
        let back = read_regressor_stream(&path, 3).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in back.iter().zip(&samples) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.y, b.y);
            assert_eq!(a.phi, b.phi);
        }
        // Reading with the wrong width is a schema error, not a silent trim.
        assert!(matches!(read_regressor_stream(&path, 4), Err(Error::Csv(_))));
    }

    #[test]
    fn bare_phi_stream_reads_with_zero_output() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phi.csv");
        std::fs::write(&path, "t,phi_1,phi_2\n0.0,1,2\n1.0,3,4\n").unwrap();
        let back = read_phi_stream(&path, 2).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].phi, vec![3.0, 4.0]);
        assert_eq!(back[1].y, 0.0);
    }

    #[test]
    fn estimate_files_carry_debug_columns_when_asked() {
        let dir = tempdir().unwrap();
        let plain = dir.path().join("eta.csv");
        let debug = dir.path().join("eta_debug.csv");
        let times = vec![0.0, 1.0];
        let etas = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let ws = vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]];
        let deltas = vec![0.0, 0.9];
        write_estimates(&plain, &times, &etas).unwrap();
        write_estimates_debug(&debug, &times, &etas, &ws, &deltas).unwrap();
        let head = std::fs::read_to_string(&plain).unwrap();
        assert!(head.starts_with("t,eta_1,eta_2\n"));
        let head = std::fs::read_to_string(&debug).unwrap();
        assert!(head.starts_with("t,eta_1,eta_2,W_1,W_2,W_3,Delta\n"));
        let (t_back, eta_back) = read_estimates(&plain, 2).unwrap();
        assert_eq!(t_back, times);
        assert_eq!(eta_back, etas);
    }

    #[test]
    fn sweep_round_trip_and_diagnostic_writers() {
        let dir = tempdir().unwrap();
        let sweep = dir.path().join("curve.csv");
        let points = vec![(1.0, 37.9), (2.0, 36.5), (3.0, 35.8)];
        write_sweep(&sweep, &points).unwrap();
        assert_eq!(read_sweep(&sweep).unwrap(), points);

        let wr = dir.path().join("det.csv");
        let series = crate::diagnostics::WronskianSeries {
            times: vec![0.0, 0.1],
            det: vec![1.0, 2.0],
            det_normalized: vec![0.5, 0.25],
            transient_peak: 2.0,
            transient_peak_normalized: 0.5,
        };
        write_wronskian(&wr, &series).unwrap();
        let text = std::fs::read_to_string(&wr).unwrap();
        assert!(text.starts_with("t,det,det_normalized\n"));
        assert_eq!(text.lines().count(), 3);

        let ex = dir.path().join("excitation.csv");
        let stream: Vec<RegressorSample> = (0..200)
            .map(|k| RegressorSample {
                t: k as f64 * 0.1,
                y: 0.0,
                phi: vec![1.0, (k as f64 * 0.1).sin()],
            })
            .collect();
        let reports = crate::diagnostics::excitation_pe(&stream, 5.0, 1e-6).unwrap();
        write_excitation(&ex, &reports).unwrap();
        let text = std::fs::read_to_string(&ex).unwrap();
        assert!(text.starts_with("t_window,min_eig\n"));
        assert_eq!(text.lines().count(), reports.len() + 1);
    }
}
