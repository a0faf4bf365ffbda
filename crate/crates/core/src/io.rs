//! CSV and JSON readers/writers. CSV output is comma separated with a header
//! row and LF line endings; floats use the shortest round-trip formatting so
//! repeated runs are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::analysis::fit::{PowerPoint, PowerSeries};
use crate::analysis::jsi::MeasuredJsi;
use crate::error::{Error, Result};

pub const POWER_COLUMNS: [&str; 4] = ["P_mW", "Cs_Hz", "Ci_Hz", "Ccc_Hz"];
pub const JSI_COLUMNS: [&str; 3] = ["signal_nm", "idler_nm", "intensity"];

/// Writes ±∞ as the strings "inf"/"-inf" so JSON output stays valid.
pub fn serialize_f64_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(io_err(path))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .delimiter(b',')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

/// One row per record, header from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn require_columns(headers: &csv::StringRecord, required: &[&str], path: &Path) -> Result<()> {
    for c in required {
        if !headers.iter().any(|h| h == *c) {
            return Err(Error::usage(format!("{}: missing column `{c}`", path.display())));
        }
    }
    Ok(())
}

/// Power-series CSV with columns P_mW, Cs_Hz, Ci_Hz, Ccc_Hz and optional ACC_Hz.
pub fn read_power_series(path: &Path, coincidence_window_s: f64) -> Result<PowerSeries> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    require_columns(&headers, &POWER_COLUMNS, path)?;
    if let Some(extra) = headers.iter().find(|h| !POWER_COLUMNS.contains(h) && *h != "ACC_Hz") {
        return Err(Error::usage(format!("{}: unknown column `{extra}`", path.display())));
    }
    let rows = r
        .deserialize::<PowerPoint>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    PowerSeries::new(rows, coincidence_window_s)
}

/// The ACC_Hz column is written only when some row carries it; missing
/// entries are left empty.
pub fn write_power_series(path: &Path, data: &PowerSeries) -> Result<()> {
    let with_acc = data.rows.iter().any(|r| r.acc_hz.is_some());
    let mut w = csv_writer(path)?;
    let mut header = POWER_COLUMNS.to_vec();
    if with_acc {
        header.push("ACC_Hz");
    }
    w.write_record(&header)?;
    for r in &data.rows {
        let mut rec = vec![
            r.p_mw.to_string(),
            r.cs_hz.to_string(),
            r.ci_hz.to_string(),
            r.ccc_hz.to_string(),
        ];
        if with_acc {
            rec.push(r.acc_hz.map(|a| a.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

/// Long-format JSI: one (signal_nm, idler_nm, intensity) row per pixel,
/// signal-major.
pub fn write_jsi(path: &Path, j: &MeasuredJsi) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(JSI_COLUMNS)?;
    for (r, s) in j.signal_nm.iter().enumerate() {
        for (c, i) in j.idler_nm.iter().enumerate() {
            w.serialize((s, i, j.intensity[(r, c)]))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a long-format JSI; every (signal, idler) pair must appear exactly once.
pub fn read_jsi(path: &Path) -> Result<MeasuredJsi> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    require_columns(&headers, &JSI_COLUMNS, path)?;
    let idx: Vec<usize> = JSI_COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).unwrap())
        .collect();
    let mut pixels = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut v = [0.0; 3];
        for (k, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            v[k] = field.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: bad value `{field}` in column `{}`",
                    path.display(),
                    JSI_COLUMNS[k]
                ))
            })?;
        }
        pixels.push(v);
    }
    // Axis values are keyed by their bit pattern: the file is expected to repeat
    // them verbatim.
    let axis = |k: usize| -> Vec<f64> {
        let mut a: Vec<f64> = pixels.iter().map(|p| p[k]).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a
    };
    let (s, i) = (axis(0), axis(1));
    if s.len() * i.len() != pixels.len() {
        return Err(Error::Data(format!(
            "{}: {} rows do not form a full {}×{} grid",
            path.display(),
            pixels.len(),
            s.len(),
            i.len()
        )));
    }
    let s_idx: BTreeMap<u64, usize> = s.iter().enumerate().map(|(k, v)| (v.to_bits(), k)).collect();
    let i_idx: BTreeMap<u64, usize> = i.iter().enumerate().map(|(k, v)| (v.to_bits(), k)).collect();
    let mut m = DMatrix::from_element(s.len(), i.len(), f64::NAN);
    for p in &pixels {
        m[(s_idx[&p[0].to_bits()], i_idx[&p[1].to_bits()])] = p[2];
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::Data(format!("{}: duplicated JSI pixels", path.display())));
    }
    MeasuredJsi::new(s, i, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> PowerSeries {
        let rows = (1..=6)
            .map(|k| PowerPoint {
                p_mw: k as f64 * 0.1,
                cs_hz: 1e4 * k as f64,
                ci_hz: 8e3 * k as f64,
                ccc_hz: 100.0 * (k * k) as f64,
                acc_hz: if k % 2 == 0 { Some(1.5) } else { None },
            })
            .collect();
        PowerSeries::new(rows, 1e-9).unwrap()
    }

    #[test]
    fn power_series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let s = series();
        write_power_series(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("P_mW,Cs_Hz,Ci_Hz,Ccc_Hz,ACC_Hz\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_power_series(&p, 1e-9).unwrap(), s);
    }

    #[test]
    fn missing_column_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, "P_mW,Cs_Hz,Ccc_Hz\n1,2,3\n").unwrap();
        match read_power_series(&p, 0.0) {
            Err(Error::Usage(m)) => assert!(m.contains("Ci_Hz"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsi_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        let s = vec![1550.0, 1550.001, 1550.002];
        let i = vec![1560.0, 1560.0005, 1560.001, 1560.0015];
        let m = DMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.1);
        let j = MeasuredJsi::new(s, i, m).unwrap();
        write_jsi(&p, &j).unwrap();
        assert_eq!(read_jsi(&p).unwrap(), j);
    }

    #[test]
    fn incomplete_jsi_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        std::fs::write(&p, "signal_nm,idler_nm,intensity\n1,2,1\n1,3,1\n2,2,1\n").unwrap();
        assert!(matches!(read_jsi(&p), Err(Error::Data(_))));
    }

    #[test]
    fn infinity_serialises_as_string() {
        #[derive(Serialize)]
        struct S {
            #[serde(serialize_with = "serialize_f64_inf")]
            x: f64,
        }
        assert_eq!(
            serde_json::to_string(&S { x: f64::INFINITY }).unwrap(),
            r#"{"x":"inf"}"#
        );
        assert_eq!(serde_json::to_string(&S { x: 2.5 }).unwrap(), r#"{"x":2.5}"#);
    }
}
