//! Dense CSV matrices: one row per line, comma separated, no header.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub fn read_dense_csv<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: line + 1, message: e.to_string() })?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse { line: line + 1, message: format!("{f:?}: {e}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, message: "empty matrix".into() });
    }
    let m = DenseMatrix::from_rows(&rows)?;
    m.ensure_finite()?;
    Ok(m)
}

pub fn write_dense_csv<W: Write>(writer: W, m: &DenseMatrix) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.rows() {
        wtr.write_record(m.row(i).iter().map(|v| format!("{v:e}")))
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 1e-300 * j as f64);
        let mut buf = Vec::new();
        write_dense_csv(&mut buf, &m).unwrap();
        assert_eq!(read_dense_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn parse_errors_carry_line() {
        match read_dense_csv("1,2\n3,x\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(read_dense_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_dense_csv("".as_bytes()).is_err());
        assert!(read_dense_csv("1,NaN\n".as_bytes()).is_err());
        assert_eq!(read_dense_csv(" 1 , 2 \n".as_bytes()).unwrap()[(0, 1)], 2.0);
    }
}
