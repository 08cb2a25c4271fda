//! Coefficient vector serialization.
//!
//! * CSV: header `index,value`, one row per DOF in index order.
//! * Binary: magic `HDOF`, a little-endian `u64` count, then `count`
//!   little-endian `f64` values.

use std::io::Write;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"HDOF";
const MAX_DOFS: u64 = 1 << 28;

pub fn write_dofs_csv<W: Write>(out: W, coeffs: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "value"])?;
    for (i, v) in coeffs.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_dofs_csv(input: &[u8]) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "index" || &headers[1] != "value" {
        return Err(Error::InvalidData("expected header `index,value`".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::InvalidData(format!("row {row}: expected 2 fields")));
        }
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidData(format!("row {row}: bad index `{}`", &rec[0])))?;
        if idx != row {
            return Err(Error::InvalidData(format!("row {row}: index {idx} out of order")));
        }
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidData(format!("row {row}: bad value `{}`", &rec[1])))?;
        if !v.is_finite() {
            return Err(Error::InvalidData(format!("row {row}: non-finite value")));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn encode_dofs_binary(coeffs: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * coeffs.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(coeffs.len() as u64).to_le_bytes());
    for v in coeffs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dofs_binary(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::InvalidData("missing HDOF header".into()));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    if count > MAX_DOFS {
        return Err(Error::InvalidData(format!("DOF count {count} too large")));
    }
    let body = &bytes[12..];
    if body.len() as u64 != 8 * count {
        return Err(Error::InvalidData(format!(
            "expected {} payload bytes, found {}",
            8 * count,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value".into()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let v = vec![0.0, -1.5, 1e-300, std::f64::consts::PI, 123456789.123];
        let mut buf = Vec::new();
        write_dofs_csv(&mut buf, &v).unwrap();
        assert!(buf.starts_with(b"index,value\n0,"));
        assert_eq!(parse_dofs_csv(&buf).unwrap(), v);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let v = vec![1.0, -0.1, f64::MIN_POSITIVE];
        let b = encode_dofs_binary(&v);
        assert_eq!(b.len(), 12 + 24);
        assert_eq!(decode_dofs_binary(&b).unwrap(), v);
        assert_eq!(decode_dofs_binary(&encode_dofs_binary(&[])).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(parse_dofs_csv(b"i,v\n0,1\n").is_err());
        assert!(parse_dofs_csv(b"index,value\n1,1\n").is_err());
        assert!(parse_dofs_csv(b"index,value\n0,abc\n").is_err());
        assert!(parse_dofs_csv(b"index,value\n0,NaN\n").is_err());
        assert!(parse_dofs_csv(b"index,value\n0,1,2\n").is_err());
    }

    #[test]
    fn binary_rejects_bad_input() {
        assert!(decode_dofs_binary(b"HDO").is_err());
        assert!(decode_dofs_binary(b"XDOF\0\0\0\0\0\0\0\0").is_err());
        let mut b = encode_dofs_binary(&[1.0, 2.0]);
        b.pop();
        assert!(decode_dofs_binary(&b).is_err());
        let mut b = encode_dofs_binary(&[]);
        b[4..12].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_dofs_binary(&b).is_err());
        assert!(decode_dofs_binary(&encode_dofs_binary(&[f64::INFINITY])).is_err());
    }
}
