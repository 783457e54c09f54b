//! DTM1 dense matrix interchange format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4    magic "DTM1"
//! bytes 4..8    u32 row count
//! bytes 8..12   u32 column count
//! bytes 12..    rows * cols IEEE-754 f32, row-major
//! ```
//!
//! No padding, no footer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DTM1";

pub fn write_dtm1<W: Write>(mut w: W, m: &Array2<f32>) -> Result<()> {
    let (rows, cols) = m.dim();
    let rows = u32::try_from(rows).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let cols = u32::try_from(cols).map_err(|_| Error::Format("column count exceeds u32".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 4);
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dtm1<R: Read>(mut r: R) -> Result<Array2<f32>> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated DTM1 header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("DTM1 dimensions overflow".into()))?;
    let mut payload = vec![0u8; len * 4];
    r.read_exact(&mut payload)
        .map_err(|e| Error::Format(format!("truncated DTM1 payload: {e}")))?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape matches payload"))
}

pub fn save(path: &Path, m: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dtm1(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Array2<f32>> {
    let f = File::open(path)?;
    let mut r = BufReader::new(f);
    let m = read_dtm1(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!("trailing bytes after DTM1 payload in {}", path.display())));
    }
    Ok(m)
}

pub fn save_f64(path: &Path, m: &Array2<f64>) -> Result<()> {
    save(path, &m.mapv(|v| v as f32))
}

pub fn load_f64(path: &Path) -> Result<Array2<f64>> {
    Ok(load(path)?.mapv(f64::from))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn empty_matrix_round_trips() {
        let m = Array2::<f32>::zeros((0, 0));
        let mut buf = Vec::new();
        write_dtm1(&mut buf, &m).unwrap();
        assert_eq!(buf, b"DTM1\0\0\0\0\0\0\0\0");
        assert_eq!(read_dtm1(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn golden_two_by_three() {
        let m = array![[1.0f32, -2.0, 0.5], [0.0, 3.0, 0.25]];
        let mut expected = b"DTM1".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 3, 0, 0, 0]);
        for bits in [0x3f80_0000u32, 0xc000_0000, 0x3f00_0000, 0, 0x4040_0000, 0x3e80_0000] {
            expected.extend_from_slice(&bits.to_le_bytes());
        }
        let mut buf = Vec::new();
        write_dtm1(&mut buf, &m).unwrap();
        assert_eq!(buf, expected);
        assert_eq!(read_dtm1(expected.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut buf = Vec::new();
        write_dtm1(&mut buf, &array![[1.0f32]]).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_dtm1(buf.as_slice()), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_dtm1(&mut buf, &array![[1.0f32, 2.0]]).unwrap();
        buf.pop();
        assert!(matches!(read_dtm1(buf.as_slice()), Err(Error::Format(_))));
    }
}
