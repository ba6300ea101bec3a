//! Binary matrix container.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"MLSG" | version: u32 | kind: u32 | rows: u64 | cols: u64 | rows*cols elements, row-major
//! ```
//!
//! `kind` is 0 for `f64` payloads and 1 for `u64` payloads. Several records may be
//! concatenated in one file (model checkpoints do this).
//!
//! Sparse matrices are stored as a `(nnz + 1) × 3` record whose first row holds
//! `(rows, cols, nnz)` and whose remaining rows are `(row, col, value)` triplets.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub const MAGIC: &[u8; 4] = b"MLSG";
pub const FORMAT_VERSION: u32 = 1;

const KIND_F64: u32 = 0;
const KIND_U64: u32 = 1;

/// One decoded record.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Float(Array2<f64>),
    Unsigned(Array2<u64>),
}

impl Record {
    pub fn into_float(self) -> Result<Array2<f64>> {
        match self {
            Record::Float(m) => Ok(m),
            Record::Unsigned(_) => Err(Error::Format("expected f64 payload, found u64".into())),
        }
    }

    pub fn into_unsigned(self) -> Result<Array2<u64>> {
        match self {
            Record::Unsigned(m) => Ok(m),
            Record::Float(_) => Err(Error::Format("expected u64 payload, found f64".into())),
        }
    }
}

fn write_header<W: Write>(w: &mut W, kind: u32, rows: usize, cols: usize) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    write_header(w, KIND_F64, m.nrows(), m.ncols())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, m: &Array2<u64>) -> Result<()> {
    write_header(w, KIND_U64, m.nrows(), m.ncols())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads the next record, or `None` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<Record>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let kind = read_u32(r)?;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Format("truncated payload".into()),
        _ => e.into(),
    })?;
    let words = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let record = match kind {
        KIND_F64 => Record::Float(
            Array2::from_shape_vec((rows, cols), words.map(f64::from_bits).collect())
                .expect("length checked"),
        ),
        KIND_U64 => Record::Unsigned(
            Array2::from_shape_vec((rows, cols), words.collect()).expect("length checked"),
        ),
        other => return Err(Error::Format(format!("unknown element kind {other}"))),
    };
    Ok(Some(record))
}

pub fn read_required<R: Read>(r: &mut R) -> Result<Record> {
    read_record(r)?.ok_or_else(|| Error::Format("unexpected end of file".into()))
}

pub fn save_f64(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_f64(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_f64(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    read_required(&mut r)?.into_float()
}

/// Encodes a sparse matrix as a triplet record.
pub fn sparse_to_record(m: &CsrMatrix) -> Array2<f64> {
    let mut out = Array2::zeros((m.nnz() + 1, 3));
    out[[0, 0]] = m.rows() as f64;
    out[[0, 1]] = m.cols() as f64;
    out[[0, 2]] = m.nnz() as f64;
    for (k, (i, j, v)) in m.triplets().enumerate() {
        out[[k + 1, 0]] = i as f64;
        out[[k + 1, 1]] = j as f64;
        out[[k + 1, 2]] = v;
    }
    out
}

pub fn sparse_from_record(rec: &Array2<f64>) -> Result<CsrMatrix> {
    if rec.ncols() != 3 || rec.nrows() == 0 {
        return Err(Error::Format(format!(
            "sparse record must be (nnz+1)x3, got {}x{}",
            rec.nrows(),
            rec.ncols()
        )));
    }
    let (rows, cols, nnz) = (rec[[0, 0]] as usize, rec[[0, 1]] as usize, rec[[0, 2]] as usize);
    if nnz + 1 != rec.nrows() {
        return Err(Error::Format(format!(
            "sparse record declares {nnz} entries but holds {}",
            rec.nrows() - 1
        )));
    }
    CsrMatrix::from_triplets(
        rows,
        cols,
        rec.rows()
            .into_iter()
            .skip(1)
            .map(|r| (r[0] as usize, r[1] as usize, r[2])),
    )
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn save_sparse(path: &Path, m: &CsrMatrix) -> Result<()> {
    save_f64(path, &sparse_to_record(m))
}

pub fn load_sparse(path: &Path) -> Result<CsrMatrix> {
    sparse_from_record(&load_f64(path)?)
}

/// Integer-valued sparse triplets, `(rows, cols, nnz)` header row first.
pub fn save_sparse_counts(path: &Path, rows: usize, cols: usize, entries: &[(usize, usize, u64)]) -> Result<()> {
    let mut out = Array2::<u64>::zeros((entries.len() + 1, 3));
    out[[0, 0]] = rows as u64;
    out[[0, 1]] = cols as u64;
    out[[0, 2]] = entries.len() as u64;
    for (k, &(i, j, c)) in entries.iter().enumerate() {
        out[[k + 1, 0]] = i as u64;
        out[[k + 1, 1]] = j as u64;
        out[[k + 1, 2]] = c;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_u64(&mut w, &out)?;
    w.flush()?;
    Ok(())
}

pub fn load_sparse_counts(path: &Path) -> Result<(usize, usize, Vec<(usize, usize, u64)>)> {
    let mut r = BufReader::new(File::open(path)?);
    let rec = read_required(&mut r)?.into_unsigned()?;
    if rec.ncols() != 3 || rec.nrows() == 0 {
        return Err(Error::Format("count record must be (nnz+1)x3".into()));
    }
    let entries = rec
        .rows()
        .into_iter()
        .skip(1)
        .map(|r| (r[0] as usize, r[1] as usize, r[2]))
        .collect::<Vec<_>>();
    if entries.len() as u64 != rec[[0, 2]] {
        return Err(Error::Format("count record length mismatch".into()));
    }
    Ok((rec[[0, 0]] as usize, rec[[0, 1]] as usize, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_stable() {
        let mut buf = Vec::new();
        write_f64(&mut buf, &array![[1.5]]).unwrap();
        assert_eq!(&buf[..4], b"MLSG");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &0u32.to_le_bytes());
        assert_eq!(&buf[12..20], &1u64.to_le_bytes());
        assert_eq!(&buf[20..28], &1u64.to_le_bytes());
        assert_eq!(&buf[28..36], &1.5f64.to_le_bytes());
        assert_eq!(buf.len(), 36);
    }

    #[test]
    fn concatenated_records_read_in_order() {
        let mut buf = Vec::new();
        write_f64(&mut buf, &array![[1.0, 2.0]]).unwrap();
        write_u64(&mut buf, &array![[7u64], [8]]).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_record(&mut r).unwrap(), Some(Record::Float(array![[1.0, 2.0]])));
        assert_eq!(read_record(&mut r).unwrap(), Some(Record::Unsigned(array![[7u64], [8]])));
        assert_eq!(read_record(&mut r).unwrap(), None);
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        write_f64(&mut buf, &array![[1.0, 2.0]]).unwrap();
        let mut truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_record(&mut truncated), Err(Error::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_record(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn sparse_record_round_trip() {
        let m = CsrMatrix::from_triplets(3, 4, vec![(0, 3, 0.25), (2, 1, -1.0)]).unwrap();
        assert_eq!(sparse_from_record(&sparse_to_record(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                f64::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left((i * 7 + j) as u32) >> 2)
            });
            let mut buf = Vec::new();
            write_f64(&mut buf, &m).unwrap();
            let back = read_required(&mut buf.as_slice()).unwrap().into_float().unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
