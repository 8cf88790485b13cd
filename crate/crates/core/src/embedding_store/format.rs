//! The `THEM` embedding interchange format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "THEM"
//! 4       4     version (u32, = 1)
//! 8       8     n rows (u64)
//! 16      4     d columns (u32)
//! 20      1     dtype code (u8, 1 = f32)
//! 21      3     reserved, zero
//! 24      n*d*4 payload, f32 row-major
//! ...     4     tag length (u32)
//! ...     len   source tag, UTF-8
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"THEM";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic {0:?}, expected \"THEM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("file shorter than the {HEADER_LEN}-byte header")]
    TruncatedHeader,
    #[error("payload truncated: header declares {expected} bytes, {available} present")]
    TruncatedPayload { expected: u64, available: u64 },
    #[error("malformed source tag trailer")]
    BadTrailer,
    #[error("n={n}, d={d} overflows the addressable payload size")]
    DimensionOverflow { n: u64, d: u64 },
    #[error("embedding shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite embedding entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    /// The reference embedder produced a non-finite value from finite input.
    #[error("reference embedding overflowed at row {row}")]
    Overflow { row: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// Decoded fixed-size file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub magic: [u8; 4],
    pub version: u32,
    pub n: u64,
    pub d: u32,
    pub dtype_code: u8,
    pub reserved: [u8; 3],
}

impl EmbeddingFileHeader {
    pub fn new(n: u64, d: u32) -> Self {
        Self {
            magic: MAGIC,
            version: VERSION,
            n,
            d,
            dtype_code: DTYPE_F32,
            reserved: [0; 3],
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.magic);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..16].copy_from_slice(&self.n.to_le_bytes());
        out[16..20].copy_from_slice(&self.d.to_le_bytes());
        out[20] = self.dtype_code;
        out[21..24].copy_from_slice(&self.reserved);
        out
    }

    /// Parses and validates a header.
    pub fn from_bytes(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(EmbeddingError::UnsupportedVersion(version));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let d = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let dtype_code = bytes[20];
        if dtype_code != DTYPE_F32 {
            return Err(EmbeddingError::UnsupportedDtype(dtype_code));
        }
        Ok(Self {
            magic,
            version,
            n,
            d,
            dtype_code,
            reserved: bytes[21..24].try_into().unwrap(),
        })
    }

    /// Payload size in bytes.
    pub fn payload_len(&self) -> Result<u64> {
        payload_len(self.n, self.d as u64)
    }
}

fn payload_len(n: u64, d: u64) -> Result<u64> {
    n.checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .filter(|&bytes| bytes <= isize::MAX as u64)
        .ok_or(EmbeddingError::DimensionOverflow { n, d })
}

/// One embedding vector per row, stored as `f32` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    vectors: Vec<f32>,
    n: usize,
    dim: usize,
    pub source_tag: String,
}

impl EmbeddingSequence {
    pub fn new(vectors: Vec<f32>, n: usize, dim: usize, source_tag: impl Into<String>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(EmbeddingError::Shape(format!("n={n}, d={dim}: both must be positive")));
        }
        if n.checked_mul(dim) != Some(vectors.len()) {
            return Err(EmbeddingError::Shape(format!(
                "{} values cannot form {n} rows of dimension {dim}",
                vectors.len()
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(Self {
            vectors,
            n,
            dim,
            source_tag: source_tag.into(),
        })
    }

    /// A single-column sequence, used for score and matrix dumps.
    pub fn from_column(values: Vec<f32>, source_tag: impl Into<String>) -> Result<Self> {
        let n = values.len();
        Self::new(values, n, 1, source_tag)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Contiguous block of rows `[start, end)`.
    pub fn rows(&self, start: usize, end: usize) -> &[f32] {
        &self.vectors[start * self.dim..end * self.dim]
    }

    pub fn header(&self) -> Result<EmbeddingFileHeader> {
        let d = u32::try_from(self.dim).map_err(|_| EmbeddingError::DimensionOverflow {
            n: self.n as u64,
            d: self.dim as u64,
        })?;
        let header = EmbeddingFileHeader::new(self.n as u64, d);
        header.payload_len()?;
        Ok(header)
    }

    /// Serializes header, payload and tag trailer.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = self.header()?;
        w.write_all(&header.to_bytes())?;
        let mut buf = Vec::with_capacity(self.dim * 4);
        for row in self.vectors.chunks_exact(self.dim) {
            buf.clear();
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        let tag = self.source_tag.as_bytes();
        let tag_len = u32::try_from(tag.len()).map_err(|_| EmbeddingError::BadTrailer)?;
        w.write_all(&tag_len.to_le_bytes())?;
        w.write_all(tag)?;
        Ok(())
    }

    /// Parses a complete file image.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let head: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or(EmbeddingError::TruncatedHeader)?;
        let header = EmbeddingFileHeader::from_bytes(head)?;
        let payload = header.payload_len()?;
        let available = (bytes.len() - HEADER_LEN) as u64;
        if available < payload {
            return Err(EmbeddingError::TruncatedPayload {
                expected: payload,
                available,
            });
        }
        let payload_end = HEADER_LEN + payload as usize;
        let (n, dim) = (header.n as usize, header.d as usize);
        let vectors: Vec<f32> = bytes[HEADER_LEN..payload_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let trailer = &bytes[payload_end..];
        let tag_len = trailer
            .get(..4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or(EmbeddingError::BadTrailer)?;
        if trailer.len() != 4 + tag_len {
            return Err(EmbeddingError::BadTrailer);
        }
        let tag = std::str::from_utf8(&trailer[4..]).map_err(|_| EmbeddingError::BadTrailer)?;
        Self::new(vectors, n, dim, tag)
    }
}

pub fn write_embeddings(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    seq.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    EmbeddingSequence::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(seq: &EmbeddingSequence) -> Vec<u8> {
        let mut out = Vec::new();
        seq.write_to(&mut out).unwrap();
        out
    }

    #[test]
    fn zero_tensor_layout() {
        let seq = EmbeddingSequence::new(vec![0.0; 6], 2, 3, "t").unwrap();
        let bytes = encode(&seq);
        assert_eq!(bytes.len(), 24 + 24 + 4 + 1);
        assert_eq!(&bytes[0..4], b"THEM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(bytes[20], 1);
        assert_eq!(&bytes[21..24], &[0, 0, 0]);
        assert!(bytes[24..48].iter().all(|&b| b == 0));
        assert_eq!(u32::from_le_bytes(bytes[48..52].try_into().unwrap()), 1);
        assert_eq!(&bytes[52..], b"t");
    }

    #[test]
    fn payload_size_arithmetic() {
        assert_eq!(EmbeddingFileHeader::new(8192, 768).payload_len().unwrap(), 25_165_824);
        assert!(matches!(
            EmbeddingFileHeader::new(u64::MAX / 2, 768).payload_len(),
            Err(EmbeddingError::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn rejects_bad_magic() {
        let seq = EmbeddingSequence::new(vec![1.0; 4], 2, 2, "").unwrap();
        let mut bytes = encode(&seq);
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            EmbeddingSequence::from_bytes(&bytes),
            Err(EmbeddingError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn rejects_version_and_dtype() {
        let seq = EmbeddingSequence::new(vec![1.0; 4], 2, 2, "").unwrap();
        let mut bytes = encode(&seq);
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingSequence::from_bytes(&bytes),
            Err(EmbeddingError::UnsupportedVersion(2))
        ));
        let mut bytes = encode(&seq);
        bytes[20] = 2;
        assert!(matches!(
            EmbeddingSequence::from_bytes(&bytes),
            Err(EmbeddingError::UnsupportedDtype(2))
        ));
        assert!(matches!(
            EmbeddingSequence::from_bytes(&bytes[..10]),
            Err(EmbeddingError::TruncatedHeader)
        ));
    }

    #[test]
    fn rejects_short_payload() {
        let nine = EmbeddingSequence::new(vec![0.5; 27], 9, 3, "x").unwrap();
        let mut bytes = encode(&nine);
        bytes[8..16].copy_from_slice(&10u64.to_le_bytes());
        assert!(matches!(
            EmbeddingSequence::from_bytes(&bytes),
            Err(EmbeddingError::TruncatedPayload { expected: 120, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.them");
        let seq = EmbeddingSequence::new((0..12).map(|i| i as f32 * 0.25).collect(), 4, 3, "ref").unwrap();
        write_embeddings(&seq, &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), seq);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            EmbeddingSequence::new(vec![0.0, f32::NAN, 0.0, 0.0], 2, 2, ""),
            Err(EmbeddingError::NonFinite { row: 0, col: 1 })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            (n, d, values) in (1usize..8, 1usize..8).prop_flat_map(|(n, d)| {
                (Just(n), Just(d), proptest::collection::vec(-1e30f32..1e30, n * d))
            }),
            tag in "[a-z0-9 -]{0,24}",
        ) {
            let seq = EmbeddingSequence::new(values, n, d, tag).unwrap();
            let back = EmbeddingSequence::from_bytes(&encode(&seq)).unwrap();
            let a: Vec<u32> = seq.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.source_tag, seq.source_tag);
        }
    }
}
