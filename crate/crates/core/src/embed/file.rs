//! ERSM embedding files.
//!
//! ```text
//! "ERSM"            4 bytes
//! version           u16 LE (1)
//! header length     u32 LE
//! header            UTF-8 JSON {"n", "d", "provenance", "row_ids"?}
//! data              n*d f32 LE, row-major
//! crc32             u32 LE over every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingMatrix, Provenance};

pub const ERSM_MAGIC: &[u8; 4] = b"ERSM";
pub const ERSM_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    d: usize,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row_ids: Option<Vec<u64>>,
}

pub fn write_embeddings(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let header = Header {
        n: matrix.rows(),
        d: matrix.dim(),
        provenance: matrix.provenance().clone(),
        row_ids: Some(matrix.row_ids().to_vec()),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(14 + json.len() + matrix.data().len() * 4);
    buf.extend_from_slice(ERSM_MAGIC);
    buf.extend_from_slice(&ERSM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in matrix.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn read_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbedError> {
    if bytes.len() < 4 || &bytes[..4] != ERSM_MAGIC {
        return Err(EmbedError::Format("missing ERSM magic".into()));
    }
    if bytes.len() < 14 {
        return Err(EmbedError::Checksum(format!("file truncated at {} bytes", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(EmbedError::Checksum(format!(
            "stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != ERSM_VERSION {
        return Err(EmbedError::Version {
            found: version,
            expected: ERSM_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let header_bytes = body
        .get(10..10 + header_len)
        .ok_or_else(|| EmbedError::Shape("header extends past end of file".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let data_bytes = &body[10 + header_len..];
    if data_bytes.len() != header.n * header.d * 4 {
        return Err(EmbedError::Shape(format!(
            "header declares {}x{} but file holds {} bytes of data",
            header.n,
            header.d,
            data_bytes.len()
        )));
    }
    let data = data_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let row_ids = header.row_ids.unwrap_or_else(|| (0..header.n as u64).collect());
    if row_ids.len() != header.n {
        return Err(EmbedError::Shape(format!(
            "{} row ids for {} rows",
            row_ids.len(),
            header.n
        )));
    }
    EmbeddingMatrix::new(data, header.d, row_ids, header.provenance)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), EmbedError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&write_embeddings(matrix))?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    read_embeddings(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, d: usize) -> EmbeddingMatrix {
        let data = (0..n * d).map(|i| (i as f32 * 0.37).sin() * 1e3).collect();
        EmbeddingMatrix::new(
            data,
            d,
            (0..n as u64).map(|i| i * 3).collect(),
            Provenance::Internal {
                model_id: "abc".into(),
                pooling: super::super::PoolingMode::Mean,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = sample(100, 64);
        let back = read_embeddings(&write_embeddings(&m)).unwrap();
        assert_eq!(back, m);
        let bits = |m: &EmbeddingMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = write_embeddings(&sample(4, 3));
        for cut in [1, 5, 20, bytes.len() - 15] {
            assert!(
                matches!(
                    read_embeddings(&bytes[..bytes.len() - cut]),
                    Err(EmbedError::Checksum(_))
                ),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn version_and_shape_errors() {
        let mut bytes = write_embeddings(&sample(2, 2));
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            read_embeddings(&bytes),
            Err(EmbedError::Version { found: 9, .. })
        ));

        // Header claims 3 rows, data holds 2.
        let header = br#"{"n":3,"d":2,"provenance":{"kind":"external","provider":"x"}}"#;
        let mut buf = ERSM_MAGIC.to_vec();
        buf.extend_from_slice(&ERSM_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header);
        buf.extend_from_slice(&[0u8; 16]);
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(read_embeddings(&buf), Err(EmbedError::Shape(_))));
    }
}
