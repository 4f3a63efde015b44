//! `CWTS` clustered-weights container.
//!
//! Little-endian layout:
//!
//! ```text
//! "CWTS" | u16 version | u8 scope | u8 bits | u32 table_count
//! per table: u32 layer_id | u32 K | K x f32 centroid | u64 index_count | packed u32 words
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! `layer_id` is `0xFFFF_FFFF` for the shared all-layers table.

use super::{CentroidTable, ClusterError, ClusteredModel, PackedIndices, Result, Scope, TableEntry};

pub const CWTS_MAGIC: [u8; 4] = *b"CWTS";
pub const CWTS_VERSION: u16 = 1;
pub const GLOBAL_LAYER_ID: u32 = u32::MAX;

const HEADER_LEN: usize = 12;

pub fn write_clustered(model: &ClusteredModel) -> Vec<u8> {
    let body: usize = model.tables.iter().map(|t| 16 + 4 * t.table.len() + 4 * t.indices.words().len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + body + 4);
    out.extend_from_slice(&CWTS_MAGIC);
    out.extend_from_slice(&CWTS_VERSION.to_le_bytes());
    out.push(model.scope.code());
    out.push(model.bits);
    out.extend_from_slice(&(model.tables.len() as u32).to_le_bytes());
    for t in &model.tables {
        out.extend_from_slice(&t.layer.unwrap_or(GLOBAL_LAYER_ID).to_le_bytes());
        out.extend_from_slice(&(t.table.len() as u32).to_le_bytes());
        for c in t.table.centroids() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&(t.indices.count() as u64).to_le_bytes());
        for w in t.indices.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ClusterError::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(ClusterError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
            available: self.bytes.len() - self.pos,
        })?)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

struct RawTable {
    layer_id: u32,
    centroids: Vec<f32>,
    count: usize,
    words: Vec<u32>,
    words_offset: usize,
}

/// Parses and validates a container: CRC, scope byte, `1 <= K <= 2^bits`,
/// every index `< K` and zero padding bits.
pub fn read_clustered(bytes: &[u8]) -> Result<ClusteredModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != CWTS_MAGIC {
        return Err(ClusterError::BadMagic { found: magic });
    }
    let version = cur.u16()?;
    if version != CWTS_VERSION {
        return Err(ClusterError::UnsupportedVersion(version));
    }
    let scope_offset = cur.pos;
    let scope_byte = cur.u8()?;
    let bits = cur.u8()?;
    if !(1..=8).contains(&bits) {
        return Err(ClusterError::InvalidBits(bits as u32));
    }
    let per_word = 32 / bits as usize;
    let n_tables = cur.u32()? as usize;

    let mut raw = Vec::new();
    for _ in 0..n_tables {
        let layer_id = cur.u32()?;
        let k = cur.u32()? as usize;
        let centroids = cur.u32s(k)?.into_iter().map(f32::from_bits).collect();
        let count_offset = cur.pos;
        let count = usize::try_from(cur.u64()?).map_err(|_| ClusterError::Truncated {
            offset: count_offset,
            needed: usize::MAX,
            available: bytes.len() - cur.pos,
        })?;
        let words_offset = cur.pos;
        let words = cur.u32s(count.div_ceil(per_word))?;
        raw.push(RawTable { layer_id, centroids, count, words, words_offset });
    }
    let crc_offset = cur.pos;
    let stored = cur.u32()?;
    if cur.pos != bytes.len() {
        return Err(ClusterError::TrailingBytes { offset: cur.pos, trailing: bytes.len() - cur.pos });
    }
    let computed = crc32fast::hash(&bytes[..crc_offset]);
    if stored != computed {
        return Err(ClusterError::BadCrc { stored, computed });
    }

    let scope = Scope::from_code(scope_byte).ok_or(ClusterError::BadScope { offset: scope_offset, value: scope_byte })?;
    let limit = 1usize << bits;
    let mut tables = Vec::with_capacity(raw.len());
    for (t, r) in raw.into_iter().enumerate() {
        let k = r.centroids.len();
        let layer = (r.layer_id != GLOBAL_LAYER_ID).then_some(r.layer_id);
        let bad = |msg: String| ClusterError::Layer { layer: layer.map_or(t, |l| l as usize), msg };
        if k == 0 || k > limit {
            return Err(bad(format!("table holds {k} centroids, allowed 1..={limit}")));
        }
        if r.centroids.iter().any(|c| !c.is_finite()) {
            return Err(bad("non-finite centroid".into()));
        }
        match (scope, layer) {
            (Scope::AllLayers, Some(_)) => return Err(bad("all-layers container with a per-layer table".into())),
            (Scope::PerLayer, None) => return Err(bad("per-layer container with a shared table".into())),
            _ => {}
        }
        let indices = PackedIndices::from_words(bits, r.count, r.words, r.words_offset)?;
        for j in 0..r.count {
            let i = indices.get(j);
            if i as usize >= k {
                return Err(ClusterError::IndexOutOfRange { position: j, index: i, limit: k as u32 });
            }
        }
        tables.push(TableEntry { layer, table: CentroidTable::from_stored(r.centroids), indices });
    }
    if scope == Scope::AllLayers && tables.len() != 1 {
        return Err(ClusterError::Layer { layer: 0, msg: format!("all-layers container holds {} tables", tables.len()) });
    }
    Ok(ClusteredModel { scope, bits, tables })
}

#[cfg(test)]
mod tests {
    use super::super::pack_indices;
    use super::*;

    fn sample() -> ClusteredModel {
        ClusteredModel {
            scope: Scope::PerLayer,
            bits: 5,
            tables: vec![
                TableEntry {
                    layer: Some(0),
                    table: CentroidTable::from_stored(vec![-1.0, 0.5, 2.0]),
                    indices: pack_indices(&[0, 1, 2, 2, 1, 0, 2], 5).unwrap(),
                },
                TableEntry {
                    layer: Some(4),
                    table: CentroidTable::from_stored(vec![0.25]),
                    indices: pack_indices(&[0, 0], 5).unwrap(),
                },
            ],
        }
    }

    #[test]
    fn exact_layout() {
        let b = write_clustered(&sample());
        assert_eq!(&b[0..4], b"CWTS");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(b[7], 5);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[0, 0, 0, 0]);
        assert_eq!(&b[16..20], &[3, 0, 0, 0]);
        assert_eq!(&b[20..24], &(-1.0f32).to_le_bytes());
        assert_eq!(&b[32..40], &7u64.to_le_bytes());
        // 7 indices at 6 per word take two words.
        let second = 40 + 8;
        assert_eq!(&b[second..second + 4], &4u32.to_le_bytes());
        let len = b.len();
        assert_eq!(&b[len - 4..], &crc32fast::hash(&b[..len - 4]).to_le_bytes());
        assert_eq!(len, 12 + (16 + 12 + 8) + (16 + 4 + 4) + 4);
    }

    #[test]
    fn roundtrip() {
        let m = sample();
        assert_eq!(read_clustered(&write_clustered(&m)).unwrap(), m);
    }

    #[test]
    fn detects_corruption() {
        let b = write_clustered(&sample());
        let mut flipped = b.clone();
        flipped[22] ^= 0x40;
        assert!(matches!(read_clustered(&flipped), Err(ClusterError::BadCrc { .. })));
        assert!(matches!(read_clustered(&b[..b.len() - 6]), Err(ClusterError::Truncated { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert_eq!(read_clustered(&extra), Err(ClusterError::TrailingBytes { offset: b.len(), trailing: 1 }));
        let mut magic = b.clone();
        magic[0] = b'X';
        assert!(matches!(read_clustered(&magic), Err(ClusterError::BadMagic { .. })));
    }

    fn reseal(mut b: Vec<u8>) -> Vec<u8> {
        let n = b.len() - 4;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        b
    }

    #[test]
    fn semantic_validation() {
        let b = write_clustered(&sample());
        let mut scope = b.clone();
        scope[6] = 7;
        assert_eq!(read_clustered(&reseal(scope)), Err(ClusterError::BadScope { offset: 6, value: 7 }));
        // Index 3 in a three-entry table.
        let mut idx = b.clone();
        idx[40] = (idx[40] & !0x1F) | 3;
        assert!(matches!(
            read_clustered(&reseal(idx)),
            Err(ClusterError::IndexOutOfRange { position: 0, index: 3, limit: 3 })
        ));
        // High padding bits of the first word.
        let mut pad = b.clone();
        pad[43] |= 0x80;
        assert_eq!(read_clustered(&reseal(pad)), Err(ClusterError::CorruptPadding { offset: 40 }));
    }

    #[test]
    fn too_many_centroids() {
        let m = ClusteredModel {
            scope: Scope::AllLayers,
            bits: 1,
            tables: vec![TableEntry {
                layer: None,
                table: CentroidTable::from_stored(vec![0.0, 1.0, 2.0]),
                indices: pack_indices(&[1], 1).unwrap(),
            }],
        };
        assert!(matches!(read_clustered(&write_clustered(&m)), Err(ClusterError::Layer { .. })));
    }
}
