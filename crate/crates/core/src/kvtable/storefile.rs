//! Immutable, block-compressed, indexed file of sorted cells.
//!
//! ```text
//! "MGSF0001" [u16 len][family] [u16 len][codec]
//! block*                         each a codec-compressed run of cells
//! index: [u32 n] n × ([u32 len][first row][u64 offset][u32 clen][u32 rawlen][u32 cells])
//! trailer: [u64 index offset][u32 crc32 of all preceding bytes] "MGSFEND1"
//! ```
//!
//! Blocks break only between rows, so every row lives in exactly one block
//! and each index key is strictly greater than the previous one.

use crate::codec::Codec;

use super::cell::Cell;
use super::KvError;

pub const MAGIC: &[u8; 8] = b"MGSF0001";
pub const END_MAGIC: &[u8; 8] = b"MGSFEND1";
pub const TARGET_BLOCK_SIZE: usize = 64 * 1024;
const TRAILER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockIndexEntry {
    pub first_row: Vec<u8>,
    pub offset: u64,
    pub compressed_len: u32,
    pub raw_len: u32,
    pub cells: u32,
}

/// Serializes `cells` (already in cell order) into a store file.
pub fn write(family: &str, codec: &dyn Codec, cells: &[Cell]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_str(&mut out, family);
    put_str(&mut out, codec.name());

    let mut index = Vec::new();
    let mut start = 0;
    while start < cells.len() {
        // Grow the block row by row while it stays within the target size.
        let mut end = start;
        let mut raw = 0usize;
        while end < cells.len() {
            let row_end = end + cells[end..].iter().take_while(|c| c.row == cells[end].row).count();
            let row_bytes: usize = cells[end..row_end].iter().map(Cell::encoded_len).sum();
            if raw > 0 && raw + row_bytes > TARGET_BLOCK_SIZE {
                break;
            }
            raw += row_bytes;
            end = row_end;
        }
        let mut block = Vec::with_capacity(raw);
        for c in &cells[start..end] {
            c.encode(&mut block);
        }
        let compressed = codec.compress(&block);
        index.push(BlockIndexEntry {
            first_row: cells[start].row.clone(),
            offset: out.len() as u64,
            compressed_len: compressed.len() as u32,
            raw_len: block.len() as u32,
            cells: (end - start) as u32,
        });
        out.extend_from_slice(&compressed);
        start = end;
    }

    let index_offset = out.len() as u64;
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    for e in &index {
        out.extend_from_slice(&(e.first_row.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.first_row);
        out.extend_from_slice(&e.offset.to_le_bytes());
        out.extend_from_slice(&e.compressed_len.to_le_bytes());
        out.extend_from_slice(&e.raw_len.to_le_bytes());
        out.extend_from_slice(&e.cells.to_le_bytes());
    }
    out.extend_from_slice(&index_offset.to_le_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(END_MAGIC);
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// A parsed, checksum-verified store file held in memory.
#[derive(Debug, Clone)]
pub struct StoreFile {
    pub family: String,
    pub codec: String,
    pub index: Vec<BlockIndexEntry>,
    bytes: Vec<u8>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KvError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| KvError::CorruptStoreFile("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, KvError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, KvError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, KvError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, KvError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| KvError::CorruptStoreFile("bad string".into()))
    }
}

impl StoreFile {
    pub fn parse(bytes: Vec<u8>) -> Result<Self, KvError> {
        let corrupt = |m: &str| KvError::CorruptStoreFile(m.to_string());
        if bytes.len() < MAGIC.len() + TRAILER_LEN || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let t = bytes.len() - TRAILER_LEN;
        if &bytes[bytes.len() - 8..] != END_MAGIC {
            return Err(corrupt("bad trailer"));
        }
        let crc = u32::from_le_bytes(bytes[t + 8..t + 12].try_into().unwrap());
        if crc32fast::hash(&bytes[..t + 8]) != crc {
            return Err(corrupt("checksum mismatch"));
        }
        let index_offset = u64::from_le_bytes(bytes[t..t + 8].try_into().unwrap()) as usize;
        let mut r = Reader { bytes: &bytes[..t], pos: 8 };
        let family = r.string()?;
        let codec = r.string()?;
        r.pos = index_offset;
        let n = r.u32()? as usize;
        let mut index = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = r.u32()? as usize;
            index.push(BlockIndexEntry {
                first_row: r.take(len)?.to_vec(),
                offset: r.u64()?,
                compressed_len: r.u32()?,
                raw_len: r.u32()?,
                cells: r.u32()?,
            });
        }
        for e in &index {
            if e.offset as usize + e.compressed_len as usize > index_offset {
                return Err(corrupt("block outside data section"));
            }
        }
        Ok(Self { family, codec, index, bytes })
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn compressed_block(&self, i: usize) -> &[u8] {
        let e = &self.index[i];
        &self.bytes[e.offset as usize..e.offset as usize + e.compressed_len as usize]
    }

    pub fn read_block(&self, i: usize, codec: &dyn Codec) -> Result<Vec<Cell>, KvError> {
        let raw = codec.decompress(self.compressed_block(i))?;
        if raw.len() != self.index[i].raw_len as usize {
            return Err(KvError::CorruptStoreFile(format!("block {i} length mismatch")));
        }
        let cells = Cell::decode_all(&raw)?;
        if cells.len() != self.index[i].cells as usize {
            return Err(KvError::CorruptStoreFile(format!("block {i} cell count mismatch")));
        }
        Ok(cells)
    }

    /// Cells with `start ≤ row < stop`, reading only blocks that can hold them.
    pub fn scan(&self, codec: &dyn Codec, start: Option<&[u8]>, stop: Option<&[u8]>) -> Result<Vec<Cell>, KvError> {
        // First block whose successor starts after `start`.
        let first = match start {
            Some(s) => self.index.partition_point(|e| e.first_row.as_slice() <= s).saturating_sub(1),
            None => 0,
        };
        let mut out = Vec::new();
        for i in first..self.index.len() {
            if stop.is_some_and(|s| self.index[i].first_row.as_slice() >= s) {
                break;
            }
            out.extend(self.read_block(i, codec)?.into_iter().filter(|c| {
                start.is_none_or(|s| c.row.as_slice() >= s) && stop.is_none_or(|s| c.row.as_slice() < s)
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CodecRegistry, IdentityCodec};

    fn cells(rows: usize, value_len: usize) -> Vec<Cell> {
        (0..rows)
            .map(|i| Cell {
                row: format!("row{i:05}").into_bytes(),
                family: "f".into(),
                qualifier: b"q".to_vec(),
                timestamp: 1,
                value: vec![b'a' + (i % 26) as u8; value_len],
            })
            .collect()
    }

    #[test]
    fn identity_blocks_are_serialized_cells() {
        let cs = cells(3, 4);
        let bytes = write("f", &IdentityCodec, &cs);
        let sf = StoreFile::parse(bytes).unwrap();
        assert_eq!(sf.index.len(), 1);
        let mut expect = Vec::new();
        cs.iter().for_each(|c| c.encode(&mut expect));
        assert_eq!(sf.compressed_block(0), expect.as_slice());
        assert_eq!(sf.codec, "none");
    }

    #[test]
    fn large_flush_splits_into_bounded_blocks() {
        let reg = CodecRegistry::with_defaults();
        let cs = cells(2000, 100);
        let raw: usize = cs.iter().map(Cell::encoded_len).sum();
        assert!(raw >= 200 * 1024);
        for name in ["none", "lzo", "gz"] {
            let codec = reg.get(name).unwrap();
            let sf = StoreFile::parse(write("f", codec.as_ref(), &cs)).unwrap();
            assert!(sf.index.len() >= 4, "{name}: {} blocks", sf.index.len());
            assert!(sf.index.iter().all(|e| e.raw_len as usize <= TARGET_BLOCK_SIZE));
            assert!(sf.index.windows(2).all(|w| w[0].first_row < w[1].first_row));
            let mut all = Vec::new();
            for i in 0..sf.index.len() {
                let block = sf.read_block(i, codec.as_ref()).unwrap();
                let next = sf.index.get(i + 1).map(|e| e.first_row.clone());
                assert!(block.iter().all(|c| c.row >= sf.index[i].first_row
                    && next.as_ref().is_none_or(|n| &c.row < n)));
                all.extend(block);
            }
            assert_eq!(all, cs);
            let mid = sf.scan(codec.as_ref(), Some(b"row00500"), Some(b"row00510")).unwrap();
            assert_eq!(mid, cs[500..510]);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = write("f", &IdentityCodec, &cells(10, 10));
        assert!(StoreFile::parse(bytes[..bytes.len() - 1].to_vec()).is_err());
        bytes[20] ^= 1;
        assert!(matches!(StoreFile::parse(bytes), Err(KvError::CorruptStoreFile(_))));
    }

    #[test]
    fn empty_file_parses() {
        let sf = StoreFile::parse(write("f", &IdentityCodec, &[])).unwrap();
        assert!(sf.is_empty());
        assert!(sf.scan(&IdentityCodec, None, None).unwrap().is_empty());
    }
}
