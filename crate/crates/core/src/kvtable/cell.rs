use std::cmp::{Ordering, Reverse};

use super::KvError;

/// A timestamped value at `(row, family, qualifier)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row: Vec<u8>,
    pub family: String,
    pub qualifier: Vec<u8>,
    pub timestamp: i64,
    pub value: Vec<u8>,
}

/// Sort key: row, family, qualifier ascending, then timestamp descending.
pub type CellKey = (Vec<u8>, String, Vec<u8>, Reverse<i64>);

impl Cell {
    pub fn key(&self) -> CellKey {
        (self.row.clone(), self.family.clone(), self.qualifier.clone(), Reverse(self.timestamp))
    }

    pub fn same_column(&self, other: &Cell) -> bool {
        self.row == other.row && self.family == other.family && self.qualifier == other.qualifier
    }

    /// `family:qualifier`.
    pub fn column(&self) -> String {
        format!("{}:{}", self.family, String::from_utf8_lossy(&self.qualifier))
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.row.len() + 2 + self.family.len() + 4 + self.qualifier.len() + 8 + 4 + self.value.len()
    }

    /// `[u32 row][u16 family][u32 qualifier][i64 ts][u32 value]`, each
    /// length-prefixed field followed by its bytes, little-endian.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.row.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.row);
        out.extend_from_slice(&(self.family.len() as u16).to_le_bytes());
        out.extend_from_slice(self.family.as_bytes());
        out.extend_from_slice(&(self.qualifier.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.qualifier);
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&(self.value.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.value);
    }

    pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Cell>, KvError> {
        let mut out = Vec::new();
        while !bytes.is_empty() {
            out.push(Self::decode_one(&mut bytes)?);
        }
        Ok(out)
    }

    fn decode_one(bytes: &mut &[u8]) -> Result<Cell, KvError> {
        fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], KvError> {
            if bytes.len() < n {
                return Err(KvError::CorruptStoreFile("truncated cell".into()));
            }
            let (head, rest) = bytes.split_at(n);
            *bytes = rest;
            Ok(head)
        }
        let u32_at = |b: &mut &[u8]| -> Result<usize, KvError> {
            Ok(u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize)
        };
        let row_len = u32_at(bytes)?;
        let row = take(bytes, row_len)?.to_vec();
        let fam_len = u16::from_le_bytes(take(bytes, 2)?.try_into().unwrap()) as usize;
        let family = String::from_utf8(take(bytes, fam_len)?.to_vec())
            .map_err(|_| KvError::CorruptStoreFile("family is not UTF-8".into()))?;
        let q_len = u32_at(bytes)?;
        let qualifier = take(bytes, q_len)?.to_vec();
        let timestamp = i64::from_le_bytes(take(bytes, 8)?.try_into().unwrap());
        let v_len = u32_at(bytes)?;
        let value = take(bytes, v_len)?.to_vec();
        Ok(Cell { row, family, qualifier, timestamp, value })
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.row
            .cmp(&other.row)
            .then_with(|| self.family.cmp(&other.family))
            .then_with(|| self.qualifier.cmp(&other.qualifier))
            .then_with(|| other.timestamp.cmp(&self.timestamp))
            .then_with(|| self.value.cmp(&other.value))
    }
}

/// Parses `family:qualifier`; the qualifier may be empty.
pub fn parse_column(column: &str) -> Result<(String, Vec<u8>), KvError> {
    match column.split_once(':') {
        Some((f, q)) if !f.is_empty() => Ok((f.to_string(), q.as_bytes().to_vec())),
        None if !column.is_empty() => Ok((column.to_string(), Vec::new())),
        _ => Err(KvError::InvalidColumn(column.to_string())),
    }
}
