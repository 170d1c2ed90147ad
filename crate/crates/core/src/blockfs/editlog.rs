//! Namespace persistence: a checksummed image plus an append-only edit log.
//!
//! Edit records are `[u32 len][u32 crc32][len bytes of JSON]`, little-endian.
//! Reading stops at the first short or mismatching record; everything before
//! it is committed. The image is `MGIMG001 [u32 crc32][u64 len][JSON]`.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::namespace::{EditOp, NamespaceTree};
use super::DfsError;

pub const IMAGE_FILE: &str = "fsimage";
pub const EDITS_FILE: &str = "edits";
const IMAGE_MAGIC: &[u8; 8] = b"MGIMG001";

/// A persisted snapshot of the namespace and the edit-log offset it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub image: NamespaceTree,
    pub edit_log_offset: u64,
    pub taken_at: i64,
}

pub fn name_dir(root: &Path) -> PathBuf {
    root.join("name")
}

pub fn encode_image(ckpt: &Checkpoint) -> Vec<u8> {
    let body = serde_json::to_vec(ckpt).expect("namespace serializes");
    let mut out = Vec::with_capacity(body.len() + 20);
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Checkpoint, DfsError> {
    let corrupt = |why: &str| DfsError::CorruptImage(why.to_string());
    if bytes.len() < 20 || &bytes[..8] != IMAGE_MAGIC {
        return Err(corrupt("bad header"));
    }
    let crc = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[20..];
    if body.len() as u64 != len {
        return Err(corrupt("length mismatch"));
    }
    if crc32fast::hash(body) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))
}

/// Writes the image atomically (temp file + rename).
pub fn write_image(root: &Path, ckpt: &Checkpoint) -> Result<(), DfsError> {
    let dir = name_dir(root);
    fs::create_dir_all(&dir)?;
    let tmp = dir.join(format!("{IMAGE_FILE}.ckpt"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&encode_image(ckpt))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(IMAGE_FILE))?;
    Ok(())
}

pub fn read_image(root: &Path) -> Result<Checkpoint, DfsError> {
    let path = name_dir(root).join(IMAGE_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DfsError::NoCheckpoint(root.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

pub fn encode_record(op: &EditOp) -> Vec<u8> {
    let body = serde_json::to_vec(op).expect("edit serializes");
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes committed records starting at `offset`. Returns the ops and the
/// byte offset just past the last committed record.
pub fn decode_records(bytes: &[u8], offset: u64) -> Result<(Vec<EditOp>, u64), DfsError> {
    let mut pos = usize::try_from(offset).map_err(|_| DfsError::CorruptImage("offset".into()))?;
    if pos > bytes.len() {
        return Err(DfsError::CorruptImage(format!(
            "edit log has {} bytes, image covers {}",
            bytes.len(),
            offset
        )));
    }
    let mut ops = Vec::new();
    while pos + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let Some(body) = bytes.get(pos + 8..pos + 8 + len) else { break };
        if crc32fast::hash(body) != crc {
            break;
        }
        let Ok(op) = serde_json::from_slice(body) else { break };
        ops.push(op);
        pos += 8 + len;
    }
    Ok((ops, pos as u64))
}

/// Append handle on `name/edits`.
pub struct EditLog {
    file: File,
    len: u64,
}

impl EditLog {
    /// Opens the log, discarding any torn tail past `committed_len`.
    pub fn open(root: &Path, committed_len: u64) -> Result<Self, DfsError> {
        let path = name_dir(root).join(EDITS_FILE);
        let file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(&path)?;
        file.set_len(committed_len)?;
        let mut log = Self { file, len: committed_len };
        log.seek_end()?;
        Ok(log)
    }

    fn seek_end(&mut self) -> Result<(), DfsError> {
        use std::io::Seek;
        self.file.seek(std::io::SeekFrom::Start(self.len))?;
        Ok(())
    }

    /// Appends one record; the edit is committed once this returns.
    pub fn append(&mut self, op: &EditOp) -> Result<(), DfsError> {
        let rec = encode_record(op);
        self.file.write_all(&rec)?;
        self.file.flush()?;
        self.len += rec.len() as u64;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sync(&self) -> Result<(), DfsError> {
        self.file.sync_data()?;
        Ok(())
    }
}

pub fn read_edits(root: &Path) -> Result<Vec<u8>, DfsError> {
    let path = name_dir(root).join(EDITS_FILE);
    let mut buf = Vec::new();
    match File::open(&path) {
        Ok(mut f) => {
            f.read_to_end(&mut buf)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    Ok(buf)
}

/// Image plus replayed edits. Returns the namespace (without block
/// locations) and the committed length of the edit log.
pub fn load_namespace(root: &Path) -> Result<(NamespaceTree, u64), DfsError> {
    let ckpt = read_image(root)?;
    let edits = read_edits(root)?;
    let (ops, end) = decode_records(&edits, ckpt.edit_log_offset)?;
    let mut tree = ckpt.image;
    let ids: Vec<_> = tree.files.values().flat_map(|f| f.blocks.iter().map(|b| b.id)).collect();
    for id in ids {
        tree.block_map.entry(id).or_default();
    }
    for op in &ops {
        tree.apply(op)
            .map_err(|e| DfsError::CorruptImage(format!("replay of {op:?} failed: {e}")))?;
    }
    Ok((tree, end))
}
