use serde::{Deserialize, Serialize};

use crate::blockfs::{BlockFs, DataNodeId, DfsError, DfsPath};

use super::MrError;

/// A contiguous byte range of one input file, processed by one map task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSplit {
    pub path: String,
    pub offset: u64,
    pub length: u64,
    /// Nodes holding the block this split starts in.
    pub locations: Vec<DataNodeId>,
}

/// Files whose name starts with `_` or `.` are skipped as job metadata.
pub fn is_hidden(name: &str) -> bool {
    name.starts_with('_') || name.starts_with('.')
}

/// One split per block of every visible file directly under `input`, ordered
/// by path then offset. A single file may also be named as the input.
pub fn compute_splits(fs: &BlockFs, input: &DfsPath) -> Result<Vec<InputSplit>, MrError> {
    let files: Vec<DfsPath> = if fs.is_dir(input) {
        fs.list(input)?
            .into_iter()
            .filter(|r| !r.is_dir)
            .map(|r| DfsPath::parse(&r.path))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| !is_hidden(p.name()))
            .collect()
    } else if fs.exists(input) {
        vec![input.clone()]
    } else {
        return Err(MrError::InputMissing(input.to_string()));
    };
    let mut splits = Vec::new();
    for file in files {
        for (block, offset, holders) in fs.block_locations(&file)? {
            splits.push(InputSplit {
                path: file.to_string(),
                offset,
                length: block.len,
                locations: holders,
            });
        }
    }
    Ok(splits)
}

const READ_AHEAD: u64 = 64 * 1024;

/// The records (lines) owned by `split`: each line belongs to the split
/// containing its first byte. Returns the bytes of those whole lines and the
/// file offset of the first one.
pub fn read_split_lines(fs: &BlockFs, split: &InputSplit) -> Result<(Vec<u8>, u64), DfsError> {
    let path = DfsPath::parse(&split.path)?;
    let file_len = fs.file_status(&path)?.len();
    let end = split.offset + split.length;
    let mut start = split.offset;
    if start > 0 {
        // A line that began before this split belongs to the previous one.
        let prev = fs.read_range(&path, start - 1, 1)?;
        if prev != b"\n" {
            loop {
                if start >= end {
                    return Ok((Vec::new(), end));
                }
                let chunk = fs.read_range(&path, start, READ_AHEAD.min(end - start))?;
                match chunk.iter().position(|&b| b == b'\n') {
                    Some(i) => {
                        start += i as u64 + 1;
                        break;
                    }
                    None => start += chunk.len() as u64,
                }
            }
        }
    }
    if start >= end {
        return Ok((Vec::new(), start));
    }
    let mut buf = fs.read_range(&path, start, end - start)?;
    // Finish the last line owned by this split.
    let mut pos = end;
    while buf.last() != Some(&b'\n') && pos < file_len {
        let chunk = fs.read_range(&path, pos, READ_AHEAD.min(file_len - pos))?;
        match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => {
                buf.extend_from_slice(&chunk[..=i]);
                break;
            }
            None => {
                pos += chunk.len() as u64;
                buf.extend_from_slice(&chunk);
            }
        }
    }
    Ok((buf, start))
}
